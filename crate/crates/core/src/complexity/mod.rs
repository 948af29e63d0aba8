//! Coding-theorem estimates of algorithmic complexity from census tables,
//! their block decomposition, and perturbation analysis on top.

mod aid;

pub use aid::{aid_delta, rank_perturbations, Perturbation, RankedPerturbation};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tm::{OutputFrequencyTable, SpaceId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ctm,
    Bdm,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissPolicy {
    #[default]
    Error,
    /// Score a missing output one bit above the largest CTM in the table.
    MaxPlusOne,
}

/// Denominator of the frequency estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Every machine in the census, halting or not.
    #[default]
    AllMachines,
    /// Halting machines only, so frequencies sum to 1.
    HaltingOnly,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    DropRemainder,
    /// A trailing block shorter than `k` is scored as an object of its own length.
    #[default]
    ShortFinalBlock,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtmOptions {
    #[serde(default)]
    pub miss_policy: MissPolicy,
    #[serde(default)]
    pub normalization: Normalization,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BdmConfig {
    pub block_size: usize,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default)]
    pub miss_policy: MissPolicy,
    #[serde(default)]
    pub normalization: Normalization,
}

impl BdmConfig {
    pub fn new(block_size: usize) -> Self {
        BdmConfig {
            block_size,
            boundary: Boundary::default(),
            miss_policy: MissPolicy::default(),
            normalization: Normalization::default(),
        }
    }

    pub fn with_miss_policy(mut self, policy: MissPolicy) -> Self {
        self.miss_policy = policy;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    fn ctm_options(&self) -> CtmOptions {
        CtmOptions {
            miss_policy: self.miss_policy,
            normalization: self.normalization,
        }
    }

    pub fn validate(&self, table: &OutputFrequencyTable) -> Result<()> {
        let longest = table.max_output_len();
        if self.block_size == 0 || self.block_size > longest {
            return Err(Error::InvalidArgument(format!(
                "block size {} outside 1..={longest} covered by the table",
                self.block_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityEstimate {
    /// Bits.
    pub value: f64,
    pub method: Method,
    pub space: SpaceId,
    pub block_size: Option<usize>,
    /// Some part of the object missed the table and was scored by the bound.
    pub miss_policy_applied: bool,
}

fn denominator(table: &OutputFrequencyTable, normalization: Normalization) -> f64 {
    match normalization {
        Normalization::AllMachines => table.total_machines as f64,
        Normalization::HaltingOnly => table.halted_machines as f64,
    }
}

fn bits(count: u64, denom: f64) -> f64 {
    // `0.0 - x` keeps a count equal to the denominator at +0.0.
    0.0 - (count as f64 / denom).log2()
}

/// Largest CTM over outputs present in the table.
pub fn max_ctm(table: &OutputFrequencyTable, normalization: Normalization) -> Result<f64> {
    let rarest = table
        .counts
        .values()
        .copied()
        .min()
        .ok_or_else(|| Error::InvalidArgument("table has no halting outputs".into()))?;
    Ok(bits(rarest, denominator(table, normalization)))
}

/// `−log₂(count(o) / denominator)`, returning the value and whether the miss
/// policy supplied it.
fn ctm_value(o: &str, table: &OutputFrequencyTable, opts: CtmOptions) -> Result<(f64, bool)> {
    match table.counts.get(o) {
        Some(&c) => Ok((bits(c, denominator(table, opts.normalization)), false)),
        None => match opts.miss_policy {
            MissPolicy::Error => Err(Error::TableMiss(o.to_string())),
            MissPolicy::MaxPlusOne => Ok((max_ctm(table, opts.normalization)? + 1.0, true)),
        },
    }
}

pub fn ctm(o: &str, table: &OutputFrequencyTable, opts: CtmOptions) -> Result<ComplexityEstimate> {
    let (value, miss) = ctm_value(o, table, opts)?;
    Ok(ComplexityEstimate {
        value,
        method: Method::Ctm,
        space: table.space.clone(),
        block_size: None,
        miss_policy_applied: miss,
    })
}

/// Consecutive non-overlapping blocks of `k` bytes.
pub fn blocks(o: &str, k: usize, boundary: Boundary) -> Vec<&str> {
    assert!(k >= 1);
    let full = o.len() / k * k;
    let mut out: Vec<&str> = (0..full).step_by(k).map(|i| &o[i..i + k]).collect();
    if boundary == Boundary::ShortFinalBlock && full < o.len() {
        out.push(&o[full..]);
    }
    out
}

/// Sum over distinct blocks of `CTM(b) + log₂(multiplicity)`. Blocks are
/// matched by exact content.
pub fn bdm(o: &str, cfg: &BdmConfig, table: &OutputFrequencyTable) -> Result<ComplexityEstimate> {
    cfg.validate(table)?;
    if !o.is_ascii() {
        return Err(Error::InvalidArgument(format!("object {o:?} is not a digit string")));
    }
    let parts = blocks(o, cfg.block_size, cfg.boundary);
    if parts.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "object {o:?} has no complete block of size {}",
            cfg.block_size
        )));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut mult: HashMap<&str, u32> = HashMap::new();
    for b in parts {
        let n = mult.entry(b).or_insert(0);
        if *n == 0 {
            order.push(b);
        }
        *n += 1;
    }
    let mut value = 0.0;
    let mut miss = false;
    for b in order {
        let (c, m) = ctm_value(b, table, cfg.ctm_options())?;
        value += c + f64::from(mult[b]).log2();
        miss |= m;
    }
    Ok(ComplexityEstimate {
        value,
        method: Method::Bdm,
        space: table.space.clone(),
        block_size: Some(cfg.block_size),
        miss_policy_applied: miss,
    })
}

/// Every string of `length` symbols over the table's alphabet, in
/// lexicographic order.
pub fn all_strings(length: usize, n_symbols: usize) -> Result<Vec<String>> {
    let count = (n_symbols as u64)
        .checked_pow(length as u32)
        .filter(|&c| c <= 1 << 22)
        .ok_or_else(|| Error::InvalidArgument(format!("{n_symbols}^{length} strings is too many to scan")))?;
    Ok((0..count)
        .map(|mut i| {
            let mut s = vec![b'0'; length];
            for slot in s.iter_mut().rev() {
                *slot = b'0' + (i % n_symbols as u64) as u8;
                i /= n_symbols as u64;
            }
            String::from_utf8(s).expect("digits")
        })
        .collect())
}

/// BDM of every string of the given length.
pub fn bdm_scan(
    length: usize,
    cfg: &BdmConfig,
    table: &OutputFrequencyTable,
) -> Result<Vec<(String, ComplexityEstimate)>> {
    all_strings(length, table.space.n_symbols)?
        .into_iter()
        .map(|s| {
            let e = bdm(&s, cfg, table)?;
            Ok((s, e))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tm::{build_frequency_table, CensusMode};
    use std::collections::BTreeMap;
    use std::sync::OnceLock;

    fn t22() -> &'static OutputFrequencyTable {
        static T: OnceLock<OutputFrequencyTable> = OnceLock::new();
        T.get_or_init(|| build_frequency_table(2, 2, 500, CensusMode::Exhaustive).unwrap())
    }

    fn toy() -> OutputFrequencyTable {
        OutputFrequencyTable {
            space: SpaceId::new(1, 2, 10),
            total_machines: 64,
            halted_machines: 40,
            counts: BTreeMap::from([("0".into(), 16), ("1".into(), 16), ("01".into(), 8)]),
        }
    }

    fn c(o: &str) -> f64 {
        ctm(o, t22(), CtmOptions::default()).unwrap().value
    }

    #[test]
    fn ctm_values() {
        let t = toy();
        let e = ctm("0", &t, CtmOptions::default()).unwrap();
        assert_eq!(e.value, 2.0);
        assert_eq!(e.method, Method::Ctm);
        assert!(!e.miss_policy_applied);
        assert_eq!(ctm("01", &t, CtmOptions::default()).unwrap().value, 3.0);
        let halting = CtmOptions {
            normalization: Normalization::HaltingOnly,
            ..Default::default()
        };
        assert!((ctm("01", &t, halting).unwrap().value - (5.0f64).log2()).abs() < 1e-15);
        assert!(matches!(ctm("11", &t, CtmOptions::default()), Err(Error::TableMiss(_))));
        let lenient = CtmOptions {
            miss_policy: MissPolicy::MaxPlusOne,
            ..Default::default()
        };
        let m = ctm("11", &t, lenient).unwrap();
        assert_eq!(m.value, 4.0);
        assert!(m.miss_policy_applied);
    }

    #[test]
    fn full_count_is_zero_bits() {
        let mut t = toy();
        t.counts = BTreeMap::from([("0".into(), 64)]);
        t.halted_machines = 64;
        let v = ctm("0", &t, CtmOptions::default()).unwrap().value;
        assert_eq!(v, 0.0);
        assert!(v.is_sign_positive());
    }

    #[test]
    fn ctm_on_census() {
        assert!(c("0") < c("010"));
        let top = t22().sorted_rows()[0].0;
        for o in t22().counts.keys() {
            assert!(c(top) <= c(o));
        }
        // Hand value: "0" is produced by 3456 of 20736 machines.
        assert!((c("0") - (20736.0f64 / 3456.0).log2()).abs() < 1e-12);
    }

    #[test]
    fn block_partition() {
        assert_eq!(blocks("0101101", 2, Boundary::ShortFinalBlock), ["01", "01", "10", "1"]);
        assert_eq!(blocks("0101101", 2, Boundary::DropRemainder), ["01", "01", "10"]);
        assert_eq!(blocks("01", 4, Boundary::ShortFinalBlock), ["01"]);
        assert!(blocks("01", 4, Boundary::DropRemainder).is_empty());
    }

    #[test]
    fn bdm_examples() {
        let t = t22();
        let k2 = BdmConfig::new(2);
        assert_eq!(bdm("01", &k2, t).unwrap().value, c("01"));
        assert_eq!(bdm("0101", &k2, t).unwrap().value, c("01") + 1.0);
        assert_eq!(bdm("0110", &k2, t).unwrap().value, c("01") + c("10"));
        // Short final block scored on its own.
        assert_eq!(bdm("01011", &k2, t).unwrap().value, c("01") + 1.0 + c("1"));
        let drop = k2.with_boundary(Boundary::DropRemainder);
        assert_eq!(bdm("01011", &drop, t).unwrap().value, c("01") + 1.0);
        assert!(bdm("0", &drop, t).is_err());
        let e = bdm("0110", &k2, t).unwrap();
        assert_eq!((e.method, e.block_size), (Method::Bdm, Some(2)));
    }

    #[test]
    fn bdm_multiplicity_law() {
        let t = t22();
        for b in ["01", "11", "1011"] {
            let cfg = BdmConfig::new(b.len());
            for r in [1u32, 2, 4, 8] {
                let v = bdm(&b.repeat(r as usize), &cfg, t).unwrap().value;
                assert_eq!(v, c(b) + f64::from(r).log2());
            }
        }
    }

    #[test]
    fn bdm_config_checks() {
        let t = t22();
        assert!(bdm("0101", &BdmConfig::new(0), t).is_err());
        assert!(bdm("0101010101", &BdmConfig::new(5), t).is_err());
        // "0000" is not produced by any (2,2) machine.
        assert!(matches!(
            bdm("00000000", &BdmConfig::new(4), t),
            Err(Error::TableMiss(_))
        ));
        let e = bdm(
            "00000000",
            &BdmConfig::new(4).with_miss_policy(MissPolicy::MaxPlusOne),
            t,
        )
        .unwrap();
        assert!(e.miss_policy_applied);
        assert_eq!(e.value, max_ctm(t, Normalization::AllMachines).unwrap() + 2.0);
    }

    #[test]
    fn scan_order() {
        assert_eq!(all_strings(2, 2).unwrap(), ["00", "01", "10", "11"]);
        assert_eq!(all_strings(8, 2).unwrap().len(), 256);
        assert!(all_strings(40, 2).is_err());
    }
}
