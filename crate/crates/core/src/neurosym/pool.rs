use serde::{Deserialize, Serialize};

use crate::complexity::{ctm, CtmOptions};
use crate::dist::{Categorical, Support};
use crate::error::{Error, Result};
use crate::tm::{CensusEntry, OutputFrequencyTable, SpaceId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProgramSource {
    /// A census machine; its complexity is the CTM of what it prints.
    Machine { index: u64, space: SpaceId },
    /// A member of a hand-declared generator family.
    Generator { family: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Program {
    pub id: String,
    pub source: ProgramSource,
    pub output: Categorical,
    pub complexity_bits: f64,
}

/// Programs whose outputs share one support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoolRepr", into = "PoolRepr")]
pub struct ProgramPool {
    support: Support,
    programs: Vec<Program>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolRepr {
    programs: Vec<Program>,
}

impl TryFrom<PoolRepr> for ProgramPool {
    type Error = Error;

    fn try_from(r: PoolRepr) -> Result<Self> {
        ProgramPool::new(r.programs)
    }
}

impl From<ProgramPool> for PoolRepr {
    fn from(p: ProgramPool) -> Self {
        PoolRepr { programs: p.programs }
    }
}

impl ProgramPool {
    pub fn new(programs: Vec<Program>) -> Result<Self> {
        let first = programs
            .first()
            .ok_or_else(|| Error::InvalidArgument("program pool is empty".into()))?;
        let support = first.output.support().clone();
        let mut programs = programs;
        for p in &mut programs {
            if !(p.complexity_bits.is_finite() && p.complexity_bits > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "program {} has complexity {} bits",
                    p.id, p.complexity_bits
                )));
            }
            // Share one `Support` allocation so later checks are pointer compares.
            p.output = p.output.clone().rebased(&support)?;
        }
        Ok(ProgramPool { support, programs })
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn programs(&self) -> &[Program] {
        &self.programs
    }

    pub fn len(&self) -> usize {
        self.programs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.programs.is_empty()
    }

    pub fn get(&self, i: usize) -> &Program {
        &self.programs[i]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.programs.iter().position(|p| p.id == id)
    }
}

/// Length in bits of the Elias gamma code of `x ≥ 1`.
pub fn elias_gamma_len(x: u64) -> u32 {
    assert!(x >= 1);
    2 * (63 - x.leading_zeros()) + 1
}

/// Bits to write down a raw transition table of an `(n, m)` machine.
pub fn table_length_bits(n_states: usize, n_symbols: usize) -> f64 {
    (n_states * n_symbols) as f64 * ((2 * n_symbols * (n_states + 1)) as f64).log2()
}

/// Generators over `width`-bit strings: for each prefix `v` of length
/// `j ≤ width`, the uniform distribution over strings starting with `v`.
/// The code is a 2-bit family tag, `j` in Elias gamma (as `j+1`), then `v`,
/// so `K = 2 + γ(j+1) + j`. The uniform generator (`j = 0`) costs 3 bits.
pub fn prefix_pool(width: usize) -> Result<ProgramPool> {
    if width == 0 || width > 16 {
        return Err(Error::InvalidArgument(format!("prefix width {width} outside 1..=16")));
    }
    let support = Support::binary_strings(width);
    let mut programs = Vec::new();
    for j in 0..=width {
        for v in 0..1usize << j {
            let prefix: String = (0..j).rev().map(|b| if v >> b & 1 == 1 { '1' } else { '0' }).collect();
            let members: Vec<usize> = (0..support.len())
                .filter(|&i| support.label(i).starts_with(&prefix))
                .collect();
            programs.push(Program {
                id: format!("prefix:{prefix}*"),
                source: ProgramSource::Generator {
                    family: "prefix".into(),
                },
                output: Categorical::uniform_over(support.clone(), &members)?,
                complexity_bits: (2 + elias_gamma_len(j as u64 + 1) as usize + j) as f64,
            });
        }
    }
    ProgramPool::new(programs)
}

/// Binary strings of length `1..=max_len`, shorter first.
pub fn strings_up_to(max_len: usize) -> Support {
    let labels = (1..=max_len).flat_map(|len| Support::binary_strings(len).labels().to_vec());
    Support::new(labels).expect("distinct labels")
}

fn periodic_prefixes(pattern: &str, max_len: usize) -> Vec<String> {
    let cycle: Vec<char> = pattern.chars().collect();
    (1..=max_len)
        .map(|len| (0..len).map(|i| cycle[i % cycle.len()]).collect())
        .collect()
}

/// Census-backed periodic generators. A binary census output `w` becomes the
/// program printing a prefix of `www…`, uniform over lengths `1..=max_len`,
/// with `K = CTM(w)`. Patterns generating the same distribution keep only the
/// cheapest. Programs are ordered by complexity.
pub fn periodic_pool(entries: &[CensusEntry], table: &OutputFrequencyTable, max_len: usize) -> Result<ProgramPool> {
    if max_len == 0 || max_len > 12 {
        return Err(Error::InvalidArgument(format!("max_len {max_len} outside 1..=12")));
    }
    let support = strings_up_to(max_len);
    let mut candidates = Vec::new();
    for e in entries
        .iter()
        .filter(|e| e.output.bytes().all(|b| b == b'0' || b == b'1'))
    {
        let k = ctm(&e.output, table, CtmOptions::default())?.value;
        candidates.push((k, e));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.output.cmp(&b.1.output)));

    let mut seen = std::collections::HashSet::new();
    let mut programs = Vec::new();
    for (k, e) in candidates {
        let prefixes = periodic_prefixes(&e.output, max_len);
        if !seen.insert(prefixes.clone()) {
            continue;
        }
        let members: Vec<usize> = prefixes.iter().map(|p| support.index_of(p).expect("binary")).collect();
        programs.push(Program {
            id: format!("periodic:{}", e.output),
            source: ProgramSource::Machine {
                index: e.first_index,
                space: table.space.clone(),
            },
            output: Categorical::uniform_over(support.clone(), &members)?,
            complexity_bits: k,
        });
    }
    ProgramPool::new(programs)
}

/// One point-mass program per census output, `K = CTM(output)`, over the
/// support of all census outputs.
pub fn point_pool(entries: &[CensusEntry], table: &OutputFrequencyTable) -> Result<ProgramPool> {
    let support = Support::new(entries.iter().map(|e| e.output.clone()))?;
    let programs = entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            Ok(Program {
                id: format!("point:{}", e.output),
                source: ProgramSource::Machine {
                    index: e.first_index,
                    space: table.space.clone(),
                },
                output: Categorical::point_mass(support.clone(), i),
                complexity_bits: ctm(&e.output, table, CtmOptions::default())?.value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ProgramPool::new(programs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tm::{build_frequency_table, census_programs, CensusMode};

    #[test]
    fn gamma_lengths() {
        assert_eq!([1, 2, 3, 4, 7, 8].map(elias_gamma_len), [1, 3, 3, 5, 5, 7]);
        assert_eq!(table_length_bits(2, 2), 4.0 * 12f64.log2());
    }

    #[test]
    fn prefix_family() {
        let pool = prefix_pool(4).unwrap();
        assert_eq!(pool.len(), 31);
        assert_eq!(pool.support().len(), 16);
        let uniform = pool.get(0);
        assert_eq!(uniform.id, "prefix:*");
        assert_eq!(uniform.complexity_bits, 3.0);
        assert_eq!(uniform.output.support_size(), 16);
        let p = pool.get(pool.position("prefix:01*").unwrap());
        assert_eq!(p.complexity_bits, 7.0);
        assert_eq!(p.output.positive_indices(), [4, 5, 6, 7]);
        let leaf = pool.get(pool.position("prefix:1111*").unwrap());
        assert!(leaf.output.is_point_mass());
        assert_eq!(leaf.complexity_bits, 11.0);
    }

    #[test]
    fn census_pools() {
        let table = build_frequency_table(2, 2, 500, CensusMode::Exhaustive).unwrap();
        let entries = census_programs(2, 2, 500).unwrap();
        let periodic = periodic_pool(&entries, &table, 6).unwrap();
        assert_eq!(periodic.support().len(), 126);
        let zero = periodic.get(periodic.position("periodic:0").unwrap());
        assert!(periodic.position("periodic:00").is_none());
        assert_eq!(zero.output.support_size(), 6);
        let alt = periodic.get(periodic.position("periodic:01").unwrap());
        let s = alt.output.support();
        for w in ["0", "01", "010", "0101", "01010", "010101"] {
            assert!(alt.output.prob(s.index_of(w).unwrap()) > 0.0);
        }
        for w in periodic.programs().windows(2) {
            assert!(w[0].complexity_bits <= w[1].complexity_bits);
        }

        let points = point_pool(&entries, &table).unwrap();
        assert_eq!(points.len(), table.counts.len());
        assert!(points.programs().iter().all(|p| p.output.is_point_mass()));
    }

    #[test]
    fn pool_json_round_trip() {
        let pool = prefix_pool(2).unwrap();
        let text = serde_json::to_string(&pool).unwrap();
        let back: ProgramPool = serde_json::from_str(&text).unwrap();
        assert_eq!(back, pool);
        assert!(serde_json::from_str::<ProgramPool>(r#"{"programs":[]}"#).is_err());
    }
}
