use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::Range;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::machine::{entry_radix, machine_count, render, Compiled, Executor, FORMALISM};
use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Largest space censused exhaustively unless configured otherwise.
pub const DEFAULT_EXHAUSTIVE_LIMIT: u64 = 100_000_000;
pub const DEFAULT_BUDGET: u64 = 1000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpaceId {
    pub n_states: usize,
    pub n_symbols: usize,
    pub budget: u64,
    pub formalism: String,
}

impl SpaceId {
    pub fn new(n_states: usize, n_symbols: usize, budget: u64) -> Self {
        SpaceId {
            n_states,
            n_symbols,
            budget,
            formalism: FORMALISM.to_string(),
        }
    }
}

impl fmt::Display for SpaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tm{}x{}-b{}-{}",
            self.n_states, self.n_symbols, self.budget, self.formalism
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CensusMode {
    Exhaustive,
    /// `k` distinct machine indices drawn uniformly without replacement.
    Sampled {
        k: u64,
        seed: u64,
    },
}

#[derive(Clone, Debug)]
pub struct CensusOptions {
    pub mode: CensusMode,
    pub exhaustive_limit: u64,
    /// Number of index ranges; 0 picks four per rayon thread.
    pub workers: usize,
}

impl Default for CensusOptions {
    fn default() -> Self {
        CensusOptions {
            mode: CensusMode::Exhaustive,
            exhaustive_limit: DEFAULT_EXHAUSTIVE_LIMIT,
            workers: 0,
        }
    }
}

/// Halting-output census of a machine space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputFrequencyTable {
    pub space: SpaceId,
    /// Machines examined: the whole space, or `k` in sampled mode.
    pub total_machines: u64,
    pub halted_machines: u64,
    pub counts: BTreeMap<String, u64>,
}

impl OutputFrequencyTable {
    pub fn count(&self, output: &str) -> u64 {
        self.counts.get(output).copied().unwrap_or(0)
    }

    pub fn halted_fraction(&self) -> f64 {
        self.halted_machines as f64 / self.total_machines as f64
    }

    /// Rows by descending count, then output.
    pub fn sorted_rows(&self) -> Vec<(&str, u64)> {
        let mut rows: Vec<_> = self.counts.iter().map(|(o, &c)| (o.as_str(), c)).collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        rows
    }

    pub fn max_output_len(&self) -> usize {
        self.counts.keys().map(String::len).max().unwrap_or(0)
    }

    pub(crate) fn check_consistent(&self) -> Result<()> {
        let sum: u64 = self.counts.values().sum();
        if sum != self.halted_machines || self.halted_machines > self.total_machines {
            return Err(Error::TableFormat(format!(
                "counts sum to {sum}, halted {}, total {}",
                self.halted_machines, self.total_machines
            )));
        }
        Ok(())
    }
}

/// Per-output count and the smallest machine index producing it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CensusEntry {
    pub output: String,
    pub count: u64,
    pub first_index: u64,
}

#[derive(Default)]
struct Partial {
    halted: u64,
    outputs: HashMap<Vec<u8>, (u64, u64)>,
}

impl Partial {
    fn add(&mut self, out: &[u8], index: u64) {
        self.halted += 1;
        match self.outputs.get_mut(out) {
            Some(e) => {
                e.0 += 1;
                e.1 = e.1.min(index);
            }
            None => {
                self.outputs.insert(out.to_vec(), (1, index));
            }
        }
    }

    fn merge(mut self, other: Partial) -> Partial {
        self.halted += other.halted;
        for (k, (c, i)) in other.outputs {
            let e = self.outputs.entry(k).or_insert((0, u64::MAX));
            e.0 += c;
            e.1 = e.1.min(i);
        }
        self
    }
}

/// Mixed-radix digits of `index`, most significant first.
fn digits_of(mut index: u64, radix: u64, len: usize) -> Vec<u64> {
    let mut d = vec![0; len];
    for slot in d.iter_mut().rev() {
        *slot = index % radix;
        index /= radix;
    }
    d
}

fn scan_range(n: usize, m: usize, budget: u64, range: Range<u64>) -> Partial {
    let radix = entry_radix(n, m);
    let mut digits = digits_of(range.start, radix, n * m);
    let mut exec = Executor::new();
    let mut out = Vec::new();
    let mut part = Partial::default();
    for i in range {
        let machine = Compiled::from_digits(&digits, n, m);
        if exec.run(&machine, budget, &mut out).0 {
            part.add(&out, i);
        }
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < radix {
                break;
            }
            *d = 0;
        }
    }
    part
}

fn scan_indices(n: usize, m: usize, budget: u64, indices: &[u64]) -> Partial {
    let radix = entry_radix(n, m);
    let mut exec = Executor::new();
    let mut out = Vec::new();
    let mut part = Partial::default();
    for &i in indices {
        let machine = Compiled::from_digits(&digits_of(i, radix, n * m), n, m);
        if exec.run(&machine, budget, &mut out).0 {
            part.add(&out, i);
        }
    }
    part
}

fn split(total: u64, workers: usize) -> Vec<Range<u64>> {
    let w = (workers as u64).clamp(1, total.max(1));
    (0..w).map(|i| total * i / w..total * (i + 1) / w).collect()
}

fn resolve_workers(workers: usize) -> usize {
    if workers == 0 {
        4 * rayon::current_num_threads()
    } else {
        workers
    }
}

fn census(n: usize, m: usize, budget: u64, opts: &CensusOptions) -> Result<(u64, Partial)> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    let count = machine_count(n, m)?;
    let workers = resolve_workers(opts.workers);
    match opts.mode {
        CensusMode::Exhaustive => {
            if count > opts.exhaustive_limit {
                return Err(Error::SpaceTooLarge {
                    n_states: n,
                    n_symbols: m,
                    count,
                    limit: opts.exhaustive_limit,
                });
            }
            log::info!("census of {count} machines ({n},{m}) budget {budget}");
            let part = split(count, workers)
                .into_par_iter()
                .map(|r| scan_range(n, m, budget, r))
                .reduce(Partial::default, Partial::merge);
            Ok((count, part))
        }
        CensusMode::Sampled { k, seed } => {
            if k == 0 || k > count {
                return Err(Error::InvalidArgument(format!("sample size {k} not in 1..={count}")));
            }
            let (Ok(len), Ok(amount)) = (usize::try_from(count), usize::try_from(k)) else {
                return Err(Error::SpaceOverflow {
                    n_states: n,
                    n_symbols: m,
                });
            };
            let mut idx: Vec<u64> = index::sample(&mut seeded_rng(seed), len, amount)
                .into_iter()
                .map(|i| i as u64)
                .collect();
            idx.sort_unstable();
            log::info!("sampled census of {k}/{count} machines ({n},{m}) budget {budget}");
            let part = split(k, workers)
                .into_par_iter()
                .map(|r| scan_indices(n, m, budget, &idx[r.start as usize..r.end as usize]))
                .reduce(Partial::default, Partial::merge);
            Ok((k, part))
        }
    }
}

fn into_table(n: usize, m: usize, budget: u64, total: u64, part: Partial) -> OutputFrequencyTable {
    OutputFrequencyTable {
        space: SpaceId::new(n, m, budget),
        total_machines: total,
        halted_machines: part.halted,
        counts: part.outputs.into_iter().map(|(k, (c, _))| (render(&k), c)).collect(),
    }
}

pub fn build_frequency_table(
    n_states: usize,
    n_symbols: usize,
    budget: u64,
    mode: CensusMode,
) -> Result<OutputFrequencyTable> {
    let opts = CensusOptions {
        mode,
        ..CensusOptions::default()
    };
    build_frequency_table_with(n_states, n_symbols, budget, &opts)
}

pub fn build_frequency_table_with(
    n_states: usize,
    n_symbols: usize,
    budget: u64,
    opts: &CensusOptions,
) -> Result<OutputFrequencyTable> {
    let (total, part) = census(n_states, n_symbols, budget, opts)?;
    Ok(into_table(n_states, n_symbols, budget, total, part))
}

/// Census of an index range only; used to check partition invariance on
/// slices of spaces too big to scan repeatedly.
pub fn build_partial_table(
    n_states: usize,
    n_symbols: usize,
    budget: u64,
    range: Range<u64>,
    workers: usize,
) -> Result<OutputFrequencyTable> {
    let count = machine_count(n_states, n_symbols)?;
    if range.end > count || range.start >= range.end {
        return Err(Error::InvalidArgument(format!(
            "bad index range {range:?} for {count} machines"
        )));
    }
    let len = range.end - range.start;
    let part = split(len, resolve_workers(workers))
        .into_par_iter()
        .map(|r| scan_range(n_states, n_symbols, budget, range.start + r.start..range.start + r.end))
        .reduce(Partial::default, Partial::merge);
    Ok(into_table(n_states, n_symbols, budget, len, part))
}

/// Exhaustive census keeping the first machine index for every output,
/// sorted like table rows.
pub fn census_programs(n_states: usize, n_symbols: usize, budget: u64) -> Result<Vec<CensusEntry>> {
    let (_, part) = census(n_states, n_symbols, budget, &CensusOptions::default())?;
    let mut entries: Vec<CensusEntry> = part
        .outputs
        .into_iter()
        .map(|(k, (count, first_index))| CensusEntry {
            output: render(&k),
            count,
            first_index,
        })
        .collect();
    entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.output.cmp(&b.output)));
    Ok(entries)
}
