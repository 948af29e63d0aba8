use serde::Serialize;

use super::pool::ProgramPool;
use crate::dist::{fit_empirical, sample, SampleSet};
use crate::error::{Error, Result};

/// Scores closer than this are ties.
pub const SCORE_TIE_TOL: f64 = 1e-9;

/// `−log₂ P(data | p)` in bits; infinite if any draw has zero probability.
pub fn nll_bits(data: &SampleSet, pool: &ProgramPool, program: usize) -> Result<f64> {
    let counts = data.counts_on(pool.support())?;
    let out = &pool.get(program).output;
    let mut bits = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            let p = out.prob(i);
            if p == 0.0 {
                return Ok(f64::INFINITY);
            }
            bits -= c as f64 * p.log2();
        }
    }
    Ok(bits)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Selection {
    pub index: usize,
    pub id: String,
    pub nll_bits: f64,
    pub complexity_bits: f64,
    pub score: f64,
}

/// Score `NLL + λ·K` of every program.
pub fn score_programs(data: &SampleSet, pool: &ProgramPool, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::out_of_range("lambda", lambda, "[0, ∞)"));
    }
    (0..pool.len())
        .map(|i| Ok(nll_bits(data, pool, i)? + lambda * pool.get(i).complexity_bits))
        .collect()
}

/// Minimises `NLL + λ·K`; ties go to lower `K`, then pool order.
pub fn select_program(data: &SampleSet, pool: &ProgramPool, lambda: f64) -> Result<Selection> {
    let scores = score_programs(data, pool, lambda)?;
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(j) => {
                let (sj, ki, kj) = (scores[j], pool.get(i).complexity_bits, pool.get(j).complexity_bits);
                if s < sj - SCORE_TIE_TOL || ((s - sj).abs() <= SCORE_TIE_TOL && ki < kj) {
                    Some(i)
                } else {
                    Some(j)
                }
            }
        };
    }
    let index = best.ok_or(Error::NoExplanation)?;
    let p = pool.get(index);
    Ok(Selection {
        index,
        id: p.id.clone(),
        nll_bits: nll_bits(data, pool, index)?,
        complexity_bits: p.complexity_bits,
        score: scores[index],
    })
}

/// Union of the supports of programs whose `K` is within `k_tolerance` bits
/// of `K(p*)`, as sorted support indices.
pub fn algorithmic_support(p_star: usize, pool: &ProgramPool, k_tolerance: f64) -> Vec<usize> {
    let k_star = pool.get(p_star).complexity_bits;
    let mut covered = vec![false; pool.support().len()];
    for p in pool.programs() {
        if (p.complexity_bits - k_star).abs() <= k_tolerance {
            for i in p.output.positive_indices() {
                covered[i] = true;
            }
        }
    }
    covered.iter().enumerate().filter(|(_, &c)| c).map(|(i, _)| i).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportRecoveryReport {
    pub seed: u64,
    pub mechanism: String,
    pub selected: String,
    pub mechanism_recovered: bool,
    pub statistical_support: usize,
    pub algorithmic_support: usize,
    pub true_support: usize,
}

/// Draws `n_small` samples from the mechanism and compares the support of
/// the empirical fit with the support implied by the selected program.
pub fn support_recovery_experiment(
    mechanism: usize,
    n_small: usize,
    pool: &ProgramPool,
    lambda: f64,
    k_tolerance: f64,
    seed: u64,
) -> Result<SupportRecoveryReport> {
    if mechanism >= pool.len() {
        return Err(Error::InvalidArgument(format!(
            "mechanism {mechanism} not in a pool of {}",
            pool.len()
        )));
    }
    let truth = &pool.get(mechanism).output;
    let data = sample(truth, n_small, seed)?;
    let statistical = fit_empirical(&data, pool.support())?;
    let chosen = select_program(&data, pool, lambda)?;
    Ok(SupportRecoveryReport {
        seed,
        mechanism: pool.get(mechanism).id.clone(),
        mechanism_recovered: chosen.index == mechanism,
        selected: chosen.id,
        statistical_support: statistical.support_size(),
        algorithmic_support: algorithmic_support(chosen.index, pool, k_tolerance).len(),
        true_support: truth.support_size(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{Categorical, Support};
    use crate::neurosym::pool::{prefix_pool, Program, ProgramSource};

    fn generator(id: &str, output: Categorical, k: f64) -> Program {
        Program {
            id: id.into(),
            source: ProgramSource::Generator { family: "test".into() },
            output,
            complexity_bits: k,
        }
    }

    fn const_vs_uniform() -> ProgramPool {
        let s = Support::range(8);
        ProgramPool::new(vec![
            generator("uniform", Categorical::uniform(s.clone()), 5.0),
            generator("const", Categorical::point_mass(s, 3), 2.0),
        ])
        .unwrap()
    }

    #[test]
    fn constant_data_picks_constant() {
        let pool = const_vs_uniform();
        let data = SampleSet::from_labels(pool.support(), &["3"; 20], 0).unwrap();
        // Hand scores at λ=1: const 0 + 2 = 2; uniform 20·3 + 5 = 65.
        assert_eq!(score_programs(&data, &pool, 1.0).unwrap(), [65.0, 2.0]);
        assert_eq!(select_program(&data, &pool, 1.0).unwrap().id, "const");
        for lambda in [0.0, 0.5, 2.0, 10.0, 100.0] {
            assert_eq!(select_program(&data, &pool, lambda).unwrap().id, "const");
        }
        let mixed = SampleSet::from_labels(pool.support(), &["3", "4"], 0).unwrap();
        assert_eq!(select_program(&mixed, &pool, 1.0).unwrap().id, "uniform");
        assert!(score_programs(&data, &pool, -1.0).is_err());
    }

    #[test]
    fn lambda_zero_is_maximum_likelihood_and_singleton() {
        let pool = prefix_pool(3).unwrap();
        let data = SampleSet::from_labels(pool.support(), &["010", "011"], 0).unwrap();
        let ml = select_program(&data, &pool, 0.0).unwrap();
        assert_eq!(ml.id, "prefix:01*");
        assert_eq!(ml.nll_bits, 2.0);
        let single = ProgramPool::new(vec![pool.get(0).clone()]).unwrap();
        assert_eq!(select_program(&data, &single, 7.0).unwrap().index, 0);
    }

    #[test]
    fn no_explanation() {
        let s = Support::range(3);
        let pool = ProgramPool::new(vec![generator("c", Categorical::point_mass(s.clone(), 0), 1.0)]).unwrap();
        let data = SampleSet::from_labels(&s, &["1"], 0).unwrap();
        assert!(matches!(select_program(&data, &pool, 1.0), Err(Error::NoExplanation)));
    }

    #[test]
    fn support_sets() {
        let pool = prefix_pool(4).unwrap();
        let leaf = pool.position("prefix:0110*").unwrap();
        assert_eq!(algorithmic_support(leaf, &pool, 0.0).len(), 16);
        let uniform = pool.position("prefix:*").unwrap();
        assert_eq!(algorithmic_support(uniform, &pool, 0.0).len(), 16);
        let half = pool.position("prefix:1*").unwrap();
        // K = 6 is unique to the two one-bit prefixes.
        assert_eq!(algorithmic_support(half, &pool, 0.0).len(), 16);
        assert_eq!(algorithmic_support(half, &pool, f64::INFINITY).len(), 16);

        let s = Support::range(4);
        let pool = ProgramPool::new(vec![
            generator("a", Categorical::uniform_over(s.clone(), &[0, 1]).unwrap(), 2.0),
            generator("b", Categorical::uniform_over(s.clone(), &[2]).unwrap(), 4.0),
            generator("c", Categorical::uniform_over(s, &[3]).unwrap(), 9.0),
        ])
        .unwrap();
        assert_eq!(algorithmic_support(0, &pool, 0.0), [0, 1]);
        assert_eq!(algorithmic_support(0, &pool, 2.0), [0, 1, 2]);
        assert_eq!(algorithmic_support(0, &pool, f64::INFINITY), [0, 1, 2, 3]);
    }

    #[test]
    fn recovery_examples() {
        let pool = prefix_pool(4).unwrap();
        let uniform = pool.position("prefix:*").unwrap();
        let one = support_recovery_experiment(uniform, 1, &pool, 2.0, 0.0, 5).unwrap();
        assert_eq!(one.statistical_support, 1);
        let few = support_recovery_experiment(uniform, 4, &pool, 2.0, 0.0, 5).unwrap();
        assert!(few.statistical_support <= 4);
        assert!(few.mechanism_recovered);
        assert_eq!((few.algorithmic_support, few.true_support), (16, 16));
        let many = support_recovery_experiment(uniform, 400, &pool, 2.0, 0.0, 5).unwrap();
        assert_eq!((many.statistical_support, many.algorithmic_support), (16, 16));
    }
}
