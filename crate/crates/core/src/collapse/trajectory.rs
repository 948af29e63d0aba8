use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schedule::AlphaSchedule;
use crate::dist::{self, Categorical, FeatureMap};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, step_seed};

/// One idealised update: the exact mixture `αP + (1−α)Q`.
pub fn step_ideal(p: &Categorical, q: &Categorical, alpha: f64) -> Result<Categorical> {
    dist::mix(alpha, p, q)
}

/// `Q_t = (1 − (1−α)^t)·P + (1−α)^t·Q₀`.
pub fn closed_form_ideal(p: &Categorical, q0: &Categorical, alpha: f64, t: usize) -> Result<Categorical> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::out_of_range("alpha", alpha, "(0, 1]"));
    }
    let keep = (1.0 - alpha).powi(t.min(i32::MAX as usize) as i32);
    dist::mix(1.0 - keep, p, q0)
}

/// One finite-sample update: draw `n` symbols from `αP + (1−α)Q` and refit
/// by maximum likelihood.
pub fn step_finite(p: &Categorical, q: &Categorical, alpha: f64, n: usize, seed: u64) -> Result<Categorical> {
    let target = dist::mix(alpha, p, q)?;
    let draws = dist::sample(&target, n, seed)?;
    dist::fit_empirical(&draws, p.support())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Capacity {
    /// The model class holds every distribution and sees the mixture exactly.
    Infinite,
    /// The model is refit to `sample_size` draws from the mixture.
    FiniteSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub true_dist: Categorical,
    pub initial_model: Categorical,
    pub schedule: AlphaSchedule,
    pub sample_size: usize,
    pub steps: usize,
    pub master_seed: u64,
    pub capacity: Capacity,
    /// Defaults to the positional scalar embedding of the support.
    #[serde(default)]
    pub embedding: Option<FeatureMap>,
}

impl LoopConfig {
    pub fn validate(&mut self) -> Result<()> {
        self.initial_model = self.initial_model.clone().rebased(self.true_dist.support())?;
        if self.sample_size == 0 {
            return Err(Error::InvalidArgument("sample_size must be at least 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        self.schedule.validate()
    }
}

/// Metrics of one state `Q_t` of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub alpha: f64,
    pub entropy: f64,
    /// `KL(P‖Q_t)`; infinite once `Q_t` drops a symbol `P` supports.
    pub kl: f64,
    /// `KL(P‖Q_t)` after adding a pseudocount of `1/(10N)` to `Q_t`.
    pub kl_smoothed: f64,
    pub tv: f64,
    pub mean: Vec<f64>,
    pub support_size: usize,
    /// `H(Q_t) − H(Q_{t+1})`; absent on the final record.
    pub entropy_drop: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub final_model: Categorical,
}

impl Trajectory {
    pub fn kl_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.kl).collect()
    }
}

/// Computes per-state metrics against a fixed truth.
pub(crate) struct Recorder<'a> {
    pub truth: &'a Categorical,
    pub embedding: FeatureMap,
    pub pseudocount: f64,
}

impl<'a> Recorder<'a> {
    pub fn new(truth: &'a Categorical, embedding: Option<&FeatureMap>, sample_size: usize) -> Self {
        Recorder {
            truth,
            embedding: embedding
                .cloned()
                .unwrap_or_else(|| FeatureMap::positional(truth.support())),
            pseudocount: 1.0 / (10.0 * sample_size as f64),
        }
    }

    pub fn record(&self, t: usize, alpha: f64, q: &Categorical) -> Result<StepRecord> {
        Ok(StepRecord {
            t,
            alpha,
            entropy: dist::entropy(q),
            kl: dist::kl_divergence(self.truth, q)?,
            kl_smoothed: dist::kl_divergence(self.truth, &q.smoothed(self.pseudocount))?,
            tv: dist::tv_distance(self.truth, q)?,
            mean: dist::mean_embed(q, &self.embedding)?,
            support_size: q.support_size(),
            entropy_drop: None,
        })
    }
}

pub(crate) fn fill_entropy_drops(records: &mut [StepRecord]) {
    for i in 1..records.len() {
        records[i - 1].entropy_drop = Some(records[i - 1].entropy - records[i].entropy);
    }
}

/// Runs the loop, handing every state `Q_0..Q_T` to `observe`.
pub fn run_trajectory_observed(
    config: &LoopConfig,
    mut observe: impl FnMut(usize, &Categorical),
) -> Result<Trajectory> {
    let mut config = config.clone();
    config.validate()?;
    let p = &config.true_dist;
    let recorder = Recorder::new(p, config.embedding.as_ref(), config.sample_size);

    let mut q = config.initial_model.clone();
    let mut records = Vec::with_capacity(config.steps + 1);
    for t in 0..=config.steps {
        let alpha = config.schedule.alpha_at(t);
        observe(t, &q);
        records.push(recorder.record(t, alpha, &q)?);
        if t == config.steps {
            break;
        }
        q = match config.capacity {
            Capacity::Infinite => step_ideal(p, &q, alpha)?,
            Capacity::FiniteSample => {
                step_finite(p, &q, alpha, config.sample_size, step_seed(config.master_seed, t, 0))?
            }
        };
    }
    fill_entropy_drops(&mut records);
    Ok(Trajectory {
        records,
        final_model: q,
    })
}

pub fn run_trajectory(config: &LoopConfig) -> Result<Trajectory> {
    run_trajectory_observed(config, |_, _| {})
}

/// Master seed of replicate `index` of a multi-seed experiment.
pub fn replicate_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, &[0x5EED, index as u64])
}

/// Independent replicates of the same loop; replicate `i` runs with
/// `replicate_seed(config.master_seed, i)`. Output order follows `i`.
pub fn run_replicates(config: &LoopConfig, replicates: usize) -> Result<Vec<Trajectory>> {
    (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut c = config.clone();
            c.master_seed = replicate_seed(config.master_seed, i);
            run_trajectory(&c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Support;

    fn cat(probs: &[f64]) -> Categorical {
        Categorical::new(Support::range(probs.len()), probs.to_vec()).unwrap()
    }

    #[test]
    fn step_ideal_examples() {
        let p = cat(&[1.0, 0.0]);
        let q = cat(&[0.0, 1.0]);
        assert_eq!(step_ideal(&p, &q, 1.0).unwrap(), p);
        assert_eq!(step_ideal(&p, &q, 0.0).unwrap(), q);
        let r = step_ideal(&p, &q, 0.3).unwrap();
        assert!((r.prob(0) - 0.3).abs() < 1e-15 && (r.prob(1) - 0.7).abs() < 1e-15);
        assert!(step_ideal(&p, &q, 2.0).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let p = cat(&[0.7, 0.2, 0.1]);
        let q0 = cat(&[0.1, 0.1, 0.8]);
        assert_eq!(closed_form_ideal(&p, &q0, 0.4, 0).unwrap().probs(), q0.probs());
        assert_eq!(closed_form_ideal(&p, &q0, 1.0, 5).unwrap(), p);
        let two = closed_form_ideal(&p, &q0, 0.5, 2).unwrap();
        let expect = dist::mix(0.75, &p, &q0).unwrap();
        assert_eq!(two, expect);
        assert!(matches!(
            closed_form_ideal(&p, &q0, 0.0, 3),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn step_finite_examples() {
        let p = cat(&[0.25, 0.25, 0.25, 0.25]);
        let q = cat(&[0.0, 0.5, 0.5, 0.0]);
        let one = step_finite(&p, &q, 0.5, 1, 3).unwrap();
        assert!(one.is_point_mass());
        // Label 3 has mixture mass 0 when alpha = 0.
        for seed in 0..50 {
            assert_eq!(step_finite(&p, &q, 0.0, 40, seed).unwrap().prob(3), 0.0);
        }
        assert_eq!(
            step_finite(&p, &q, 0.2, 30, 9).unwrap(),
            step_finite(&p, &q, 0.2, 30, 9).unwrap()
        );
    }

    #[test]
    fn missing_mass_matches_binomial_formula() {
        // Monte-Carlo over 2000 seeds against 50·(1−1/50)^100.
        let u = Categorical::uniform(Support::range(50));
        let oracle = 50.0 * (1.0f64 - 1.0 / 50.0).powi(100);
        let seeds = 2000;
        let zeros: usize = (0..seeds)
            .map(|s| 50 - step_finite(&u, &u, 0.0, 100, s).unwrap().support_size())
            .sum();
        let mean = zeros as f64 / seeds as f64;
        assert!((oracle - 6.63).abs() < 0.01);
        assert!(
            (mean - oracle).abs() < 0.2,
            "mean zero-mass count {mean}, expected {oracle}"
        );
    }

    fn config(capacity: Capacity, alpha: f64, steps: usize) -> LoopConfig {
        LoopConfig {
            true_dist: cat(&[0.4, 0.3, 0.2, 0.1]),
            initial_model: cat(&[0.1, 0.1, 0.1, 0.7]),
            schedule: AlphaSchedule::constant(alpha),
            sample_size: 50,
            steps,
            master_seed: 11,
            capacity,
            embedding: None,
        }
    }

    #[test]
    fn infinite_capacity_matches_closed_form() {
        let c = config(Capacity::Infinite, 0.1, 100);
        let traj = run_trajectory(&c).unwrap();
        assert_eq!(traj.records.len(), 101);
        let cf = closed_form_ideal(&c.true_dist, &c.initial_model, 0.1, 100).unwrap();
        for (a, b) in traj.final_model.probs().iter().zip(cf.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn records_and_drops() {
        let traj = run_trajectory(&config(Capacity::FiniteSample, 0.0, 20)).unwrap();
        assert_eq!(traj.records.len(), 21);
        assert!(traj.records.last().unwrap().entropy_drop.is_none());
        for w in traj.records.windows(2) {
            assert_eq!(w[0].entropy_drop, Some(w[0].entropy - w[1].entropy));
            assert!(w[1].support_size <= w[0].support_size);
        }
        assert_eq!(traj.records[0].mean.len(), 1);
    }

    #[test]
    fn config_validation() {
        let mut c = config(Capacity::FiniteSample, 0.1, 5);
        c.sample_size = 0;
        assert!(run_trajectory(&c).is_err());
        let mut c = config(Capacity::FiniteSample, 0.1, 0);
        assert!(c.validate().is_err());
        c.steps = 3;
        c.initial_model = Categorical::uniform(Support::range(3));
        assert!(matches!(run_trajectory(&c), Err(Error::SupportMismatch(_))));
    }

    #[test]
    fn replicates_are_deterministic_and_distinct() {
        let c = config(Capacity::FiniteSample, 0.05, 10);
        let a = run_replicates(&c, 3).unwrap();
        let b = run_replicates(&c, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].final_model, a[1].final_model);
    }
}
