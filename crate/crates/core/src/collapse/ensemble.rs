use serde::{Deserialize, Serialize};

use super::schedule::AlphaSchedule;
use super::trajectory::step_finite;
use crate::dist::{self, Categorical};
use crate::error::{Error, Result};
use crate::rng::step_seed;

/// Several models that all retrain on the shared mixture `αP + (1−α)R_t`,
/// where `R_t = Σ ω_i Q_t^i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub models: Vec<Categorical>,
    pub weights: Vec<f64>,
    pub schedule: AlphaSchedule,
    pub sample_size: usize,
    pub steps: usize,
    pub master_seed: u64,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        let first = self
            .models
            .first()
            .ok_or_else(|| Error::InvalidArgument("ensemble has no models".into()))?;
        for m in &self.models[1..] {
            first.support().check_same(m.support())?;
        }
        if self.weights.len() != self.models.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} models",
                self.weights.len(),
                self.models.len()
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| w.is_nan() || **w < 0.0) {
            return Err(Error::out_of_range("weight", *w, "[0, inf)"));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > dist::SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}")));
        }
        if self.sample_size == 0 || self.steps == 0 {
            return Err(Error::InvalidArgument(
                "sample_size and steps must be at least 1".into(),
            ));
        }
        self.schedule.validate()
    }
}

/// `R = Σ ω_i Q^i`.
pub fn ensemble_mixture(models: &[Categorical], weights: &[f64]) -> Result<Categorical> {
    let support = models[0].support().clone();
    let mut acc = vec![0.0; support.len()];
    for (m, &w) in models.iter().zip(weights) {
        support.check_same(m.support())?;
        for (a, p) in acc.iter_mut().zip(m.probs()) {
            *a += w * p;
        }
    }
    Categorical::new(support, acc)
}

/// Retrains every model on `αP + (1−α)R` with its own sampling noise; model
/// `j` at step `t` uses seed `step_seed(master_seed, t, j)`.
pub fn ensemble_step(
    cfg: &EnsembleConfig,
    models: &[Categorical],
    p: &Categorical,
    alpha: f64,
    step_index: usize,
) -> Result<Vec<Categorical>> {
    let r = ensemble_mixture(models, &cfg.weights)?;
    (0..models.len())
        .map(|j| step_finite(p, &r, alpha, cfg.sample_size, step_seed(cfg.master_seed, step_index, j)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleRecord {
    pub t: usize,
    pub alpha: f64,
    pub entropy: f64,
    pub kl: f64,
    pub kl_smoothed: f64,
    pub tv: f64,
    /// `TV(R_{t−1}, R_t)`; absent at `t = 0`.
    pub tv_step: Option<f64>,
    pub support_size: usize,
    pub max_pairwise_tv: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleTrajectory {
    pub records: Vec<EnsembleRecord>,
    pub mixtures: Vec<Categorical>,
    pub final_models: Vec<Categorical>,
}

pub fn run_ensemble(cfg: &EnsembleConfig, p: &Categorical) -> Result<EnsembleTrajectory> {
    cfg.validate()?;
    let mut models: Vec<Categorical> = cfg
        .models
        .iter()
        .map(|m| m.clone().rebased(p.support()))
        .collect::<Result<_>>()?;
    let pseudocount = 1.0 / (10.0 * cfg.sample_size as f64);
    let mut records = Vec::with_capacity(cfg.steps + 1);
    let mut mixtures: Vec<Categorical> = Vec::with_capacity(cfg.steps + 1);
    for t in 0..=cfg.steps {
        let alpha = cfg.schedule.alpha_at(t);
        let r = ensemble_mixture(&models, &cfg.weights)?;
        let mut max_pairwise_tv: f64 = 0.0;
        for i in 0..models.len() {
            for j in i + 1..models.len() {
                max_pairwise_tv = max_pairwise_tv.max(dist::tv_distance(&models[i], &models[j])?);
            }
        }
        records.push(EnsembleRecord {
            t,
            alpha,
            entropy: dist::entropy(&r),
            kl: dist::kl_divergence(p, &r)?,
            kl_smoothed: dist::kl_divergence(p, &r.smoothed(pseudocount))?,
            tv: dist::tv_distance(p, &r)?,
            tv_step: mixtures.last().map(|prev| dist::tv_distance(prev, &r)).transpose()?,
            support_size: r.support_size(),
            max_pairwise_tv,
        });
        mixtures.push(r);
        if t < cfg.steps {
            models = ensemble_step(cfg, &models, p, alpha, t)?;
        }
    }
    Ok(EnsembleTrajectory {
        records,
        mixtures,
        final_models: models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collapse::{run_trajectory, Capacity, LoopConfig};
    use crate::dist::Support;

    fn cfg(models: Vec<Categorical>, weights: Vec<f64>, n: usize, steps: usize) -> EnsembleConfig {
        EnsembleConfig {
            models,
            weights,
            schedule: AlphaSchedule::constant(0.0),
            sample_size: n,
            steps,
            master_seed: 99,
        }
    }

    #[test]
    fn single_model_reduces_to_step_finite() {
        let p = Categorical::uniform(Support::range(6));
        let q = Categorical::new(Support::range(6), vec![0.3, 0.3, 0.1, 0.1, 0.1, 0.1]).unwrap();
        let c = cfg(vec![q.clone()], vec![1.0], 40, 1);
        let stepped = ensemble_step(&c, std::slice::from_ref(&q), &p, 0.2, 5).unwrap();
        assert_eq!(stepped[0], step_finite(&p, &q, 0.2, 40, step_seed(99, 5, 0)).unwrap());
    }

    #[test]
    fn one_nonzero_weight_reproduces_single_trajectory() {
        let s = Support::range(10);
        let p = Categorical::uniform(s.clone());
        let q0 = Categorical::from_weights(s.clone(), (1..=10).map(|i| i as f64).collect()).unwrap();
        let other = Categorical::point_mass(s, 3);
        let ens = run_ensemble(
            &cfg(vec![q0.clone(), other.clone(), other], vec![1.0, 0.0, 0.0], 30, 40),
            &p,
        )
        .unwrap();
        let single = run_trajectory(&LoopConfig {
            true_dist: p,
            initial_model: q0,
            schedule: AlphaSchedule::constant(0.0),
            sample_size: 30,
            steps: 40,
            master_seed: 99,
            capacity: Capacity::FiniteSample,
            embedding: None,
        })
        .unwrap();
        assert_eq!(ens.mixtures.last().unwrap(), &single.final_model);
        for (e, s) in ens.records.iter().zip(&single.records) {
            assert_eq!((e.kl, e.entropy, e.tv), (s.kl, s.entropy, s.tv));
        }
    }

    #[test]
    fn identical_models_stay_close_at_large_n() {
        let p = Categorical::uniform(Support::range(20));
        let m = Categorical::from_weights(Support::range(20), (0..20).map(|i| 1.0 + i as f64).collect()).unwrap();
        let c = cfg(vec![m.clone(), m.clone(), m.clone()], vec![0.5, 0.25, 0.25], 10_000, 1);
        for seed in 0..20 {
            let mut c = c.clone();
            c.master_seed = seed;
            let next = ensemble_step(&c, &c.models, &p, 0.0, 0).unwrap();
            for i in 0..3 {
                for j in i + 1..3 {
                    assert!(dist::tv_distance(&next[i], &next[j]).unwrap() < 0.05);
                }
            }
        }
    }

    #[test]
    fn weight_validation() {
        let m = Categorical::uniform(Support::range(3));
        let p = m.clone();
        assert!(run_ensemble(&cfg(vec![m.clone(), m.clone()], vec![0.5, 0.6], 5, 2), &p).is_err());
        assert!(run_ensemble(&cfg(vec![m.clone(), m.clone()], vec![1.5, -0.5], 5, 2), &p).is_err());
        assert!(run_ensemble(&cfg(vec![m.clone()], vec![0.5, 0.5], 5, 2), &p).is_err());
        assert!(run_ensemble(&cfg(vec![], vec![], 5, 2), &p).is_err());
        let other = Categorical::uniform(Support::range(4));
        assert!(run_ensemble(&cfg(vec![m, other], vec![0.5, 0.5], 5, 2), &p).is_err());
    }
}
