//! The scalar mean process `μ_{t+1} = (1−α_t)·μ_t + α_t·μ_P + ξ_t`.
//!
//! With `α_t = 0` this is a Gaussian random walk and `Var(μ_t) = t·σ²`; with a
//! constant `α > 0` it is a stationary AR(1) with variance `σ²/(1−(1−α)²)`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schedule::AlphaSchedule;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseModel {
    None,
    /// i.i.d. `N(0, σ²)` perturbation of the mean, in embedding units.
    GaussianEmbedding {
        sigma: f64,
    },
}

impl NoiseModel {
    pub fn sigma(&self) -> f64 {
        match self {
            NoiseModel::None => 0.0,
            NoiseModel::GaussianEmbedding { sigma } => *sigma,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub mu0: f64,
    pub mu_p: f64,
    pub schedule: AlphaSchedule,
    pub noise: NoiseModel,
    pub steps: usize,
    pub n_seeds: usize,
    pub master_seed: u64,
}

/// Cross-seed mean and sample variance of `μ_t` for `t = 0..=steps`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftResult {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Seeds per aggregation block. Fixed so results do not depend on the
/// thread count.
const BLOCK: usize = 64;

struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments {
            n: 0.0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, path: &[f64]) {
        self.n += 1.0;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(path) {
            let d = x - *m;
            *m += d / self.n;
            *s += d * (x - *m);
        }
    }

    fn merge(mut self, other: Moments) -> Moments {
        let n = self.n + other.n;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.m2[i] += other.m2[i] + d * d * self.n * other.n / n;
            self.mean[i] += d * other.n / n;
        }
        self.n = n;
        self
    }
}

fn simulate_path(cfg: &DriftConfig, seed: u64, path: &mut [f64]) {
    let sigma = cfg.noise.sigma();
    let mut rng = seeded_rng(seed);
    let mut mu = cfg.mu0;
    path[0] = mu;
    for t in 0..cfg.steps {
        let a = cfg.schedule.alpha_at(t);
        let xi = if sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        } else {
            0.0
        };
        mu = (1.0 - a) * mu + a * cfg.mu_p + xi;
        path[t + 1] = mu;
    }
}

pub fn mean_drift_sim(cfg: &DriftConfig) -> Result<DriftResult> {
    let sigma = cfg.noise.sigma();
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::out_of_range("sigma", sigma, "[0, inf)"));
    }
    if cfg.n_seeds < 2 {
        return Err(Error::InvalidArgument("n_seeds must be at least 2".into()));
    }
    cfg.schedule.validate()?;
    let len = cfg.steps + 1;
    let blocks: Vec<Moments> = (0..cfg.n_seeds.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = Moments::new(len);
            let mut path = vec![0.0; len];
            for s in b * BLOCK..((b + 1) * BLOCK).min(cfg.n_seeds) {
                simulate_path(cfg, derive_seed(cfg.master_seed, &[s as u64]), &mut path);
                acc.push(&path);
            }
            acc
        })
        .collect();
    let total = blocks.into_iter().reduce(Moments::merge).expect("at least one block");
    let denom = total.n - 1.0;
    Ok(DriftResult {
        variance: total.m2.iter().map(|s| s / denom).collect(),
        mean: total.mean,
    })
}

/// Per-seed paths, for small runs that export every `(seed, t)`.
pub fn drift_paths(cfg: &DriftConfig) -> Vec<Vec<f64>> {
    (0..cfg.n_seeds)
        .map(|s| {
            let mut path = vec![0.0; cfg.steps + 1];
            simulate_path(cfg, derive_seed(cfg.master_seed, &[s as u64]), &mut path);
            path
        })
        .collect()
}
