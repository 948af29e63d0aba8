use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::collapse::AlphaSchedule;
use crate::dist::{self, kl_divergence, Categorical};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMode {
    /// Move a seeded subset of `round(φ·K)` coordinates toward `P`, then
    /// renormalise.
    #[default]
    CoordinateSubset,
    /// Move the whole distribution: `ηφ·P + (1−ηφ)·R`.
    Exact,
}

/// Pulls a model toward the true distribution on part of its support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalCorrector {
    pub eta_c: f64,
    /// Coverage `φ_t ∈ [0,1]`.
    pub phi: AlphaSchedule,
    #[serde(default)]
    pub mode: CorrectionMode,
    #[serde(default)]
    pub correction_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrectionOutcome {
    pub corrected: Categorical,
    /// `1 − η·φ_t`.
    pub kappa: f64,
    /// `max(0, KL(P‖C(R)) − κ·KL(P‖R))`.
    pub delta_c: f64,
}

impl CausalCorrector {
    pub fn new(eta_c: f64, phi: f64, mode: CorrectionMode, correction_seed: u64) -> Self {
        CausalCorrector {
            eta_c,
            phi: AlphaSchedule::constant(phi),
            mode,
            correction_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0) {
            return Err(Error::out_of_range("eta_c", self.eta_c, "(0, 1]"));
        }
        self.phi.validate()
    }

    pub fn kappa(&self, t: usize) -> f64 {
        1.0 - self.eta_c * self.phi.alpha_at(t)
    }

    pub fn correct(&self, r: &Categorical, p: &Categorical, t: usize) -> Result<Categorical> {
        self.validate()?;
        r.support().check_same(p.support())?;
        let phi = self.phi.alpha_at(t);
        match self.mode {
            CorrectionMode::Exact => dist::mix(self.eta_c * phi, p, r),
            CorrectionMode::CoordinateSubset => {
                let k = r.len();
                let chosen = ((phi * k as f64).round() as usize).min(k);
                if chosen == 0 {
                    return Ok(r.clone());
                }
                let mut rng = seeded_rng(derive_seed(self.correction_seed, &[t as u64]));
                let mut w = r.probs().to_vec();
                for i in index::sample(&mut rng, k, chosen) {
                    w[i] = (1.0 - self.eta_c) * w[i] + self.eta_c * p.prob(i);
                }
                Categorical::from_weights(r.support().clone(), w)
            }
        }
    }

    pub fn correct_measured(&self, r: &Categorical, p: &Categorical, t: usize) -> Result<CorrectionOutcome> {
        let corrected = self.correct(r, p, t)?;
        let kappa = self.kappa(t);
        let before = kl_divergence(p, r)?;
        let after = kl_divergence(p, &corrected)?;
        let delta_c = if after.is_finite() && before.is_finite() {
            (after - kappa * before).max(0.0)
        } else if after.is_finite() {
            0.0
        } else {
            f64::INFINITY
        };
        Ok(CorrectionOutcome {
            corrected,
            kappa,
            delta_c,
        })
    }
}

pub fn causal_correct(r: &Categorical, p: &Categorical, corrector: &CausalCorrector, t: usize) -> Result<Categorical> {
    corrector.correct(r, p, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Support;

    fn cat(p: &[f64]) -> Categorical {
        Categorical::new(Support::range(p.len()), p.to_vec()).unwrap()
    }

    #[test]
    fn examples() {
        let p = cat(&[0.5, 0.3, 0.2]);
        let r = cat(&[0.1, 0.1, 0.8]);
        for mode in [CorrectionMode::Exact, CorrectionMode::CoordinateSubset] {
            assert_eq!(CausalCorrector::new(0.7, 0.0, mode, 1).correct(&r, &p, 0).unwrap(), r);
            assert_eq!(CausalCorrector::new(1.0, 1.0, mode, 1).correct(&r, &p, 3).unwrap(), p);
            assert_eq!(CausalCorrector::new(1.0, 0.0, mode, 1).kappa(0), 1.0);
        }
        let p2 = cat(&[0.9, 0.1]);
        let r2 = cat(&[0.2, 0.8]);
        for mode in [CorrectionMode::Exact, CorrectionMode::CoordinateSubset] {
            let mid = CausalCorrector::new(0.5, 1.0, mode, 1).correct(&r2, &p2, 0).unwrap();
            assert!((mid.prob(0) - 0.55).abs() < 1e-15 && (mid.prob(1) - 0.45).abs() < 1e-15);
            assert!(kl_divergence(&p2, &mid).unwrap() < kl_divergence(&p2, &r2).unwrap());
        }
    }

    #[test]
    fn subset_size_and_determinism() {
        let p = Categorical::uniform(Support::range(10));
        let r = Categorical::point_mass(Support::range(10), 0);
        let c = CausalCorrector::new(1.0, 0.3, CorrectionMode::CoordinateSubset, 9);
        let out = c.correct(&r, &p, 4).unwrap();
        assert_eq!(out, c.correct(&r, &p, 4).unwrap());
        // Three coordinates get 0.1 before renormalising; the untouched 0
        // coordinate may or may not be among them.
        let touched = out.probs().iter().filter(|&&x| x > 0.0).count();
        assert!(touched == 3 || touched == 4);
    }

    #[test]
    fn exact_mode_contracts() {
        let p = cat(&[0.4, 0.3, 0.2, 0.1]);
        let r = cat(&[0.05, 0.05, 0.1, 0.8]);
        for (eta, phi) in [(0.3, 0.5), (1.0, 0.2), (0.9, 0.9)] {
            let c = CausalCorrector::new(eta, phi, CorrectionMode::Exact, 0);
            let o = c.correct_measured(&r, &p, 0).unwrap();
            assert!(o.delta_c <= 1e-9);
            assert_eq!(o.kappa, 1.0 - eta * phi);
        }
    }

    #[test]
    fn ranges() {
        let p = cat(&[0.5, 0.5]);
        assert!(CausalCorrector::new(0.0, 0.5, CorrectionMode::Exact, 0)
            .correct(&p, &p, 0)
            .is_err());
        assert!(CausalCorrector::new(0.5, 1.5, CorrectionMode::Exact, 0)
            .correct(&p, &p, 0)
            .is_err());
        assert!(CausalCorrector::new(0.5, 0.5, CorrectionMode::Exact, 0)
            .correct(&cat(&[1.0, 0.0, 0.0]), &p, 0)
            .is_err());
    }
}
