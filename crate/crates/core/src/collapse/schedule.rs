use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The fraction `α_t` of fresh data from the true distribution at step `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlphaSchedule {
    Constant {
        alpha: f64,
    },
    /// `α₀·rᵗ` with `r ∈ (0,1)`.
    Geometric {
        alpha0: f64,
        ratio: f64,
    },
    /// `α₀/(1+t)`.
    Harmonic {
        alpha0: f64,
    },
    /// Explicit values; steps past the end repeat the last entry.
    Table {
        values: Vec<f64>,
    },
}

impl AlphaSchedule {
    pub fn constant(alpha: f64) -> Self {
        AlphaSchedule::Constant { alpha }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::out_of_range(name, v, "[0, 1]"))
            }
        };
        match self {
            AlphaSchedule::Constant { alpha } => unit("alpha", *alpha),
            AlphaSchedule::Geometric { alpha0, ratio } => {
                unit("alpha0", *alpha0)?;
                if *ratio > 0.0 && *ratio < 1.0 {
                    Ok(())
                } else {
                    Err(Error::out_of_range("ratio", *ratio, "(0, 1)"))
                }
            }
            AlphaSchedule::Harmonic { alpha0 } => unit("alpha0", *alpha0),
            AlphaSchedule::Table { values } => {
                if values.is_empty() {
                    return Err(Error::InvalidArgument("alpha table is empty".into()));
                }
                values.iter().try_for_each(|&v| unit("alpha", v))
            }
        }
    }

    pub fn alpha_at(&self, t: usize) -> f64 {
        match self {
            AlphaSchedule::Constant { alpha } => *alpha,
            AlphaSchedule::Geometric { alpha0, ratio } => alpha0 * ratio.powi(t.min(i32::MAX as usize) as i32),
            AlphaSchedule::Harmonic { alpha0 } => alpha0 / (1.0 + t as f64),
            AlphaSchedule::Table { values } => values[t.min(values.len() - 1)],
        }
    }
}
