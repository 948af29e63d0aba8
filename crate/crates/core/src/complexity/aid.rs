use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{bdm, BdmConfig};
use crate::error::{Error, Result};
use crate::tm::OutputFrequencyTable;

/// An edit of a digit string. Positions are 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Perturbation {
    /// Swap a binary symbol `0 ↔ 1`.
    Flip {
        position: usize,
    },
    DeleteBlock {
        position: usize,
        length: usize,
    },
    Substitute {
        position: usize,
        symbol: u8,
    },
}

fn invalid(msg: String) -> Error {
    Error::InvalidPerturbation(msg)
}

impl Perturbation {
    pub fn apply(&self, o: &str) -> Result<String> {
        let bytes = o.as_bytes();
        let at = |p: usize| {
            bytes
                .get(p)
                .copied()
                .ok_or_else(|| invalid(format!("{self} is out of bounds for an object of length {}", o.len())))
        };
        let mut out = bytes.to_vec();
        match *self {
            Perturbation::Flip { position } => {
                out[position] = match at(position)? {
                    b'0' => b'1',
                    b'1' => b'0',
                    s => return Err(invalid(format!("cannot flip non-binary symbol {:?}", s as char))),
                };
            }
            Perturbation::Substitute { position, symbol } => {
                at(position)?;
                if symbol > 9 {
                    return Err(invalid(format!("symbol {symbol} is not a digit")));
                }
                out[position] = b'0' + symbol;
            }
            Perturbation::DeleteBlock { position, length } => {
                let end = position.checked_add(length).filter(|&e| length > 0 && e <= o.len());
                let Some(end) = end else {
                    return Err(invalid(format!(
                        "{self} is out of bounds for an object of length {}",
                        o.len()
                    )));
                };
                out.drain(position..end);
            }
        }
        String::from_utf8(out).map_err(|_| invalid("object is not a digit string".into()))
    }

    /// The perturbation undoing `self` on `o`, if one exists. Deletions
    /// lose information and have none.
    pub fn inverse(&self, o: &str) -> Option<Perturbation> {
        match *self {
            Perturbation::Flip { .. } => Some(*self),
            Perturbation::Substitute { position, .. } => {
                let old = *o.as_bytes().get(position)?;
                old.is_ascii_digit().then(|| Perturbation::Substitute {
                    position,
                    symbol: old - b'0',
                })
            }
            Perturbation::DeleteBlock { .. } => None,
        }
    }

    /// Parses a `;`-separated list such as `flip:3;sub:2:1;del:0:2`.
    pub fn parse_list(spec: &str) -> Result<Vec<Perturbation>> {
        spec.split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::Flip { position } => write!(f, "flip:{position}"),
            Perturbation::DeleteBlock { position, length } => write!(f, "del:{position}:{length}"),
            Perturbation::Substitute { position, symbol } => write!(f, "sub:{position}:{symbol}"),
        }
    }
}

impl FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| invalid(format!("cannot parse {s:?}")))
        };
        let p = match (parts[0], parts.len()) {
            ("flip", 2) => Perturbation::Flip { position: num(1)? },
            ("del", 3) => Perturbation::DeleteBlock {
                position: num(1)?,
                length: num(2)?,
            },
            ("sub", 3) => Perturbation::Substitute {
                position: num(1)?,
                symbol: u8::try_from(num(2)?).map_err(|_| invalid(format!("cannot parse {s:?}")))?,
            },
            _ => {
                return Err(invalid(format!(
                    "cannot parse {s:?}; expected flip:P, del:P:L or sub:P:S"
                )))
            }
        };
        Ok(p)
    }
}

/// `BDM(τ(o)) − BDM(o)` in bits.
pub fn aid_delta(o: &str, tau: &Perturbation, cfg: &BdmConfig, table: &OutputFrequencyTable) -> Result<f64> {
    let perturbed = tau.apply(o)?;
    Ok(bdm(&perturbed, cfg, table)?.value - bdm(o, cfg, table)?.value)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedPerturbation {
    pub perturbation: Perturbation,
    pub perturbed: String,
    pub delta: f64,
}

/// Perturbations ordered by `|Δ|`, largest first; ties keep input order.
pub fn rank_perturbations(
    o: &str,
    taus: &[Perturbation],
    cfg: &BdmConfig,
    table: &OutputFrequencyTable,
) -> Result<Vec<RankedPerturbation>> {
    let base = bdm(o, cfg, table)?.value;
    let mut ranked = taus
        .iter()
        .map(|tau| {
            let perturbed = tau.apply(o)?;
            let delta = bdm(&perturbed, cfg, table)?.value - base;
            Ok(RankedPerturbation {
                perturbation: *tau,
                perturbed,
                delta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.delta.abs().total_cmp(&a.delta.abs()));
    Ok(ranked)
}
