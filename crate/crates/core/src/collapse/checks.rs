use serde::{Deserialize, Serialize};

use crate::dist::{self, Categorical, JointTable, Support};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TvBoundCheck {
    /// `TV(αP + (1−α)Q, Q)`.
    pub lhs: f64,
    /// `α·TV(P, Q)`.
    pub rhs: f64,
    pub holds: bool,
}

/// The mixture moves `Q` by exactly `α(P − Q)`, so `lhs = rhs ≤ α`.
pub fn tv_mixture_bound_check(p: &Categorical, q: &Categorical, alpha: f64) -> Result<TvBoundCheck> {
    let mixed = dist::mix(alpha, p, q)?;
    let lhs = dist::tv_distance(&mixed, q)?;
    let rhs = alpha * dist::tv_distance(p, q)?;
    let holds = (lhs - rhs).abs() <= 1e-12 && lhs <= alpha + 1e-12;
    Ok(TvBoundCheck { lhs, rhs, holds })
}

/// A row-stochastic matrix `K(y | x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelRepr", into = "ChannelRepr")]
pub struct Channel {
    outputs: Support,
    rows: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelRepr {
    output_labels: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<ChannelRepr> for Channel {
    type Error = Error;

    fn try_from(r: ChannelRepr) -> Result<Self> {
        Channel::new(Support::new(r.output_labels)?, r.rows)
    }
}

impl From<Channel> for ChannelRepr {
    fn from(c: Channel) -> Self {
        ChannelRepr {
            output_labels: c.outputs.labels().to_vec(),
            rows: c.rows,
        }
    }
}

impl Channel {
    pub fn new(outputs: Support, rows: Vec<Vec<f64>>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                Categorical::new(outputs.clone(), r)
                    .map(|c| c.probs().to_vec())
                    .map_err(|e| Error::InvalidArgument(format!("channel row {i} is not stochastic: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Err(Error::InvalidArgument("channel has no rows".into()));
        }
        Ok(Channel { outputs, rows })
    }

    pub fn identity(support: Support) -> Self {
        let n = support.len();
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Channel { outputs: support, rows }
    }

    /// Every input mapped to the same output distribution.
    pub fn constant(inputs: usize, output: &Categorical) -> Self {
        Channel {
            outputs: output.support().clone(),
            rows: vec![output.probs().to_vec(); inputs],
        }
    }

    /// Binary symmetric channel.
    pub fn binary_symmetric(flip: f64) -> Result<Self> {
        Channel::new(Support::range(2), vec![vec![1.0 - flip, flip], vec![flip, 1.0 - flip]])
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Pushes the column variable of `joint` through the channel.
    pub fn push(&self, joint: &JointTable) -> Result<JointTable> {
        if joint.col_labels().len() != self.rows.len() {
            return Err(Error::InvalidArgument(format!(
                "channel has {} inputs but the joint has {} columns",
                self.rows.len(),
                joint.col_labels().len()
            )));
        }
        let probs = joint
            .probs()
            .iter()
            .map(|row| {
                let mut out = vec![0.0; self.outputs.len()];
                for (&pmx, k) in row.iter().zip(&self.rows) {
                    for (o, kxy) in out.iter_mut().zip(k) {
                        *o += pmx * kxy;
                    }
                }
                out
            })
            .collect();
        JointTable::new(joint.row_labels().clone(), self.outputs.clone(), probs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DpiResult {
    pub i_mx: f64,
    pub i_my: f64,
}

/// For the chain `M → X → Y` with `Y` drawn from `channel(· | X)`, returns
/// `I(M;X)` and `I(M;Y)`.
pub fn dpi_chain(joint_mx: &JointTable, channel: &Channel) -> Result<DpiResult> {
    let joint_my = channel.push(joint_mx)?;
    Ok(DpiResult {
        i_mx: dist::mutual_information(joint_mx),
        i_my: dist::mutual_information(&joint_my),
    })
}
