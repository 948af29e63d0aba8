//! Finite discrete distributions and the information quantities on them.
//!
//! All logarithms are base 2, so every entropy, divergence and mutual
//! information is in bits. A distribution lives on an ordered [`Support`];
//! two distributions can only be compared when their supports carry the same
//! labels in the same order. There is no re-alignment.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Sum-to-one tolerance accepted without touching the probabilities.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Largest drift from one that is treated as rounding and renormalised.
pub const RENORMALIZE_TOL: f64 = 1e-9;

/// An ordered list of unique symbol labels, shared cheaply between
/// distributions of the same run.
#[derive(Clone)]
pub struct Support(Arc<[String]>);

impl Support {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidDistribution("support is empty".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(labels.len());
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidDistribution(format!("duplicate label {l:?}")));
            }
        }
        Ok(Support(labels.into()))
    }

    /// Labels `"0"`, `"1"`, …, `"n-1"`.
    pub fn range(n: usize) -> Self {
        assert!(n > 0, "support must be non-empty");
        Support((0..n).map(|i| i.to_string()).collect::<Vec<_>>().into())
    }

    /// All binary strings of exactly `width` symbols, in lexicographic order.
    pub fn binary_strings(width: usize) -> Self {
        assert!((1..=20).contains(&width), "width must be in 1..=20");
        Support(
            (0..1usize << width)
                .map(|v| format!("{v:0width$b}"))
                .collect::<Vec<_>>()
                .into(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn label(&self, i: usize) -> &str {
        &self.0[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.0.iter().position(|l| l == label)
    }

    /// Same labels in the same order.
    pub fn same_as(&self, other: &Support) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }

    pub(crate) fn check_same(&self, other: &Support) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::SupportMismatch(format!(
                "{} labels vs {} labels, or a different order",
                self.len(),
                other.len()
            )))
        }
    }
}

impl PartialEq for Support {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

impl fmt::Debug for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

fn check_simplex(mut probs: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidDistribution(format!("{what} has entry {p}")));
    }
    let sum: f64 = probs.iter().sum();
    let drift = (sum - 1.0).abs();
    if drift > RENORMALIZE_TOL {
        return Err(Error::InvalidDistribution(format!("{what} sums to {sum}")));
    }
    if drift > SIMPLEX_TOL {
        probs.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(probs)
}

/// A probability distribution on a finite labelled support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CategoricalRepr", into = "CategoricalRepr")]
pub struct Categorical {
    support: Support,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CategoricalRepr {
    labels: Vec<String>,
    probs: Vec<f64>,
}

impl TryFrom<CategoricalRepr> for Categorical {
    type Error = Error;

    fn try_from(r: CategoricalRepr) -> Result<Self> {
        Categorical::new(Support::new(r.labels)?, r.probs)
    }
}

impl From<Categorical> for CategoricalRepr {
    fn from(c: Categorical) -> Self {
        CategoricalRepr {
            labels: c.support.labels().to_vec(),
            probs: c.probs,
        }
    }
}

impl Categorical {
    /// Validates `probs` against the simplex. Drift from one up to
    /// [`RENORMALIZE_TOL`] is renormalised away; anything larger is an error.
    pub fn new(support: Support, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != support.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} probabilities for {} labels",
                probs.len(),
                support.len()
            )));
        }
        let probs = check_simplex(probs, "probability vector")?;
        Ok(Categorical { support, probs })
    }

    /// Normalises non-negative weights. Weights already summing to one within
    /// [`SIMPLEX_TOL`] are kept bit-for-bit.
    pub fn from_weights(support: Support, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != support.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} weights for {} labels",
                weights.len(),
                support.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution("negative or non-finite weight".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        let probs = if (sum - 1.0).abs() <= SIMPLEX_TOL {
            weights
        } else {
            weights.into_iter().map(|w| w / sum).collect()
        };
        Ok(Categorical { support, probs })
    }

    pub fn uniform(support: Support) -> Self {
        let n = support.len();
        Categorical {
            probs: vec![1.0 / n as f64; n],
            support,
        }
    }

    pub fn point_mass(support: Support, index: usize) -> Self {
        assert!(index < support.len(), "point mass index out of range");
        let mut probs = vec![0.0; support.len()];
        probs[index] = 1.0;
        Categorical { support, probs }
    }

    /// Uniform over the labels at `indices`.
    pub fn uniform_over(support: Support, indices: &[usize]) -> Result<Self> {
        let mut weights = vec![0.0; support.len()];
        for &i in indices {
            *weights
                .get_mut(i)
                .ok_or_else(|| Error::InvalidArgument(format!("index {i} outside support")))? = 1.0;
        }
        Categorical::from_weights(support, weights)
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Number of labels with strictly positive mass.
    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    /// Indices of labels with strictly positive mass.
    pub fn positive_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.probs[i] > 0.0).collect()
    }

    pub fn is_point_mass(&self) -> bool {
        self.support_size() == 1
    }

    /// Re-labels onto another support object carrying the same labels, so
    /// later comparisons hit the pointer fast path.
    pub fn rebased(mut self, support: &Support) -> Result<Self> {
        self.support.check_same(support)?;
        self.support = support.clone();
        Ok(self)
    }

    /// Additive smoothing with `pseudocount` on every label.
    pub fn smoothed(&self, pseudocount: f64) -> Categorical {
        let total = 1.0 + pseudocount * self.len() as f64;
        Categorical {
            support: self.support.clone(),
            probs: self.probs.iter().map(|p| (p + pseudocount) / total).collect(),
        }
    }
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn entropy(p: &Categorical) -> f64 {
    let h: f64 = p.probs.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum();
    h.max(0.0)
}

/// `KL(P‖Q)` in bits. Returns `f64::INFINITY` when `P` puts mass where `Q`
/// has none.
pub fn kl_divergence(p: &Categorical, q: &Categorical) -> Result<f64> {
    p.support.check_same(&q.support)?;
    let mut total = 0.0;
    for (&pi, &qi) in p.probs.iter().zip(&q.probs) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Ok(f64::INFINITY);
            }
            total += pi * (pi / qi).log2();
        }
    }
    Ok(total.max(0.0))
}

/// Half the L1 distance.
pub fn tv_distance(p: &Categorical, q: &Categorical) -> Result<f64> {
    p.support.check_same(&q.support)?;
    let l1: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum();
    Ok(0.5 * l1)
}

/// The convex combination `alpha·P + (1−alpha)·Q`.
pub fn mix(alpha: f64, p: &Categorical, q: &Categorical) -> Result<Categorical> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::out_of_range("alpha", alpha, "[0, 1]"));
    }
    p.support.check_same(&q.support)?;
    let beta = 1.0 - alpha;
    let probs = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| alpha * a + beta * b)
        .collect();
    Categorical::new(p.support.clone(), probs)
}

/// `n` i.i.d. draws, stored as indices into the generating support.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    support: Support,
    draws: Vec<usize>,
    source_seed: u64,
}

impl SampleSet {
    /// Builds a sample set from labels, e.g. a data file.
    pub fn from_labels<S: AsRef<str>>(support: &Support, labels: &[S], source_seed: u64) -> Result<Self> {
        let index: HashMap<&str, usize> = support
            .labels()
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let draws = labels
            .iter()
            .map(|l| {
                index
                    .get(l.as_ref())
                    .copied()
                    .ok_or_else(|| Error::UnknownLabel(l.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        if draws.is_empty() {
            return Err(Error::InvalidArgument("empty sample".into()));
        }
        Ok(SampleSet {
            support: support.clone(),
            draws,
            source_seed,
        })
    }

    pub fn n(&self) -> usize {
        self.draws.len()
    }

    pub fn source_seed(&self) -> u64 {
        self.source_seed
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn draw_indices(&self) -> &[usize] {
        &self.draws
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.draws.iter().map(|&i| self.support.label(i))
    }

    /// Occurrence count of every label of `support`.
    pub fn counts_on(&self, support: &Support) -> Result<Vec<u64>> {
        let mut counts = vec![0u64; support.len()];
        if self.support.same_as(support) {
            for &d in &self.draws {
                counts[d] += 1;
            }
        } else {
            for label in self.labels() {
                let i = support
                    .index_of(label)
                    .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
                counts[i] += 1;
            }
        }
        Ok(counts)
    }
}

/// Draws `n` i.i.d. symbols from `p` by inverse-CDF lookup on uniforms from
/// the seeded generator. Zero-mass symbols are never drawn.
pub fn sample(p: &Categorical, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &x in &p.probs {
        acc += x;
        cdf.push(acc);
    }
    let last_positive = p
        .probs
        .iter()
        .rposition(|&x| x > 0.0)
        .expect("a valid distribution has positive mass");
    let mut rng = seeded_rng(seed);
    let draws = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            cdf.partition_point(|&c| c <= u).min(last_positive)
        })
        .collect();
    Ok(SampleSet {
        support: p.support.clone(),
        draws,
        source_seed: seed,
    })
}

/// Maximum-likelihood fit over the whole simplex: relative frequencies, with
/// unobserved labels at exactly zero.
pub fn fit_empirical(samples: &SampleSet, support: &Support) -> Result<Categorical> {
    let counts = samples.counts_on(support)?;
    let n = samples.n() as f64;
    let probs = counts.into_iter().map(|c| c as f64 / n).collect();
    Categorical::new(support.clone(), probs)
}

/// A fixed-dimension real embedding of labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Vec<f64>>", into = "BTreeMap<String, Vec<f64>>")]
pub struct FeatureMap {
    dim: usize,
    embedding: BTreeMap<String, Vec<f64>>,
}

impl TryFrom<BTreeMap<String, Vec<f64>>> for FeatureMap {
    type Error = Error;

    fn try_from(m: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        FeatureMap::new(m)
    }
}

impl From<FeatureMap> for BTreeMap<String, Vec<f64>> {
    fn from(f: FeatureMap) -> Self {
        f.embedding
    }
}

impl FeatureMap {
    pub fn new(embedding: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let dim = embedding
            .values()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidArgument("empty feature map".into()))?;
        if dim == 0 || embedding.values().any(|v| v.len() != dim) {
            return Err(Error::InvalidArgument(
                "embedding vectors must share a dimension ≥ 1".into(),
            ));
        }
        Ok(FeatureMap { dim, embedding })
    }

    /// One-dimensional embedding from `(label, value)` pairs.
    pub fn scalar<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        FeatureMap::new(pairs.into_iter().map(|(l, v)| (l.into(), vec![v])).collect())
    }

    /// Embeds the `i`-th label of `support` as the scalar `i`.
    pub fn positional(support: &Support) -> Self {
        FeatureMap {
            dim: 1,
            embedding: support
                .labels()
                .iter()
                .enumerate()
                .map(|(i, l)| (l.clone(), vec![i as f64]))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.embedding.get(label).map(Vec::as_slice)
    }
}

/// First moment `Σ P(x)·φ(x)`.
pub fn mean_embed(p: &Categorical, phi: &FeatureMap) -> Result<Vec<f64>> {
    let mut mean = vec![0.0; phi.dim];
    for (label, &px) in p.support.labels().iter().zip(&p.probs) {
        let v = phi.get(label).ok_or_else(|| Error::MissingEmbedding(label.clone()))?;
        for (m, x) in mean.iter_mut().zip(v) {
            *m += px * x;
        }
    }
    Ok(mean)
}

/// A joint distribution on a finite product space, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointRepr", into = "JointRepr")]
pub struct JointTable {
    rows: Support,
    cols: Support,
    probs: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointRepr {
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    probs: Vec<Vec<f64>>,
}

impl TryFrom<JointRepr> for JointTable {
    type Error = Error;

    fn try_from(r: JointRepr) -> Result<Self> {
        JointTable::new(Support::new(r.row_labels)?, Support::new(r.col_labels)?, r.probs)
    }
}

impl From<JointTable> for JointRepr {
    fn from(j: JointTable) -> Self {
        JointRepr {
            row_labels: j.rows.labels().to_vec(),
            col_labels: j.cols.labels().to_vec(),
            probs: j.probs,
        }
    }
}

impl JointTable {
    pub fn new(rows: Support, cols: Support, probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.len() != rows.len() || probs.iter().any(|r| r.len() != cols.len()) {
            return Err(Error::InvalidDistribution(format!(
                "joint matrix must be {}x{}",
                rows.len(),
                cols.len()
            )));
        }
        let width = cols.len();
        let flat = check_simplex(probs.concat(), "joint matrix")?;
        let probs = flat.chunks(width).map(<[f64]>::to_vec).collect();
        Ok(JointTable { rows, cols, probs })
    }

    /// The product of two marginals.
    pub fn independent(row: &Categorical, col: &Categorical) -> Result<Self> {
        let probs = row
            .probs()
            .iter()
            .map(|a| col.probs().iter().map(|b| a * b).collect())
            .collect();
        JointTable::new(row.support().clone(), col.support().clone(), probs)
    }

    pub fn row_labels(&self) -> &Support {
        &self.rows
    }

    pub fn col_labels(&self) -> &Support {
        &self.cols
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn row_marginal(&self) -> Categorical {
        let probs = self.probs.iter().map(|r| r.iter().sum()).collect();
        Categorical::from_weights(self.rows.clone(), probs).expect("marginal of a valid joint")
    }

    pub fn col_marginal(&self) -> Categorical {
        let mut probs = vec![0.0; self.cols.len()];
        for row in &self.probs {
            for (acc, p) in probs.iter_mut().zip(row) {
                *acc += p;
            }
        }
        Categorical::from_weights(self.cols.clone(), probs).expect("marginal of a valid joint")
    }
}

/// `I(U;V)` in bits.
pub fn mutual_information(joint: &JointTable) -> f64 {
    let pu = joint.row_marginal();
    let pv = joint.col_marginal();
    let mut total = 0.0;
    for (row, &a) in joint.probs.iter().zip(pu.probs()) {
        for (&puv, &b) in row.iter().zip(pv.probs()) {
            if puv > 0.0 {
                total += puv * (puv / (a * b)).log2();
            }
        }
    }
    total.max(0.0)
}
