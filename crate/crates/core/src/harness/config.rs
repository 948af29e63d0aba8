use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::collapse::AlphaSchedule;
use crate::complexity::{Boundary, MissPolicy, Normalization};
use crate::dist::Categorical;
use crate::error::{Error, Result};
use crate::neurosym::{CausalCorrector, CorrectionMode, ProjectionDirection};
use crate::tm::{CensusMode, DEFAULT_BUDGET, DEFAULT_EXHAUSTIVE_LIMIT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    Prop1Convergence,
    Thm1Entropy,
    Thm3Drift,
    LemmaTv,
    Thm4Ensemble,
    DpiDemo,
    CtmCensus,
    BdmScan,
    AidRank,
    PipelineContraction,
    SupportRecovery,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 11] = [
        ExperimentId::Prop1Convergence,
        ExperimentId::Thm1Entropy,
        ExperimentId::Thm3Drift,
        ExperimentId::LemmaTv,
        ExperimentId::Thm4Ensemble,
        ExperimentId::DpiDemo,
        ExperimentId::CtmCensus,
        ExperimentId::BdmScan,
        ExperimentId::AidRank,
        ExperimentId::PipelineContraction,
        ExperimentId::SupportRecovery,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentId::Prop1Convergence => "prop1-convergence",
            ExperimentId::Thm1Entropy => "thm1-entropy",
            ExperimentId::Thm3Drift => "thm3-drift",
            ExperimentId::LemmaTv => "lemma-tv",
            ExperimentId::Thm4Ensemble => "thm4-ensemble",
            ExperimentId::DpiDemo => "dpi-demo",
            ExperimentId::CtmCensus => "ctm-census",
            ExperimentId::BdmScan => "bdm-scan",
            ExperimentId::AidRank => "aid-rank",
            ExperimentId::PipelineContraction => "pipeline-contraction",
            ExperimentId::SupportRecovery => "support-recovery",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One experiment run. `params` holds the experiment's own block; omitted
/// keys take their defaults and unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    #[serde(default)]
    pub master_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentId, master_seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            experiment,
            master_seed,
            output_dir: output_dir.into(),
            cache_dir: None,
            params: serde_json::Value::Null,
        }
    }

    pub fn with_params(mut self, params: serde_json::Value) -> Self {
        self.params = params;
        self
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub(crate) fn parse_params<T: DeserializeOwned + Default>(&self) -> Result<T> {
        if self.params.is_null() {
            return Ok(T::default());
        }
        serde_json::from_value(self.params.clone())
            .map_err(|e| Error::Config(format!("{} params: {e}", self.experiment)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prop1Params {
    pub support: usize,
    pub alphas: Vec<f64>,
    pub steps: usize,
}

impl Default for Prop1Params {
    fn default() -> Self {
        Prop1Params {
            support: 16,
            alphas: vec![0.01, 0.1, 0.5],
            steps: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thm1Params {
    pub support: usize,
    pub sample_size: usize,
    pub steps: usize,
    pub seeds: usize,
    pub alpha: f64,
}

impl Default for Thm1Params {
    fn default() -> Self {
        Thm1Params {
            support: 50,
            sample_size: 100,
            steps: 500,
            seeds: 200,
            alpha: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thm3Params {
    pub mu0: f64,
    pub mu_p: f64,
    pub sigma: f64,
    pub alphas: Vec<f64>,
    pub steps: usize,
    pub seeds: usize,
}

impl Default for Thm3Params {
    fn default() -> Self {
        Thm3Params {
            mu0: 0.0,
            mu_p: 1.0,
            sigma: 0.01,
            alphas: vec![0.0, 0.1],
            steps: 10_000,
            seeds: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaTvParams {
    pub triples: usize,
    pub support: usize,
}

impl Default for LemmaTvParams {
    fn default() -> Self {
        LemmaTvParams {
            triples: 1000,
            support: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thm4Params {
    pub support: usize,
    pub models: usize,
    pub sample_size: usize,
    pub steps: usize,
    pub seeds: usize,
    pub alpha: f64,
}

impl Default for Thm4Params {
    fn default() -> Self {
        Thm4Params {
            support: 30,
            models: 3,
            sample_size: 200,
            steps: 300,
            seeds: 100,
            alpha: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpiParams {
    pub joints: usize,
    pub m_size: usize,
    pub x_size: usize,
    pub y_size: usize,
}

impl Default for DpiParams {
    fn default() -> Self {
        DpiParams {
            joints: 1000,
            m_size: 4,
            x_size: 5,
            y_size: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub k: u64,
    pub seed: u64,
}

/// Which census table an experiment reads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableParams {
    pub n_states: usize,
    pub n_symbols: usize,
    pub budget: u64,
    /// Census a uniform sample instead of the whole space.
    pub sample: Option<SampleSpec>,
    pub exhaustive_limit: u64,
}

impl Default for TableParams {
    fn default() -> Self {
        TableParams {
            n_states: 2,
            n_symbols: 2,
            budget: DEFAULT_BUDGET,
            sample: None,
            exhaustive_limit: DEFAULT_EXHAUSTIVE_LIMIT,
        }
    }
}

impl TableParams {
    pub fn mode(&self) -> CensusMode {
        match self.sample {
            Some(s) => CensusMode::Sampled { k: s.k, seed: s.seed },
            None => CensusMode::Exhaustive,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensusParams {
    pub table: TableParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BdmScanParams {
    pub table: TableParams,
    pub length: usize,
    pub block_size: usize,
    pub boundary: Boundary,
    pub miss_policy: MissPolicy,
    pub normalization: Normalization,
}

impl Default for BdmScanParams {
    fn default() -> Self {
        BdmScanParams {
            table: TableParams::default(),
            length: 8,
            block_size: 4,
            boundary: Boundary::default(),
            miss_policy: MissPolicy::MaxPlusOne,
            normalization: Normalization::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AidParams {
    pub table: TableParams,
    pub block_size: usize,
    pub miss_policy: MissPolicy,
    pub object: String,
    /// `flip:3;sub:2:1;del:0:2` syntax; defaults to every single flip plus
    /// deleting each whole block.
    pub perturbations: Option<String>,
    pub random_checks: usize,
    pub random_length: usize,
}

impl Default for AidParams {
    fn default() -> Self {
        AidParams {
            table: TableParams::default(),
            block_size: 2,
            miss_policy: MissPolicy::Error,
            object: "01010101".into(),
            perturbations: None,
            random_checks: 1000,
            random_length: 12,
        }
    }
}

/// How a program pool is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PoolSpec {
    /// Uniform-over-prefix generators on `width`-bit strings.
    Prefix { width: usize },
    /// Periodic continuations of census outputs, strings up to `max_len`.
    Periodic {
        #[serde(default)]
        table: TableParams,
        max_len: usize,
    },
    /// One point mass per census output.
    Point {
        #[serde(default)]
        table: TableParams,
    },
}

impl Default for PoolSpec {
    fn default() -> Self {
        PoolSpec::Prefix { width: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    /// Pool defining the support and, below `max_complexity`, the set `𝒮`.
    pub pool: PoolSpec,
    /// Program id whose output is the truth `P`.
    pub truth: String,
    /// Defaults to uniform.
    pub initial_model: Option<Categorical>,
    /// Pool programs with `K` up to this many bits form `𝒮`.
    pub max_complexity: f64,
    pub projection: bool,
    pub direction: ProjectionDirection,
    pub corrector: Option<CausalCorrector>,
    pub schedule: AlphaSchedule,
    pub sample_size: usize,
    pub steps: usize,
    pub seeds: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            pool: PoolSpec::default(),
            truth: "prefix:0*".into(),
            initial_model: None,
            max_complexity: 7.0,
            projection: true,
            direction: ProjectionDirection::default(),
            corrector: Some(CausalCorrector::new(0.5, 0.5, CorrectionMode::CoordinateSubset, 0)),
            schedule: AlphaSchedule::constant(0.1),
            sample_size: 1000,
            steps: 50,
            seeds: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryParams {
    pub pool: PoolSpec,
    pub mechanism: String,
    pub n_small: usize,
    pub seeds: usize,
    pub lambda: f64,
    pub k_tolerance: f64,
    pub lambda_grid: Vec<f64>,
}

impl Default for RecoveryParams {
    fn default() -> Self {
        RecoveryParams {
            pool: PoolSpec::default(),
            mechanism: "prefix:*".into(),
            n_small: 4,
            seeds: 100,
            lambda: 2.0,
            k_tolerance: 0.0,
            lambda_grid: (0..=16).map(|i| f64::from(i) * 0.25).collect(),
        }
    }
}
