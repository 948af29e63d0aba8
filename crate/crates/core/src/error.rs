use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label {0:?} is not in the support")]
    UnknownLabel(String),

    #[error("no embedding for label {0:?}")]
    MissingEmbedding(String),

    #[error("machine space ({n_states},{n_symbols}) has {count} machines, above the exhaustive limit {limit}")]
    SpaceTooLarge {
        n_states: usize,
        n_symbols: usize,
        count: u64,
        limit: u64,
    },

    #[error("machine space ({n_states},{n_symbols}) size overflows u64")]
    SpaceOverflow { n_states: usize, n_symbols: usize },

    #[error("machine index {index} out of range for a space of {count} machines")]
    IndexOutOfRange { index: u64, count: u64 },

    #[error("malformed table: {0}")]
    TableFormat(String),

    #[error("table version mismatch: expected {expected:?}, found {found:?}")]
    VersionMismatch { expected: String, found: String },

    #[error("table checksum mismatch: recorded {recorded}, computed {computed}")]
    ChecksumMismatch { recorded: String, computed: String },

    #[error("output {0:?} is not in the CTM table")]
    TableMiss(String),

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("no member of the constraint set is at finite divergence")]
    NoFeasibleProjection,

    #[error("no program in the pool assigns finite likelihood to the data")]
    NoExplanation,

    #[error("divergence series has a non-finite value at index {0}")]
    NonFiniteSeries(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown series {name:?}; available: {available}")]
    UnknownSeries { name: String, available: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Integrity,
    Invariant,
    Other,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Json(_) | Error::UnknownSeries { .. } => ErrorClass::Config,
            Error::TableFormat(_) | Error::VersionMismatch { .. } | Error::ChecksumMismatch { .. } => {
                ErrorClass::Integrity
            }
            Error::Invariant(_) => ErrorClass::Invariant,
            _ => ErrorClass::Other,
        }
    }

    pub(crate) fn out_of_range(name: &'static str, value: f64, range: &'static str) -> Self {
        Error::OutOfRange { name, value, range }
    }
}
