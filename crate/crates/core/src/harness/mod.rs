//! Configured, reproducible experiment runs. Each run writes CSV metric
//! files, a `summary.json` and a `manifest.json` into its own directory.

mod cache;
mod config;
mod experiments;
mod output;

pub use cache::{CachedTable, TableCache, CACHE_ENV, DEFAULT_CACHE_DIR};
pub use config::{
    AidParams, BdmScanParams, CensusParams, DpiParams, ExperimentConfig, ExperimentId, LemmaTvParams, PipelineParams,
    PoolSpec, Prop1Params, RecoveryParams, SampleSpec, TableParams, Thm1Params, Thm3Params, Thm4Params,
};
pub use experiments::{build_pool, run_experiment};
pub use output::{
    emit_plot_data, fmt_float, load_manifest, RowFilter, RunManifest, SeriesRef, TableRef, MANIFEST_FILE, SUMMARY_FILE,
};
