//! Constrained and corrected variants of the retraining loop, and learners
//! that use program complexity as a prior.

mod contraction;
mod correction;
mod pipeline;
mod pool;
mod projection;
mod selection;

pub use contraction::{
    estimate_contraction, estimate_contraction_pairs, iterated_bound, Component, ContractionReport, BOUND_SLACK,
};
pub use correction::{causal_correct, CausalCorrector, CorrectionMode, CorrectionOutcome};
pub use pipeline::{
    contraction_reports, pipeline_stages, pipeline_step, run_pipeline, stat_factor_check, PipelineConfig,
    PipelineTrajectory, Projection, StageRecord, Stages,
};
pub use pool::{
    elias_gamma_len, periodic_pool, point_pool, prefix_pool, strings_up_to, table_length_bits, Program, ProgramPool,
    ProgramSource,
};
pub use projection::{
    project_index, project_symbolic, Member, Predicate, ProjectionDirection, SymbolicConstraintSet, TIE_TOL,
};
pub use selection::{
    algorithmic_support, nll_bits, score_programs, select_program, support_recovery_experiment, Selection,
    SupportRecoveryReport, SCORE_TIE_TOL,
};
