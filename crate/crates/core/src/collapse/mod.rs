//! The self-consuming training loop on finite distributions.
//!
//! A model `Q_t` is refit to the mixture `α_t·P + (1−α_t)·Q_t` of fresh data
//! from the truth `P` and its own output. With infinite capacity the refit is
//! exact and `Q_t → P`; with a finite sample the refit is an empirical
//! distribution, which can only lose support, so at `α = 0` the entropy is a
//! supermartingale and the run is absorbed in a point mass.

mod checks;
mod drift;
mod ensemble;
mod schedule;
mod trajectory;

pub use checks::{dpi_chain, tv_mixture_bound_check, Channel, DpiResult, TvBoundCheck};
pub use drift::{drift_paths, mean_drift_sim, DriftConfig, DriftResult, NoiseModel};
pub use ensemble::{ensemble_mixture, ensemble_step, run_ensemble, EnsembleConfig, EnsembleRecord, EnsembleTrajectory};
pub use schedule::AlphaSchedule;
pub use trajectory::{
    closed_form_ideal, replicate_seed, run_replicates, run_trajectory, run_trajectory_observed, step_finite,
    step_ideal, Capacity, LoopConfig, StepRecord, Trajectory,
};
pub(crate) use trajectory::{fill_entropy_drops, Recorder};
