//! A desk-scale laboratory for recursive self-training on finite
//! distributions, and for the algorithmic-probability machinery that can
//! counteract it.
//!
//! * [`dist`]: distributions, entropy, divergences, sampling, empirical fits.
//! * [`collapse`]: the self-consuming training loop, mean drift, ensembles.
//! * [`tm`]: small Turing machine enumeration and the halting-output census.
//! * [`complexity`]: CTM, BDM and perturbation analysis on a census table.
//! * [`neurosym`]: symbolic projection, causal correction, the composed
//!   pipeline, contraction fits and penalised program selection.
//! * [`harness`]: experiment configs, metric files, manifests, table cache.

pub mod collapse;
pub mod complexity;
pub mod dist;
pub mod error;
pub mod harness;
pub mod neurosym;
pub mod rng;
pub mod stats;
pub mod tm;

pub use dist::{
    entropy, fit_empirical, kl_divergence, mean_embed, mix, mutual_information, sample, tv_distance, Categorical,
    FeatureMap, JointTable, SampleSet, Support,
};
pub use error::{Error, ErrorClass, Result};
