use rayon::prelude::*;
use serde::Serialize;

use super::contraction::{estimate_contraction, estimate_contraction_pairs, Component, ContractionReport};
use super::correction::CausalCorrector;
use super::projection::{project_index, ProjectionDirection, SymbolicConstraintSet};
use crate::collapse::{fill_entropy_drops, step_finite, AlphaSchedule, Recorder, StepRecord};
use crate::dist::{kl_divergence, Categorical, FeatureMap};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, step_seed};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Projection {
    pub set: SymbolicConstraintSet,
    pub direction: ProjectionDirection,
}

impl Projection {
    pub fn new(set: SymbolicConstraintSet) -> Self {
        Projection {
            set,
            direction: ProjectionDirection::default(),
        }
    }
}

/// Intermediate states of one composed update.
#[derive(Clone, Debug, PartialEq)]
pub struct Stages {
    pub projected: Categorical,
    pub projected_member: Option<String>,
    pub corrected: Categorical,
    pub next: Categorical,
}

/// Projection, then correction, then the finite-sample refit on the mixture
/// with `P`. Disabled stages pass their input through unchanged.
#[allow(clippy::too_many_arguments)]
pub fn pipeline_stages(
    q: &Categorical,
    p: &Categorical,
    alpha: f64,
    projection: Option<&Projection>,
    corrector: Option<&CausalCorrector>,
    n: usize,
    seed: u64,
    t: usize,
) -> Result<Stages> {
    let (projected, projected_member) = match projection {
        Some(pr) => {
            let (i, _) = project_index(q, &pr.set, pr.direction)?;
            let m = &pr.set.members()[i];
            (m.dist.clone(), Some(m.id.clone()))
        }
        None => (q.clone(), None),
    };
    let corrected = match corrector {
        Some(c) => c.correct(&projected, p, t)?,
        None => projected.clone(),
    };
    let next = step_finite(p, &corrected, alpha, n, seed)?;
    Ok(Stages {
        projected,
        projected_member,
        corrected,
        next,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn pipeline_step(
    q: &Categorical,
    p: &Categorical,
    alpha: f64,
    projection: Option<&Projection>,
    corrector: Option<&CausalCorrector>,
    n: usize,
    seed: u64,
    t: usize,
) -> Result<Categorical> {
    Ok(pipeline_stages(q, p, alpha, projection, corrector, n, seed, t)?.next)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub true_dist: Categorical,
    pub initial_model: Categorical,
    pub schedule: AlphaSchedule,
    pub sample_size: usize,
    pub steps: usize,
    pub master_seed: u64,
    pub projection: Option<Projection>,
    pub corrector: Option<CausalCorrector>,
    pub embedding: Option<FeatureMap>,
}

impl PipelineConfig {
    pub fn validate(&mut self) -> Result<()> {
        self.initial_model = self.initial_model.clone().rebased(self.true_dist.support())?;
        if self.sample_size == 0 || self.steps == 0 {
            return Err(Error::InvalidArgument(
                "sample_size and steps must be at least 1".into(),
            ));
        }
        self.schedule.validate()?;
        if let Some(c) = &self.corrector {
            c.validate()?;
        }
        if let Some(pr) = &self.projection {
            pr.set.support().check_same(self.true_dist.support())?;
        }
        Ok(())
    }
}

/// KL from the truth at each stage of the step out of `Q_t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageRecord {
    pub t: usize,
    pub kl_model: f64,
    pub kl_projected: f64,
    pub kl_corrected: f64,
    pub kl_next: f64,
    pub projected_member: Option<String>,
    pub kappa: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineTrajectory {
    pub records: Vec<StepRecord>,
    pub stages: Vec<StageRecord>,
    pub final_model: Categorical,
}

impl PipelineTrajectory {
    pub fn kl_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.kl).collect()
    }
}

/// Runs the composed loop. Step `t` samples with `step_seed(master, t, 0)`,
/// exactly as the plain loop does.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineTrajectory> {
    let mut cfg = config.clone();
    cfg.validate()?;
    let p = &cfg.true_dist;
    let recorder = Recorder::new(p, cfg.embedding.as_ref(), cfg.sample_size);
    let mut q = cfg.initial_model.clone();
    let mut records = Vec::with_capacity(cfg.steps + 1);
    let mut stages = Vec::with_capacity(cfg.steps);
    for t in 0..=cfg.steps {
        let alpha = cfg.schedule.alpha_at(t);
        records.push(recorder.record(t, alpha, &q)?);
        if t == cfg.steps {
            break;
        }
        let s = pipeline_stages(
            &q,
            p,
            alpha,
            cfg.projection.as_ref(),
            cfg.corrector.as_ref(),
            cfg.sample_size,
            step_seed(cfg.master_seed, t, 0),
            t,
        )?;
        stages.push(StageRecord {
            t,
            kl_model: records[t].kl,
            kl_projected: kl_divergence(p, &s.projected)?,
            kl_corrected: kl_divergence(p, &s.corrected)?,
            kl_next: kl_divergence(p, &s.next)?,
            projected_member: s.projected_member,
            kappa: cfg.corrector.as_ref().map(|c| c.kappa(t)),
        });
        q = s.next;
    }
    fill_entropy_drops(&mut records);
    Ok(PipelineTrajectory {
        records,
        stages,
        final_model: q,
    })
}

/// Contraction fits for the whole step and for every enabled stage.
pub fn contraction_reports(traj: &PipelineTrajectory, config: &PipelineConfig) -> Result<Vec<ContractionReport>> {
    let mut out = vec![estimate_contraction(&traj.kl_series(), Component::Overall)?];
    let pairs = |f: fn(&StageRecord) -> (f64, f64)| traj.stages.iter().map(f).collect::<Vec<_>>();
    if config.projection.is_some() {
        out.push(estimate_contraction_pairs(
            &pairs(|s| (s.kl_model, s.kl_projected)),
            Component::Symbolic,
        )?);
    }
    if config.corrector.is_some() {
        out.push(estimate_contraction_pairs(
            &pairs(|s| (s.kl_projected, s.kl_corrected)),
            Component::Causal,
        )?);
    }
    out.push(estimate_contraction_pairs(
        &pairs(|s| (s.kl_corrected, s.kl_next)),
        Component::Statistical,
    )?);
    Ok(out)
}

/// Measures `E[KL(P‖step_finite(P,Q,α,n))]` over seeds against the factor
/// `1−α`. The reported `δ` is what the mean needs beyond `(1−α)·KL(P‖Q)`.
pub fn stat_factor_check(
    p: &Categorical,
    q: &Categorical,
    alpha: f64,
    n: usize,
    seeds: usize,
    master_seed: u64,
) -> Result<ContractionReport> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::out_of_range("alpha", alpha, "[0, 1]"));
    }
    if seeds == 0 {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let before = kl_divergence(p, q)?;
    if !before.is_finite() {
        return Err(Error::NonFiniteSeries(0));
    }
    let after = (0..seeds)
        .into_par_iter()
        .map(|s| kl_divergence(p, &step_finite(p, q, alpha, n, derive_seed(master_seed, &[s as u64]))?))
        .collect::<Result<Vec<f64>>>()?;
    if let Some(i) = after.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSeries(i));
    }
    let mean_after = after.iter().sum::<f64>() / seeds as f64;
    let c = 1.0 - alpha;
    let delta = (mean_after - c * before).max(0.0);
    let residuals: Vec<f64> = after.iter().map(|a| a - mean_after).collect();
    let bound = c * before + delta;
    Ok(ContractionReport {
        component: Component::Statistical,
        pairs: after.iter().map(|&a| (before, a)).collect(),
        c,
        delta,
        ls_delta: delta,
        residual_max: residuals.iter().fold(0.0f64, |m, r| m.max(r.abs())),
        residual_rms: (residuals.iter().map(|r| r * r).sum::<f64>() / seeds as f64).sqrt(),
        observed: vec![mean_after],
        bound: vec![bound],
        min_slack: bound - mean_after,
        bound_satisfied: mean_after <= bound + super::contraction::BOUND_SLACK,
        measured_factor: (before > 0.0).then(|| mean_after / before),
    })
}
