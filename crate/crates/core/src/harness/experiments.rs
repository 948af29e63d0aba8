use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Normal};

use super::cache::{CachedTable, TableCache};
use super::config::*;
use super::output::{fmt_float, fmt_opt, OutputDir, RunManifest, SeriesRef, TableRef, MANIFEST_FILE, SUMMARY_FILE};
use crate::collapse::{
    closed_form_ideal, dpi_chain, mean_drift_sim, replicate_seed, run_ensemble, run_trajectory,
    run_trajectory_observed, tv_mixture_bound_check, AlphaSchedule, Capacity, Channel, DriftConfig, EnsembleConfig,
    LoopConfig, NoiseModel,
};
use crate::complexity::{aid_delta, bdm, bdm_scan, rank_perturbations, BdmConfig, Perturbation};
use crate::dist::{fit_empirical, sample, tv_distance, Categorical, JointTable, Support};
use crate::error::{Error, Result};
use crate::neurosym::{
    contraction_reports, periodic_pool, point_pool, prefix_pool, run_pipeline, select_program,
    support_recovery_experiment, Component, PipelineConfig, ProgramPool, Projection, SymbolicConstraintSet,
};
use crate::rng::{derive_seed, seeded_rng};
use crate::stats::{linear_fit, mean, median, quantile, variance};
use crate::tm::{census_programs, sha256_hex};

/// Confidence for the per-step entropy-drop check.
const DROP_CONFIDENCE: f64 = 0.99;

fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Exact-arithmetic checks allow this much floating-point error.
const EXACT_TOL: f64 = 1e-10;

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    out: OutputDir,
    tables: Vec<TableRef>,
    series: BTreeMap<String, SeriesRef>,
    violations: Vec<String>,
}

impl Run<'_> {
    fn seed(&self, path: &[u64]) -> u64 {
        derive_seed(self.cfg.master_seed, path)
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.violations.push(what());
        }
    }

    fn table(&mut self, p: &TableParams) -> Result<CachedTable> {
        let cache = TableCache::resolve(self.cfg.cache_dir.as_deref());
        let t = cache.ensure(p.n_states, p.n_symbols, p.budget, p.mode(), p.exhaustive_limit)?;
        self.note_table(&t, p);
        Ok(t)
    }

    fn note_table(&mut self, t: &CachedTable, p: &TableParams) {
        self.tables.push(TableRef {
            space: TableCache::key(&t.table.space, &p.mode()),
            path: t.path.clone(),
            checksum: t.checksum.clone(),
        });
    }

    fn pool(&mut self, spec: &PoolSpec) -> Result<ProgramPool> {
        let cache = TableCache::resolve(self.cfg.cache_dir.as_deref());
        let (pool, table) = build_pool(spec, &cache)?;
        if let (Some(t), PoolSpec::Periodic { table: p, .. } | PoolSpec::Point { table: p }) = (&table, spec) {
            self.note_table(t, p);
        }
        Ok(pool)
    }
}

/// Builds the pool a spec describes, fetching census tables through the
/// cache. Census-backed families need an exhaustive table.
pub fn build_pool(spec: &PoolSpec, cache: &TableCache) -> Result<(ProgramPool, Option<CachedTable>)> {
    let census_backed = |p: &TableParams| -> Result<(CachedTable, Vec<crate::tm::CensusEntry>)> {
        if p.sample.is_some() {
            return Err(Error::Config("census-backed pools need an exhaustive table".into()));
        }
        let t = cache.ensure(p.n_states, p.n_symbols, p.budget, p.mode(), p.exhaustive_limit)?;
        let entries = census_programs(p.n_states, p.n_symbols, p.budget)?;
        Ok((t, entries))
    };
    match spec {
        PoolSpec::Prefix { width } => Ok((prefix_pool(*width)?, None)),
        PoolSpec::Periodic { table, max_len } => {
            let (t, entries) = census_backed(table)?;
            Ok((periodic_pool(&entries, &t.table, *max_len)?, Some(t)))
        }
        PoolSpec::Point { table } => {
            let (t, entries) = census_backed(table)?;
            Ok((point_pool(&entries, &t.table)?, Some(t)))
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn params_value<T: Serialize>(p: &T) -> Result<Value> {
    Ok(serde_json::to_value(p)?)
}

/// Flat Dirichlet draw.
fn random_dist(support: &Support, rng: &mut impl Rng) -> Result<Categorical> {
    let w: Vec<f64> = (0..support.len()).map(|_| Exp1.sample(rng)).collect();
    Categorical::from_weights(support.clone(), w)
}

fn random_rows(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let w: Vec<f64> = (0..cols).map(|_| Exp1.sample(rng)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

/// Runs one experiment and writes its metric files, `summary.json` and
/// `manifest.json` into the configured directory. A failed hard invariant
/// still writes everything, then returns [`Error::Invariant`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let started = unix_now();
    let mut run = Run {
        cfg,
        out: OutputDir::create(&cfg.output_dir)?,
        tables: Vec::new(),
        series: BTreeMap::new(),
        violations: Vec::new(),
    };
    log::info!("running {} into {}", cfg.experiment, run.out.path().display());
    let (resolved, summary) = match cfg.experiment {
        ExperimentId::Prop1Convergence => prop1(&mut run)?,
        ExperimentId::Thm1Entropy => thm1(&mut run)?,
        ExperimentId::Thm3Drift => thm3(&mut run)?,
        ExperimentId::LemmaTv => lemma_tv(&mut run)?,
        ExperimentId::Thm4Ensemble => thm4(&mut run)?,
        ExperimentId::DpiDemo => dpi(&mut run)?,
        ExperimentId::CtmCensus => census(&mut run)?,
        ExperimentId::BdmScan => bdm_scan_exp(&mut run)?,
        ExperimentId::AidRank => aid(&mut run)?,
        ExperimentId::PipelineContraction => pipeline(&mut run)?,
        ExperimentId::SupportRecovery => recovery(&mut run)?,
    };
    let mut summary = summary;
    summary["invariant_violations"] = json!(run.violations);
    run.out.json(SUMMARY_FILE, &summary)?;

    let hashed = json!({
        "experiment": cfg.experiment,
        "master_seed": cfg.master_seed,
        "params": resolved,
    });
    let manifest = RunManifest {
        experiment: cfg.experiment.to_string(),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: sha256_hex(serde_json::to_string(&hashed)?.as_bytes()),
        master_seed: cfg.master_seed,
        started_unix: started,
        finished_unix: unix_now(),
        input_tables: run.tables,
        outputs: run.out.written().to_vec(),
        series: run.series,
    };
    run.out.json(MANIFEST_FILE, &manifest)?;
    if !run.violations.is_empty() {
        return Err(Error::Invariant(format!(
            "{}: {}",
            cfg.experiment,
            run.violations.join("; ")
        )));
    }
    Ok(manifest)
}

type Outcome = Result<(Value, Value)>;

fn prop1(run: &mut Run) -> Outcome {
    let p: Prop1Params = run.cfg.parse_params()?;
    let support = Support::range(p.support);
    let mut rng = seeded_rng(run.seed(&[1]));
    let truth = random_dist(&support, &mut rng)?;
    let q0 = random_dist(&support, &mut rng)?;
    let tv0 = tv_distance(&truth, &q0)?;

    let mut rows = Vec::new();
    let mut per_alpha = Vec::new();
    let (mut worst_coord, mut worst_tv) = (0.0f64, 0.0f64);
    for &alpha in &p.alphas {
        let cfg = LoopConfig {
            true_dist: truth.clone(),
            initial_model: q0.clone(),
            schedule: AlphaSchedule::constant(alpha),
            sample_size: 1,
            steps: p.steps,
            master_seed: 0,
            capacity: Capacity::Infinite,
            embedding: None,
        };
        let mut models = Vec::with_capacity(p.steps + 1);
        let traj = run_trajectory_observed(&cfg, |_, q| models.push(q.clone()))?;
        let (mut a_coord, mut a_tv) = (0.0f64, 0.0f64);
        for (t, q) in models.iter().enumerate() {
            let closed = closed_form_ideal(&truth, &q0, alpha, t)?;
            let coord = q
                .probs()
                .iter()
                .zip(closed.probs())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let predicted = (1.0 - alpha).powi(t as i32) * tv0;
            let tv = traj.records[t].tv;
            a_coord = a_coord.max(coord);
            a_tv = a_tv.max((tv - predicted).abs());
            rows.push(vec![
                fmt_float(alpha),
                t.to_string(),
                fmt_float(tv),
                fmt_float(predicted),
                fmt_float(coord),
            ]);
        }
        worst_coord = worst_coord.max(a_coord);
        worst_tv = worst_tv.max(a_tv);
        per_alpha.push(json!({"alpha": alpha, "max_coord_error": a_coord, "max_tv_error": a_tv}));
        run.series.insert(
            format!("tv:alpha={alpha}"),
            SeriesRef::aggregate("trajectory.csv", "tv").filtered("alpha", fmt_float(alpha)),
        );
    }
    run.out.csv(
        "trajectory.csv",
        &["alpha", "t", "tv", "tv_predicted", "max_coord_error"],
        rows,
    )?;
    run.check(worst_coord <= EXACT_TOL, || {
        format!("closed form off by {worst_coord:e} per coordinate")
    });
    run.check(worst_tv <= EXACT_TOL, || format!("TV decay off by {worst_tv:e}"));
    Ok((
        params_value(&p)?,
        json!({
            "support": p.support,
            "steps": p.steps,
            "initial_tv": tv0,
            "per_alpha": per_alpha,
            "max_coord_error": worst_coord,
            "max_tv_error": worst_tv,
            "tolerance": EXACT_TOL,
        }),
    ))
}

fn thm1(run: &mut Run) -> Outcome {
    let p: Thm1Params = run.cfg.parse_params()?;
    let support = Support::range(p.support);
    let uniform = Categorical::uniform(support);
    let base = LoopConfig {
        true_dist: uniform.clone(),
        initial_model: uniform,
        schedule: AlphaSchedule::constant(p.alpha),
        sample_size: p.sample_size,
        steps: p.steps,
        master_seed: run.cfg.master_seed,
        capacity: Capacity::FiniteSample,
        embedding: None,
    };
    // Each replicate also reports whether a point mass ever moved.
    let runs = (0..p.seeds)
        .into_par_iter()
        .map(|i| {
            let mut c = base.clone();
            c.master_seed = replicate_seed(base.master_seed, i);
            let mut atom: Option<Vec<f64>> = None;
            let mut escaped = false;
            let traj = run_trajectory_observed(&c, |_, q| {
                if let Some(a) = &atom {
                    escaped |= q.probs() != a.as_slice();
                }
                if q.is_point_mass() && atom.is_none() {
                    atom = Some(q.probs().to_vec());
                }
            })?;
            Ok((traj, atom.is_some(), escaped))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(p.seeds * (p.steps + 1));
    for (i, (traj, _, _)) in runs.iter().enumerate() {
        for r in &traj.records {
            rows.push(vec![
                i.to_string(),
                r.t.to_string(),
                fmt_float(r.entropy),
                r.support_size.to_string(),
                fmt_opt(r.entropy_drop),
            ]);
        }
    }
    run.out.csv(
        "entropy.csv",
        &["seed", "t", "entropy", "support_size", "entropy_drop"],
        rows,
    )?;

    // Every step is a separate one-sided test; the bound is simultaneous
    // over all of them.
    let z_step = normal_quantile(DROP_CONFIDENCE);
    let z_all = normal_quantile(1.0 - (1.0 - DROP_CONFIDENCE) / p.steps.max(1) as f64);
    let mut drop_rows = Vec::with_capacity(p.steps);
    let mut min_upper = f64::INFINITY;
    let mut per_step_rejections = 0usize;
    let mut mean_drops = Vec::with_capacity(p.steps);
    for t in 0..p.steps {
        let drops: Vec<f64> = runs
            .iter()
            .map(|(tr, _, _)| tr.records[t].entropy_drop.unwrap_or(0.0))
            .collect();
        let m = mean(&drops);
        let se = if drops.len() > 1 {
            (variance(&drops) / drops.len() as f64).sqrt()
        } else {
            0.0
        };
        let upper = m + z_all * se;
        min_upper = min_upper.min(upper);
        per_step_rejections += usize::from(m + z_step * se < 0.0);
        mean_drops.push(m);
        drop_rows.push(vec![t.to_string(), fmt_float(m), fmt_float(se), fmt_float(upper)]);
    }
    run.out.csv(
        "entropy_drop.csv",
        &["t", "mean_drop", "std_error", "upper_bound"],
        drop_rows,
    )?;

    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for (tr, _, _) in &runs {
        *histogram.entry(tr.final_model.support_size()).or_default() += 1;
    }
    let absorbed_runs = runs.iter().filter(|r| r.1).count();
    let escapes = runs.iter().filter(|r| r.2).count();
    run.check(escapes == 0, || format!("{escapes} replicates left a point mass"));
    run.series
        .insert("entropy".into(), SeriesRef::per_seed("entropy.csv", "entropy"));
    run.series.insert(
        "support_size".into(),
        SeriesRef::per_seed("entropy.csv", "support_size"),
    );
    run.series.insert(
        "mean_entropy_drop".into(),
        SeriesRef::aggregate("entropy_drop.csv", "mean_drop"),
    );
    let final_single = histogram.get(&1).copied().unwrap_or(0) as f64 / p.seeds.max(1) as f64;
    Ok((
        params_value(&p)?,
        json!({
            "seeds": p.seeds,
            "steps": p.steps,
            "confidence": DROP_CONFIDENCE,
            "simultaneous_z": z_all,
            "min_upper_bound_drop": min_upper,
            "no_significant_entropy_increase": min_upper >= 0.0,
            "unadjusted_step_rejections": per_step_rejections,
            "mean_drop_total": mean_drops.iter().sum::<f64>(),
            "final_support_histogram": histogram,
            "fraction_final_support_one": final_single,
            "replicates_reaching_point_mass": absorbed_runs,
            "replicates_leaving_point_mass": escapes,
        }),
    ))
}

fn thm3(run: &mut Run) -> Outcome {
    let p: Thm3Params = run.cfg.parse_params()?;
    let sigma2 = p.sigma * p.sigma;
    let mut rows = Vec::new();
    let mut per_alpha = Vec::new();
    for (i, &alpha) in p.alphas.iter().enumerate() {
        let cfg = DriftConfig {
            mu0: p.mu0,
            mu_p: p.mu_p,
            schedule: AlphaSchedule::constant(alpha),
            noise: NoiseModel::GaussianEmbedding { sigma: p.sigma },
            steps: p.steps,
            n_seeds: p.seeds,
            master_seed: run.seed(&[i as u64]),
        };
        let res = mean_drift_sim(&cfg)?;
        for t in 0..=p.steps {
            rows.push(vec![
                fmt_float(alpha),
                t.to_string(),
                fmt_float(res.mean[t]),
                fmt_float(res.variance[t]),
            ]);
        }
        let entry = if alpha == 0.0 {
            let ts: Vec<f64> = (0..=p.steps).map(|t| t as f64).collect();
            let fit = linear_fit(&ts, &res.variance);
            json!({
                "alpha": alpha,
                "slope": fit.slope,
                "slope_over_sigma2": fit.slope / sigma2,
                "r_squared": fit.r_squared,
            })
        } else {
            let half = &res.variance[p.steps / 2..];
            let plateau = mean(half);
            let predicted = sigma2 / (1.0 - (1.0 - alpha) * (1.0 - alpha));
            json!({
                "alpha": alpha,
                "plateau": plateau,
                "predicted_plateau": predicted,
                "plateau_ratio": plateau / predicted,
                "mean_at_end": res.mean[p.steps],
            })
        };
        per_alpha.push(entry);
        run.series.insert(
            format!("variance:alpha={alpha}"),
            SeriesRef::aggregate("variance.csv", "variance").filtered("alpha", fmt_float(alpha)),
        );
        run.series.insert(
            format!("mean:alpha={alpha}"),
            SeriesRef::aggregate("variance.csv", "mean").filtered("alpha", fmt_float(alpha)),
        );
    }
    run.out.csv("variance.csv", &["alpha", "t", "mean", "variance"], rows)?;
    Ok((params_value(&p)?, json!({"sigma2": sigma2, "per_alpha": per_alpha})))
}

fn lemma_tv(run: &mut Run) -> Outcome {
    let p: LemmaTvParams = run.cfg.parse_params()?;
    let support = Support::range(p.support);
    let mut rng = seeded_rng(run.seed(&[1]));
    let mut rows = Vec::with_capacity(p.triples);
    let (mut failures, mut worst) = (0usize, 0.0f64);
    for i in 0..p.triples {
        let a = random_dist(&support, &mut rng)?;
        let b = random_dist(&support, &mut rng)?;
        let alpha: f64 = rng.random();
        let c = tv_mixture_bound_check(&a, &b, alpha)?;
        worst = worst.max((c.lhs - c.rhs).abs());
        failures += usize::from(!c.holds);
        rows.push(vec![
            i.to_string(),
            fmt_float(alpha),
            fmt_float(c.lhs),
            fmt_float(c.rhs),
            c.holds.to_string(),
        ]);
    }
    run.out
        .csv("lemma_tv.csv", &["i", "alpha", "lhs", "rhs", "holds"], rows)?;
    run.check(failures == 0, || {
        format!("{failures} triples broke the mixture TV identity")
    });
    Ok((
        params_value(&p)?,
        json!({"triples": p.triples, "failures": failures, "max_abs_error": worst}),
    ))
}

fn thm4(run: &mut Run) -> Outcome {
    let p: Thm4Params = run.cfg.parse_params()?;
    if p.models == 0 {
        return Err(Error::Config("thm4-ensemble needs at least one model".into()));
    }
    let support = Support::range(p.support);
    let truth = random_dist(&support, &mut seeded_rng(run.seed(&[1])))?;
    let base = EnsembleConfig {
        models: vec![truth.clone(); p.models],
        weights: vec![1.0 / p.models as f64; p.models],
        schedule: AlphaSchedule::constant(p.alpha),
        sample_size: p.sample_size,
        steps: p.steps,
        master_seed: 0,
    };
    let trajs = (0..p.seeds)
        .into_par_iter()
        .map(|s| {
            let mut c = base.clone();
            c.master_seed = replicate_seed(run.cfg.master_seed, s);
            run_ensemble(&c, &truth)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (s, tr) in trajs.iter().enumerate() {
        for r in &tr.records {
            rows.push(vec![
                s.to_string(),
                r.t.to_string(),
                fmt_opt(r.tv_step),
                fmt_float(r.kl_smoothed),
                fmt_float(r.tv),
                r.support_size.to_string(),
                fmt_float(r.max_pairwise_tv),
            ]);
        }
    }
    run.out.csv(
        "ensemble.csv",
        &[
            "seed",
            "t",
            "tv_step",
            "kl_smoothed",
            "tv",
            "support_size",
            "max_pairwise_tv",
        ],
        rows,
    )?;
    let at = |t: usize, f: fn(&crate::collapse::EnsembleRecord) -> f64| {
        median(&trajs.iter().map(|tr| f(&tr.records[t])).collect::<Vec<_>>())
    };
    let tv_first = at(1, |r| r.tv_step.unwrap_or(0.0));
    let tv_last = at(p.steps, |r| r.tv_step.unwrap_or(0.0));
    let kl_first = at(0, |r| r.kl_smoothed);
    let kl_last = at(p.steps, |r| r.kl_smoothed);
    run.series
        .insert("tv_step".into(), SeriesRef::per_seed("ensemble.csv", "tv_step"));
    run.series
        .insert("kl_smoothed".into(), SeriesRef::per_seed("ensemble.csv", "kl_smoothed"));
    run.series.insert(
        "support_size".into(),
        SeriesRef::per_seed("ensemble.csv", "support_size"),
    );
    Ok((
        params_value(&p)?,
        json!({
            "median_tv_step_first": tv_first,
            "median_tv_step_last": tv_last,
            "median_kl_smoothed_initial": kl_first,
            "median_kl_smoothed_final": kl_last,
            "step_size_shrinks": tv_last < tv_first,
            "kl_grows": kl_last > kl_first,
        }),
    ))
}

fn dpi(run: &mut Run) -> Outcome {
    let p: DpiParams = run.cfg.parse_params()?;
    let (ms, xs, ys) = (
        Support::range(p.m_size),
        Support::range(p.x_size),
        Support::range(p.y_size),
    );
    let mut rng = seeded_rng(run.seed(&[1]));
    let mut rows = Vec::with_capacity(p.joints);
    let (mut broken, mut identity_broken, mut worst_gap) = (0usize, 0usize, f64::NEG_INFINITY);
    for i in 0..p.joints {
        let flat = random_rows(1, p.m_size * p.x_size, &mut rng).remove(0);
        let probs: Vec<Vec<f64>> = flat.chunks(p.x_size).map(|c| c.to_vec()).collect();
        let joint = JointTable::new(ms.clone(), xs.clone(), probs)?;
        let channel = Channel::new(ys.clone(), random_rows(p.x_size, p.y_size, &mut rng))?;
        let r = dpi_chain(&joint, &channel)?;
        let same = dpi_chain(&joint, &Channel::identity(xs.clone()))?;
        worst_gap = worst_gap.max(r.i_my - r.i_mx);
        broken += usize::from(r.i_my > r.i_mx + 1e-12);
        identity_broken += usize::from((same.i_my - same.i_mx).abs() > 1e-12);
        rows.push(vec![
            i.to_string(),
            fmt_float(r.i_mx),
            fmt_float(r.i_my),
            fmt_float(same.i_my),
        ]);
    }
    run.out.csv("dpi.csv", &["i", "i_mx", "i_my", "i_my_identity"], rows)?;
    run.check(broken == 0, || format!("{broken} chains gained information"));
    run.check(identity_broken == 0, || {
        format!("{identity_broken} identity channels changed I")
    });
    Ok((
        params_value(&p)?,
        json!({
            "joints": p.joints,
            "violations": broken,
            "identity_violations": identity_broken,
            "max_i_my_minus_i_mx": worst_gap,
        }),
    ))
}

fn census(run: &mut Run) -> Outcome {
    let p: CensusParams = run.cfg.parse_params()?;
    let t = run.table(&p.table)?;
    let table = &t.table;
    let denom = table.total_machines as f64;
    let rows = table
        .sorted_rows()
        .into_iter()
        .map(|(o, c)| vec![o.to_string(), c.to_string(), fmt_float(-(c as f64 / denom).log2())]);
    run.out.csv("outputs.csv", &["output", "count", "ctm_bits"], rows)?;
    let top: Vec<Value> = table
        .sorted_rows()
        .into_iter()
        .take(10)
        .map(|(o, c)| json!({"output": o, "count": c}))
        .collect();
    Ok((
        params_value(&p)?,
        json!({
            "space": table.space.to_string(),
            "total_machines": table.total_machines,
            "halted_machines": table.halted_machines,
            "halted_fraction": table.halted_fraction(),
            "distinct_outputs": table.counts.len(),
            "max_output_len": table.max_output_len(),
            "checksum": t.checksum,
            "top_outputs": top,
        }),
    ))
}

fn bdm_scan_exp(run: &mut Run) -> Outcome {
    let p: BdmScanParams = run.cfg.parse_params()?;
    let t = run.table(&p.table)?;
    let table = &t.table;
    let cfg = BdmConfig {
        block_size: p.block_size,
        boundary: p.boundary,
        miss_policy: p.miss_policy,
        normalization: p.normalization,
    };
    let scan = bdm_scan(p.length, &cfg, table)?;
    let values: Vec<f64> = scan.iter().map(|(_, e)| e.value).collect();
    let decile = quantile(&values, 0.1);
    let misses = scan.iter().filter(|(_, e)| e.miss_policy_applied).count();
    let rows = scan.iter().map(|(o, e)| {
        vec![
            o.clone(),
            fmt_float(e.value),
            u8::from(e.miss_policy_applied).to_string(),
        ]
    });
    run.out
        .csv("bdm_scan.csv", &["object", "bdm_bits", "miss_flag"], rows)?;

    let constants: Vec<Value> = (0..table.space.n_symbols)
        .map(|s| {
            let o: String = std::iter::repeat_n(char::from(b'0' + s as u8), p.length).collect();
            let v = scan
                .iter()
                .find(|(x, _)| *x == o)
                .map(|(_, e)| e.value)
                .unwrap_or(f64::NAN);
            let rank = values.iter().filter(|&&x| x < v).count();
            json!({"object": o, "bdm_bits": v, "rank": rank, "in_lowest_decile": v <= decile})
        })
        .collect();

    // Repeating one present block r times costs exactly log2(r) extra.
    let block = table
        .sorted_rows()
        .into_iter()
        .find(|(o, _)| o.len() == p.block_size)
        .map(|(o, _)| o.to_string());
    let mut law = Vec::new();
    if let Some(b) = &block {
        let one = bdm(b, &cfg, table)?.value;
        for r in [2usize, 3, 4, 8] {
            let v = bdm(&b.repeat(r), &cfg, table)?.value;
            let expected = one + (r as f64).log2();
            law.push(json!({"repeats": r, "bdm_bits": v, "expected": expected}));
            run.check(v == expected, || format!("BDM({b}^{r}) = {v}, expected {expected}"));
        }
    }
    Ok((
        params_value(&p)?,
        json!({
            "objects": scan.len(),
            "lowest_decile_threshold": decile,
            "misses": misses,
            "constant_strings": constants,
            "multiplicity_block": block,
            "multiplicity_law": law,
        }),
    ))
}

fn aid(run: &mut Run) -> Outcome {
    let p: AidParams = run.cfg.parse_params()?;
    let t = run.table(&p.table)?;
    let table = &t.table;
    let cfg = BdmConfig::new(p.block_size).with_miss_policy(p.miss_policy);
    let taus = match &p.perturbations {
        Some(s) => Perturbation::parse_list(s).map_err(|e| Error::Config(e.to_string()))?,
        None => {
            let n = p.object.chars().count();
            let mut v: Vec<Perturbation> = (0..n).map(|position| Perturbation::Flip { position }).collect();
            v.extend(
                (0..n)
                    .step_by(p.block_size.max(1))
                    .map(|position| Perturbation::DeleteBlock {
                        position,
                        length: p.block_size.min(n - position),
                    }),
            );
            v
        }
    };
    let ranked = rank_perturbations(&p.object, &taus, &cfg, table)?;
    let rows = ranked.iter().enumerate().map(|(i, r)| {
        vec![
            (i + 1).to_string(),
            r.perturbation.to_string(),
            r.perturbed.clone(),
            fmt_float(r.delta),
        ]
    });
    run.out.csv(
        "aid_rank.csv",
        &["rank", "perturbation", "perturbed", "delta_bits"],
        rows,
    )?;

    let mut rng = seeded_rng(run.seed(&[2]));
    let m = table.space.n_symbols as u8;
    let mut rows = Vec::with_capacity(p.random_checks);
    let (mut asym, mut ident) = (0usize, 0usize);
    let len = p.random_length.max(1);
    for i in 0..p.random_checks {
        let o: String = (0..len).map(|_| char::from(b'0' + rng.random_range(0..m))).collect();
        let position = rng.random_range(0..len);
        let tau = if rng.random_bool(0.5) && m == 2 {
            Perturbation::Flip { position }
        } else {
            Perturbation::Substitute {
                position,
                symbol: rng.random_range(0..m),
            }
        };
        let d = aid_delta(&o, &tau, &cfg, table)?;
        let back = tau.inverse(&o).expect("flip and substitute invert");
        let d_back = aid_delta(&tau.apply(&o)?, &back, &cfg, table)?;
        let sum = d + d_back;
        asym += usize::from(sum.abs() > 1e-12);
        let keep = Perturbation::Substitute {
            position,
            symbol: o.as_bytes()[position] - b'0',
        };
        ident += usize::from(aid_delta(&o, &keep, &cfg, table)? != 0.0);
        rows.push(vec![
            i.to_string(),
            o,
            tau.to_string(),
            fmt_float(d),
            fmt_float(d_back),
            fmt_float(sum),
        ]);
    }
    run.out.csv(
        "aid_antisymmetry.csv",
        &["i", "object", "perturbation", "delta", "delta_inverse", "sum"],
        rows,
    )?;
    run.check(asym == 0, || {
        format!("{asym} perturbation pairs were not antisymmetric")
    });
    run.check(ident == 0, || format!("{ident} identity perturbations moved BDM"));
    let base = bdm(&p.object, &cfg, table)?.value;
    Ok((
        params_value(&p)?,
        json!({
            "object": p.object,
            "bdm_bits": base,
            "ranked": ranked,
            "random_checks": p.random_checks,
            "antisymmetry_violations": asym,
            "identity_violations": ident,
        }),
    ))
}

fn pipeline(run: &mut Run) -> Outcome {
    let p: PipelineParams = run.cfg.parse_params()?;
    let pool = run.pool(&p.pool)?;
    let truth_idx = pool
        .position(&p.truth)
        .ok_or_else(|| Error::Config(format!("no program {:?} in the pool", p.truth)))?;
    let truth = pool.get(truth_idx).output.clone();
    let initial = match &p.initial_model {
        Some(q) => q.clone(),
        None => Categorical::uniform(pool.support().clone()),
    };
    let projection = if p.projection {
        let set = SymbolicConstraintSet::from_pool(&pool, p.max_complexity, Vec::new())?;
        Some(Projection {
            set,
            direction: p.direction,
        })
    } else {
        None
    };
    let master = run.cfg.master_seed;
    let results = (0..p.seeds)
        .into_par_iter()
        .map(|s| {
            let seed = replicate_seed(master, s);
            let corrector = p.corrector.clone().map(|mut c| {
                c.correction_seed = derive_seed(seed, &[c.correction_seed]);
                c
            });
            let cfg = PipelineConfig {
                true_dist: truth.clone(),
                initial_model: initial.clone(),
                schedule: p.schedule.clone(),
                sample_size: p.sample_size,
                steps: p.steps,
                master_seed: seed,
                projection: projection.clone(),
                corrector,
                embedding: None,
            };
            let traj = run_pipeline(&cfg)?;
            let reports = contraction_reports(&traj, &cfg)?;
            Ok((traj, reports))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut crow = Vec::new();
    for (s, (traj, reports)) in results.iter().enumerate() {
        for r in &traj.records {
            let st = traj.stages.get(r.t);
            rows.push(vec![
                s.to_string(),
                r.t.to_string(),
                fmt_float(r.kl),
                fmt_opt(st.map(|x| x.kl_projected)),
                fmt_opt(st.map(|x| x.kl_corrected)),
                fmt_opt(st.map(|x| x.kl_next)),
                st.and_then(|x| x.projected_member.clone()).unwrap_or_default(),
                fmt_float(r.entropy),
            ]);
        }
        for rep in reports {
            crow.push(vec![
                s.to_string(),
                serde_json::to_value(rep.component)?
                    .as_str()
                    .unwrap_or_default()
                    .to_string(),
                fmt_float(rep.c),
                fmt_float(rep.delta),
                fmt_float(rep.ls_delta),
                fmt_float(rep.residual_max),
                fmt_float(rep.residual_rms),
                fmt_float(rep.min_slack),
                rep.bound_satisfied.to_string(),
                fmt_opt(rep.measured_factor),
            ]);
        }
    }
    run.out.csv(
        "pipeline.csv",
        &[
            "seed",
            "t",
            "kl",
            "kl_projected",
            "kl_corrected",
            "kl_next",
            "projected_member",
            "entropy",
        ],
        rows,
    )?;
    run.out.csv(
        "contraction.csv",
        &[
            "seed",
            "component",
            "c",
            "delta",
            "ls_delta",
            "residual_max",
            "residual_rms",
            "min_slack",
            "bound_satisfied",
            "measured_factor",
        ],
        crow,
    )?;

    let mut components = Vec::new();
    for comp in [
        Component::Overall,
        Component::Symbolic,
        Component::Causal,
        Component::Statistical,
    ] {
        let reps: Vec<_> = results
            .iter()
            .filter_map(|(_, r)| r.iter().find(|x| x.component == comp))
            .collect();
        if reps.is_empty() {
            continue;
        }
        let cs: Vec<f64> = reps.iter().map(|r| r.c).collect();
        let ds: Vec<f64> = reps.iter().map(|r| r.delta).collect();
        let satisfied = reps.iter().filter(|r| r.bound_satisfied).count();
        components.push(json!({
            "component": comp,
            "median_c": median(&cs),
            "max_c": cs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            "median_delta": median(&ds),
            "bound_satisfied": satisfied,
            "fits": reps.len(),
        }));
    }
    // Overall-series fits with a tight residual must obey their own bound.
    let tight_broken = results
        .iter()
        .flat_map(|(_, r)| r.iter())
        .filter(|r| r.component == Component::Overall && r.residual_max < 1e-3 && !r.bound_satisfied)
        .count();
    run.check(tight_broken == 0, || {
        format!("{tight_broken} tight fits broke the iterated bound")
    });

    // With both operators off the composed loop is the plain loop.
    let plain = LoopConfig {
        true_dist: truth.clone(),
        initial_model: initial.clone(),
        schedule: p.schedule.clone(),
        sample_size: p.sample_size,
        steps: p.steps,
        master_seed: replicate_seed(master, 0),
        capacity: Capacity::FiniteSample,
        embedding: None,
    };
    let bare = PipelineConfig {
        true_dist: truth,
        initial_model: initial,
        schedule: p.schedule.clone(),
        sample_size: p.sample_size,
        steps: p.steps,
        master_seed: plain.master_seed,
        projection: None,
        corrector: None,
        embedding: None,
    };
    let reduces = run_pipeline(&bare)?.records == run_trajectory(&plain)?.records;
    run.check(reduces, || {
        "pipeline without operators differs from the plain loop".into()
    });

    run.series
        .insert("kl".into(), SeriesRef::per_seed("pipeline.csv", "kl"));
    run.series.insert(
        "kl_projected".into(),
        SeriesRef::per_seed("pipeline.csv", "kl_projected"),
    );
    run.series.insert(
        "kl_corrected".into(),
        SeriesRef::per_seed("pipeline.csv", "kl_corrected"),
    );
    let final_kl: Vec<f64> = results
        .iter()
        .map(|(t, _)| t.records.last().map_or(f64::NAN, |r| r.kl))
        .collect();
    Ok((
        params_value(&p)?,
        json!({
            "seeds": p.seeds,
            "components": components,
            "median_final_kl": median(&final_kl),
            "reduces_to_plain_loop": reduces,
        }),
    ))
}

fn recovery(run: &mut Run) -> Outcome {
    let p: RecoveryParams = run.cfg.parse_params()?;
    let pool = run.pool(&p.pool)?;
    let mech = pool
        .position(&p.mechanism)
        .ok_or_else(|| Error::Config(format!("no program {:?} in the pool", p.mechanism)))?;
    let truth = pool.get(mech).output.clone();

    let reports = (0..p.seeds)
        .map(|s| support_recovery_experiment(mech, p.n_small, &pool, p.lambda, p.k_tolerance, run.seed(&[s as u64])))
        .collect::<Result<Vec<_>>>()?;
    let rows = reports.iter().enumerate().map(|(s, r)| {
        vec![
            s.to_string(),
            r.selected.clone(),
            r.mechanism_recovered.to_string(),
            r.statistical_support.to_string(),
            r.algorithmic_support.to_string(),
            r.true_support.to_string(),
        ]
    });
    run.out.csv(
        "recovery.csv",
        &[
            "seed",
            "selected",
            "recovered",
            "statistical_support",
            "algorithmic_support",
            "true_support",
        ],
        rows,
    )?;

    let mut grid = p.lambda_grid.clone();
    grid.sort_by(f64::total_cmp);
    let mut lrows = Vec::new();
    let (mut pairs, mut broken) = (0usize, 0usize);
    for s in 0..p.seeds {
        let data = sample(&truth, p.n_small, run.seed(&[s as u64]))?;
        let mut prev: Option<f64> = None;
        for &lambda in &grid {
            let sel = select_program(&data, &pool, lambda)?;
            if let Some(k) = prev {
                pairs += 1;
                broken += usize::from(sel.complexity_bits > k);
            }
            prev = Some(sel.complexity_bits);
            lrows.push(vec![
                s.to_string(),
                fmt_float(lambda),
                sel.id,
                fmt_float(sel.complexity_bits),
            ]);
        }
    }
    run.out.csv(
        "lambda_grid.csv",
        &["seed", "lambda", "selected", "complexity_bits"],
        lrows,
    )?;
    run.check(broken == 0, || {
        format!("selected K grew with lambda in {broken} of {pairs} steps")
    });

    // Refit on fresh data from the modal winner.
    let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &reports {
        *tally.entry(r.selected.as_str()).or_default() += 1;
    }
    let winner_id = tally
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(k, _)| k.to_string())
        .ok_or_else(|| Error::Config("support-recovery needs at least one seed".into()))?;
    let winner = pool.position(&winner_id).expect("selected from this pool");
    let mut same = 0usize;
    let mut tvs = Vec::with_capacity(p.seeds);
    for s in 0..p.seeds {
        let data = sample(&pool.get(winner).output, p.n_small, run.seed(&[0xA, s as u64]))?;
        same += usize::from(select_program(&data, &pool, p.lambda)?.index == winner);
        tvs.push(tv_distance(
            &fit_empirical(&data, pool.support())?,
            &pool.get(winner).output,
        )?);
    }
    let n = p.seeds.max(1) as f64;
    let recovered = reports.iter().filter(|r| r.mechanism_recovered).count();
    let alg_true = reports
        .iter()
        .filter(|r| r.algorithmic_support == r.true_support)
        .count();
    Ok((
        params_value(&p)?,
        json!({
            "mechanism": p.mechanism,
            "fraction_recovered": recovered as f64 / n,
            "fraction_algorithmic_support_true": alg_true as f64 / n,
            "max_statistical_support": reports.iter().map(|r| r.statistical_support).max(),
            "true_support": truth.support_size(),
            "lambda_monotonicity": {"pairs": pairs, "violations": broken},
            "anchor": {
                "program": winner_id,
                "fraction_same_selection": same as f64 / n,
                "statistical_tv_min": tvs.iter().cloned().fold(f64::INFINITY, f64::min),
                "statistical_tv_max": tvs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            },
        }),
    ))
}
