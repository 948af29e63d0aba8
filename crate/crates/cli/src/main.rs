//! `collapse-lab`: run experiments, build census tables and score strings.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use collapse_core::collapse::{run_replicates, LoopConfig};
use collapse_core::complexity::{bdm, bdm_scan, rank_perturbations, BdmConfig, Boundary, MissPolicy, Perturbation};
use collapse_core::harness::{
    build_pool, emit_plot_data, fmt_float, run_experiment, ExperimentConfig, ExperimentId, PoolSpec, RunManifest,
    TableCache, TableParams,
};
use collapse_core::neurosym::{select_program, ProgramPool};
use collapse_core::tm::{
    build_frequency_table_with, load_table, persist_table, table_checksum, CensusMode, CensusOptions,
    OutputFrequencyTable, DEFAULT_BUDGET, DEFAULT_EXHAUSTIVE_LIMIT,
};
use collapse_core::{ErrorClass, SampleSet};

#[derive(Parser)]
#[command(
    name = "collapse-lab",
    version,
    about = "Self-consuming training loops and CTM/BDM complexity tools"
)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run any experiment from a full experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List experiment ids.
    List,
    /// Replicated runs of one training loop given as a loop config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shared-mixture ensemble experiment.
    Ensemble(ExperimentArgs),
    /// Mean-drift experiment.
    Drift(ExperimentArgs),
    /// Data-processing inequality demo.
    Dpi(ExperimentArgs),
    /// Support recovery with a complexity-penalised learner.
    Recover(ExperimentArgs),
    /// Turing machine censuses.
    #[command(subcommand)]
    Ctm(CtmCommand),
    /// Block-decomposition complexity of strings.
    #[command(subcommand)]
    Bdm(BdmCommand),
    /// Perturbation analysis.
    #[command(subcommand)]
    Aid(AidCommand),
    /// The projected and corrected loop.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Program pools and penalised selection.
    #[command(subcommand)]
    Program(ProgramCommand),
    /// Export one series of a finished run as long-format CSV.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        series: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON parameter block; defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table cache directory (else $COLLAPSE_LAB_CACHE, else .ctm-cache).
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CtmCommand {
    /// Enumerate a machine space and write its output-frequency table.
    Build {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        symbols: usize,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        /// Census this many uniformly drawn machines instead of all.
        #[arg(long, requires = "seed")]
        sample: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_EXHAUSTIVE_LIMIT)]
        limit: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a table's header and most frequent outputs.
    Show {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MissArg {
    Error,
    MaxPlusOne,
}

impl From<MissArg> for MissPolicy {
    fn from(m: MissArg) -> Self {
        match m {
            MissArg::Error => MissPolicy::Error,
            MissArg::MaxPlusOne => MissPolicy::MaxPlusOne,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    ShortFinalBlock,
    DropRemainder,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::ShortFinalBlock => Boundary::ShortFinalBlock,
            BoundaryArg::DropRemainder => Boundary::DropRemainder,
        }
    }
}

#[derive(Args)]
struct BdmArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value = "max-plus-one")]
    miss_policy: MissArg,
    #[arg(long, value_enum, default_value = "short-final-block")]
    boundary: BoundaryArg,
}

impl BdmArgs {
    fn config(&self) -> BdmConfig {
        BdmConfig::new(self.k)
            .with_miss_policy(self.miss_policy.into())
            .with_boundary(self.boundary.into())
    }
}

#[derive(Subcommand)]
enum BdmCommand {
    /// Score strings; `--input @FILE` reads one object per line.
    Score {
        #[command(flatten)]
        bdm: BdmArgs,
        #[arg(long)]
        input: String,
    },
    /// Score every string of a length.
    Scan {
        #[command(flatten)]
        bdm: BdmArgs,
        #[arg(long)]
        length: usize,
    },
}

#[derive(Subcommand)]
enum AidCommand {
    /// Rank perturbations of an object by |ΔBDM|.
    Rank {
        #[command(flatten)]
        bdm: BdmArgs,
        #[arg(long)]
        object: String,
        /// e.g. `flip:3;sub:2:1;del:0:2`
        #[arg(long)]
        perturbations: String,
    },
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Run the composed loop from a pipeline parameter block.
    Run(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Prefix,
    Periodic,
    Point,
}

#[derive(Subcommand)]
enum ProgramCommand {
    /// Pick the program minimising NLL + λ·K for observed labels.
    Select {
        #[arg(long)]
        pool: PathBuf,
        /// Whitespace-separated labels.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lambda: f64,
    },
    /// Write a program pool as JSON.
    Pool {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long, default_value_t = 4)]
        width: usize,
        #[arg(long, default_value_t = 8)]
        max_len: usize,
        #[arg(long, default_value_t = 2)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        symbols: usize,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json_value(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| collapse_core::Error::Config(format!("{}: {e}", path.display())).into())
}

fn run_named(id: ExperimentId, a: ExperimentArgs) -> Result<()> {
    let out = a
        .out
        .unwrap_or_else(|| PathBuf::from(format!("runs/{id}-seed{}", a.seed)));
    let mut cfg = ExperimentConfig::new(id, a.seed, out);
    cfg.cache_dir = a.cache;
    if let Some(p) = &a.config {
        cfg.params = read_json_value(p)?;
    }
    report_run(&cfg, run_experiment(&cfg))
}

fn report_run(cfg: &ExperimentConfig, r: collapse_core::Result<RunManifest>) -> Result<()> {
    let summary = cfg.output_dir.join("summary.json");
    match r {
        Ok(m) => {
            println!("{} finished: {}", m.experiment, summary.display());
            Ok(())
        }
        Err(e) => {
            if summary.exists() {
                eprintln!("outputs written to {}", cfg.output_dir.display());
            }
            Err(e.into())
        }
    }
}

fn open_table(path: &Path) -> Result<OutputFrequencyTable> {
    load_table(path).with_context(|| format!("loading table {}", path.display()))
}

fn objects(input: &str) -> Result<Vec<String>> {
    match input.strip_prefix('@') {
        Some(path) => Ok(fs::read_to_string(path)
            .with_context(|| format!("reading {path}"))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect()),
        None => Ok(vec![input.to_string()]),
    }
}

fn csv_out() -> csv::Writer<io::Stdout> {
    csv::Writer::from_writer(io::stdout())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, seed } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            report_run(&cfg, run_experiment(&cfg))
        }
        Command::List => {
            for id in ExperimentId::ALL {
                println!("{id}");
            }
            Ok(())
        }
        Command::Simulate {
            config,
            replicates,
            seed,
            out,
        } => simulate(&config, replicates, seed, &out),
        Command::Ensemble(a) => run_named(ExperimentId::Thm4Ensemble, a),
        Command::Drift(a) => run_named(ExperimentId::Thm3Drift, a),
        Command::Dpi(a) => run_named(ExperimentId::DpiDemo, a),
        Command::Recover(a) => run_named(ExperimentId::SupportRecovery, a),
        Command::Pipeline(PipelineCommand::Run(a)) => run_named(ExperimentId::PipelineContraction, a),
        Command::Ctm(CtmCommand::Build {
            states,
            symbols,
            budget,
            sample,
            seed,
            limit,
            out,
        }) => {
            let mode = match (sample, seed) {
                (Some(k), Some(seed)) => CensusMode::Sampled { k, seed },
                _ => CensusMode::Exhaustive,
            };
            let opts = CensusOptions {
                mode,
                exhaustive_limit: limit,
                ..CensusOptions::default()
            };
            let table = build_frequency_table_with(states, symbols, budget, &opts)?;
            persist_table(&table, &out)?;
            println!(
                "{}: {} of {} halted, {} outputs, sha256 {}",
                out.display(),
                table.halted_machines,
                table.total_machines,
                table.counts.len(),
                table_checksum(&table)
            );
            Ok(())
        }
        Command::Ctm(CtmCommand::Show { table, top }) => {
            let t = open_table(&table)?;
            println!("{} total {} halted {}", t.space, t.total_machines, t.halted_machines);
            let mut w = csv_out();
            w.write_record(["output", "count"])?;
            for (o, c) in t.sorted_rows().into_iter().take(top) {
                w.write_record([o, &c.to_string()])?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Bdm(BdmCommand::Score { bdm: a, input }) => {
            let table = open_table(&a.table)?;
            let cfg = a.config();
            let mut w = csv_out();
            w.write_record(["object", "bdm_bits", "miss_flag"])?;
            for o in objects(&input)? {
                let e = bdm(&o, &cfg, &table)?;
                w.write_record([o, fmt_float(e.value), u8::from(e.miss_policy_applied).to_string()])?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Bdm(BdmCommand::Scan { bdm: a, length }) => {
            let table = open_table(&a.table)?;
            let mut w = csv_out();
            w.write_record(["object", "bdm_bits", "miss_flag"])?;
            for (o, e) in bdm_scan(length, &a.config(), &table)? {
                w.write_record([o, fmt_float(e.value), u8::from(e.miss_policy_applied).to_string()])?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Aid(AidCommand::Rank {
            bdm: a,
            object,
            perturbations,
        }) => {
            let table = open_table(&a.table)?;
            let taus =
                Perturbation::parse_list(&perturbations).map_err(|e| collapse_core::Error::Config(e.to_string()))?;
            let mut w = csv_out();
            w.write_record(["rank", "perturbation", "perturbed", "delta_bits"])?;
            for (i, r) in rank_perturbations(&object, &taus, &a.config(), &table)?
                .into_iter()
                .enumerate()
            {
                w.write_record([
                    (i + 1).to_string(),
                    r.perturbation.to_string(),
                    r.perturbed,
                    fmt_float(r.delta),
                ])?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Program(ProgramCommand::Select { pool, data, lambda }) => {
            let text = fs::read_to_string(&pool).with_context(|| format!("reading {}", pool.display()))?;
            let pool: ProgramPool = serde_json::from_str(&text)
                .map_err(|e| collapse_core::Error::Config(format!("{}: {e}", pool.display())))?;
            let labels_text = fs::read_to_string(&data).with_context(|| format!("reading {}", data.display()))?;
            let labels: Vec<&str> = labels_text.split_whitespace().collect();
            let sample = SampleSet::from_labels(pool.support(), &labels, 0)?;
            let sel = select_program(&sample, &pool, lambda)?;
            println!("{}", serde_json::to_string_pretty(&sel)?);
            Ok(())
        }
        Command::Program(ProgramCommand::Pool {
            family,
            width,
            max_len,
            states,
            symbols,
            budget,
            cache,
            out,
        }) => {
            let table = TableParams {
                n_states: states,
                n_symbols: symbols,
                budget,
                ..TableParams::default()
            };
            let spec = match family {
                Family::Prefix => PoolSpec::Prefix { width },
                Family::Periodic => PoolSpec::Periodic { table, max_len },
                Family::Point => PoolSpec::Point { table },
            };
            let (pool, _) = build_pool(&spec, &TableCache::resolve(cache.as_deref()))?;
            let mut text = serde_json::to_string_pretty(&pool)?;
            text.push('\n');
            fs::write(&out, text)?;
            println!(
                "{}: {} programs over {} symbols",
                out.display(),
                pool.len(),
                pool.support().len()
            );
            Ok(())
        }
        Command::Report { manifest, series, out } => {
            let path = emit_plot_data(&manifest, &series, out.as_deref())?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn simulate(config: &Path, replicates: usize, seed: Option<u64>, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg: LoopConfig =
        serde_json::from_str(&text).map_err(|e| collapse_core::Error::Config(format!("{}: {e}", config.display())))?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if replicates == 0 {
        bail!(collapse_core::Error::Config("replicates must be at least 1".into()));
    }
    let runs = run_replicates(&cfg, replicates)?;
    fs::create_dir_all(out)?;
    let path = out.join("trajectory.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "seed",
        "t",
        "alpha",
        "entropy",
        "kl",
        "kl_smoothed",
        "tv",
        "support_size",
        "entropy_drop",
    ])?;
    for (i, tr) in runs.iter().enumerate() {
        for r in &tr.records {
            w.write_record([
                i.to_string(),
                r.t.to_string(),
                fmt_float(r.alpha),
                fmt_float(r.entropy),
                fmt_float(r.kl),
                fmt_float(r.kl_smoothed),
                fmt_float(r.tv),
                r.support_size.to_string(),
                r.entropy_drop.map(fmt_float).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    let last: Vec<String> = runs
        .iter()
        .map(|t| format!("{}", t.final_model.support_size()))
        .collect();
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "{}", path.display())?;
    writeln!(stdout, "final support sizes: {}", last.join(" "))?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<collapse_core::Error>().map(|e| e.class()) {
        Some(ErrorClass::Config) => 2,
        Some(ErrorClass::Integrity) => 3,
        Some(ErrorClass::Invariant) => 4,
        _ if err.downcast_ref::<serde_json::Error>().is_some() => 2,
        _ => 1,
    }
}

/// The reader went away, as with `| head`.
fn broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        let io = c
            .downcast_ref::<std::io::Error>()
            .or_else(|| match c.downcast_ref::<csv::Error>()?.kind() {
                csv::ErrorKind::Io(e) => Some(e),
                _ => None,
            });
        io.is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
