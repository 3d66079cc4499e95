//! Batch front end behind the `spinal` binary.

pub mod bench;
pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;
use serde_json::Value;

use crate::direct::{simulate_direct_with_rng, RecordMode, Trajectory};
use crate::error::SpinalError;
use crate::estimator::{
    direct_estimate, many_to_one_estimate, write_estimates_csv, EstimateRow, EstimatorConfig, Functional, MCEstimate,
};
use crate::label::Label;
use crate::model::{ConstantRateModel, OffspringLaw};
use crate::population::{Population, SpineState, TraitPoint};
use crate::rng::{stream_rng, ReplicaRunner};
use crate::spine::{rate_table, simulate_spine_with_rng, SpineTrajectory};
use crate::weight::WeightFunction;
use crate::yule::{yule_model, yule_weight};

pub use config::{CommandKind, Format, Manifest, ModelKind, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(SpinalError),
    Io(String),
    Validation(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(e) => write!(f, "simulation error: {e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
        }
    }
}

impl From<SpinalError> for CliError {
    fn from(e: SpinalError) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

const AFTER_HELP: &str = "\
Outputs:
  estimate  CSV columns: name,mean,se,ci_lo,ci_hi,n,seed
  compare   CSV columns: functional,method,mean,se,ci_lo,ci_hi,n,seed,ci_overlap
  bench     CSV columns: method,size,horizon,replicas,wall_clock_s,events,events_per_sec
  simulate-direct / simulate-spine with --format csv
            long CSV columns: time,replica,statistic,value
  simulate-* with --format jsonl writes one trajectory per replica as JSON lines.
A manifest <output>.manifest.json (config, sha256 of the config, seed, version)
is written next to every output file.

Exit codes: 2 configuration error, 3 simulation error, 4 validation failure.";

#[derive(Parser, Debug)]
#[command(name = "spinal", version, about = "Spinal simulation and estimation for interacting branching processes", after_help = AFTER_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Subcommand, Debug)]
pub enum CommandArgs {
    /// Simulate the branching process by thinning.
    SimulateDirect(CommonArgs),
    /// Simulate the spine process.
    SimulateSpine(CommonArgs),
    /// Many-to-One estimates from spine replicas.
    Estimate(CommonArgs),
    /// Direct against spine estimates with a CI-overlap verdict.
    Compare(CommonArgs),
    /// Time thinning against the fast tree algorithm (Yule model).
    Bench(CommonArgs),
    /// Quick self-check of the identities behind the estimators.
    Validate(CommonArgs),
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// JSON run configuration, or a manifest from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted override, e.g. `--set params.d=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// yule | builtin-constant
    #[arg(long)]
    pub model: Option<String>,
    /// Horizon T.
    #[arg(long = "t")]
    pub t: Option<f64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long, env = "SPINE_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Initial sizes for bench, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// csv | jsonl
    #[arg(long)]
    pub format: Option<String>,
    /// Threshold of the indicator functionals.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Initial number of individuals.
    #[arg(long)]
    pub n0: Option<usize>,
    /// Branching rate of builtin-constant.
    #[arg(long = "B")]
    pub b: Option<f64>,
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
    #[arg(long)]
    pub p3: Option<f64>,
    /// Division rate multiplier of yule.
    #[arg(long)]
    pub r: Option<f64>,
    /// Loss rate of yule.
    #[arg(long)]
    pub d: Option<f64>,
    /// Growth rate of yule.
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long = "div-a")]
    pub div_a: Option<f64>,
    #[arg(long = "div-b")]
    pub div_b: Option<f64>,
    #[arg(long = "loss-a")]
    pub loss_a: Option<f64>,
    #[arg(long = "loss-b")]
    pub loss_b: Option<f64>,
    /// Initial mass of each yule individual.
    #[arg(long)]
    pub mass: Option<f64>,
}

impl CommandArgs {
    fn split(&self) -> (CommandKind, &CommonArgs) {
        match self {
            CommandArgs::SimulateDirect(a) => (CommandKind::SimulateDirect, a),
            CommandArgs::SimulateSpine(a) => (CommandKind::SimulateSpine, a),
            CommandArgs::Estimate(a) => (CommandKind::Estimate, a),
            CommandArgs::Compare(a) => (CommandKind::Compare, a),
            CommandArgs::Bench(a) => (CommandKind::Bench, a),
            CommandArgs::Validate(a) => (CommandKind::Validate, a),
        }
    }
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if v.get("config_sha256").is_some() {
        v = v.get("config").cloned().ok_or_else(|| CliError::Config("manifest without config".into()))?;
    }
    Ok(v)
}

/// Resolves defaults, the configuration file, dotted overrides and flags,
/// in that order of increasing precedence.
pub fn resolve_config(command: CommandKind, args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut value = serde_json::to_value(RunConfig::defaults(command)).expect("defaults serialize");
    if let Some(path) = &args.config {
        config::merge(&mut value, read_json(path)?);
    }
    for s in &args.set {
        config::apply_override(&mut value, s)?;
    }
    let mut set = |key: &str, v: Value| {
        config::merge(&mut value, serde_json::json!({ key: v }));
    };
    set("command", serde_json::to_value(command).unwrap());
    if let Some(m) = &args.model {
        set("model", Value::String(m.clone()));
    }
    if let Some(t) = args.t {
        set("horizon", t.into());
    }
    if let Some(n) = args.replicas {
        set("replicas", n.into());
    }
    if let Some(s) = args.seed {
        set("seed", s.into());
    }
    if let Some(n) = args.threads {
        set("threads", n.into());
    }
    if let Some(s) = &args.sizes {
        set("sizes", serde_json::to_value(s).unwrap());
    }
    if let Some(o) = &args.output {
        set("output", serde_json::to_value(o).unwrap());
    }
    if let Some(f) = &args.format {
        set("format", Value::String(f.clone()));
    }
    if let Some(c) = args.threshold {
        set("threshold", c.into());
    }
    let params = [
        ("n0", args.n0.map(|n| n as f64)),
        ("B", args.b),
        ("p0", args.p0),
        ("p1", args.p1),
        ("p2", args.p2),
        ("p3", args.p3),
        ("r", args.r),
        ("d", args.d),
        ("mu", args.mu),
        ("div_a", args.div_a),
        ("div_b", args.div_b),
        ("loss_a", args.loss_a),
        ("loss_b", args.loss_b),
        ("mass", args.mass),
    ];
    for (k, v) in params {
        if let Some(v) = v {
            config::merge(&mut value, serde_json::json!({ "params": { k: v } }));
        }
    }
    let cfg = config::from_value(value)?;
    cfg.check()?;
    Ok(cfg)
}

/// Parses `args` and runs the command, mapping errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spinal: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (command, args) = cli.command.split();
    let cfg = resolve_config(command, args)?;
    run_config(&cfg)
}

/// Executes a resolved configuration and writes its artifact and manifest.
pub fn run_config(cfg: &RunConfig) -> Result<(), CliError> {
    let (bytes, verdict) = match cfg.command {
        CommandKind::SimulateDirect => (simulate_direct_cmd(cfg)?, Ok(())),
        CommandKind::SimulateSpine => (simulate_spine_cmd(cfg)?, Ok(())),
        CommandKind::Estimate => (estimate_cmd(cfg)?, Ok(())),
        CommandKind::Compare => (compare_cmd(cfg)?, Ok(())),
        CommandKind::Bench => (bench_cmd(cfg)?, Ok(())),
        CommandKind::Validate => validate_cmd(cfg)?,
    };
    emit(cfg, &bytes)?;
    verdict
}

fn emit(cfg: &RunConfig, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    match &cfg.output {
        Some(path) => {
            fs::write(path, bytes).map_err(io)?;
            let manifest = Manifest::new(cfg, vec![path.clone()]);
            let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            fs::write(manifest_path(path), text + "\n").map_err(io)
        }
        None => std::io::stdout().write_all(bytes).map_err(io),
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn estimator_config(cfg: &RunConfig, seed: u64) -> EstimatorConfig {
    EstimatorConfig::new(cfg.horizon, cfg.replicas, seed).with_threads(cfg.threads)
}

fn runner(cfg: &RunConfig) -> ReplicaRunner {
    ReplicaRunner::new(cfg.seed).with_threads(cfg.threads)
}

#[derive(Serialize)]
struct LongRow<'a> {
    time: f64,
    replica: u64,
    statistic: &'a str,
    value: f64,
}

fn long_csv(rows: &[(u64, Vec<(&'static str, f64)>)], time: f64) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (replica, stats) in rows {
        for &(statistic, value) in stats {
            w.serialize(LongRow { time, replica: *replica, statistic, value }).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn simulate_direct_cmd(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let sc = cfg.build()?;
    let est = estimator_config(cfg, cfg.seed);
    let mode = if cfg.format == Format::Jsonl { RecordMode::FullTrajectory } else { RecordMode::TerminalOnly };
    let trajs: Vec<Trajectory> = runner(cfg).run(cfg.replicas, |i, rng| {
        simulate_direct_with_rng(&sc.initial, sc.model.as_ref(), &est.run_config(i, mode.clone()), rng)
    })?;
    let sizes: Vec<f64> = trajs.iter().map(|t| t.terminal.len() as f64).collect();
    let summary = MCEstimate::from_samples(&sizes)?;
    eprintln!(
        "mean population size at t = {}: {:.6} (se {:.6}, n = {})",
        cfg.horizon, summary.mean, summary.std_error, summary.n_replicas
    );
    match cfg.format {
        Format::Jsonl => Ok(trajs.iter().flat_map(|t| t.to_jsonl_string().into_bytes()).collect()),
        Format::Csv => {
            let rows: Vec<_> = trajs
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    (
                        i as u64,
                        vec![
                            ("size", t.terminal.len() as f64),
                            ("mass", t.terminal.integral(TraitPoint::norm_l1)),
                            ("events", t.n_events as f64),
                        ],
                    )
                })
                .collect();
            long_csv(&rows, cfg.horizon)
        }
    }
}

fn simulate_spine_cmd(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let sc = cfg.build()?;
    let est = estimator_config(cfg, cfg.seed);
    let mode = if cfg.format == Format::Jsonl { RecordMode::FullTrajectory } else { RecordMode::TerminalOnly };
    let trajs: Vec<SpineTrajectory> = runner(cfg).run(cfg.replicas, |i, rng| {
        simulate_spine_with_rng(&sc.initial, sc.model.as_ref(), sc.weight.as_ref(), &est.run_config(i, mode.clone()), rng)
    })?;
    match cfg.format {
        Format::Jsonl => Ok(trajs.iter().flat_map(|t| t.to_jsonl_string().into_bytes()).collect()),
        Format::Csv => {
            let rows: Vec<_> = trajs
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    (
                        i as u64,
                        vec![
                            ("size", t.terminal.population().len() as f64),
                            ("log_weight", t.log_weight),
                            ("ln_terminal_psi", t.ln_terminal_psi),
                            ("spine_mass", t.spine_trait().norm_l1()),
                            ("spine_division_depth", t.spine_division_depth() as f64),
                        ],
                    )
                })
                .collect();
            long_csv(&rows, cfg.horizon)
        }
    }
}

type NamedFunctional = (&'static str, Box<Functional>);

fn functionals(threshold: f64) -> Vec<NamedFunctional> {
    let c = threshold;
    vec![
        ("one", Box::new(|_: &Label, _: &Population| 1.0)),
        (
            "spine_above",
            Box::new(move |u: &Label, pop: &Population| {
                pop.trait_of(u).map_or(0.0, |x| if x.norm_l1() > c { 1.0 } else { 0.0 })
            }),
        ),
        (
            "count_above",
            Box::new(move |_: &Label, pop: &Population| pop.traits().iter().filter(|x| x.norm_l1() > c).count() as f64),
        ),
    ]
}

fn rows_to_bytes<T: Serialize>(rows: &[T], format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
            }
            w.into_inner().map_err(|e| CliError::Io(e.to_string()))
        }
        Format::Jsonl => {
            let mut out = Vec::new();
            for r in rows {
                serde_json::to_writer(&mut out, r).map_err(|e| CliError::Io(e.to_string()))?;
                out.push(b'\n');
            }
            Ok(out)
        }
    }
}

fn estimate_cmd(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let sc = cfg.build()?;
    let est = estimator_config(cfg, cfg.seed);
    let mut rows = Vec::new();
    for (name, f) in functionals(cfg.threshold) {
        let e = many_to_one_estimate(sc.model.as_ref(), sc.weight.as_ref(), &sc.initial, &est, f.as_ref())?;
        rows.push(EstimateRow::new(name, &e, cfg.seed));
    }
    match cfg.format {
        Format::Csv => {
            let mut out = Vec::new();
            write_estimates_csv(&mut out, &rows)?;
            Ok(out)
        }
        Format::Jsonl => rows_to_bytes(&rows, Format::Jsonl),
    }
}

/// Seed offset of the spine replicas in `compare`, keeping them independent
/// of the direct replicas.
pub const SPINE_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Serialize)]
struct CompareRow {
    functional: String,
    method: String,
    mean: f64,
    se: f64,
    ci_lo: f64,
    ci_hi: f64,
    n: usize,
    seed: u64,
    ci_overlap: bool,
}

fn compare_cmd(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let sc = cfg.build()?;
    let spine_seed = cfg.seed.wrapping_add(SPINE_SEED_OFFSET);
    let mut rows = Vec::new();
    for (name, f) in functionals(cfg.threshold) {
        let d = direct_estimate(sc.model.as_ref(), sc.weight.as_ref(), &sc.initial, &estimator_config(cfg, cfg.seed), f.as_ref())?;
        let s = many_to_one_estimate(
            sc.model.as_ref(),
            sc.weight.as_ref(),
            &sc.initial,
            &estimator_config(cfg, spine_seed),
            f.as_ref(),
        )?;
        let overlap = d.ci_overlaps(&s);
        for (method, e, seed) in [("direct", &d, cfg.seed), ("spine", &s, spine_seed)] {
            rows.push(CompareRow {
                functional: name.into(),
                method: method.into(),
                mean: e.mean,
                se: e.std_error,
                ci_lo: e.ci95.0,
                ci_hi: e.ci95.1,
                n: e.n_replicas,
                seed,
                ci_overlap: overlap,
            });
        }
        eprintln!("{name}: direct {:.6e} ± {:.2e}, spine {:.6e} ± {:.2e}, overlap {overlap}", d.mean, d.std_error, s.mean, s.std_error);
    }
    rows_to_bytes(&rows, cfg.format)
}

fn bench_cmd(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let params = cfg.yule_params()?;
    let rows = bench::bench_yule(&params, &cfg.sizes, cfg.horizon, cfg.replicas, cfg.seed)?;
    eprint!("{}", bench::markdown_table(&rows));
    rows_to_bytes(&rows, cfg.format)
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn validate_cmd(cfg: &RunConfig) -> Result<(Vec<u8>, Result<(), CliError>), CliError> {
    let mut checks = Vec::new();
    let mut rng = stream_rng(cfg.seed, 0);
    let params = crate::yule::YuleParams::constant(1.0, 0.1, 0.0, (2.0, 2.0), (2.0, 1.0))?;
    let (model, weight) = (yule_model(params.clone()), yule_weight(params));

    let mut worst_g: f64 = 0.0;
    let mut worst_rates: f64 = 0.0;
    for _ in 0..50 {
        let s = rng.random_range(1..=4);
        let xs: Vec<f64> = (0..s).map(|_| rng.random_range(0.1..3.0)).collect();
        let pop = Population::from_scalars(0.0, &xs);
        let spine = rng.random_range(0..s);
        let nu = pop.marginal();
        let closed = weight.g_ratio_at(s as f64, nu.total_mass(), 0.0);
        let generic = weight.generic_g_ratio(&model, spine, nu, 0.0)?;
        worst_g = worst_g.max((closed - generic).abs() / closed.abs().max(1e-300));
        let table = rate_table(&model, &weight, spine, nu, 0.0)?;
        let lhs = table.tau_tot - table.original_total;
        let rhs = closed - weight.flow_log_derivative(&model, spine, nu, 0.0);
        worst_rates = worst_rates.max((lhs - rhs).abs() / rhs.abs().max(1e-300));
    }
    checks.push(Check { name: "yule_g_ratio_closed_vs_generic", pass: worst_g < 1e-6, detail: format!("max rel err {worst_g:.3e}") });
    checks.push(Check { name: "rate_difference_identity", pass: worst_rates < 1e-8, detail: format!("max rel err {worst_rates:.3e}") });

    let constant = ConstantRateModel::new(1.0, OffspringLaw::fixed(2))?;
    let one = Population::from_scalars(0.0, &[0.0]);
    let est = crate::estimator::EstimatorConfig::new(1.0, cfg.replicas, cfg.seed).with_threads(cfg.threads);
    let size = direct_estimate(&constant, &crate::weight::UnitWeight, &one, &est, &|_, _| 1.0)?;
    let target = 1f64.exp();
    checks.push(Check {
        name: "mean_size_formula",
        pass: size.within_se(target, 4.0),
        detail: format!("{:.5} ± {:.5} vs {target:.5}", size.mean, size.std_error),
    });

    let z = Population::from_scalars(0.0, &[1.0, 1.0]);
    let run = est.run_config(3, RecordMode::FullTrajectory);
    let a = simulate_spine_with_rng(&z, &model, &weight, &run, &mut stream_rng(cfg.seed, 3))?;
    let b = simulate_spine_with_rng(&z, &model, &weight, &run, &mut stream_rng(cfg.seed, 3))?;
    let replay: SpineState = a.replay(&model)?;
    checks.push(Check {
        name: "determinism_and_replay",
        pass: a.to_jsonl_string() == b.to_jsonl_string() && replay == a.terminal,
        detail: format!("{} events", a.n_events),
    });

    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    for c in &checks {
        eprintln!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let verdict = if failed.is_empty() { Ok(()) } else { Err(CliError::Validation(failed.join(", "))) };
    Ok((rows_to_bytes(&checks, Format::Jsonl)?, verdict))
}
