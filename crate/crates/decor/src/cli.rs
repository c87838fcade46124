//! Command-line interface: `account`, `calibrate`, `train`, `sweep`.
//!
//! Accounting and calibration print a single JSON object to stdout; training
//! and sweeps write CSV files. Every domain error surfaces as exit code 2
//! with a machine-readable `{"error": code, "message": ...}` object.
//! `DECOR_THREADS` caps worker parallelism for sweeps.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accountant::{self, AccountantError, Adversary, NoiseConfig};
use crate::engine::{self, Algorithm, EngineError, SimConfig, StepsizeSpec};
use crate::graph::{self, Graph, GraphError, Topology};
use crate::noise::NoiseError;
use crate::problems::{self, Problem, ProblemError};
use crate::sweep::{self, SweepConfig, SweepGrids};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Accountant(#[from] AccountantError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("{0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Graph(e) => e.code(),
            CliError::Accountant(e) => e.code(),
            CliError::Engine(e) => e.code(),
            CliError::Problem(e) => e.code(),
            CliError::Noise(e) => e.code(),
            CliError::Config(_) => "invalid-config",
            CliError::Io { .. } => "io-error",
        }
    }
}

fn read_file(path: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

fn write_file(path: &str, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

/// Resolve a topology spec string (`ring:16`, `grid:16`, `complete:16`,
/// `star:16`, or `file:edges.txt`) plus an optional `--n` flag into a graph.
pub fn resolve_topology(spec: &str, n_flag: Option<usize>) -> Result<(Graph, String), CliError> {
    if let Some(path) = spec.strip_prefix("file:") {
        let g = graph::load_edge_list(&read_file(path)?)?;
        return Ok((g, format!("file:{path}")));
    }
    let (kind_str, n) = match spec.split_once(':') {
        Some((kind, n_str)) => {
            let n: usize = n_str.parse().map_err(|_| {
                CliError::Config(format!("bad vertex count '{n_str}' in topology spec"))
            })?;
            if let Some(flag) = n_flag {
                if flag != n {
                    return Err(CliError::Config(format!(
                        "topology spec says n = {n} but --n = {flag}"
                    )));
                }
            }
            (kind, n)
        }
        None => (spec, n_flag.unwrap_or(16)),
    };
    let kind: Topology = kind_str.parse().map_err(CliError::Config)?;
    let g = graph::build_topology(kind, n)?;
    Ok((g, format!("{}:{}", kind.name(), n)))
}

fn parse_adversary(s: &str) -> Result<Adversary, CliError> {
    s.parse().map_err(CliError::Config)
}

fn parse_algorithm(s: &str) -> Result<Algorithm, CliError> {
    s.parse().map_err(CliError::Config)
}

// ---------------------------------------------------------------------------
// Config file schemas
// ---------------------------------------------------------------------------

/// Problem selection, shared by `train` and `sweep` configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    LeastSquares {
        d: usize,
        #[serde(default)]
        data_seed: u64,
    },
    Logistic {
        path: String,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        data_seed: u64,
        #[serde(default)]
        dim: Option<usize>,
    },
}

fn default_lambda() -> f64 {
    1e-3
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec::LeastSquares {
            d: 10,
            data_seed: 0,
        }
    }
}

impl ProblemSpec {
    pub fn build(&self, n: usize) -> Result<Box<dyn Problem>, CliError> {
        match self {
            ProblemSpec::LeastSquares { d, data_seed } => Ok(Box::new(
                problems::synthetic_least_squares(n, *d, *data_seed),
            )),
            ProblemSpec::Logistic {
                path,
                lambda,
                data_seed,
                dim,
            } => {
                let data = problems::parse_libsvm(&read_file(path)?, *dim)?;
                Ok(Box::new(problems::logistic_problem(
                    &data, *lambda, n, *data_seed,
                )?))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StepsizeConfig {
    Constant { eta: f64 },
    Pl,
    Nonconvex,
}

impl Default for StepsizeConfig {
    fn default() -> Self {
        StepsizeConfig::Constant { eta: 0.01 }
    }
}

impl StepsizeConfig {
    fn to_spec(&self) -> StepsizeSpec {
        match self {
            StepsizeConfig::Constant { eta } => StepsizeSpec::Constant(*eta),
            StepsizeConfig::Pl => StepsizeSpec::PlSchedule,
            StepsizeConfig::Nonconvex => StepsizeSpec::NonconvexSchedule,
        }
    }
}

/// One training run. Exactly one of `epsilon` (budget to calibrate against)
/// or `noise` (explicit levels) must be set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub topology: String,
    pub n: Option<usize>,
    pub problem: ProblemSpec,
    pub algorithm: String,
    pub steps: usize,
    pub delta: f64,
    pub epsilon: Option<f64>,
    pub noise: Option<NoiseConfig>,
    pub stepsize: StepsizeConfig,
    /// Clipping threshold used when calibrating from `epsilon`.
    pub clip: f64,
    pub adversary: String,
    pub master_seed: u64,
    pub init_scale: f64,
    pub batch_size: usize,
    pub output: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            topology: "ring:16".into(),
            n: None,
            problem: ProblemSpec::default(),
            algorithm: "decor".into(),
            steps: 1000,
            delta: 1e-5,
            epsilon: None,
            noise: None,
            stepsize: StepsizeConfig::default(),
            clip: 1.0,
            adversary: "eaves".into(),
            master_seed: 1,
            init_scale: 0.0,
            batch_size: 1,
            output: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepFileConfig {
    pub topology: String,
    pub n: Option<usize>,
    pub problem: ProblemSpec,
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub etas: Vec<f64>,
    pub clips: Vec<f64>,
    pub sigma_cdp_candidates: usize,
    pub adversary: String,
    pub init_scale: f64,
    pub output: Option<String>,
}

impl Default for SweepFileConfig {
    fn default() -> Self {
        let grids = SweepGrids::default();
        Self {
            topology: "ring:16".into(),
            n: None,
            problem: ProblemSpec::default(),
            epsilons: vec![3.0, 10.0, 30.0],
            delta: 1e-5,
            steps: 2000,
            seeds: vec![1, 2, 3, 4],
            etas: grids.etas,
            clips: grids.clips,
            sigma_cdp_candidates: grids.sigma_cdp_candidates,
            adversary: "eaves".into(),
            init_scale: 0.0,
            output: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "decor",
    about = "Decentralized SGD with correlated noise: SecLDP accounting, calibration, and experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-step SecRDP coefficient and composed SecLDP guarantee.
    Account(AccountArgs),
    /// Calibrate noise levels to a privacy budget.
    Calibrate(CalibrateArgs),
    /// Run one training configuration and write the metric trace CSV.
    Train(TrainArgs),
    /// Calibrate, tune, and run all algorithms over an epsilon grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct AccountArgs {
    /// ring:N | grid:N | complete:N | star:N | file:PATH
    #[arg(long)]
    pub topology: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub sigma_cdp: f64,
    #[arg(long, default_value_t = 0.0)]
    pub sigma_cor: f64,
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    /// eaves | curious | collude:q
    #[arg(long, default_value = "eaves")]
    pub adversary: String,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub delta: f64,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long)]
    pub topology: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    #[arg(long, default_value = "eaves")]
    pub adversary: String,
    /// closed-form | search
    #[arg(long, default_value = "closed-form")]
    pub mode: String,
    /// Fixed uncorrelated level for `--mode search`.
    #[arg(long)]
    pub sigma_cdp: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub topology: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub algorithm: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub sigma_cdp: Option<f64>,
    #[arg(long)]
    pub sigma_cor: Option<f64>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub adversary: Option<String>,
    #[arg(long)]
    pub output: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON sweep config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub topology: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub output: Option<String>,
}

// ---------------------------------------------------------------------------
// Command implementations
// ---------------------------------------------------------------------------

fn configure_threads() {
    if let Ok(v) = std::env::var("DECOR_THREADS") {
        if let Ok(k) = v.parse::<usize>() {
            if k >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global();
            }
        }
    }
}

pub fn cmd_account(args: &AccountArgs) -> Result<String, CliError> {
    let (g, _) = resolve_topology(&args.topology, args.n)?;
    let adversary = parse_adversary(&args.adversary)?;
    let noise = NoiseConfig::new(args.sigma_cdp, args.sigma_cor, args.clip);
    let report = accountant::privacy_report(&g, &noise, adversary, args.steps, args.delta)?;
    Ok(serde_json::to_string_pretty(&report).expect("report serializes"))
}

#[derive(Debug, Serialize)]
struct CalibrateOutput {
    sigma_cdp: f64,
    sigma_cor: f64,
    clip: f64,
    epsilon_target: f64,
    epsilon_achieved: f64,
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<String, CliError> {
    let (g, _) = resolve_topology(&args.topology, args.n)?;
    let adversary = parse_adversary(&args.adversary)?;
    let out = match args.mode.as_str() {
        "closed-form" => {
            let cal = accountant::calibrate_closed_form(
                &g,
                adversary,
                args.clip,
                args.steps,
                args.epsilon,
                args.delta,
            )?;
            CalibrateOutput {
                sigma_cdp: cal.noise.sigma_cdp,
                sigma_cor: cal.noise.sigma_cor,
                clip: cal.noise.clip,
                epsilon_target: cal.epsilon_target,
                epsilon_achieved: cal.epsilon_achieved,
            }
        }
        "search" => {
            let sigma_cdp = args
                .sigma_cdp
                .ok_or_else(|| CliError::Config("--mode search requires --sigma-cdp".into()))?;
            let eps_iter = accountant::per_step_rdp_budget(args.epsilon, args.steps, args.delta)?;
            let sigma_cor = accountant::calibrate_binary_search(
                &g, sigma_cdp, args.clip, eps_iter, adversary, None,
            )?;
            let noise = NoiseConfig::new(sigma_cdp, sigma_cor, args.clip);
            let eps_step = accountant::step_epsilon_exact(&g, &noise, adversary)?;
            CalibrateOutput {
                sigma_cdp,
                sigma_cor,
                clip: args.clip,
                epsilon_target: args.epsilon,
                epsilon_achieved: accountant::compose_and_convert(
                    eps_step, args.steps, args.delta,
                )?,
            }
        }
        other => return Err(CliError::Config(format!("unknown mode '{other}'"))),
    };
    Ok(serde_json::to_string_pretty(&out).expect("output serializes"))
}

fn load_run_config(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg: RunConfig = match &args.config {
        Some(path) => serde_json::from_str(&read_file(&path.to_string_lossy())?)
            .map_err(|e| CliError::Config(format!("bad run config: {e}")))?,
        None => RunConfig::default(),
    };
    if let Some(v) = &args.topology {
        cfg.topology = v.clone();
    }
    if args.n.is_some() {
        cfg.n = args.n;
    }
    if let Some(v) = &args.algorithm {
        cfg.algorithm = v.clone();
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.eta {
        cfg.stepsize = StepsizeConfig::Constant { eta: v };
    }
    if args.epsilon.is_some() {
        cfg.epsilon = args.epsilon;
        cfg.noise = None;
    }
    if args.sigma_cdp.is_some() || args.sigma_cor.is_some() {
        let base = cfg.noise.unwrap_or(NoiseConfig::new(0.0, 0.0, cfg.clip));
        cfg.noise = Some(NoiseConfig {
            sigma_cdp: args.sigma_cdp.unwrap_or(base.sigma_cdp),
            sigma_cor: args.sigma_cor.unwrap_or(base.sigma_cor),
            clip: args.clip.unwrap_or(base.clip),
        });
        cfg.epsilon = None;
    }
    if let Some(v) = args.clip {
        cfg.clip = v;
        if let Some(noise) = &mut cfg.noise {
            noise.clip = v;
        }
    }
    if let Some(v) = args.delta {
        cfg.delta = v;
    }
    if let Some(v) = args.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = args.init_scale {
        cfg.init_scale = v;
    }
    if let Some(v) = &args.adversary {
        cfg.adversary = v.clone();
    }
    if args.output.is_some() {
        cfg.output = args.output.clone();
    }
    Ok(cfg)
}

/// Resolve the run's noise: calibrate against the epsilon budget, or take
/// the explicit levels. Exactly one of the two must be configured.
pub fn resolve_noise(
    cfg: &RunConfig,
    g: &Graph,
    algorithm: Algorithm,
    adversary: Adversary,
) -> Result<NoiseConfig, CliError> {
    match (&cfg.epsilon, &cfg.noise) {
        (Some(_), Some(_)) | (None, None) => Err(CliError::Config(
            "exactly one of 'epsilon' or 'noise' must be set".into(),
        )),
        (None, Some(noise)) => Ok(*noise),
        (Some(eps), None) => {
            let eps_iter = accountant::per_step_rdp_budget(*eps, cfg.steps, cfg.delta)?;
            match algorithm {
                Algorithm::CdpBaseline => Ok(NoiseConfig::new(
                    accountant::cdp_sigma(g.n(), cfg.clip, eps_iter)?,
                    0.0,
                    cfg.clip,
                )),
                Algorithm::LdpBaseline => Ok(NoiseConfig::new(
                    accountant::ldp_sigma(cfg.clip, eps_iter)?,
                    0.0,
                    cfg.clip,
                )),
                Algorithm::Decor => Ok(accountant::calibrate_closed_form(
                    g, adversary, cfg.clip, cfg.steps, *eps, cfg.delta,
                )?
                .noise),
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    output: String,
    rounds: usize,
    final_loss: f64,
    final_accuracy: Option<f64>,
    sigma_cdp: f64,
    sigma_cor: f64,
}

pub fn cmd_train(args: &TrainArgs) -> Result<String, CliError> {
    let cfg = load_run_config(args)?;
    let (g, _) = resolve_topology(&cfg.topology, cfg.n)?;
    let algorithm = parse_algorithm(&cfg.algorithm)?;
    let adversary = parse_adversary(&cfg.adversary)?;
    let problem = cfg.problem.build(g.n())?;
    let w = graph::metropolis_weights(&g);
    let noise = resolve_noise(&cfg, &g, algorithm, adversary)?;
    let sim = SimConfig {
        algorithm,
        steps: cfg.steps,
        stepsize: cfg.stepsize.to_spec(),
        noise,
        master_seed: cfg.master_seed,
        init_scale: cfg.init_scale,
        loss_gap: None,
        batch_size: cfg.batch_size,
    };
    let out = engine::run(problem.as_ref(), &g, &w, &sim)?;

    let path = cfg.output.clone().unwrap_or_else(|| "train.csv".into());
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &out.trace.rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Config(format!("csv: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Config(format!("csv: {e}")))?;
    write_file(&path, &bytes)?;

    let summary = TrainSummary {
        output: path,
        rounds: out.trace.rows.len(),
        final_loss: out.trace.final_loss(),
        final_accuracy: out.final_accuracy,
        sigma_cdp: noise.sigma_cdp,
        sigma_cor: noise.sigma_cor,
    };
    Ok(serde_json::to_string_pretty(&summary).expect("summary serializes"))
}

fn load_sweep_config(args: &SweepArgs) -> Result<SweepFileConfig, CliError> {
    let mut cfg: SweepFileConfig = match &args.config {
        Some(path) => serde_json::from_str(&read_file(&path.to_string_lossy())?)
            .map_err(|e| CliError::Config(format!("bad sweep config: {e}")))?,
        None => SweepFileConfig::default(),
    };
    if let Some(v) = &args.topology {
        cfg.topology = v.clone();
    }
    if args.n.is_some() {
        cfg.n = args.n;
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if args.output.is_some() {
        cfg.output = args.output.clone();
    }
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    output: String,
    rows: usize,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<String, CliError> {
    configure_threads();
    let file_cfg = load_sweep_config(args)?;
    let (g, label) = resolve_topology(&file_cfg.topology, file_cfg.n)?;
    let problem = file_cfg.problem.build(g.n())?;
    let w = graph::metropolis_weights(&g);
    let cfg = SweepConfig {
        algorithms: vec![
            Algorithm::Decor,
            Algorithm::CdpBaseline,
            Algorithm::LdpBaseline,
        ],
        epsilons: file_cfg.epsilons.clone(),
        delta: file_cfg.delta,
        steps: file_cfg.steps,
        seeds: file_cfg.seeds.clone(),
        adversary: parse_adversary(&file_cfg.adversary)?,
        grids: SweepGrids {
            etas: file_cfg.etas.clone(),
            clips: file_cfg.clips.clone(),
            sigma_cdp_candidates: file_cfg.sigma_cdp_candidates,
        },
        init_scale: file_cfg.init_scale,
    };
    let rows = sweep::run_sweep(problem.as_ref(), &g, &w, &label, &cfg);

    let path = file_cfg
        .output
        .clone()
        .unwrap_or_else(|| "sweep.csv".into());
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Config(format!("csv: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Config(format!("csv: {e}")))?;
    write_file(&path, &bytes)?;

    Ok(serde_json::to_string_pretty(&SweepSummary {
        output: path,
        rows: rows.len(),
    })
    .expect("summary serializes"))
}

/// Dispatch a parsed command; the returned string goes to stdout.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Account(args) => cmd_account(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Train(args) => cmd_train(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

/// stdout/stderr plumbing for `main`.
pub fn run_main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(output) => {
            println!("{output}");
            std::process::ExitCode::SUCCESS
        }
        Err(err) => {
            let obj = serde_json::json!({ "error": err.code(), "message": err.to_string() });
            println!("{obj}");
            let _ = std::io::stdout().flush();
            std::process::ExitCode::from(2)
        }
    }
}
