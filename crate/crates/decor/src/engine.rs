//! Simulation engine: the correlated-noise algorithm, its CDP/LDP
//! baselines, theoretical stepsize schedules, and metric traces.
//!
//! One round per user: sample a local data point, clip its gradient, add the
//! privacy noise (pairwise-canceling correlated terms plus one uncorrelated
//! Gaussian), take a local step, then gossip-average with the mixing matrix.
//! Both baselines share this path with `sigma_cor = 0`; the only difference
//! is how their uncorrelated noise level is calibrated.
//!
//! All randomness is keyed by (master seed, round, user/edge), never drawn
//! from shared stateful generators, so runs are reproducible and rounds
//! could be evaluated concurrently without changing results.

use serde::Serialize;
use thiserror::Error;

use crate::accountant::NoiseConfig;
use crate::graph::{self, Graph, MixingMatrix};
use crate::noise::{self, NoiseError, SeedSet};
use crate::problems::Problem;
use crate::rng;

const TAG_SAMPLE: u64 = 0x73_616d70; // "samp"
const TAG_INIT: u64 = 0x69_6e6974; // "init"

/// Runs abort once any coordinate passes this magnitude.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("run diverged at round {round}")]
    Diverged { round: usize },

    #[error("invalid schedule constants: {what}")]
    InvalidConstants { what: String },

    #[error("configuration mismatch: {what}")]
    ConfigMismatch { what: String },

    #[error(transparent)]
    Noise(#[from] NoiseError),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Diverged { .. } => "diverged",
            EngineError::InvalidConstants { .. } => "invalid-constants",
            EngineError::ConfigMismatch { .. } => "invalid-config",
            EngineError::Noise(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Decor,
    CdpBaseline,
    LdpBaseline,
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::Decor => "decor",
            Algorithm::CdpBaseline => "cdp",
            Algorithm::LdpBaseline => "ldp",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decor" => Ok(Algorithm::Decor),
            "cdp" | "cdp_baseline" => Ok(Algorithm::CdpBaseline),
            "ldp" | "ldp_baseline" => Ok(Algorithm::LdpBaseline),
            other => Err(format!("unknown algorithm '{other}'")),
        }
    }
}

/// Stepsize selection for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepsizeSpec {
    Constant(f64),
    /// Decaying schedule for PL objectives; constants come from the problem.
    PlSchedule,
    /// Constant schedule for the general nonconvex case.
    NonconvexSchedule,
}

/// Engine-level run configuration (problem and topology are passed
/// alongside).
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub algorithm: Algorithm,
    pub steps: usize,
    pub stepsize: StepsizeSpec,
    pub noise: NoiseConfig,
    pub master_seed: u64,
    /// Standard deviation of the random model initialization (0 = zeros).
    pub init_scale: f64,
    /// Loss gap F(x_0) - F* for the nonconvex schedule when the problem
    /// does not expose its optimal value.
    pub loss_gap: Option<f64>,
    /// Local samples averaged per gradient (clipping applies to the
    /// average, so the DP sensitivity and the accounting are unchanged;
    /// no amplification is claimed).
    pub batch_size: usize,
}

impl SimConfig {
    /// Baselines force `sigma_cor = 0`; their uncorrelated level is whatever
    /// calibration put in `noise.sigma_cdp`.
    pub fn effective_noise(&self) -> NoiseConfig {
        match self.algorithm {
            Algorithm::Decor => self.noise,
            Algorithm::CdpBaseline | Algorithm::LdpBaseline => NoiseConfig {
                sigma_cor: 0.0,
                ..self.noise
            },
        }
    }
}

/// Per-user models plus the seed context; `models[i]` is user i's vector.
#[derive(Debug, Clone)]
pub struct SimState {
    pub models: Vec<Vec<f64>>,
    pub round: usize,
    seeds: SeedSet,
}

impl SimState {
    pub fn new(models: Vec<Vec<f64>>, master_seed: u64, g: &Graph) -> Self {
        Self {
            models,
            round: 0,
            seeds: SeedSet::from_master(master_seed, g),
        }
    }

    /// Deterministic initialization: zeros, or N(0, scale^2) per coordinate.
    pub fn init(g: &Graph, d: usize, master_seed: u64, scale: f64) -> Self {
        let models = (0..g.n())
            .map(|i| {
                if scale > 0.0 {
                    rng::gaussian_vector(
                        rng::derive_key(master_seed, &[TAG_INIT, i as u64]),
                        d,
                        scale,
                    )
                } else {
                    vec![0.0; d]
                }
            })
            .collect();
        Self::new(models, master_seed, g)
    }

    pub fn seeds(&self) -> &SeedSet {
        &self.seeds
    }

    pub fn average_model(&self) -> Vec<f64> {
        average_columns(&self.models)
    }
}

fn average_columns(models: &[Vec<f64>]) -> Vec<f64> {
    let n = models.len();
    let d = models[0].len();
    let mut avg = vec![0.0; d];
    for m in models {
        for (a, v) in avg.iter_mut().zip(m) {
            *a += v;
        }
    }
    for a in &mut avg {
        *a /= n as f64;
    }
    avg
}

/// Consensus distance: `(1/n) sum_i ||x_i - xbar||^2`.
pub fn consensus_distance(models: &[Vec<f64>]) -> f64 {
    let avg = average_columns(models);
    models
        .iter()
        .map(|m| {
            m.iter()
                .zip(&avg)
                .map(|(x, a)| (x - a) * (x - a))
                .sum::<f64>()
        })
        .sum::<f64>()
        / models.len() as f64
}

/// What one round contributed to the average model: the average model moves
/// by exactly `-eta * mean_descent` (correlated noise cancels pairwise).
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub mean_descent: Vec<f64>,
}

/// One algorithm round: per-user clipped stochastic gradient plus privacy
/// noise, local step, then gossip averaging.
pub fn decor_step(
    state: &mut SimState,
    g: &Graph,
    w: &MixingMatrix,
    problem: &dyn Problem,
    noise_cfg: &NoiseConfig,
    eta: f64,
    batch_size: usize,
) -> Result<StepRecord, EngineError> {
    let n = g.n();
    let d = problem.dim();
    let t = state.round as u64;
    let master = state.seeds.master();
    let batch = batch_size.max(1);

    // one base draw per edge, accumulated with opposite signs
    let mut correlated = vec![vec![0.0f64; d]; n];
    if noise_cfg.sigma_cor > 0.0 {
        let mat = noise::correlated_noise_matrix(&state.seeds, g, t, d, noise_cfg.sigma_cor)?;
        for (i, cor) in correlated.iter_mut().enumerate() {
            for (r, c) in cor.iter_mut().enumerate() {
                *c = mat[(r, i)];
            }
        }
    }

    let mut mean_descent = vec![0.0f64; d];
    let mut half_step: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (i, cor) in correlated.iter().enumerate() {
        let m = problem.sample_count(i);
        let sample_key = rng::derive_key(master, &[TAG_SAMPLE, t, i as u64]);
        let mut grad = vec![0.0f64; d];
        for b in 0..batch {
            let sample = if m > 1 {
                rng::stream_index(sample_key, b as u64, m)
            } else {
                0
            };
            for (gk, v) in grad
                .iter_mut()
                .zip(problem.sample_gradient(i, sample, &state.models[i]))
            {
                *gk += v;
            }
        }
        for gk in &mut grad {
            *gk /= batch as f64;
        }
        let grad = noise::clip(&grad, noise_cfg.clip);
        let bar = noise::uncorrelated_noise(state.seeds.user_seed(i), t, d, noise_cfg.sigma_cdp);
        let mut x = state.models[i].clone();
        for k in 0..d {
            mean_descent[k] += grad[k] + bar[k];
            x[k] -= eta * (grad[k] + cor[k] + bar[k]);
        }
        half_step.push(x);
    }
    for v in &mut mean_descent {
        *v /= n as f64;
    }

    // gossip: x_i <- sum_j W_ij x_j^(t+1/2)
    let mut next: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = vec![0.0f64; d];
        for (j, xj) in half_step.iter().enumerate() {
            let wij = w.entry(i, j);
            if wij != 0.0 {
                for (xk, v) in x.iter_mut().zip(xj) {
                    *xk += wij * v;
                }
            }
        }
        next.push(x);
    }

    for x in &next {
        if x.iter()
            .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
        {
            return Err(EngineError::Diverged { round: state.round });
        }
    }

    state.models = next;
    state.round += 1;
    Ok(StepRecord { mean_descent })
}

/// Constant `c` shared by both schedules:
/// `c = max{4 sqrt(3 (1-p) (3P + pM)), mu/L, 2p, 4pM/n}`.
fn schedule_c(mu: f64, l: f64, p: f64, big_p: f64, big_m: f64, n: usize) -> f64 {
    let first = 4.0 * (3.0 * (1.0 - p) * (3.0 * big_p + p * big_m)).sqrt();
    first
        .max(mu / l)
        .max(2.0 * p)
        .max(4.0 * p * big_m / n as f64)
}

/// Decaying schedule for PL objectives:
/// `eta_t = 16 / (mu (t + c L / (mu p)))`; at t = 0 this is `16 p / (c L)`.
pub fn pl_stepsize(
    t: usize,
    mu: f64,
    l: f64,
    p: f64,
    big_p: f64,
    big_m: f64,
    n: usize,
) -> Result<f64, EngineError> {
    if mu <= 0.0 || p <= 0.0 || l <= 0.0 || !p.is_finite() {
        return Err(EngineError::InvalidConstants {
            what: format!("need mu > 0, L > 0, p in (0, 1]; got mu = {mu}, L = {l}, p = {p}"),
        });
    }
    let c = schedule_c(mu, l, p, big_p, big_m, n);
    Ok(16.0 / (mu * (t as f64 + c * l / (mu * p))))
}

/// Constant schedule for the nonconvex case:
/// `eta = min{p / (2 c L), 2 sqrt(F_0 n / (L T (sigma*^2 + d sigma_cdp^2)))}`.
#[allow(clippy::too_many_arguments)]
pub fn nonconvex_stepsize(
    mu: f64,
    l: f64,
    p: f64,
    big_p: f64,
    big_m: f64,
    n: usize,
    loss_gap: f64,
    steps: usize,
    sigma_cdp: f64,
    sigma_star_sq: f64,
    d: usize,
) -> Result<f64, EngineError> {
    if p <= 0.0 || l <= 0.0 || steps == 0 || loss_gap < 0.0 {
        return Err(EngineError::InvalidConstants {
            what: format!("need L > 0, p in (0, 1], T >= 1, F_0 >= 0; got L = {l}, p = {p}, T = {steps}, F_0 = {loss_gap}"),
        });
    }
    let c = schedule_c(mu.max(0.0), l, p, big_p, big_m, n);
    let cap = p / (2.0 * c * l);
    let noise_var = sigma_star_sq + d as f64 * sigma_cdp * sigma_cdp;
    if noise_var == 0.0 {
        return Ok(cap);
    }
    let stochastic = 2.0 * (loss_gap * n as f64 / (l * steps as f64 * noise_var)).sqrt();
    Ok(cap.min(stochastic))
}

/// One row of the metric trace, recorded for rounds 0..=T.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub round: usize,
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub consensus: f64,
    pub stepsize: f64,
}

#[derive(Debug, Clone)]
pub struct MetricsTrace {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTrace {
    pub fn final_loss(&self) -> f64 {
        self.rows.last().map(|r| r.loss).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: MetricsTrace,
    pub final_models: Vec<Vec<f64>>,
    /// Classification accuracy of the final average model, when defined.
    pub final_accuracy: Option<f64>,
}

type StepsizeFn = Box<dyn Fn(usize) -> Result<f64, EngineError>>;

fn resolve_stepsize(
    cfg: &SimConfig,
    problem: &dyn Problem,
    w: &MixingMatrix,
    initial_loss: f64,
    noise: &NoiseConfig,
) -> Result<StepsizeFn, EngineError> {
    match cfg.stepsize {
        StepsizeSpec::Constant(eta) => {
            if !eta.is_finite() || eta < 0.0 {
                return Err(EngineError::InvalidConstants {
                    what: format!("eta = {eta}"),
                });
            }
            Ok(Box::new(move |_t| Ok(eta)))
        }
        StepsizeSpec::PlSchedule => {
            let k = problem
                .constants()
                .ok_or_else(|| EngineError::InvalidConstants {
                    what: "problem exposes no analytic constants for the PL schedule".into(),
                })?;
            let p = graph::spectral_gap(w);
            let n = problem.num_users();
            // evaluate once to validate the constants
            pl_stepsize(
                0,
                k.pl_constant,
                k.smoothness,
                p,
                k.grad_diversity_p,
                k.noise_growth_m,
                n,
            )?;
            Ok(Box::new(move |t| {
                pl_stepsize(
                    t,
                    k.pl_constant,
                    k.smoothness,
                    p,
                    k.grad_diversity_p,
                    k.noise_growth_m,
                    n,
                )
            }))
        }
        StepsizeSpec::NonconvexSchedule => {
            let k = problem
                .constants()
                .ok_or_else(|| EngineError::InvalidConstants {
                    what: "problem exposes no analytic constants for the nonconvex schedule".into(),
                })?;
            let p = graph::spectral_gap(w);
            let loss_gap = cfg
                .loss_gap
                .or_else(|| problem.optimal_value().map(|f_star| initial_loss - f_star))
                .ok_or_else(|| EngineError::InvalidConstants {
                    what: "nonconvex schedule needs a loss gap (none supplied or derivable)".into(),
                })?;
            let eta = nonconvex_stepsize(
                k.pl_constant,
                k.smoothness,
                p,
                k.grad_diversity_p,
                k.noise_growth_m,
                problem.num_users(),
                loss_gap,
                cfg.steps,
                noise.sigma_cdp,
                k.sigma_star_sq,
                problem.dim(),
            )?;
            Ok(Box::new(move |_t| Ok(eta)))
        }
    }
}

/// Run a full training configuration and record the metric trace
/// (T + 1 rows including round 0). Deterministic given the master seed;
/// divergence aborts with the failing round index.
pub fn run(
    problem: &dyn Problem,
    g: &Graph,
    w: &MixingMatrix,
    cfg: &SimConfig,
) -> Result<RunOutcome, EngineError> {
    if problem.num_users() != g.n() {
        return Err(EngineError::ConfigMismatch {
            what: format!(
                "problem has {} users, graph has {}",
                problem.num_users(),
                g.n()
            ),
        });
    }
    if w.n() != g.n() {
        return Err(EngineError::ConfigMismatch {
            what: format!(
                "mixing matrix is {0}x{0}, graph has {1} vertices",
                w.n(),
                g.n()
            ),
        });
    }
    let noise = cfg.effective_noise();
    let mut state = SimState::init(g, problem.dim(), cfg.master_seed, cfg.init_scale);

    let record = |state: &SimState, eta: f64| -> MetricsRow {
        let avg = state.average_model();
        let grad = problem.global_gradient(&avg);
        MetricsRow {
            round: state.round,
            loss: problem.global_loss(&avg),
            grad_norm_sq: grad.iter().map(|v| v * v).sum(),
            consensus: consensus_distance(&state.models),
            stepsize: eta,
        }
    };

    let initial_loss = problem.global_loss(&state.average_model());
    if !initial_loss.is_finite() {
        return Err(EngineError::Diverged { round: 0 });
    }
    let eta_at = resolve_stepsize(cfg, problem, w, initial_loss, &noise)?;

    let mut rows = Vec::with_capacity(cfg.steps + 1);
    for t in 0..cfg.steps {
        let eta = eta_at(t)?;
        rows.push(record(&state, eta));
        decor_step(&mut state, g, w, problem, &noise, eta, cfg.batch_size)?;
    }
    rows.push(record(&state, eta_at(cfg.steps)?));

    let final_accuracy = problem.accuracy(&state.average_model());
    Ok(RunOutcome {
        trace: MetricsTrace { rows },
        final_models: state.models,
        final_accuracy,
    })
}
