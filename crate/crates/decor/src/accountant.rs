//! SecRDP/SecLDP privacy accounting and noise calibration.
//!
//! One algorithm step releases, per honest user, the clipped gradient plus a
//! sum of pairwise-canceling edge noises and one independent Gaussian. After
//! the adversary subtracts every noise term it knows, the remaining noise
//! covariance is
//!
//! ```text
//! Sigma = sigma_cdp^2 * I + sigma_cor^2 * L(G_H)
//! ```
//!
//! with `L(G_H)` the Laplacian of the subgraph induced by the honest users.
//! The step then satisfies (alpha, alpha * eps)-SecRDP for every alpha > 1
//! with the exact coefficient `eps = 2 C^2 max_i (Sigma^{-1})_{ii}`,
//! maximized over all adversary configurations. Composition over `T` steps
//! and conversion at a target `delta` give the reported (eps, delta)-SecLDP
//! guarantee.
//!
//! The closed-form upper bound, the exact accountant, calibration from a
//! privacy budget (closed form and binary search), and the CDP/LDP baseline
//! noise levels all live here.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{self, Graph, GraphError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccountantError {
    #[error("covariance is singular: sigma_cdp must be positive")]
    SingularCovariance,

    #[error("delta = {delta} must lie strictly inside (0, 1)")]
    InvalidDelta { delta: f64 },

    #[error("epsilon target {eps} exceeds log(1/delta) = {limit}; closed-form calibration does not apply")]
    OutOfRegime { eps: f64, limit: f64 },

    #[error("graph is not sufficiently connected for this adversary (a_q = {a_q})")]
    GraphNotSufficientlyConnected { a_q: f64 },

    #[error("per-step target {target} is below the reachable floor {floor} on this graph")]
    UnreachableTarget { target: f64, floor: f64 },

    #[error("target {value} must be positive")]
    InvalidTarget { value: f64 },

    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl AccountantError {
    pub fn code(&self) -> &'static str {
        match self {
            AccountantError::SingularCovariance => "singular-covariance",
            AccountantError::InvalidDelta { .. } => "invalid-delta",
            AccountantError::OutOfRegime { .. } => "out-of-regime",
            AccountantError::GraphNotSufficientlyConnected { .. } => {
                "graph-not-sufficiently-connected"
            }
            AccountantError::UnreachableTarget { .. } => "unreachable-target",
            AccountantError::InvalidTarget { .. } => "invalid-target",
            AccountantError::Graph(e) => e.code(),
        }
    }
}

/// Privacy mechanism parameters: noise levels and the clipping threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Standard deviation of the per-user uncorrelated Gaussian.
    pub sigma_cdp: f64,
    /// Standard deviation of each pairwise-canceling edge Gaussian.
    pub sigma_cor: f64,
    /// Gradient clipping threshold C (the DP sensitivity is 2C).
    pub clip: f64,
}

impl NoiseConfig {
    pub fn new(sigma_cdp: f64, sigma_cor: f64, clip: f64) -> Self {
        Self {
            sigma_cdp,
            sigma_cor,
            clip,
        }
    }
}

/// Who is trying to break privacy, expressed as a collusion level.
///
/// The eavesdropper observes all communications and no secrets (q = 0
/// deletions); q colluding curious users additionally pool every secret they
/// hold, which removes them and their incident edge noise from the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "q")]
pub enum Adversary {
    Eavesdropper,
    CuriousUsers,
    Colluding(usize),
}

impl Adversary {
    /// Number of vertex deletions this adversary induces.
    pub fn collusion_level(&self) -> usize {
        match self {
            Adversary::Eavesdropper => 0,
            Adversary::CuriousUsers => 1,
            Adversary::Colluding(q) => *q,
        }
    }

    /// Collusion must leave at least two honest users.
    pub fn validate(&self, n: usize) -> Result<(), AccountantError> {
        let q = self.collusion_level();
        if q + 2 > n {
            return Err(AccountantError::Graph(GraphError::InvalidCollusionLevel {
                q,
                n,
                max: n.saturating_sub(2),
            }));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            Adversary::Eavesdropper => "eavesdropper".into(),
            Adversary::CuriousUsers => "curious_users".into(),
            Adversary::Colluding(q) => format!("colluding:{q}"),
        }
    }
}

impl std::str::FromStr for Adversary {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eaves" | "eavesdropper" => Ok(Adversary::Eavesdropper),
            "curious" | "curious_users" => Ok(Adversary::CuriousUsers),
            other => {
                if let Some(q) = other.strip_prefix("collude:") {
                    let q: usize = q
                        .parse()
                        .map_err(|_| format!("bad collusion level '{q}'"))?;
                    Ok(Adversary::Colluding(q))
                } else {
                    Err(format!(
                        "unknown adversary '{other}' (use eaves, curious, collude:q)"
                    ))
                }
            }
        }
    }
}

/// Largest diagonal entry of `(sigma_cdp^2 I + sigma_cor^2 L)^{-1}` for the
/// given graph, via Cholesky (the matrix is SPD exactly when sigma_cdp > 0).
fn max_inverse_diagonal(g: &Graph, noise: &NoiseConfig) -> Result<f64, AccountantError> {
    if noise.sigma_cdp <= 0.0 {
        // the Laplacian term alone is only positive semidefinite
        return Err(AccountantError::SingularCovariance);
    }
    let n = g.n();
    let mut sigma = graph::laplacian(g) * (noise.sigma_cor * noise.sigma_cor);
    let diag = noise.sigma_cdp * noise.sigma_cdp;
    for i in 0..n {
        sigma[(i, i)] += diag;
    }
    let chol = Cholesky::new(sigma).ok_or(AccountantError::SingularCovariance)?;
    let inv: DMatrix<f64> = chol.inverse();
    Ok((0..n)
        .map(|i| inv[(i, i)])
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Exact per-step SecRDP coefficient `eps`, so that one step is
/// (alpha, alpha * eps)-SecRDP for every alpha > 1.
///
/// For the eavesdropper this evaluates the full graph; for collusion level q
/// it maximizes over all q-subsets of deleted (colluding) vertices.
pub fn step_epsilon_exact(
    g: &Graph,
    noise: &NoiseConfig,
    adversary: Adversary,
) -> Result<f64, AccountantError> {
    adversary.validate(g.n())?;
    let c2 = 2.0 * noise.clip * noise.clip;
    let q = adversary.collusion_level();
    if q == 0 {
        return Ok(c2 * max_inverse_diagonal(g, noise)?);
    }
    let mut worst = f64::NEG_INFINITY;
    for subset in itertools::Itertools::combinations(0..g.n(), q) {
        let sub = g.delete_vertices(&subset);
        let eps = c2 * max_inverse_diagonal(&sub, noise)?;
        worst = worst.max(eps);
    }
    Ok(worst)
}

/// Closed-form upper bound on the per-step coefficient:
/// `2 C^2 (1/((n-q) sigma_cdp^2) + (1 - 1/(n-q)) / (sigma_cdp^2 + a_q(G) sigma_cor^2))`.
///
/// Always at least [`step_epsilon_exact`]; equal on complete graphs with
/// q = 0.
pub fn step_epsilon_bound(
    g: &Graph,
    noise: &NoiseConfig,
    adversary: Adversary,
) -> Result<f64, AccountantError> {
    adversary.validate(g.n())?;
    if noise.sigma_cdp <= 0.0 {
        return Err(AccountantError::SingularCovariance);
    }
    let q = adversary.collusion_level();
    let m = (g.n() - q) as f64;
    let a_q = graph::min_connectivity_after_deletion(g, q, None)?;
    let var_cdp = noise.sigma_cdp * noise.sigma_cdp;
    let var_cor = noise.sigma_cor * noise.sigma_cor;
    let c2 = 2.0 * noise.clip * noise.clip;
    Ok(c2 * (1.0 / (m * var_cdp) + (1.0 - 1.0 / m) / (var_cdp + a_q * var_cor)))
}

/// Compose `steps` iterations of an (alpha, alpha * eps_step)-SecRDP
/// mechanism and convert to (eps, delta)-SecLDP at the optimal alpha.
///
/// The optimum of `T alpha e + log(1/delta)/(alpha - 1)` over alpha > 1 is
/// `alpha* = 1 + sqrt(log(1/delta) / (T e))`, giving
/// `T e + 2 sqrt(T e log(1/delta))`.
pub fn compose_and_convert(
    eps_step: f64,
    steps: usize,
    delta: f64,
) -> Result<f64, AccountantError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AccountantError::InvalidDelta { delta });
    }
    if eps_step < 0.0 {
        return Err(AccountantError::InvalidTarget { value: eps_step });
    }
    if eps_step == 0.0 {
        return Ok(0.0);
    }
    let total = steps as f64 * eps_step;
    let log_inv_delta = (1.0 / delta).ln();
    Ok(total + 2.0 * (total * log_inv_delta).sqrt())
}

/// Invert [`compose_and_convert`]: the per-step SecRDP budget whose
/// composition over `steps` at `delta` equals `eps_dp` exactly.
pub fn per_step_rdp_budget(eps_dp: f64, steps: usize, delta: f64) -> Result<f64, AccountantError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AccountantError::InvalidDelta { delta });
    }
    if eps_dp <= 0.0 {
        return Err(AccountantError::InvalidTarget { value: eps_dp });
    }
    let log_inv_delta = (1.0 / delta).ln();
    let root = (log_inv_delta + eps_dp).sqrt() - log_inv_delta.sqrt();
    Ok(root * root / steps as f64)
}

/// A calibrated noise configuration together with the guarantee actually
/// achieved by the exact accountant (the closed-form constants are
/// sufficient, not necessary, so slack is reported rather than discarded).
#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub noise: NoiseConfig,
    pub epsilon_target: f64,
    pub epsilon_achieved: f64,
}

/// Closed-form calibration to an (eps, delta)-SecLDP budget over `steps`
/// iterations:
///
/// ```text
/// sigma_cdp^2 = 32 C^2 T log(1/delta) / ((n - q) eps^2)
/// sigma_cor^2 = 32 C^2 T log(1/delta) / (a_q(G) eps^2)
/// ```
///
/// Requires `eps <= log(1/delta)` and a graph that stays connected after any
/// q deletions. The result is verified through the exact accountant.
pub fn calibrate_closed_form(
    g: &Graph,
    adversary: Adversary,
    clip: f64,
    steps: usize,
    eps_target: f64,
    delta: f64,
) -> Result<Calibration, AccountantError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AccountantError::InvalidDelta { delta });
    }
    if eps_target <= 0.0 {
        return Err(AccountantError::InvalidTarget { value: eps_target });
    }
    adversary.validate(g.n())?;
    let log_inv_delta = (1.0 / delta).ln();
    if eps_target > log_inv_delta {
        return Err(AccountantError::OutOfRegime {
            eps: eps_target,
            limit: log_inv_delta,
        });
    }
    let q = adversary.collusion_level();
    let a_q = graph::min_connectivity_after_deletion(g, q, None)?;
    if a_q <= 1e-12 {
        return Err(AccountantError::GraphNotSufficientlyConnected { a_q });
    }
    let m = (g.n() - q) as f64;
    let numerator = 32.0 * clip * clip * steps as f64 * log_inv_delta;
    let eps2 = eps_target * eps_target;
    let noise = NoiseConfig {
        sigma_cdp: (numerator / (m * eps2)).sqrt(),
        sigma_cor: (numerator / (a_q * eps2)).sqrt(),
        clip,
    };
    let eps_step = step_epsilon_exact(g, &noise, adversary)?;
    let epsilon_achieved = compose_and_convert(eps_step, steps, delta)?;
    debug_assert!(
        epsilon_achieved <= eps_target * (1.0 + 1e-9),
        "calibration produced {epsilon_achieved} > target {eps_target}"
    );
    Ok(Calibration {
        noise,
        epsilon_target: eps_target,
        epsilon_achieved,
    })
}

/// Default upper end of the binary-search bracket, as a multiple of C.
pub const SEARCH_BRACKET_FACTOR: f64 = 1e3;
const SEARCH_RELATIVE_TOLERANCE: f64 = 1e-6;
const SEARCH_MAX_ITERATIONS: usize = 100;

/// Smallest `sigma_cor` in `[0, sigma_max]` whose exact per-step coefficient
/// is at most `eps_step_target`, to relative tolerance 1e-6.
///
/// The coefficient is non-increasing in `sigma_cor`, which licenses
/// bisection. Targets at or above the value at `sigma_cor = 0` need no
/// correlated noise (returns 0); targets below the value at the bracket end
/// are unreachable.
pub fn calibrate_binary_search(
    g: &Graph,
    sigma_cdp: f64,
    clip: f64,
    eps_step_target: f64,
    adversary: Adversary,
    sigma_max: Option<f64>,
) -> Result<f64, AccountantError> {
    adversary.validate(g.n())?;
    if sigma_cdp <= 0.0 {
        return Err(AccountantError::SingularCovariance);
    }
    let eval = |sigma_cor: f64| -> Result<f64, AccountantError> {
        step_epsilon_exact(
            g,
            &NoiseConfig {
                sigma_cdp,
                sigma_cor,
                clip,
            },
            adversary,
        )
    };
    if eps_step_target >= eval(0.0)? {
        return Ok(0.0);
    }
    let hi_end = sigma_max.unwrap_or(SEARCH_BRACKET_FACTOR * clip);
    let floor = eval(hi_end)?;
    if eps_step_target < floor {
        return Err(AccountantError::UnreachableTarget {
            target: eps_step_target,
            floor,
        });
    }
    let mut lo = 0.0f64;
    let mut hi = hi_end;
    for _ in 0..SEARCH_MAX_ITERATIONS {
        if hi - lo <= SEARCH_RELATIVE_TOLERANCE * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if eval(mid)? <= eps_step_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// LDP baseline noise: per-user Gaussian mechanism with step coefficient
/// `2 C^2 / sigma^2 = eps_step`, i.e. `sigma = C sqrt(2 / eps_step)`.
pub fn ldp_sigma(clip: f64, eps_step: f64) -> Result<f64, AccountantError> {
    if eps_step <= 0.0 {
        return Err(AccountantError::InvalidTarget { value: eps_step });
    }
    Ok(clip * (2.0 / eps_step).sqrt())
}

/// CDP baseline noise: protects the average only, so the per-user level
/// drops by sqrt(n): `sigma = C sqrt(2 / (n eps_step))`.
pub fn cdp_sigma(n: usize, clip: f64, eps_step: f64) -> Result<f64, AccountantError> {
    if eps_step <= 0.0 {
        return Err(AccountantError::InvalidTarget { value: eps_step });
    }
    Ok(clip * (2.0 / (n as f64 * eps_step)).sqrt())
}

/// Per-step coefficient plus the composed SecLDP guarantee.
#[derive(Debug, Clone, Serialize)]
pub struct PrivacyReport {
    /// Exact per-step coefficient: one step is (alpha, alpha * step_rdp)-SecRDP.
    pub step_rdp: f64,
    /// Closed-form upper bound on `step_rdp`.
    pub bound_rdp: f64,
    /// Composed (epsilon, delta)-SecLDP epsilon over `steps` iterations.
    pub epsilon_dp: f64,
    pub steps: usize,
    pub delta: f64,
    pub adversary: String,
}

pub fn privacy_report(
    g: &Graph,
    noise: &NoiseConfig,
    adversary: Adversary,
    steps: usize,
    delta: f64,
) -> Result<PrivacyReport, AccountantError> {
    let step_rdp = step_epsilon_exact(g, noise, adversary)?;
    let bound_rdp = step_epsilon_bound(g, noise, adversary)?;
    let epsilon_dp = compose_and_convert(step_rdp, steps, delta)?;
    Ok(PrivacyReport {
        step_rdp,
        bound_rdp,
        epsilon_dp,
        steps,
        delta,
        adversary: adversary.label(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_topology, random_connected_graph, Topology};

    fn unit_noise() -> NoiseConfig {
        NoiseConfig::new(1.0, 1.0, 1.0)
    }

    /// Sherman-Morrison closed form for the complete graph: every diagonal
    /// entry of Sigma^{-1} equals
    /// (s_cdp^2 + s_cor^2) / (s_cdp^2 (s_cdp^2 + n s_cor^2)).
    fn complete_graph_exact(n: usize, noise: &NoiseConfig) -> f64 {
        let vc = noise.sigma_cdp * noise.sigma_cdp;
        let vr = noise.sigma_cor * noise.sigma_cor;
        2.0 * noise.clip * noise.clip * (vc + vr) / (vc * (vc + n as f64 * vr))
    }

    #[test]
    fn complete_four_matches_hand_value() {
        let g = build_topology(Topology::Complete, 4).unwrap();
        let eps = step_epsilon_exact(&g, &unit_noise(), Adversary::Eavesdropper).unwrap();
        assert!((eps - 0.8).abs() < 1e-12, "eps = {eps}");
    }

    #[test]
    fn zero_correlated_noise_reduces_to_gaussian_mechanism() {
        for (kind, n) in [
            (Topology::Ring, 6),
            (Topology::Star, 5),
            (Topology::Complete, 4),
        ] {
            let g = build_topology(kind, n).unwrap();
            let noise = NoiseConfig::new(1.7, 0.0, 0.9);
            let eps = step_epsilon_exact(&g, &noise, Adversary::Eavesdropper).unwrap();
            let expected = 2.0 * 0.9 * 0.9 / (1.7 * 1.7);
            assert!((eps - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn ring_four_anchors() {
        let g = build_topology(Topology::Ring, 4).unwrap();
        let eaves = step_epsilon_exact(&g, &unit_noise(), Adversary::Eavesdropper).unwrap();
        assert!((eaves - 14.0 / 15.0).abs() < 1e-10, "eaves = {eaves}");
        let curious = step_epsilon_exact(&g, &unit_noise(), Adversary::CuriousUsers).unwrap();
        assert!((curious - 1.25).abs() < 1e-10, "curious = {curious}");
    }

    #[test]
    fn sigma_cdp_zero_is_singular() {
        let g = build_topology(Topology::Ring, 4).unwrap();
        let noise = NoiseConfig::new(0.0, 1.0, 1.0);
        assert_eq!(
            step_epsilon_exact(&g, &noise, Adversary::Eavesdropper)
                .unwrap_err()
                .code(),
            "singular-covariance"
        );
    }

    #[test]
    fn collusion_level_too_high() {
        let g = build_topology(Topology::Ring, 4).unwrap();
        assert_eq!(
            step_epsilon_exact(&g, &unit_noise(), Adversary::Colluding(3))
                .unwrap_err()
                .code(),
            "invalid-collusion-level"
        );
    }

    #[test]
    fn bound_hand_values() {
        let k4 = build_topology(Topology::Complete, 4).unwrap();
        let b = step_epsilon_bound(&k4, &unit_noise(), Adversary::Eavesdropper).unwrap();
        assert!((b - 0.8).abs() < 1e-12);

        let c4 = build_topology(Topology::Ring, 4).unwrap();
        let b = step_epsilon_bound(&c4, &unit_noise(), Adversary::Eavesdropper).unwrap();
        assert!((b - 1.0).abs() < 1e-12);
        let exact = step_epsilon_exact(&c4, &unit_noise(), Adversary::Eavesdropper).unwrap();
        assert!(b >= exact);
    }

    #[test]
    fn bound_limit_in_large_sigma_cor() {
        let g = build_topology(Topology::Ring, 8).unwrap();
        let noise = NoiseConfig::new(1.0, 1e6, 1.0);
        let b = step_epsilon_bound(&g, &noise, Adversary::Eavesdropper).unwrap();
        assert!((b - 2.0 / 8.0).abs() < 1e-6, "b = {b}");
    }

    #[test]
    fn bound_dominates_exact_on_random_configs() {
        let mut rng = crate::rng::KeyedRng::new(31);
        for kind in [
            Topology::Ring,
            Topology::Grid2dTorus,
            Topology::Complete,
            Topology::Star,
        ] {
            let g = build_topology(kind, 8).unwrap();
            for _ in 0..10 {
                let noise = NoiseConfig::new(
                    0.2 + 3.0 * rng.next_f64(),
                    3.0 * rng.next_f64(),
                    0.2 + 2.0 * rng.next_f64(),
                );
                for adv in [Adversary::Eavesdropper, Adversary::CuriousUsers] {
                    let exact = step_epsilon_exact(&g, &noise, adv).unwrap();
                    let bound = step_epsilon_bound(&g, &noise, adv).unwrap();
                    assert!(
                        bound >= exact - 1e-12,
                        "{} {:?}: bound {bound} < exact {exact}",
                        kind.name(),
                        adv
                    );
                }
            }
        }
    }

    #[test]
    fn exact_monotone_in_both_noise_levels() {
        let g = build_topology(Topology::Grid2dTorus, 9).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..8 {
            let s = 0.25 * 2f64.powi(k);
            let eps =
                step_epsilon_exact(&g, &NoiseConfig::new(1.0, s, 1.0), Adversary::Eavesdropper)
                    .unwrap();
            assert!(eps <= prev + 1e-12);
            prev = eps;
        }
        let mut prev = f64::INFINITY;
        for k in 0..8 {
            let s = 0.25 * 2f64.powi(k);
            let eps =
                step_epsilon_exact(&g, &NoiseConfig::new(s, 1.0, 1.0), Adversary::Eavesdropper)
                    .unwrap();
            assert!(eps <= prev + 1e-12);
            prev = eps;
        }
    }

    #[test]
    fn curious_dominates_eavesdropper_and_edges_help() {
        let mut rng = crate::rng::KeyedRng::new(57);
        for trial in 0..20 {
            let g = random_connected_graph(8, 0.3, trial);
            let noise = NoiseConfig::new(
                0.3 + rng.next_f64(),
                2.0 * rng.next_f64(),
                0.5 + rng.next_f64(),
            );
            let eaves = step_epsilon_exact(&g, &noise, Adversary::Eavesdropper).unwrap();
            let curious = step_epsilon_exact(&g, &noise, Adversary::CuriousUsers).unwrap();
            assert!(curious >= eaves - 1e-12);

            // adding any edge can only decrease the coefficient
            let mut extra = None;
            'outer: for i in 0..8 {
                for j in (i + 1)..8 {
                    if !g.has_edge(i, j) {
                        extra = Some((i, j));
                        break 'outer;
                    }
                }
            }
            if let Some(e) = extra {
                let mut edges = g.edges().to_vec();
                edges.push(e);
                let supergraph = Graph::from_edges(8, edges).unwrap();
                let denser =
                    step_epsilon_exact(&supergraph, &noise, Adversary::Eavesdropper).unwrap();
                assert!(denser <= eaves + 1e-12);
            }
        }
    }

    #[test]
    fn compose_hand_value() {
        let eps = compose_and_convert(0.001, 1000, 1e-5).unwrap();
        let expected = 1.0 + 2.0 * (1e5f64.ln()).sqrt();
        assert!((eps - expected).abs() < 1e-9, "eps = {eps}");
        assert_eq!(compose_and_convert(0.0, 1000, 1e-5).unwrap(), 0.0);
        assert_eq!(
            compose_and_convert(0.1, 10, 1.5).unwrap_err().code(),
            "invalid-delta"
        );
    }

    #[test]
    fn compose_matches_grid_minimization() {
        // 200 log-spaced alpha values in [1.01, 1024]
        let grid: Vec<f64> = (0..200)
            .map(|i| {
                let t = i as f64 / 199.0;
                1.01 * (1024.0f64 / 1.01).powf(t)
            })
            .collect();
        for &(e, t, d) in &[
            (0.001, 1000usize, 1e-5),
            (0.01, 500, 1e-6),
            (1e-5, 20_000, 1e-5),
            (0.3, 10, 1e-4),
        ] {
            let closed = compose_and_convert(e, t, d).unwrap();
            let log_inv_delta = (1.0 / d).ln();
            let grid_min = grid
                .iter()
                .map(|&a| t as f64 * a * e + log_inv_delta / (a - 1.0))
                .fold(f64::INFINITY, f64::min);
            assert!(closed <= grid_min + 1e-12);
            assert!(
                (grid_min - closed) / closed < 0.01,
                "grid {grid_min} vs closed {closed}"
            );
        }
    }

    #[test]
    fn per_step_budget_round_trips() {
        for &(eps, t, d) in &[(10.0, 2000usize, 1e-5), (3.0, 500, 1e-5), (0.5, 100, 1e-6)] {
            let step = per_step_rdp_budget(eps, t, d).unwrap();
            let back = compose_and_convert(step, t, d).unwrap();
            assert!((back - eps).abs() < 1e-9 * eps, "{back} vs {eps}");
        }
    }

    #[test]
    fn closed_form_calibration_examples() {
        let g = build_topology(Topology::Complete, 16).unwrap();
        let cal =
            calibrate_closed_form(&g, Adversary::Eavesdropper, 1.0, 1000, 10.0, 1e-5).unwrap();
        let expected_var = 32.0 * 1000.0 * 1e5f64.ln() / (16.0 * 100.0);
        assert!((cal.noise.sigma_cdp.powi(2) - expected_var).abs() < 1e-9 * expected_var);
        assert!((cal.noise.sigma_cor.powi(2) - expected_var).abs() < 1e-9 * expected_var);
        assert!(cal.epsilon_achieved <= cal.epsilon_target);

        // doubling C quadruples both variances
        let cal2 =
            calibrate_closed_form(&g, Adversary::Eavesdropper, 2.0, 1000, 10.0, 1e-5).unwrap();
        assert!((cal2.noise.sigma_cdp.powi(2) - 4.0 * expected_var).abs() < 1e-8 * expected_var);

        // disconnected graph
        let disconnected = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(
            calibrate_closed_form(&disconnected, Adversary::Eavesdropper, 1.0, 100, 1.0, 1e-5)
                .unwrap_err()
                .code(),
            "graph-not-sufficiently-connected"
        );

        // out of regime
        assert_eq!(
            calibrate_closed_form(&g, Adversary::Eavesdropper, 1.0, 100, 50.0, 1e-5)
                .unwrap_err()
                .code(),
            "out-of-regime"
        );
    }

    #[test]
    fn binary_search_round_trip() {
        let g = build_topology(Topology::Grid2dTorus, 16).unwrap();
        let planted = 7.3;
        let target = step_epsilon_exact(
            &g,
            &NoiseConfig::new(1.4, planted, 1.0),
            Adversary::Eavesdropper,
        )
        .unwrap();
        let found =
            calibrate_binary_search(&g, 1.4, 1.0, target, Adversary::Eavesdropper, None).unwrap();
        assert!((found - planted).abs() / planted < 1e-5, "found {found}");
    }

    #[test]
    fn binary_search_extremes() {
        let g = build_topology(Topology::Ring, 8).unwrap();
        // target already met without correlated noise
        let found =
            calibrate_binary_search(&g, 1.0, 1.0, 5.0, Adversary::Eavesdropper, None).unwrap();
        assert_eq!(found, 0.0);
        // target below the floor 2 C^2 / (n sigma_cdp^2)
        let err = calibrate_binary_search(&g, 1.0, 1.0, 2.0 / 9.0, Adversary::Eavesdropper, None)
            .unwrap_err();
        assert_eq!(err.code(), "unreachable-target");
    }

    #[test]
    fn baseline_sigmas() {
        assert!((ldp_sigma(1.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((cdp_sigma(16, 1.0, 2.0).unwrap() - 0.25).abs() < 1e-15);
        for &(c, e, n) in &[(0.7, 0.013, 5usize), (2.0, 3.0, 16), (1.0, 1e-4, 32)] {
            let ratio = ldp_sigma(c, e).unwrap() / cdp_sigma(n, c, e).unwrap();
            assert!((ratio - (n as f64).sqrt()).abs() < 1e-12);
        }
        assert_eq!(ldp_sigma(1.0, 0.0).unwrap_err().code(), "invalid-target");
        assert_eq!(
            cdp_sigma(4, 1.0, -1.0).unwrap_err().code(),
            "invalid-target"
        );
    }

    #[test]
    fn report_invariant() {
        let g = build_topology(Topology::Ring, 16).unwrap();
        let report = privacy_report(
            &g,
            &NoiseConfig::new(2.0, 10.0, 1.0),
            Adversary::Eavesdropper,
            500,
            1e-5,
        )
        .unwrap();
        assert!(report.step_rdp >= 0.0);
        assert!(report.epsilon_dp >= 500.0 * report.step_rdp);
        assert!(report.bound_rdp >= report.step_rdp);
    }

    #[test]
    fn exact_equals_sherman_morrison_on_complete() {
        let mut rng = crate::rng::KeyedRng::new(8);
        for n in [2usize, 4, 8, 16, 32] {
            let g = build_topology(Topology::Complete, n).unwrap();
            for _ in 0..5 {
                let noise = NoiseConfig::new(
                    0.2 + 2.0 * rng.next_f64(),
                    3.0 * rng.next_f64(),
                    0.2 + 2.0 * rng.next_f64(),
                );
                let eps = step_epsilon_exact(&g, &noise, Adversary::Eavesdropper).unwrap();
                let closed = complete_graph_exact(n, &noise);
                assert!((eps - closed).abs() <= 1e-10 * closed.max(1.0), "n = {n}");
            }
        }
    }

    #[test]
    fn adversary_parsing() {
        assert_eq!(
            "eaves".parse::<Adversary>().unwrap(),
            Adversary::Eavesdropper
        );
        assert_eq!(
            "curious".parse::<Adversary>().unwrap(),
            Adversary::CuriousUsers
        );
        assert_eq!(
            "collude:3".parse::<Adversary>().unwrap(),
            Adversary::Colluding(3)
        );
        assert!("owl".parse::<Adversary>().is_err());
    }
}
