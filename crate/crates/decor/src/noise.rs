//! Privacy noise generation: clipping, per-edge antisymmetric correlated
//! Gaussians from shared seeds, and per-user uncorrelated Gaussians.
//!
//! Each edge `{i, j}` of the communication graph carries one 64-bit seed
//! shared by both endpoints. At round `t` the edge yields a base Gaussian
//! vector; the endpoint with the smaller index adds `+v`, the larger adds
//! `-v`, so the two draws are exact bitwise negations and cancel with zero
//! floating-point error when summed as signed pairs.
//!
//! Seeds are plain configuration inputs. A whole schedule can be derived
//! from a single master seed as `seed({i, j}) = H(master, TAG_EDGE, min, max)`
//! with `H` the chained splitmix64 mixer from [`crate::rng`]; per-user seeds
//! are `H(master, TAG_USER, i)`. All draws are pure functions of
//! (seed, round, coordinate), independent of evaluation order.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::graph::Graph;
use crate::rng;

/// Domain tags keeping the derived streams disjoint.
const TAG_EDGE: u64 = 0x6564_6765; // "edge"
const TAG_USER: u64 = 0x7573_6572; // "user"
const TAG_COR: u64 = 0x63_6f72; // "cor"
const TAG_CDP: u64 = 0x63_6470; // "cdp"

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NoiseError {
    #[error("direction ({from}, {to}) does not lie on the seeded edge {{{ei}, {ej}}}")]
    EdgeMismatch {
        from: usize,
        to: usize,
        ei: usize,
        ej: usize,
    },

    #[error("no seed for edge {{{i}, {j}}}")]
    MissingSeed { i: usize, j: usize },
}

impl NoiseError {
    pub fn code(&self) -> &'static str {
        match self {
            NoiseError::EdgeMismatch { .. } => "edge-mismatch",
            NoiseError::MissingSeed { .. } => "missing-seed",
        }
    }
}

/// A shared 64-bit seed attached to one undirected edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeSeed {
    /// Canonical endpoints, `edge.0 < edge.1`.
    pub edge: (usize, usize),
    pub seed: u64,
}

impl EdgeSeed {
    pub fn new(i: usize, j: usize, seed: u64) -> Self {
        assert!(i != j, "edge endpoints must differ");
        Self {
            edge: (i.min(j), i.max(j)),
            seed,
        }
    }

    /// Derive the edge seed from a master seed: `H(master, TAG_EDGE, min, max)`.
    pub fn derive(master: u64, i: usize, j: usize) -> Self {
        let (lo, hi) = (i.min(j), i.max(j));
        let seed = rng::derive_key(master, &[TAG_EDGE, lo as u64, hi as u64]);
        Self {
            edge: (lo, hi),
            seed,
        }
    }
}

/// All seeds for one run: the master seed plus one seed per graph edge.
#[derive(Debug, Clone)]
pub struct SeedSet {
    master: u64,
    edges: BTreeMap<(usize, usize), EdgeSeed>,
}

impl SeedSet {
    pub fn from_master(master: u64, g: &Graph) -> Self {
        let edges = g
            .edges()
            .iter()
            .map(|&(i, j)| ((i, j), EdgeSeed::derive(master, i, j)))
            .collect();
        Self { master, edges }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn edge_seed(&self, i: usize, j: usize) -> Result<EdgeSeed, NoiseError> {
        let key = (i.min(j), i.max(j));
        self.edges
            .get(&key)
            .copied()
            .ok_or(NoiseError::MissingSeed { i: key.0, j: key.1 })
    }

    /// Per-user seed for the uncorrelated stream: `H(master, TAG_USER, i)`.
    pub fn user_seed(&self, i: usize) -> u64 {
        rng::derive_key(self.master, &[TAG_USER, i as u64])
    }
}

/// Norm clipping: `min(1, c / ||g||) * g`. Identity when `||g|| <= c`; the
/// zero vector maps to itself.
pub fn clip(g: &[f64], c: f64) -> Vec<f64> {
    debug_assert!(c >= 0.0, "clipping threshold must be nonnegative");
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= c {
        g.to_vec()
    } else {
        let scale = c / norm;
        g.iter().map(|x| x * scale).collect()
    }
}

/// Base draw shared by both endpoints of an edge at one round.
fn edge_base_draw(seed: &EdgeSeed, round: u64, d: usize, sigma_cor: f64) -> Vec<f64> {
    let key = rng::derive_key(seed.seed, &[TAG_COR, round]);
    rng::gaussian_vector(key, d, sigma_cor)
}

/// Correlated draw `v_{from,to}` at `round`: the endpoint with the smaller
/// index receives `+v`, the larger receives the exact coordinatewise
/// negation, so `v_ij = -v_ji` bitwise.
pub fn correlated_noise(
    seed: &EdgeSeed,
    round: u64,
    from: usize,
    to: usize,
    d: usize,
    sigma_cor: f64,
) -> Result<Vec<f64>, NoiseError> {
    let (lo, hi) = (from.min(to), from.max(to));
    if (lo, hi) != seed.edge || from == to {
        return Err(NoiseError::EdgeMismatch {
            from,
            to,
            ei: seed.edge.0,
            ej: seed.edge.1,
        });
    }
    let mut v = edge_base_draw(seed, round, d, sigma_cor);
    if from > to {
        for x in &mut v {
            *x = -*x;
        }
    }
    Ok(v)
}

/// Uncorrelated per-user draw, deterministic in `(user_seed, round)`.
pub fn uncorrelated_noise(user_seed: u64, round: u64, d: usize, sigma_cdp: f64) -> Vec<f64> {
    let key = rng::derive_key(user_seed, &[TAG_CDP, round]);
    rng::gaussian_vector(key, d, sigma_cdp)
}

/// Sum of a user's signed correlated draws over its incident edges.
pub fn correlated_noise_sum(
    seeds: &SeedSet,
    user: usize,
    neighbors: &[usize],
    round: u64,
    d: usize,
    sigma_cor: f64,
) -> Result<Vec<f64>, NoiseError> {
    let mut total = vec![0.0; d];
    for &j in neighbors {
        let seed = seeds.edge_seed(user, j)?;
        let v = correlated_noise(&seed, round, user, j, d, sigma_cor)?;
        for (t, x) in total.iter_mut().zip(&v) {
            *t += x;
        }
    }
    Ok(total)
}

/// Everything user `i` injects at one round:
/// `sum_{j in N_i} v_ij + vbar_i`.
pub fn total_injected_noise(
    seeds: &SeedSet,
    user: usize,
    neighbors: &[usize],
    round: u64,
    d: usize,
    sigma_cor: f64,
    sigma_cdp: f64,
) -> Result<Vec<f64>, NoiseError> {
    let mut total = correlated_noise_sum(seeds, user, neighbors, round, d, sigma_cor)?;
    let bar = uncorrelated_noise(seeds.user_seed(user), round, d, sigma_cdp);
    for (t, x) in total.iter_mut().zip(&bar) {
        *t += x;
    }
    Ok(total)
}

/// The d x n matrix of per-user correlated sums for one round, accumulated
/// edge by edge (one base draw per edge, added to the lower column and
/// subtracted from the higher). Column `i` equals [`correlated_noise_sum`]
/// for user `i` up to floating-point summation order.
pub fn correlated_noise_matrix(
    seeds: &SeedSet,
    g: &Graph,
    round: u64,
    d: usize,
    sigma_cor: f64,
) -> Result<DMatrix<f64>, NoiseError> {
    let mut mat = DMatrix::zeros(d, g.n());
    if sigma_cor == 0.0 {
        return Ok(mat);
    }
    for &(i, j) in g.edges() {
        let seed = seeds.edge_seed(i, j)?;
        let v = edge_base_draw(&seed, round, d, sigma_cor);
        for (r, x) in v.iter().enumerate() {
            mat[(r, i)] += x;
            mat[(r, j)] -= x;
        }
    }
    Ok(mat)
}
