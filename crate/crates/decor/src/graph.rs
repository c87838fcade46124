//! Communication topologies and their spectral quantities.
//!
//! The privacy accountant and the convergence machinery both consume spectra
//! of the graph Laplacian `L = D - A` and of the gossip matrix `W`:
//!
//! * algebraic connectivity `a(G)` — second-smallest eigenvalue of `L`,
//! * `a_q(G)` — minimum of `a` over all induced subgraphs obtained by
//!   deleting `q` vertices (the collusion-resistant connectivity),
//! * spectral gap `p = 1 - lambda_2(W W^T)` — gossip contraction rate,
//! * weight heterogeneity `h_G(W)` — edge-averaged squared column
//!   difference of `W`; the fraction of correlated-noise energy that
//!   survives one gossip step.
//!
//! Eigenvalues are computed by dense symmetric eigendecomposition; graphs
//! here are desk-scale (n up to a few hundred), so exactness wins over
//! scalability.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Default cap on the number of vertex subsets enumerated by
/// [`min_connectivity_after_deletion`].
pub const DEFAULT_SUBSET_CAP: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least {min} vertices, got {got}")]
    InvalidSize { min: usize, got: usize },

    #[error("{n} vertices cannot form an r x c torus with r, c >= 2")]
    InvalidGrid { n: usize },

    #[error("collusion level {q} must be at most n - 2 = {max} for n = {n}")]
    InvalidCollusionLevel { q: usize, n: usize, max: usize },

    #[error("deleting {q} of {n} vertices enumerates {subsets} subsets, above the cap {cap}")]
    TooManySubsets {
        q: usize,
        n: usize,
        subsets: u128,
        cap: u64,
    },

    #[error("weight heterogeneity is undefined on a graph with no edges")]
    UndefinedHeterogeneity,

    #[error("edge {{{i}, {j}}} is invalid on {n} vertices")]
    InvalidEdge { i: usize, j: usize, n: usize },

    #[error("edge list line {line}: {msg}")]
    EdgeListParse { line: usize, msg: String },
}

impl GraphError {
    /// Stable machine-readable code for CLI error reporting.
    pub fn code(&self) -> &'static str {
        match self {
            GraphError::InvalidSize { .. } => "invalid-size",
            GraphError::InvalidGrid { .. } => "invalid-grid",
            GraphError::InvalidCollusionLevel { .. } => "invalid-collusion-level",
            GraphError::TooManySubsets { .. } => "too-many-subsets",
            GraphError::UndefinedHeterogeneity => "undefined-heterogeneity",
            GraphError::InvalidEdge { .. } => "invalid-edge",
            GraphError::EdgeListParse { .. } => "parse-error",
        }
    }
}

/// Undirected simple graph on vertices `0..n`.
///
/// Edges are stored canonically as `(i, j)` with `i < j`, deduplicated and
/// sorted; adjacency lists are kept sorted so every traversal order is
/// deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

/// Named topology families used by the CLI and the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Ring,
    Grid2dTorus,
    Complete,
    Star,
}

impl Topology {
    pub fn name(&self) -> &'static str {
        match self {
            Topology::Ring => "ring",
            Topology::Grid2dTorus => "grid",
            Topology::Complete => "complete",
            Topology::Star => "star",
        }
    }
}

impl std::str::FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ring" => Ok(Topology::Ring),
            "grid" | "grid2d_torus" => Ok(Topology::Grid2dTorus),
            "complete" => Ok(Topology::Complete),
            "star" => Ok(Topology::Star),
            other => Err(format!("unknown topology kind '{other}'")),
        }
    }
}

impl Graph {
    /// Build a graph from an edge iterator, validating and canonicalizing.
    ///
    /// Self-loops and out-of-range endpoints are rejected; duplicates are
    /// collapsed.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(GraphError::InvalidSize { min: 1, got: 0 });
        }
        let mut canonical: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a == b || a >= n || b >= n {
                return Err(GraphError::InvalidEdge { i: a, j: b, n });
            }
            canonical.push((a.min(b), a.max(b)));
        }
        canonical.sort_unstable();
        canonical.dedup();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &canonical {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for adj in &mut neighbors {
            adj.sort_unstable();
        }
        Ok(Self {
            n,
            edges: canonical,
            neighbors,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn min_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).min().unwrap_or(0)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn is_regular(&self) -> bool {
        self.n == 0 || (0..self.n).all(|i| self.degree(i) == self.degree(0))
    }

    /// Induced subgraph after deleting `remove` (remaining vertices are
    /// re-indexed in increasing order of their original label).
    pub fn delete_vertices(&self, remove: &[usize]) -> Graph {
        let mut keep = vec![true; self.n];
        for &v in remove {
            keep[v] = false;
        }
        let mut relabel = vec![usize::MAX; self.n];
        let mut next = 0usize;
        for v in 0..self.n {
            if keep[v] {
                relabel[v] = next;
                next += 1;
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(i, j)| keep[i] && keep[j])
            .map(|&(i, j)| (relabel[i], relabel[j]));
        Graph::from_edges(next.max(1), edges).expect("relabeled edges are valid")
    }

    /// True when every vertex is reachable from vertex 0 (and n >= 1).
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1usize;
        while let Some(v) = stack.pop() {
            for &w in self.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.n
    }
}

/// Build one of the named topologies on `n` vertices.
///
/// The 2d torus uses the most-square factorization `n = r * c` with
/// `r, c >= 2` (r is the largest divisor of n not exceeding sqrt(n));
/// values of `n` admitting no such factorization are rejected. A ring on
/// two vertices degenerates to a single edge, and duplicate wrap-around
/// edges on side-2 tori collapse.
pub fn build_topology(kind: Topology, n: usize) -> Result<Graph, GraphError> {
    if n == 0 {
        return Err(GraphError::InvalidSize { min: 1, got: 0 });
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    match kind {
        Topology::Ring => {
            if n >= 2 {
                for i in 0..n {
                    edges.push((i, (i + 1) % n));
                }
            }
        }
        Topology::Complete => {
            for i in 0..n {
                for j in (i + 1)..n {
                    edges.push((i, j));
                }
            }
        }
        Topology::Star => {
            for i in 1..n {
                edges.push((0, i));
            }
        }
        Topology::Grid2dTorus => {
            let (r, c) = most_square_factorization(n).ok_or(GraphError::InvalidGrid { n })?;
            for row in 0..r {
                for col in 0..c {
                    let idx = row * c + col;
                    let right = row * c + (col + 1) % c;
                    let down = ((row + 1) % r) * c + col;
                    edges.push((idx, right));
                    edges.push((idx, down));
                }
            }
        }
    }
    Graph::from_edges(n, edges)
}

fn most_square_factorization(n: usize) -> Option<(usize, usize)> {
    if n < 4 {
        return None;
    }
    let mut best = None;
    let mut r = 2usize;
    while r * r <= n {
        if n.is_multiple_of(r) {
            best = Some((r, n / r));
        }
        r += 1;
    }
    best
}

/// Load a graph from an edge-list text: one `i j` pair per line, 0-indexed.
///
/// Blank lines and `#` comments are skipped; the vertex count is the largest
/// endpoint plus one.
pub fn load_edge_list(text: &str) -> Result<Graph, GraphError> {
    let mut edges = Vec::new();
    let mut max_vertex = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize, GraphError> {
            tok.ok_or_else(|| GraphError::EdgeListParse {
                line: lineno + 1,
                msg: "expected two vertex indices".into(),
            })?
            .parse::<usize>()
            .map_err(|e| GraphError::EdgeListParse {
                line: lineno + 1,
                msg: e.to_string(),
            })
        };
        let i = parse(it.next())?;
        let j = parse(it.next())?;
        if it.next().is_some() {
            return Err(GraphError::EdgeListParse {
                line: lineno + 1,
                msg: "trailing tokens after edge".into(),
            });
        }
        if i == j {
            return Err(GraphError::EdgeListParse {
                line: lineno + 1,
                msg: format!("self-loop {i} {j}"),
            });
        }
        max_vertex = max_vertex.max(i).max(j);
        edges.push((i, j));
    }
    Graph::from_edges(max_vertex + 1, edges)
}

/// Laplacian `L = D - A`: symmetric positive semidefinite with zero row sums.
pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    let mut l = DMatrix::zeros(n, n);
    for &(i, j) in g.edges() {
        l[(i, i)] += 1.0;
        l[(j, j)] += 1.0;
        l[(i, j)] = -1.0;
        l[(j, i)] = -1.0;
    }
    l
}

/// Ascending eigenvalues of a symmetric matrix (dense eigensolve).
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    vals
}

/// Algebraic connectivity `a(G)`: second-smallest Laplacian eigenvalue,
/// clamped at zero. Zero exactly when the graph is disconnected.
pub fn algebraic_connectivity(g: &Graph) -> Result<f64, GraphError> {
    if g.n() < 2 {
        return Err(GraphError::InvalidSize { min: 2, got: g.n() });
    }
    let vals = symmetric_eigenvalues(&laplacian(g));
    Ok(vals[1].max(0.0))
}

/// Binomial coefficient, saturating far above any plausible subset cap.
fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut out: u128 = 1;
    for i in 0..k {
        out = out * (n - i) as u128 / (i + 1) as u128;
        if out > 1 << 100 {
            return out;
        }
    }
    out
}

/// `a_q(G)`: minimum algebraic connectivity over all induced subgraphs
/// obtained by deleting `q` vertices. Zero if some deletion disconnects the
/// remainder. `q = 0` is plain algebraic connectivity.
///
/// The enumeration is combinatorial by construction; `cap` (default
/// [`DEFAULT_SUBSET_CAP`]) bounds the number of subsets visited.
pub fn min_connectivity_after_deletion(
    g: &Graph,
    q: usize,
    cap: Option<u64>,
) -> Result<f64, GraphError> {
    let n = g.n();
    if n < 2 || q + 2 > n {
        return Err(GraphError::InvalidCollusionLevel {
            q,
            n,
            max: n.saturating_sub(2),
        });
    }
    if q == 0 {
        return algebraic_connectivity(g);
    }
    let cap = cap.unwrap_or(DEFAULT_SUBSET_CAP);
    let subsets = binomial(n, q);
    if subsets > cap as u128 {
        return Err(GraphError::TooManySubsets { q, n, subsets, cap });
    }
    let mut min_a = f64::INFINITY;
    for subset in itertools::Itertools::combinations(0..n, q) {
        let sub = g.delete_vertices(&subset);
        let a = algebraic_connectivity(&sub)?;
        if a < min_a {
            min_a = a;
        }
        if min_a == 0.0 {
            break;
        }
    }
    Ok(min_a)
}

/// Symmetric doubly stochastic gossip weights supported on a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
}

impl MixingMatrix {
    /// Wrap a weight matrix, enforcing the type invariants against `g`:
    /// exact symmetry, entries in `[0, 1]`, rows summing to 1 within 1e-12,
    /// and zero weight on non-edges.
    pub fn new(w: DMatrix<f64>, g: &Graph) -> Result<Self, String> {
        let n = g.n();
        if w.nrows() != n || w.ncols() != n {
            return Err(format!(
                "weight matrix is {}x{}, graph has {} vertices",
                w.nrows(),
                w.ncols(),
                n
            ));
        }
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                let wij = w[(i, j)];
                if wij != w[(j, i)] {
                    return Err(format!("asymmetric at ({i}, {j})"));
                }
                if !(0.0..=1.0).contains(&wij) {
                    return Err(format!("entry ({i}, {j}) = {wij} outside [0, 1]"));
                }
                if i != j && wij != 0.0 && !g.has_edge(i, j) {
                    return Err(format!("nonzero weight on non-edge ({i}, {j})"));
                }
                row_sum += wij;
            }
            if (row_sum - 1.0).abs() > 1e-12 {
                return Err(format!("row {i} sums to {row_sum}"));
            }
        }
        Ok(Self { w })
    }

    /// Uniform averaging `W = (1/n) * ones`; valid on the complete graph.
    pub fn uniform(n: usize) -> Self {
        Self {
            w: DMatrix::from_element(n, n, 1.0 / n as f64),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }
}

/// Metropolis-Hastings gossip weights.
///
/// On regular graphs this is the uniform rule `w_ij = 1 / (deg + 1)` for
/// `j` in `N_i` together with the matching self-weight. On irregular graphs
/// that rule is not doubly stochastic, so the max-degree rule applies:
/// `w_ij = 1 / (1 + max(deg_i, deg_j))` off-diagonal with the residual mass
/// on the diagonal.
pub fn metropolis_weights(g: &Graph) -> MixingMatrix {
    let n = g.n();
    let mut w = DMatrix::zeros(n, n);
    if g.is_regular() {
        let share = 1.0 / (g.degree(0) as f64 + 1.0);
        for i in 0..n {
            w[(i, i)] = share;
            for &j in g.neighbors(i) {
                w[(i, j)] = share;
            }
        }
    } else {
        for &(i, j) in g.edges() {
            let wij = 1.0 / (1.0 + g.degree(i).max(g.degree(j)) as f64);
            w[(i, j)] = wij;
            w[(j, i)] = wij;
        }
        for i in 0..n {
            let off: f64 = g.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
            w[(i, i)] = 1.0 - off;
        }
    }
    MixingMatrix { w }
}

/// Spectral gap `p = 1 - lambda_2(W W^T)`, with `lambda_2` the second-largest
/// eigenvalue; the single-step gossip contraction factor is `1 - p`.
pub fn spectral_gap(w: &MixingMatrix) -> f64 {
    let n = w.n();
    if n < 2 {
        return 1.0;
    }
    let m = w.matrix() * w.matrix().transpose();
    let vals = symmetric_eigenvalues(&m);
    (1.0 - vals[n - 2]).clamp(0.0, 1.0)
}

/// Weight heterogeneity
/// `h_G(W) = sum_{i,k adjacent} ||W_i - W_k||^2 / (2 * sum_{i,k adjacent} 1)`
/// over columns `W_i`; zero when all adjacent columns coincide.
pub fn weight_heterogeneity(g: &Graph, w: &MixingMatrix) -> Result<f64, GraphError> {
    if g.edge_count() == 0 {
        return Err(GraphError::UndefinedHeterogeneity);
    }
    let n = g.n();
    let mut num = 0.0;
    for &(i, k) in g.edges() {
        let mut diff = 0.0;
        for r in 0..n {
            let d = w.entry(r, i) - w.entry(r, k);
            diff += d * d;
        }
        num += 2.0 * diff; // both (i,k) and (k,i) orderings
    }
    let denom = 2.0 * (2 * g.edge_count()) as f64;
    Ok(num / denom)
}

/// Bundle of the spectral quantities for a (graph, weights) pair.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SpectralSummary {
    pub algebraic_connectivity: f64,
    pub spectral_gap_p: f64,
    pub heterogeneity_hg: f64,
    pub laplacian_eigenvalues: Vec<f64>,
}

pub fn spectral_summary(g: &Graph, w: &MixingMatrix) -> Result<SpectralSummary, GraphError> {
    let eigenvalues = symmetric_eigenvalues(&laplacian(g));
    Ok(SpectralSummary {
        algebraic_connectivity: algebraic_connectivity(g)?,
        spectral_gap_p: spectral_gap(w),
        heterogeneity_hg: weight_heterogeneity(g, w)?,
        laplacian_eigenvalues: eigenvalues,
    })
}

/// Random connected graph: a random spanning tree plus independent extra
/// edges with probability `extra_edge_prob`. Deterministic in `seed`.
/// Used by property tests and calibration round-trips.
pub fn random_connected_graph(n: usize, extra_edge_prob: f64, seed: u64) -> Graph {
    assert!(n >= 2, "need at least two vertices");
    let mut rng = crate::rng::KeyedRng::new(crate::rng::derive_key(seed, &[0x67_7261_7068]));
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut edges = Vec::new();
    for idx in 1..n {
        let parent = order[rng.next_index(idx)];
        edges.push((order[idx], parent));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.next_f64() < extra_edge_prob {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges).expect("generated edges are valid")
}
