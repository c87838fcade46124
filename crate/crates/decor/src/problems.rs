//! Benchmark objectives: synthetic distributed least-squares and
//! L2-regularized logistic regression over LibSVM-format data.
//!
//! A [`Problem`] exposes per-user loss/gradient oracles plus whatever
//! analytic structure is available (smoothness and PL constants, the
//! minimizer for quadratics). Oracles are pure and thread-safe; datasets are
//! immutable after load.

use thiserror::Error;

use crate::rng::{derive_key, gaussian_vector, KeyedRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("regularizer {lambda} must be nonnegative")]
    InvalidRegularizer { lambda: f64 },

    #[error("{rows} rows cannot be split across {users} users")]
    TooFewRows { rows: usize, users: usize },

    #[error("declared dimension {given} is below the largest feature index {required}")]
    DimensionTooSmall { given: usize, required: usize },
}

impl ProblemError {
    pub fn code(&self) -> &'static str {
        match self {
            ProblemError::Parse { .. } => "parse-error",
            ProblemError::InvalidRegularizer { .. } => "invalid-regularizer",
            ProblemError::TooFewRows { .. } => "too-few-rows",
            ProblemError::DimensionTooSmall { .. } => "invalid-dimension",
        }
    }
}

/// Analytic constants consumed by the theoretical stepsize schedules:
/// smoothness L, PL constant mu, gradient-diversity (zeta*^2, P) and
/// stochastic-noise (sigma*^2, M) envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    pub smoothness: f64,
    pub pl_constant: f64,
    pub zeta_star_sq: f64,
    pub grad_diversity_p: f64,
    pub sigma_star_sq: f64,
    pub noise_growth_m: f64,
}

pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;
    fn num_users(&self) -> usize;
    /// Number of local samples held by `user`.
    fn sample_count(&self, user: usize) -> usize;

    fn sample_loss(&self, user: usize, sample: usize, x: &[f64]) -> f64;
    fn sample_gradient(&self, user: usize, sample: usize, x: &[f64]) -> Vec<f64>;

    /// Local empirical loss `F_i` (average over the user's samples).
    fn local_loss(&self, user: usize, x: &[f64]) -> f64 {
        let m = self.sample_count(user);
        (0..m).map(|s| self.sample_loss(user, s, x)).sum::<f64>() / m as f64
    }

    fn local_gradient(&self, user: usize, x: &[f64]) -> Vec<f64> {
        let m = self.sample_count(user);
        let mut g = vec![0.0; self.dim()];
        for s in 0..m {
            for (gi, v) in g.iter_mut().zip(self.sample_gradient(user, s, x)) {
                *gi += v;
            }
        }
        for gi in &mut g {
            *gi /= m as f64;
        }
        g
    }

    /// Global objective `F = (1/n) sum_i F_i`.
    fn global_loss(&self, x: &[f64]) -> f64 {
        let n = self.num_users();
        (0..n).map(|i| self.local_loss(i, x)).sum::<f64>() / n as f64
    }

    fn global_gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.num_users();
        let mut g = vec![0.0; self.dim()];
        for i in 0..n {
            for (gi, v) in g.iter_mut().zip(self.local_gradient(i, x)) {
                *gi += v;
            }
        }
        for gi in &mut g {
            *gi /= n as f64;
        }
        g
    }

    fn constants(&self) -> Option<ProblemConstants> {
        None
    }

    fn optimal_value(&self) -> Option<f64> {
        None
    }

    fn minimizer(&self) -> Option<Vec<f64>> {
        None
    }

    /// Classification accuracy over all local datasets, when meaningful.
    fn accuracy(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

// ---------------------------------------------------------------------------
// Synthetic least squares
// ---------------------------------------------------------------------------

/// Distributed quadratic `F_i(x) = 0.5 ||a_i x - b_i||^2` with scalar design
/// `a_i = i / sqrt(n)` (users indexed 1..n) and targets
/// `b_i ~ N(0, (1/i^2) I_d)`.
///
/// The heterogeneity grows with the user index, the global Hessian is the
/// exact scalar `(sum_i i^2) / n^2 * I`, and the minimizer is available in
/// closed form, which makes every analytic constant checkable.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    n: usize,
    d: usize,
    /// `a_i = (i + 1) / sqrt(n)` for 0-based user `i`.
    coeffs: Vec<f64>,
    targets: Vec<Vec<f64>>,
    x_star: Vec<f64>,
    f_star: f64,
    constants: ProblemConstants,
}

pub fn synthetic_least_squares(n: usize, d: usize, seed: u64) -> LeastSquares {
    assert!(n >= 1 && d >= 1);
    let sqrt_n = (n as f64).sqrt();
    let coeffs: Vec<f64> = (1..=n).map(|i| i as f64 / sqrt_n).collect();
    let targets: Vec<Vec<f64>> = (1..=n)
        .map(|i| {
            let key = derive_key(seed, &[TAG_LS_TARGETS, i as u64]);
            gaussian_vector(key, d, 1.0 / i as f64)
        })
        .collect();

    // x* = (sum a_i^2)^{-1} sum a_i b_i
    let sum_sq: f64 = coeffs.iter().map(|a| a * a).sum();
    let mut x_star = vec![0.0; d];
    for (a, b) in coeffs.iter().zip(&targets) {
        for (xs, bv) in x_star.iter_mut().zip(b) {
            *xs += a * bv;
        }
    }
    for xs in &mut x_star {
        *xs /= sum_sq;
    }

    let mu = sum_sq / n as f64; // global Hessian = mu * I
    let smoothness = coeffs.iter().map(|a| a * a).fold(0.0, f64::max);

    let mut problem = LeastSquares {
        n,
        d,
        coeffs,
        targets,
        x_star: x_star.clone(),
        f_star: 0.0,
        constants: ProblemConstants {
            smoothness,
            pl_constant: mu,
            zeta_star_sq: 0.0,
            grad_diversity_p: 0.0,
            sigma_star_sq: 0.0,
            noise_growth_m: 0.0,
        },
    };
    problem.f_star = problem.global_loss(&x_star);

    // Gradient-diversity envelope: with g_i(x) = a_i^2 (x - x*) + g_i(x*),
    // (1/n) sum ||g_i(x)||^2 <= 2 (sum a_i^4 / n) ||x - x*||^2 + 2 zeta*^2
    // and ||x - x*|| = ||grad F(x)|| / mu, so P = 2 (sum a_i^4 / n) / mu^2.
    let zeta_sq_at_opt = (0..n)
        .map(|i| {
            let g = problem.local_gradient(i, &x_star);
            g.iter().map(|v| v * v).sum::<f64>()
        })
        .sum::<f64>()
        / n as f64;
    let fourth: f64 = problem.coeffs.iter().map(|a| a.powi(4)).sum::<f64>() / n as f64;
    problem.constants.zeta_star_sq = 2.0 * zeta_sq_at_opt;
    problem.constants.grad_diversity_p = 2.0 * fourth / (mu * mu);
    problem
}

impl Problem for LeastSquares {
    fn dim(&self) -> usize {
        self.d
    }

    fn num_users(&self) -> usize {
        self.n
    }

    fn sample_count(&self, _user: usize) -> usize {
        1
    }

    fn sample_loss(&self, user: usize, _sample: usize, x: &[f64]) -> f64 {
        let a = self.coeffs[user];
        0.5 * x
            .iter()
            .zip(&self.targets[user])
            .map(|(xv, bv)| {
                let r = a * xv - bv;
                r * r
            })
            .sum::<f64>()
    }

    fn sample_gradient(&self, user: usize, _sample: usize, x: &[f64]) -> Vec<f64> {
        let a = self.coeffs[user];
        x.iter()
            .zip(&self.targets[user])
            .map(|(xv, bv)| a * (a * xv - bv))
            .collect()
    }

    fn constants(&self) -> Option<ProblemConstants> {
        Some(self.constants)
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(self.f_star)
    }

    fn minimizer(&self) -> Option<Vec<f64>> {
        Some(self.x_star.clone())
    }
}

const TAG_LS_TARGETS: u64 = 0x6c73_7174; // "lsqt"
const TAG_PARTITION: u64 = 0x7368_7566; // "shuf"

// ---------------------------------------------------------------------------
// LibSVM data and logistic regression
// ---------------------------------------------------------------------------

/// One sparse sample: 0-based feature indices (strictly increasing) and a
/// label in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
    pub label: f64,
}

impl SparseRow {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| v * x[i as usize])
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<SparseRow>,
    pub dim: usize,
}

/// Parse LibSVM text: `label idx:val idx:val ...` per line, 1-based strictly
/// increasing indices. Labels in {0, 1} are mapped to {-1, +1} (0 becomes
/// -1); blank lines are skipped. The dimension is the largest index seen
/// unless `dim_override` raises it.
pub fn parse_libsvm(text: &str, dim_override: Option<usize>) -> Result<Dataset, ProblemError> {
    let mut rows = Vec::new();
    let mut max_index = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok.parse().map_err(|_| ProblemError::Parse {
            line: lineno + 1,
            msg: format!("bad label '{label_tok}'"),
        })?;
        let label = if label > 0.0 { 1.0 } else { -1.0 };

        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut prev_index = 0usize; // indices are 1-based, so 0 = none yet
        for tok in tokens {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| ProblemError::Parse {
                line: lineno + 1,
                msg: format!("expected idx:val, got '{tok}'"),
            })?;
            let idx: usize = idx_s.parse().map_err(|_| ProblemError::Parse {
                line: lineno + 1,
                msg: format!("bad feature index '{idx_s}'"),
            })?;
            let val: f64 = val_s.parse().map_err(|_| ProblemError::Parse {
                line: lineno + 1,
                msg: format!("bad feature value '{val_s}'"),
            })?;
            if idx == 0 || idx <= prev_index {
                return Err(ProblemError::Parse {
                    line: lineno + 1,
                    msg: format!("indices must be 1-based and strictly increasing, got {idx}"),
                });
            }
            prev_index = idx;
            indices.push((idx - 1) as u32);
            values.push(val);
        }
        max_index = max_index.max(prev_index);
        rows.push(SparseRow {
            indices,
            values,
            label,
        });
    }
    let dim = match dim_override {
        Some(d) if d < max_index => {
            return Err(ProblemError::DimensionTooSmall {
                given: d,
                required: max_index,
            })
        }
        Some(d) => d,
        None => max_index,
    };
    Ok(Dataset { rows, dim })
}

/// Inverse of [`parse_libsvm`] (1-based indices, shortest-round-trip floats).
pub fn to_libsvm(data: &Dataset) -> String {
    let mut out = String::new();
    for row in &data.rows {
        out.push_str(if row.label > 0.0 { "+1" } else { "-1" });
        for (&i, &v) in row.indices.iter().zip(&row.values) {
            out.push_str(&format!(" {}:{}", i + 1, v));
        }
        out.push('\n');
    }
    out
}

/// Deterministic equal-share split: shuffle row order by `seed`, cut into
/// `n` contiguous shards of `floor(m / n)` rows, drop the remainder.
pub fn partition(data: &Dataset, n: usize, seed: u64) -> Result<Vec<Vec<SparseRow>>, ProblemError> {
    let m = data.rows.len();
    if m < n || n == 0 {
        return Err(ProblemError::TooFewRows { rows: m, users: n });
    }
    let mut order: Vec<usize> = (0..m).collect();
    KeyedRng::new(derive_key(seed, &[TAG_PARTITION])).shuffle(&mut order);
    let share = m / n;
    let shards = (0..n)
        .map(|u| {
            order[u * share..(u + 1) * share]
                .iter()
                .map(|&r| data.rows[r].clone())
                .collect()
        })
        .collect();
    Ok(shards)
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow for large |t|.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Binary logistic regression with L2 regularization:
/// per-sample loss `log(1 + exp(-y x^T a)) + lambda ||x||^2`, y in {-1, +1}.
#[derive(Debug, Clone)]
pub struct Logistic {
    shards: Vec<Vec<SparseRow>>,
    dim: usize,
    lambda: f64,
    constants: ProblemConstants,
}

/// Build the logistic problem by sharding `data` across `n` users with
/// [`partition`]. Analytic constants are coarse estimates
/// (`L = max ||a||^2 / 4 + 2 lambda`, `mu = 2 lambda`); override via
/// [`Logistic::with_constants`] when sharper values are known.
pub fn logistic_problem(
    data: &Dataset,
    lambda: f64,
    n: usize,
    seed: u64,
) -> Result<Logistic, ProblemError> {
    if lambda < 0.0 {
        return Err(ProblemError::InvalidRegularizer { lambda });
    }
    let shards = partition(data, n, seed)?;
    let max_norm_sq = data
        .rows
        .iter()
        .map(|r| r.values.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(Logistic {
        shards,
        dim: data.dim,
        lambda,
        constants: ProblemConstants {
            smoothness: 0.25 * max_norm_sq + 2.0 * lambda,
            pl_constant: 2.0 * lambda,
            zeta_star_sq: 0.0,
            grad_diversity_p: 1.0,
            sigma_star_sq: 0.0,
            noise_growth_m: 1.0,
        },
    })
}

impl Logistic {
    pub fn with_constants(mut self, constants: ProblemConstants) -> Self {
        self.constants = constants;
        self
    }
}

impl Problem for Logistic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_users(&self) -> usize {
        self.shards.len()
    }

    fn sample_count(&self, user: usize) -> usize {
        self.shards[user].len()
    }

    fn sample_loss(&self, user: usize, sample: usize, x: &[f64]) -> f64 {
        let row = &self.shards[user][sample];
        let margin = row.label * row.dot(x);
        let reg: f64 = x.iter().map(|v| v * v).sum();
        softplus(-margin) + self.lambda * reg
    }

    fn sample_gradient(&self, user: usize, sample: usize, x: &[f64]) -> Vec<f64> {
        let row = &self.shards[user][sample];
        let margin = row.label * row.dot(x);
        let weight = -row.label * sigmoid(-margin);
        let mut g: Vec<f64> = x.iter().map(|v| 2.0 * self.lambda * v).collect();
        for (&i, &v) in row.indices.iter().zip(&row.values) {
            g[i as usize] += weight * v;
        }
        g
    }

    fn constants(&self) -> Option<ProblemConstants> {
        Some(self.constants)
    }

    fn accuracy(&self, x: &[f64]) -> Option<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for shard in &self.shards {
            for row in shard {
                let predicted = if row.dot(x) >= 0.0 { 1.0 } else { -1.0 };
                if predicted == row.label {
                    correct += 1;
                }
                total += 1;
            }
        }
        (total > 0).then(|| correct as f64 / total as f64)
    }
}

/// Deterministic synthetic LibSVM corpus for tests and demos: `rows` sparse
/// samples in `dim` features with a planted linear separator plus label
/// noise.
pub fn synthetic_libsvm_dataset(rows: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = KeyedRng::new(derive_key(seed, &[0x6c69_6273]));
    let planted: Vec<f64> = (0..dim).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut score = 0.0;
        for (j, &direction) in planted.iter().enumerate() {
            if rng.next_f64() < 0.4 {
                let v = 2.0 * rng.next_f64() - 1.0;
                indices.push(j as u32);
                values.push(v);
                score += v * direction;
            }
        }
        let noisy = score + 0.3 * (2.0 * rng.next_f64() - 1.0);
        let label = if noisy >= 0.0 { 1.0 } else { -1.0 };
        out.push(SparseRow {
            indices,
            values,
            label,
        });
    }
    Dataset { rows: out, dim }
}
