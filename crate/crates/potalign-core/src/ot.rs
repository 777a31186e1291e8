//! Discrete optimal transport: pairwise cost matrices, an entropic
//! Sinkhorn solver run in the log domain, and an exact permutation
//! oracle for small uniform instances.

use alloc::vec;
use alloc::vec::Vec;

use crate::mat::Mat;
use crate::math;
use crate::{Error, Result};

/// Additive stabilizer inside the Euclidean square root so the distance
/// (and its gradient) stays defined at coincident points.
pub const EPS_STAB: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMetric {
    Euclidean,
    SquaredEuclidean,
}

/// Pairwise transport costs between source and target samples.
/// Entries are finite and nonnegative by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: Mat,
}

impl CostMatrix {
    pub fn new(values: Mat) -> Result<Self> {
        if !values.iter().all(|x| x.is_finite() && *x >= 0.0) {
            return Err(Error::NonFiniteCost);
        }
        Ok(CostMatrix { values })
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.n_cols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn mean(&self) -> f64 {
        let n = self.values.n_rows() * self.values.n_cols();
        self.values.sum() / n as f64
    }

    pub fn max(&self) -> f64 {
        let mut m = 0.0;
        for &x in self.values.iter() {
            if x > m {
                m = x;
            }
        }
        m
    }
}

/// Transport plan with its prescribed marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    plan: Mat,
    row_marginal: Vec<f64>,
    col_marginal: Vec<f64>,
}

impl Coupling {
    pub fn new(plan: Mat, row_marginal: Vec<f64>, col_marginal: Vec<f64>) -> Result<Self> {
        if plan.n_rows() != row_marginal.len() {
            return Err(Error::DimMismatch {
                context: "Coupling row marginal",
                expected: plan.n_rows(),
                found: row_marginal.len(),
            });
        }
        if plan.n_cols() != col_marginal.len() {
            return Err(Error::DimMismatch {
                context: "Coupling col marginal",
                expected: plan.n_cols(),
                found: col_marginal.len(),
            });
        }
        Ok(Coupling {
            plan,
            row_marginal,
            col_marginal,
        })
    }

    pub fn plan(&self) -> &Mat {
        &self.plan
    }

    pub fn row_marginal(&self) -> &[f64] {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &[f64] {
        &self.col_marginal
    }

    pub fn total_mass(&self) -> f64 {
        self.plan.sum()
    }

    /// Largest absolute deviation of a plan marginal from its target.
    pub fn marginal_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for (s, m) in self.plan.row_sums().iter().zip(&self.row_marginal) {
            let d = (s - m).abs();
            if d > worst {
                worst = d;
            }
        }
        for (s, m) in self.plan.col_sums().iter().zip(&self.col_marginal) {
            let d = (s - m).abs();
            if d > worst {
                worst = d;
            }
        }
        worst
    }
}

/// Solver report: the coupling plus how the iteration went. A run that
/// hits `max_iter` before `tol` is flagged, not an error.
#[derive(Debug, Clone)]
pub struct SinkhornOutcome {
    pub coupling: Coupling,
    pub iterations: u32,
    pub marginal_error: f64,
    pub converged: bool,
}

/// Uniform probability vector of length `n`.
pub fn uniform_marginal(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Distance between every row of `zs` and every row of `zt`.
pub fn pairwise_feature_cost(zs: &Mat, zt: &Mat, metric: CostMetric) -> Result<CostMatrix> {
    if zs.n_cols() != zt.n_cols() {
        return Err(Error::DimMismatch {
            context: "pairwise_feature_cost",
            expected: zs.n_cols(),
            found: zt.n_cols(),
        });
    }
    let mut values = Mat::zeros(zs.n_rows(), zt.n_rows());
    for i in 0..zs.n_rows() {
        let a = zs.row(i);
        for j in 0..zt.n_rows() {
            let b = zt.row(j);
            let mut sq = 0.0;
            for k in 0..a.len() {
                let d = a[k] - b[k];
                sq += d * d;
            }
            values[(i, j)] = match metric {
                CostMetric::Euclidean => math::sqrt(sq + EPS_STAB),
                CostMetric::SquaredEuclidean => sq,
            };
        }
    }
    CostMatrix::new(values)
}

fn check_probability(v: &[f64], context: &'static str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::NotAProbability { context });
    }
    let mut sum = 0.0;
    for &x in v {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::NotAProbability { context });
        }
        sum += x;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::NotAProbability { context });
    }
    Ok(())
}

/// Entropic OT by alternating log-domain potential updates.
///
/// Returns `diag(u) exp(-C/epsilon) diag(v)` once the worst marginal
/// violation drops below `tol` or after `max_iter` rounds. Potentials are
/// kept as `f = eps*ln(u)`, `g = eps*ln(v)` so small `epsilon` cannot
/// underflow the scaling factors.
pub fn sinkhorn(
    cost: &CostMatrix,
    mu: &[f64],
    nu: &[f64],
    epsilon: f64,
    max_iter: u32,
    tol: f64,
) -> Result<SinkhornOutcome> {
    let (n, m) = cost.shape();
    if mu.len() != n {
        return Err(Error::DimMismatch {
            context: "sinkhorn row marginal",
            expected: n,
            found: mu.len(),
        });
    }
    if nu.len() != m {
        return Err(Error::DimMismatch {
            context: "sinkhorn col marginal",
            expected: m,
            found: nu.len(),
        });
    }
    check_probability(mu, "sinkhorn mu")?;
    check_probability(nu, "sinkhorn nu")?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParam {
            context: "sinkhorn epsilon must be positive and finite",
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParam {
            context: "sinkhorn tol must be positive",
        });
    }

    let c = cost.values();
    let log_mu: Vec<f64> = mu.iter().map(|&x| math::ln(x)).collect();
    let log_nu: Vec<f64> = nu.iter().map(|&x| math::ln(x)).collect();
    let mut f = vec![0.0f64; n];
    let mut g = vec![0.0f64; m];
    let mut scratch = vec![0.0f64; n.max(m)];

    let mut iterations = 0u32;
    let mut err = f64::INFINITY;
    let mut converged = false;

    while iterations < max_iter {
        // f_i <- eps*ln(mu_i) - eps*LSE_j((g_j - C_ij)/eps)
        for i in 0..n {
            let row = c.row(i);
            for j in 0..m {
                scratch[j] = (g[j] - row[j]) / epsilon;
            }
            f[i] = epsilon * (log_mu[i] - math::log_sum_exp(&scratch[..m]));
        }
        // g_j <- eps*ln(nu_j) - eps*LSE_i((f_i - C_ij)/eps)
        for j in 0..m {
            for i in 0..n {
                scratch[i] = (f[i] - c[(i, j)]) / epsilon;
            }
            g[j] = epsilon * (log_nu[j] - math::log_sum_exp(&scratch[..n]));
        }
        iterations += 1;

        // After the g update columns are tight, so the violation lives in
        // the rows; check both anyway since that is what we report.
        err = marginal_error_from_potentials(c, &f, &g, epsilon, mu, nu);
        if err < tol {
            converged = true;
            break;
        }
    }

    let mut plan = Mat::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            plan[(i, j)] = math::exp((f[i] + g[j] - c[(i, j)]) / epsilon);
        }
    }
    let coupling = Coupling::new(plan, mu.to_vec(), nu.to_vec())?;
    Ok(SinkhornOutcome {
        coupling,
        iterations,
        marginal_error: err,
        converged,
    })
}

fn marginal_error_from_potentials(
    c: &Mat,
    f: &[f64],
    g: &[f64],
    epsilon: f64,
    mu: &[f64],
    nu: &[f64],
) -> f64 {
    let (n, m) = c.shape();
    let mut col_sums = vec![0.0f64; m];
    let mut worst = 0.0f64;
    for i in 0..n {
        let row = c.row(i);
        let mut row_sum = 0.0;
        for j in 0..m {
            let p = math::exp((f[i] + g[j] - row[j]) / epsilon);
            row_sum += p;
            col_sums[j] += p;
        }
        let d = (row_sum - mu[i]).abs();
        if d > worst {
            worst = d;
        }
    }
    for j in 0..m {
        let d = (col_sums[j] - nu[j]).abs();
        if d > worst {
            worst = d;
        }
    }
    worst
}

/// Objective value `sum_ij C_ij * gamma_ij`.
pub fn transport_value(cost: &CostMatrix, gamma: &Coupling) -> Result<f64> {
    if cost.shape() != gamma.plan().shape() {
        return Err(Error::DimMismatch {
            context: "transport_value",
            expected: cost.n_rows() * cost.n_cols(),
            found: gamma.plan().n_rows() * gamma.plan().n_cols(),
        });
    }
    let mut v = 0.0;
    for (c, p) in cost.values().iter().zip(gamma.plan().iter()) {
        v += c * p;
    }
    Ok(v)
}

/// Exact minimizer over the Birkhoff vertices for square instances with
/// uniform marginals: every optimal plan for `n = m` and weights `1/n` is
/// a scaled permutation, so enumerating all `n!` of them is exact.
/// Permutations are visited in lexicographic order and ties keep the
/// first (smallest) one.
pub fn exact_ot_oracle(cost: &CostMatrix) -> Result<(Coupling, f64)> {
    let (n, m) = cost.shape();
    if n != m || n == 0 || n > 8 {
        return Err(Error::OracleUnsupported { n, m });
    }
    let c = cost.values();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best_perm = perm.clone();
    let mut best_cost = permutation_cost(c, &perm);
    while next_permutation(&mut perm) {
        let candidate = permutation_cost(c, &perm);
        if candidate < best_cost {
            best_cost = candidate;
            best_perm.copy_from_slice(&perm);
        }
    }
    let w = 1.0 / n as f64;
    let mut plan = Mat::zeros(n, n);
    for (i, &j) in best_perm.iter().enumerate() {
        plan[(i, j)] = w;
    }
    let coupling = Coupling::new(plan, uniform_marginal(n), uniform_marginal(n))?;
    let value = best_cost / n as f64;
    Ok((coupling, value))
}

fn permutation_cost(c: &Mat, perm: &[usize]) -> f64 {
    let mut s = 0.0;
    for (i, &j) in perm.iter().enumerate() {
        s += c[(i, j)];
    }
    s
}

/// Standard in-place next lexicographic permutation; false once wrapped.
fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}
