//! Adjoint solves with the KKT Jacobian of a solved QP.
//!
//! With `y = (x, λ, μ)` and `R(y)` the stacked residual of [`super::kkt_residual`]
//! (on `H + reg·I`), the implicit function theorem gives
//! `∂(eᵀx)/∂θ = −ζᵀ ∂R/∂θ` where `ζ = (p, q, r)` solves
//!
//! ```text
//! [ H + reg·I   Aᵀ   Cᵀ diag(μ) ] [p]   [e]
//! [ A           0    0          ] [q] = [0]
//! [ C           0    diag(Cx−d) ] [r]   [0]
//! ```
//!
//! Each inequality row is eliminated on whichever side is better conditioned:
//! when the slack dominates, `r_i = C_i p / slack_i` folds `μ_i/slack_i · C_iᵀC_i`
//! into the primal block; otherwise `t_i = μ_i r_i` stays as a dual row with
//! diagonal `−slack_i/μ_i`. Both eliminations are exact, so the reduced system
//! is symmetric quasi-definite and goes through the envelope LDLᵀ.

use thiserror::Error;

use super::ldl::{inf_norm, EnvelopeLdl};
use super::{QpProblem, QpSolution};

const DUAL_REG: f64 = 1e-10;
const PIVOT_FLOOR: f64 = 1e-14;
const BACKWARD_TOL: f64 = 1e-11;
const DEPENDENCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensitivityError {
    #[error("solution is not marked solved")]
    Unsolved,
    #[error("inequality {index} is weakly active (slack {slack:.3e}, multiplier {mu:.3e})")]
    Degenerate { index: usize, slack: f64, mu: f64 },
    #[error("active constraints are linearly dependent (relative pivot {pivot:.3e})")]
    Dependent { pivot: f64 },
    #[error("KKT Jacobian is numerically singular (backward error {residual:.3e})")]
    Singular { residual: f64 },
    #[error("seed has length {got}, expected {expected}")]
    Dimension { got: usize, expected: usize },
}

/// Adjoint vector `ζ = (p, q, r)` for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct KktAdjoint {
    /// Stationarity block.
    pub p: Vec<f64>,
    /// Equality block.
    pub q: Vec<f64>,
    /// Complementarity block.
    pub r: Vec<f64>,
}

/// Smallest relative pivot of the Gram matrix `J Jᵀ`, where `J` stacks the
/// equality rows and the inequality rows `rows`. Near zero when those rows are
/// linearly dependent.
fn active_gram_pivot(problem: &QpProblem, rows: &[usize]) -> f64 {
    let n = problem.num_vars();
    let me = problem.num_eq();
    let dim = me + rows.len();
    let entries: Vec<Vec<(usize, f64)>> =
        (0..me).map(|r| problem.a.row(r).collect()).chain(rows.iter().map(|&i| problem.c.row(i).collect())).collect();
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (r, row) in entries.iter().enumerate() {
        for &(c, v) in row {
            by_col[c].push((r, v));
        }
    }
    let pairs = by_col.iter().flat_map(|col| {
        col.iter().enumerate().flat_map(move |(a, &(ra, _))| col[..a].iter().map(move |&(rb, _)| (ra, rb)))
    });
    let mut ldl = EnvelopeLdl::new(dim, pairs.collect::<Vec<_>>());
    for col in &by_col {
        for (a, &(ra, va)) in col.iter().enumerate() {
            for &(rb, vb) in &col[..=a] {
                ldl.add(ra, rb, va * vb);
            }
        }
    }
    if ldl.factor(&vec![0.0; dim], &vec![1.0; dim], Some(f64::MIN_POSITIVE)).is_err() {
        return 0.0;
    }
    ldl.min_relative_pivot()
}

/// Solves `J_yᵀ ζ = (e, 0, 0)` for every seed `e` (length `num_vars`) with a
/// single factorization. Fails when some inequality has both slack and
/// multiplier at or below `sc_tol`, or when the strongly active constraints
/// are linearly dependent.
pub fn kkt_adjoint_solve(
    problem: &QpProblem,
    solution: &QpSolution,
    seeds: &[Vec<f64>],
    sc_tol: f64,
) -> Result<Vec<KktAdjoint>, SensitivityError> {
    if !solution.is_solved() {
        return Err(SensitivityError::Unsolved);
    }
    let n = problem.num_vars();
    let me = problem.num_eq();
    let m = problem.num_ineq();
    for e in seeds {
        if e.len() != n {
            return Err(SensitivityError::Dimension { got: e.len(), expected: n });
        }
    }
    let slack: Vec<f64> = solution.slacks(problem).into_iter().map(|s| s.max(0.0)).collect();
    let mu: Vec<f64> = solution.mu.iter().map(|v| v.max(0.0)).collect();
    for i in 0..m {
        if slack[i].max(mu[i]) <= sc_tol {
            return Err(SensitivityError::Degenerate { index: i, slack: slack[i], mu: mu[i] });
        }
    }
    let dual_rows: Vec<usize> = (0..m).filter(|&i| mu[i] > slack[i]).collect();
    let pivot = active_gram_pivot(problem, &dual_rows);
    if !(pivot > DEPENDENCE_TOL) {
        return Err(SensitivityError::Dependent { pivot });
    }
    let primal_rows: Vec<usize> = (0..m).filter(|&i| mu[i] <= slack[i] && mu[i] > 0.0).collect();
    let nd = dual_rows.len();
    let dim = n + me + nd;

    let mut pairs: Vec<(usize, usize)> =
        problem.h.triplets().filter(|(r, c, _)| c < r).map(|(r, c, _)| (r, c)).collect();
    pairs.extend(problem.a.triplets().map(|(r, c, _)| (n + r, c)));
    for (k, &i) in dual_rows.iter().enumerate() {
        pairs.extend(problem.c.row(i).map(|(c, _)| (n + me + k, c)));
    }
    for &i in &primal_rows {
        let cols: Vec<usize> = problem.c.row(i).map(|(c, _)| c).collect();
        for (a, &ca) in cols.iter().enumerate() {
            for &cb in &cols[..a] {
                pairs.push((ca, cb));
            }
        }
    }
    let mut ldl = EnvelopeLdl::new(dim, pairs);
    for (r, c, v) in problem.h.triplets() {
        if c <= r {
            ldl.add(r, c, v);
        }
    }
    for i in 0..n {
        ldl.add(i, i, solution.regularization);
    }
    for (r, c, v) in problem.a.triplets() {
        ldl.add(n + r, c, v);
    }
    for (k, &i) in dual_rows.iter().enumerate() {
        for (c, v) in problem.c.row(i) {
            ldl.add(n + me + k, c, v);
        }
        ldl.add(n + me + k, n + me + k, -slack[i] / mu[i]);
    }
    for &i in &primal_rows {
        let w = mu[i] / slack[i];
        let row: Vec<(usize, f64)> = problem.c.row(i).collect();
        for (a, &(ca, va)) in row.iter().enumerate() {
            for &(cb, vb) in &row[..=a] {
                ldl.add(ca.max(cb), ca.min(cb), w * va * vb);
            }
        }
    }
    let mut shift = vec![0.0; dim];
    let mut signs = vec![1.0; dim];
    for i in n..dim {
        shift[i] = -DUAL_REG;
        signs[i] = -1.0;
    }
    ldl.factor(&shift, &signs, Some(PIVOT_FLOOR))
        .map_err(|_| SensitivityError::Singular { residual: f64::INFINITY })?;

    let matrix_norm = ldl.norm_inf();
    let cx_rows = |p: &[f64], i: usize| problem.c.row_dot(i, p);
    let mut out = Vec::with_capacity(seeds.len());
    for e in seeds {
        let mut rhs = vec![0.0; dim];
        rhs[..n].copy_from_slice(e);
        let (y, _) = ldl.solve_refined(&rhs, 30, 1e-15);
        let ay = ldl.matvec(&y);
        let resid: Vec<f64> = rhs.iter().zip(&ay).map(|(b, a)| b - a).collect();
        // Normwise backward error; the solution itself can be large when a
        // first-stage input is only pinned by the regularization.
        let backward = inf_norm(&resid) / (matrix_norm * inf_norm(&y) + inf_norm(&rhs));
        if !(backward <= BACKWARD_TOL) {
            return Err(SensitivityError::Singular { residual: backward });
        }
        let p = y[..n].to_vec();
        let q = y[n..n + me].to_vec();
        let mut r = vec![0.0; m];
        for (k, &i) in dual_rows.iter().enumerate() {
            r[i] = y[n + me + k] / mu[i];
        }
        for i in 0..m {
            if mu[i] <= slack[i] {
                r[i] = cx_rows(&p, i) / slack[i];
            }
        }
        debug_assert!(inf_norm(&r).is_finite());
        out.push(KktAdjoint { p, q, r });
    }
    Ok(out)
}
