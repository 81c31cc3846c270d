//! Convex quadratic programs with full primal-dual output.
//!
//! Problems take the form
//!
//! ```text
//! minimize    ½ xᵀ H x + gᵀ x
//! subject to  A x = b
//!             C x ≤ d
//! ```
//!
//! and are solved by a primal-dual interior-point method ([`solve`]) that
//! returns the primal point together with the equality multipliers `lambda` and
//! the inequality multipliers `mu`. The KKT residual uses the Lagrangian
//! `L = ½xᵀHx + gᵀx + λᵀ(Ax − b) + μᵀ(Cx − d)`.
//!
//! The solver always works on `H + reg·I` (see [`SolverSettings::regularization`]);
//! downstream code that differentiates the solution must use the same shift,
//! which [`QpSolution::regularization`] records.

mod differentiate;
mod ipm;
pub(crate) mod ldl;
pub mod sparse;

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use differentiate::{kkt_adjoint_solve, KktAdjoint, SensitivityError};
pub use ipm::solve;
pub use sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("H is not symmetric")]
    NotSymmetric,
    #[error("H is not positive semidefinite (pivot {index} failed after regularization)")]
    NonPsd { index: usize },
    #[error("malformed triplet dump at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `min ½xᵀHx + gᵀx  s.t.  Ax = b, Cx ≤ d`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    pub h: CsrMatrix,
    pub g: Vec<f64>,
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub c: CsrMatrix,
    pub d: Vec<f64>,
    /// Optional diagnostic names, one per variable.
    #[serde(default)]
    pub var_names: Option<Vec<String>>,
    /// Optional diagnostic names, one per equality then one per inequality.
    #[serde(default)]
    pub con_names: Option<Vec<String>>,
}

impl QpProblem {
    pub fn new(h: CsrMatrix, g: Vec<f64>, a: CsrMatrix, b: Vec<f64>, c: CsrMatrix, d: Vec<f64>) -> Self {
        Self { h, g, a, b, c, d, var_names: None, con_names: None }
    }

    pub fn num_vars(&self) -> usize {
        self.g.len()
    }

    pub fn num_eq(&self) -> usize {
        self.b.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.d.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.num_vars();
        let dim = |what: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(QpError::Dimension(format!("{what} is {}x{}, expected {}x{}", got.0, got.1, want.0, want.1)))
            }
        };
        dim("H", (self.h.nrows(), self.h.ncols()), (n, n))?;
        dim("A", (self.a.nrows(), self.a.ncols()), (self.num_eq(), n))?;
        dim("C", (self.c.nrows(), self.c.ncols()), (self.num_ineq(), n))?;
        if let Some(names) = &self.var_names {
            if names.len() != n {
                return Err(QpError::Dimension(format!("{} variable names for {n} variables", names.len())));
            }
        }
        if let Some(names) = &self.con_names {
            if names.len() != self.num_eq() + self.num_ineq() {
                return Err(QpError::Dimension(format!("{} constraint names", names.len())));
            }
        }
        let scale = self.h.triplets().fold(1.0_f64, |m, (_, _, v)| m.max(v.abs()));
        if !self.h.is_symmetric(1e-12 * scale) {
            return Err(QpError::NotSymmetric);
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let hx = self.h.mul_vec(x);
        0.5 * dot(x, &hx) + dot(&self.g, x)
    }

    /// Writes the problem as plain-text sparse triplets:
    ///
    /// ```text
    /// qp <nvars> <neq> <nineq>
    /// H <row> <col> <value>     (one line per stored entry)
    /// g <index> <value>
    /// A <row> <col> <value>
    /// b <index> <value>
    /// C <row> <col> <value>
    /// d <index> <value>
    /// ```
    ///
    /// Values are printed with round-trip precision. Zero vector entries are
    /// omitted. Lines starting with `#` are comments.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<(), QpError> {
        let mut out = String::new();
        writeln!(out, "qp {} {} {}", self.num_vars(), self.num_eq(), self.num_ineq()).unwrap();
        for (tag, m) in [("H", &self.h), ("A", &self.a), ("C", &self.c)] {
            let vec_tag = match tag {
                "H" => ("g", &self.g),
                "A" => ("b", &self.b),
                _ => ("d", &self.d),
            };
            for (r, c, v) in m.triplets() {
                writeln!(out, "{tag} {r} {c} {v:e}").unwrap();
            }
            for (i, v) in vec_tag.1.iter().enumerate() {
                if *v != 0.0 {
                    writeln!(out, "{} {i} {v:e}", vec_tag.0).unwrap();
                }
            }
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn read_triplets<R: BufRead>(r: R) -> Result<Self, QpError> {
        let mut dims: Option<(usize, usize, usize)> = None;
        let (mut h, mut a, mut c) = (Vec::new(), Vec::new(), Vec::new());
        let (mut g, mut b, mut d) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| QpError::Parse { line: lineno + 1, msg: msg.to_string() };
            let parts: Vec<&str> = line.split_whitespace().collect();
            let idx = |k: usize| -> Result<usize, QpError> {
                parts.get(k).ok_or_else(|| err("missing field"))?.parse().map_err(|_| err("bad index"))
            };
            let val = |k: usize| -> Result<f64, QpError> {
                parts.get(k).ok_or_else(|| err("missing field"))?.parse().map_err(|_| err("bad value"))
            };
            match parts[0] {
                "qp" => {
                    let (n, me, mi) = (idx(1)?, idx(2)?, idx(3)?);
                    dims = Some((n, me, mi));
                    g = vec![0.0; n];
                    b = vec![0.0; me];
                    d = vec![0.0; mi];
                }
                tag => {
                    let (n, me, mi) = dims.ok_or_else(|| err("entry before header"))?;
                    let check = |i: usize, bound: usize| if i < bound { Ok(i) } else { Err(err("index out of range")) };
                    match tag {
                        "H" => h.push((check(idx(1)?, n)?, check(idx(2)?, n)?, val(3)?)),
                        "A" => a.push((check(idx(1)?, me)?, check(idx(2)?, n)?, val(3)?)),
                        "C" => c.push((check(idx(1)?, mi)?, check(idx(2)?, n)?, val(3)?)),
                        "g" => g[check(idx(1)?, n)?] = val(2)?,
                        "b" => b[check(idx(1)?, me)?] = val(2)?,
                        "d" => d[check(idx(1)?, mi)?] = val(2)?,
                        _ => return Err(err("unknown tag")),
                    }
                }
            }
        }
        let (n, me, mi) = dims.ok_or(QpError::Parse { line: 0, msg: "missing header".into() })?;
        Ok(Self::new(
            CsrMatrix::from_triplets(n, n, &h),
            g,
            CsrMatrix::from_triplets(me, n, &a),
            b,
            CsrMatrix::from_triplets(mi, n, &c),
            d,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Solved,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// Inequalities with `d − Cx ≤ act_tol`.
    pub active_set: Vec<usize>,
    pub status: QpStatus,
    /// ‖R‖∞ of the regularized problem at the returned point.
    pub kkt_residual_norm: f64,
    pub iterations: usize,
    /// True when the interior-point iterate was replaced by an exact
    /// active-set solve.
    pub polished: bool,
    /// Diagonal shift that was added to H.
    pub regularization: f64,
}

impl QpSolution {
    pub fn is_solved(&self) -> bool {
        self.status == QpStatus::Solved
    }

    /// `d − Cx`, nonnegative when feasible.
    pub fn slacks(&self, problem: &QpProblem) -> Vec<f64> {
        let cx = problem.c.mul_vec(&self.x);
        problem.d.iter().zip(&cx).map(|(d, c)| d - c).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Absolute tolerance on stationarity, primal feasibility and complementarity.
    pub tol: f64,
    pub max_iter: usize,
    /// Tikhonov shift added to H.
    pub regularization: f64,
    /// Slack threshold for reporting an inequality as active.
    pub act_tol: f64,
    /// Try to replace the final iterate by an exact equality-constrained solve
    /// on the identified active set.
    pub polish: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, regularization: 1e-9, act_tol: 1e-7, polish: true }
    }
}

/// Stacked KKT residual `[∇ₓL; Ax − b; diag(μ)(Cx − d)]`.
pub fn kkt_residual(problem: &QpProblem, x: &[f64], lambda: &[f64], mu: &[f64]) -> Result<Vec<f64>, QpError> {
    kkt_residual_shifted(problem, x, lambda, mu, 0.0)
}

/// As [`kkt_residual`] but for `H + shift·I`.
pub fn kkt_residual_shifted(
    problem: &QpProblem,
    x: &[f64],
    lambda: &[f64],
    mu: &[f64],
    shift: f64,
) -> Result<Vec<f64>, QpError> {
    if x.len() != problem.num_vars() || lambda.len() != problem.num_eq() || mu.len() != problem.num_ineq() {
        return Err(QpError::Dimension(format!(
            "point ({}, {}, {}) for problem ({}, {}, {})",
            x.len(),
            lambda.len(),
            mu.len(),
            problem.num_vars(),
            problem.num_eq(),
            problem.num_ineq()
        )));
    }
    let mut stat = problem.h.mul_vec(x);
    let at_l = problem.a.tr_mul_vec(lambda);
    let ct_m = problem.c.tr_mul_vec(mu);
    for i in 0..stat.len() {
        stat[i] += shift * x[i] + problem.g[i] + at_l[i] + ct_m[i];
    }
    let ax = problem.a.mul_vec(x);
    let cx = problem.c.mul_vec(x);
    stat.extend(ax.iter().zip(&problem.b).map(|(l, r)| l - r));
    stat.extend((0..mu.len()).map(|i| mu[i] * (cx[i] - problem.d[i])));
    Ok(stat)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
