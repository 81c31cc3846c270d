//! Mehrotra predictor-corrector interior-point method.
//!
//! Inequalities are written with explicit slacks `Cx + s = d`, `s ≥ 0`, and
//! multipliers `z ≥ 0` (reported as `mu`). Each Newton step reduces to the
//! quasi-definite system
//!
//! ```text
//! [ H + reg·I + Cᵀ W C   Aᵀ ] [dx]   [r_x]
//! [ A                    0  ] [dλ] = [r_λ],     W = diag(z / s)
//! ```
//!
//! which is factored with the envelope LDLᵀ in [`super::ldl`].

use super::ldl::{inf_norm, EnvelopeLdl};
use super::{dot, kkt_residual_shifted, QpError, QpProblem, QpSolution, QpStatus, SolverSettings};

const DUAL_REG: f64 = 1e-10;
const PRIMAL_REG: f64 = 1e-10;
const PIVOT_FLOOR: f64 = 1e-14;
const STEP_FRACTION: f64 = 0.99;
const DIVERGENCE: f64 = 1e12;
const TIGHTEN: f64 = 1e-4;
const TIGHTEN_ITERS: usize = 5;
/// Stalled runs are accepted when every residual is below `tol · ACCEPTABLE`.
const ACCEPTABLE: f64 = 100.0;
const STALL_STEP: f64 = 1e-10;
const STALL_ITERS: usize = 5;

/// Solves a convex QP. Infeasibility and iteration limits are reported through
/// [`QpSolution::status`]; only malformed or non-convex problems are errors.
pub fn solve(problem: &QpProblem, settings: &SolverSettings) -> Result<QpSolution, QpError> {
    problem.validate()?;
    check_psd(problem, settings.regularization)?;

    let n = problem.num_vars();
    let me = problem.num_eq();
    let m = problem.num_ineq();
    let reg = settings.regularization;

    let mut kkt = ReducedKkt::new(problem);

    // Starting point from the W = I system.
    kkt.assemble(problem, reg, &vec![1.0; m]);
    kkt.factor();
    // Coupled rows carry y = Cx − d, so only folded rows contribute Cᵀd.
    let mut rhs = vec![0.0; kkt.ldl.dim()];
    for i in 0..n {
        rhs[i] = -problem.g[i];
    }
    for r in 0..m {
        match kkt.slot[r] {
            Some(k) => rhs[k] = problem.d[r],
            None => {
                for (c, v) in problem.c.row(r) {
                    rhs[c] += v * problem.d[r];
                }
            }
        }
    }
    rhs[n..n + me].copy_from_slice(&problem.b);
    let (sol0, _) = kkt.ldl.solve_refined(&rhs, 10, 1e-13);
    let mut x = sol0[..n].to_vec();
    let mut lambda = sol0[n..n + me].to_vec();
    let cx = problem.c.mul_vec(&x);
    let mut s: Vec<f64> = (0..m).map(|i| problem.d[i] - cx[i]).collect();
    let mut z: Vec<f64> = s.iter().map(|v| -v).collect();
    shift_positive(&mut s);
    shift_positive(&mut z);

    let mut status = QpStatus::MaxIter;
    let mut iterations = 0;
    // Once converged, a few extra iterations sharpen the active-set guess used
    // by polishing; the latest converged iterate is kept in case they fail.
    let mut converged: Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, usize)> = None;
    let mut extra = 0;
    let mut stalled = 0;
    let mut acceptable = false;
    for iter in 0..settings.max_iter {
        iterations = iter;
        let res = Residuals::new(problem, reg, &x, &lambda, &s, &z);
        let comp = s.iter().zip(&z).fold(0.0_f64, |acc, (a, b)| acc.max(a * b));
        log::trace!(
            "iter {iter}: rd {:.2e} rp {:.2e} ri {:.2e} comp {:.2e}",
            res.rd_norm,
            res.rp_norm,
            res.ri_norm,
            comp
        );
        let within = |t: f64| res.rd_norm <= t && res.rp_norm <= t && res.ri_norm <= t && comp <= t;
        if within(settings.tol) {
            if !settings.polish || within(settings.tol * TIGHTEN) || extra == TIGHTEN_ITERS {
                status = QpStatus::Solved;
                break;
            }
            converged = Some((x.clone(), lambda.clone(), s.clone(), z.clone(), iter));
            extra += 1;
        }
        if stalled >= STALL_ITERS {
            acceptable = within(settings.tol * ACCEPTABLE);
            break;
        }
        if !(res.rd_norm.is_finite() && res.rp_norm.is_finite() && res.ri_norm.is_finite()) {
            if converged.is_none() {
                log::warn!("interior-point iterate became non-finite at iteration {iter}");
            }
            break;
        }
        if inf_norm(&z) > DIVERGENCE || inf_norm(&lambda) > DIVERGENCE {
            status = QpStatus::Infeasible;
            break;
        }

        let w: Vec<f64> = z.iter().zip(&s).map(|(zi, si)| zi / si).collect();
        kkt.assemble(problem, reg, &w);
        kkt.factor();

        // Predictor.
        let rc_aff: Vec<f64> = s.iter().zip(&z).map(|(a, b)| -a * b).collect();
        let aff = kkt.newton(problem, &res, &s, &z, &rc_aff);
        let alpha_aff = max_step(&s, &aff.ds).min(max_step(&z, &aff.dz)).min(1.0);
        let mu = if m > 0 { dot(&s, &z) / m as f64 } else { 0.0 };
        let mu_aff = if m > 0 {
            (0..m).map(|i| (s[i] + alpha_aff * aff.ds[i]) * (z[i] + alpha_aff * aff.dz[i])).sum::<f64>() / m as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };

        // Corrector.
        let rc: Vec<f64> = (0..m).map(|i| -s[i] * z[i] - aff.ds[i] * aff.dz[i] + sigma * mu).collect();
        let dir = kkt.newton(problem, &res, &s, &z, &rc);
        let alpha = (STEP_FRACTION * max_step(&s, &dir.ds).min(max_step(&z, &dir.dz))).min(1.0);
        stalled = if alpha < STALL_STEP { stalled + 1 } else { 0 };

        for i in 0..n {
            x[i] += alpha * dir.dx[i];
        }
        for i in 0..me {
            lambda[i] += alpha * dir.dl[i];
        }
        for i in 0..m {
            s[i] += alpha * dir.ds[i];
            z[i] += alpha * dir.dz[i];
        }
        iterations = iter + 1;
    }

    if status != QpStatus::Solved {
        if let Some((cx_, cl, cs, cz, it)) = converged {
            (x, lambda, s, z, iterations) = (cx_, cl, cs, cz, it);
            status = QpStatus::Solved;
        } else if acceptable {
            log::debug!("interior-point run stalled at an acceptable iterate after {iterations} iterations");
            status = QpStatus::Solved;
        }
    }

    let mut solution = QpSolution {
        x,
        lambda,
        mu: z,
        active_set: Vec::new(),
        status,
        kkt_residual_norm: f64::NAN,
        iterations,
        polished: false,
        regularization: reg,
    };
    if status == QpStatus::Solved && settings.polish {
        if let Some(p) = polish(problem, &solution, &s, settings) {
            solution.x = p.0;
            solution.lambda = p.1;
            solution.mu = p.2;
            solution.polished = true;
        }
    }
    let slack = solution.slacks(problem);
    solution.active_set = (0..m).filter(|&i| slack[i] <= settings.act_tol).collect();
    solution.kkt_residual_norm =
        inf_norm(&kkt_residual_shifted(problem, &solution.x, &solution.lambda, &solution.mu, reg)?);
    Ok(solution)
}

fn check_psd(problem: &QpProblem, reg: f64) -> Result<(), QpError> {
    let n = problem.num_vars();
    let pairs = problem.h.triplets().filter(|(r, c, _)| c < r).map(|(r, c, _)| (r, c));
    let mut ldl = EnvelopeLdl::new(n, pairs);
    for (r, c, v) in problem.h.triplets() {
        if c <= r {
            ldl.add(r, c, v);
        }
    }
    ldl.factor(&vec![reg; n], &vec![1.0; n], None).map_err(|index| QpError::NonPsd { index })
}

fn shift_positive(v: &mut [f64]) {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        for x in v.iter_mut() {
            *x += 1.0 - min;
        }
    }
}

/// Largest `t ∈ [0, ∞)` with `v + t·dv ≥ 0`.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter().zip(dv).filter(|(_, d)| **d < 0.0).map(|(x, d)| -x / d).fold(f64::INFINITY, f64::min)
}

struct Residuals {
    rd: Vec<f64>,
    rp: Vec<f64>,
    ri: Vec<f64>,
    rd_norm: f64,
    rp_norm: f64,
    ri_norm: f64,
}

impl Residuals {
    fn new(p: &QpProblem, reg: f64, x: &[f64], lambda: &[f64], s: &[f64], z: &[f64]) -> Self {
        let mut rd = p.h.mul_vec(x);
        let atl = p.a.tr_mul_vec(lambda);
        let ctz = p.c.tr_mul_vec(z);
        for i in 0..rd.len() {
            rd[i] += reg * x[i] + p.g[i] + atl[i] + ctz[i];
        }
        let rp: Vec<f64> = p.a.mul_vec(x).iter().zip(&p.b).map(|(a, b)| a - b).collect();
        let cx = p.c.mul_vec(x);
        let ri: Vec<f64> = (0..s.len()).map(|i| cx[i] + s[i] - p.d[i]).collect();
        Self { rd_norm: inf_norm(&rd), rp_norm: inf_norm(&rp), ri_norm: inf_norm(&ri), rd, rp, ri }
    }
}

struct Direction {
    dx: Vec<f64>,
    dl: Vec<f64>,
    ds: Vec<f64>,
    dz: Vec<f64>,
}

/// Newton system with single-variable bounds folded into the diagonal and
/// every other inequality kept as an augmented row with diagonal `−s/z`.
/// Folding a multi-variable row as `w·CᵢᵀCᵢ` would add a huge rank-one block
/// once `w` grows, and the resulting cancellation wrecks the factorization.
struct ReducedKkt {
    ldl: EnvelopeLdl,
    n: usize,
    me: usize,
    /// Inequality rows kept in augmented form.
    coupled: Vec<usize>,
    /// Augmented position of each inequality row, if any.
    slot: Vec<Option<usize>>,
    shift: Vec<f64>,
    signs: Vec<f64>,
}

impl ReducedKkt {
    fn new(p: &QpProblem) -> Self {
        let n = p.num_vars();
        let me = p.num_eq();
        let m = p.num_ineq();
        let coupled: Vec<usize> = (0..m).filter(|&r| p.c.row(r).count() > 1).collect();
        let mut slot = vec![None; m];
        for (k, &r) in coupled.iter().enumerate() {
            slot[r] = Some(n + me + k);
        }
        let dim = n + me + coupled.len();
        let mut pairs: Vec<(usize, usize)> = p.h.triplets().filter(|(r, c, _)| c < r).map(|(r, c, _)| (r, c)).collect();
        pairs.extend(p.a.triplets().map(|(r, c, _)| (n + r, c)));
        for (k, &r) in coupled.iter().enumerate() {
            pairs.extend(p.c.row(r).map(|(c, _)| (n + me + k, c)));
        }
        let mut shift = vec![PRIMAL_REG; dim];
        let mut signs = vec![1.0; dim];
        for i in n..dim {
            shift[i] = -DUAL_REG;
            signs[i] = -1.0;
        }
        Self { ldl: EnvelopeLdl::new(dim, pairs), n, me, coupled, slot, shift, signs }
    }

    /// `w = z / s` per inequality.
    fn assemble(&mut self, p: &QpProblem, reg: f64, w: &[f64]) {
        let (n, me) = (self.n, self.me);
        self.ldl.clear();
        for (r, c, v) in p.h.triplets() {
            if c <= r {
                self.ldl.add(r, c, v);
            }
        }
        for i in 0..n {
            self.ldl.add(i, i, reg);
        }
        for (r, c, v) in p.a.triplets() {
            self.ldl.add(n + r, c, v);
        }
        for (r, &wr) in w.iter().enumerate() {
            match self.slot[r] {
                Some(k) => {
                    for (c, v) in p.c.row(r) {
                        self.ldl.add(k, c, v);
                    }
                    self.ldl.add(k, k, -1.0 / wr);
                }
                None => {
                    for (c, v) in p.c.row(r) {
                        self.ldl.add(c, c, wr * v * v);
                    }
                }
            }
        }
        debug_assert_eq!(self.coupled.len() + n + me, self.ldl.dim());
    }

    fn factor(&mut self) {
        // Bumped pivots are corrected by refinement; a hard failure cannot occur
        // with a pivot floor in place.
        self.ldl.factor(&self.shift, &self.signs, Some(PIVOT_FLOOR)).expect("pivot floor is set");
    }

    fn newton(&self, p: &QpProblem, res: &Residuals, s: &[f64], z: &[f64], rc: &[f64]) -> Direction {
        let (n, me) = (self.n, self.me);
        let m = s.len();
        let mut rhs = vec![0.0; self.ldl.dim()];
        for i in 0..n {
            rhs[i] = -res.rd[i];
        }
        for i in 0..me {
            rhs[n + i] = -res.rp[i];
        }
        // Folded rows: dz = t + w·C dx with t = (rc + z·ri)/s.
        let mut t = vec![0.0; m];
        for r in 0..m {
            match self.slot[r] {
                Some(k) => rhs[k] = -res.ri[r] - rc[r] / z[r],
                None => {
                    t[r] = (rc[r] + z[r] * res.ri[r]) / s[r];
                    for (c, v) in p.c.row(r) {
                        rhs[c] -= v * t[r];
                    }
                }
            }
        }
        let (sol, _) = self.ldl.solve_refined(&rhs, 10, 1e-13);
        let dx = sol[..n].to_vec();
        let dl = sol[n..n + me].to_vec();
        let cdx = p.c.mul_vec(&dx);
        let dz: Vec<f64> = (0..m)
            .map(|r| match self.slot[r] {
                Some(k) => sol[k],
                None => t[r] + z[r] / s[r] * cdx[r],
            })
            .collect();
        let ds: Vec<f64> = (0..m).map(|i| -res.ri[i] - cdx[i]).collect();
        Direction { dx, dl, ds, dz }
    }
}

const POLISH_ROUNDS: usize = 10;

/// Exact solve of the equality-constrained QP on an active set, starting from
/// the guess `s_i < z_i` of the final iterate. Violated rows are added and rows
/// with negative multipliers dropped for a few rounds. Returns `None` if no
/// valid KKT point of the original problem is reached.
fn polish(
    p: &QpProblem,
    sol: &QpSolution,
    s: &[f64],
    settings: &SolverSettings,
) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let m = p.num_ineq();
    let mut active: Vec<bool> = (0..m).map(|i| s[i] < sol.mu[i]).collect();
    for _ in 0..POLISH_ROUNDS {
        let rows: Vec<usize> = (0..m).filter(|&i| active[i]).collect();
        let (x, lambda, mu) = equality_solve(p, &rows, settings.regularization)?;
        let cx = p.c.mul_vec(&x);
        let mut changed = false;
        for i in 0..m {
            if active[i] && mu[i] < -settings.tol {
                active[i] = false;
                changed = true;
            } else if !active[i] && cx[i] - p.d[i] > settings.tol {
                active[i] = true;
                changed = true;
            }
        }
        if changed {
            continue;
        }
        let mu: Vec<f64> = mu.into_iter().map(|v| v.max(0.0)).collect();
        let r = kkt_residual_shifted(p, &x, &lambda, &mu, settings.regularization).ok()?;
        return (inf_norm(&r) <= settings.tol).then_some((x, lambda, mu));
    }
    None
}

/// Solves the KKT system with the given inequality rows held as equalities.
fn equality_solve(p: &QpProblem, rows: &[usize], reg: f64) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = p.num_vars();
    let me = p.num_eq();
    let dim = n + me + rows.len();

    let mut pairs: Vec<(usize, usize)> = p.h.triplets().filter(|(r, c, _)| c < r).map(|(r, c, _)| (r, c)).collect();
    pairs.extend(p.a.triplets().map(|(r, c, _)| (n + r, c)));
    for (k, &i) in rows.iter().enumerate() {
        pairs.extend(p.c.row(i).map(|(c, _)| (n + me + k, c)));
    }
    let mut ldl = EnvelopeLdl::new(dim, pairs);
    for (r, c, v) in p.h.triplets() {
        if c <= r {
            ldl.add(r, c, v);
        }
    }
    for i in 0..n {
        ldl.add(i, i, reg);
    }
    for (r, c, v) in p.a.triplets() {
        ldl.add(n + r, c, v);
    }
    for (k, &i) in rows.iter().enumerate() {
        for (c, v) in p.c.row(i) {
            ldl.add(n + me + k, c, v);
        }
    }
    let mut shift = vec![0.0; dim];
    let mut signs = vec![1.0; dim];
    for i in n..dim {
        shift[i] = -DUAL_REG;
        signs[i] = -1.0;
    }
    ldl.factor(&shift, &signs, Some(PIVOT_FLOOR)).ok()?;

    let mut rhs = Vec::with_capacity(dim);
    rhs.extend(p.g.iter().map(|v| -v));
    rhs.extend_from_slice(&p.b);
    rhs.extend(rows.iter().map(|&i| p.d[i]));
    let (mut y, rep) = ldl.solve_refined(&rhs, 25, 1e-14);
    if !(rep.residual <= 1e-11) {
        // Dependent active rows: keep the dual-regularized solution and let the
        // caller's checks decide.
        y = rhs;
        ldl.solve(&mut y);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut mu = vec![0.0; p.num_ineq()];
    for (k, &i) in rows.iter().enumerate() {
        mu[i] = y[n + me + k];
    }
    Some((y[..n].to_vec(), y[n..n + me].to_vec(), mu))
}
