//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use battery_mpcrl::qp::{CsrMatrix, QpProblem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Random strictly convex QP with a known feasible point. Roughly a third of
/// the inequalities pass through that point.
pub fn random_qp<R: Rng>(rng: &mut R, n: usize, me: usize, mi: usize) -> QpProblem {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
    let mut h_trip = Vec::new();
    for r in 0..n {
        for c in 0..n {
            h_trip.push((r, c, h[(r, c)]));
        }
    }
    let g: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dense = |rows: usize, rng: &mut R| -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| (0..n).map(|_| if rng.random_bool(0.6) { rng.random_range(-1.0..1.0) } else { 0.0 }).collect())
            .collect()
    };
    let a = dense(me, rng);
    let b: Vec<f64> = a.iter().map(|row| row.iter().zip(&x0).map(|(p, q)| p * q).sum()).collect();
    let c = dense(mi, rng);
    let d: Vec<f64> = c
        .iter()
        .map(|row| {
            let v: f64 = row.iter().zip(&x0).map(|(p, q)| p * q).sum();
            if rng.random_bool(0.33) {
                v
            } else {
                v + rng.random_range(0.0..1.0)
            }
        })
        .collect();
    QpProblem::new(
        CsrMatrix::from_triplets(n, n, &h_trip),
        g,
        CsrMatrix::from_dense(&a, n),
        b,
        CsrMatrix::from_dense(&c, n),
        d,
    )
}

/// Minimum objective by enumerating every subset of inequalities as the
/// active set and keeping KKT points that are primal and dual feasible.
pub fn enumerate_active_sets(p: &QpProblem) -> Option<(f64, Vec<f64>)> {
    let n = p.num_vars();
    let me = p.num_eq();
    let mi = p.num_ineq();
    let h = DMatrix::from_fn(n, n, |r, c| p.h.get(r, c));
    let a = DMatrix::from_fn(me, n, |r, c| p.a.get(r, c));
    let c = DMatrix::from_fn(mi, n, |r, k| p.c.get(r, k));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << mi) {
        let act: Vec<usize> = (0..mi).filter(|i| mask & (1 << i) != 0).collect();
        let k = me + act.len();
        if k > n {
            continue;
        }
        let dim = n + k;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        for i in 0..n {
            rhs[i] = -p.g[i];
        }
        for r in 0..me {
            for j in 0..n {
                kkt[(n + r, j)] = a[(r, j)];
                kkt[(j, n + r)] = a[(r, j)];
            }
            rhs[n + r] = p.b[r];
        }
        for (q, &i) in act.iter().enumerate() {
            for j in 0..n {
                kkt[(n + me + q, j)] = c[(i, j)];
                kkt[(j, n + me + q)] = c[(i, j)];
            }
            rhs[n + me + q] = p.d[i];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
        let feasible = (0..mi).all(|i| p.c.row_dot(i, &x) <= p.d[i] + 1e-9);
        let dual_ok = (0..act.len()).all(|q| sol[n + me + q] >= -1e-9);
        if feasible && dual_ok {
            let obj = p.objective(&x);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, x));
            }
        }
    }
    best
}

use battery_mpcrl::model::{FleetConfig, SocState};
use battery_mpcrl::mpc::{policy, MpcConfig, Theta};
use battery_mpcrl::prices::{forecast_window, synth_daily, PriceWindow, SyntheticProfile};

/// Random `(θ, soc, price window)` around the reference fleet.
pub fn random_mpc_instance<R: Rng>(rng: &mut R, fleet: &FleetConfig, horizon: usize) -> (Theta, SocState, PriceWindow) {
    let n = fleet.n;
    let mut theta = Theta::nominal(fleet);
    if rng.random_bool(0.75) {
        for i in 0..n {
            theta.theta_alpha[i] = rng.random_range(0.02..0.2);
            theta.theta_delta[i] = rng.random_range(-0.02..0.02);
            theta.theta_b[i] = rng.random_range(-5.0..5.0);
            theta.theta_s[i] = rng.random_range(-5.0..5.0);
            theta.phi1[i] = rng.random_range(0.0..50.0);
            theta.phi2[i] = rng.random_range(-50.0..50.0);
            theta.phi3[i] = rng.random_range(-5.0..5.0);
            theta.t1[i] = rng.random_range(0.0..100.0);
            theta.t2[i] = rng.random_range(-100.0..100.0);
            theta.t3[i] = rng.random_range(-5.0..5.0);
        }
    }
    let soc = SocState::new((0..n).map(|_| rng.random_range(0.0..1.0)).collect());
    let profile = SyntheticProfile {
        base: rng.random_range(20.0..40.0),
        amplitude: rng.random_range(0.0..15.0),
        ..SyntheticProfile::default()
    };
    let prices = synth_daily(&profile, rng.random_range(0.3..0.9)).unwrap();
    let window = forecast_window(&prices, rng.random_range(0..24), horizon);
    (theta, soc, window)
}

/// Central differences of the first-stage action with respect to every θ
/// entry, as a `|θ| × n` row-major table.
pub fn fd_policy_jacobian(
    theta: &Theta,
    soc: &SocState,
    window: &PriceWindow,
    fleet: &FleetConfig,
    mpc: &MpcConfig,
    h: f64,
) -> Option<Vec<Vec<f64>>> {
    let base = theta.to_vec();
    let mut out = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[k] += h;
        minus[k] -= h;
        let tp = Theta::from_slice(fleet.n, &plus).ok()?;
        let tm = Theta::from_slice(fleet.n, &minus).ok()?;
        if tp.validate().is_err() || tm.validate().is_err() {
            return None;
        }
        let ap = policy(&tp, soc, window, fleet, mpc).ok()?;
        let am = policy(&tm, soc, window, fleet, mpc).ok()?;
        out.push(ap.a.iter().zip(&am.a).map(|(p, m)| (p - m) / (2.0 * h)).collect());
    }
    Some(out)
}

/// Smallest `max(slack, μ)` over the inequalities of a solved MPC.
pub fn complementarity_margin(sol: &battery_mpcrl::mpc::MpcSolution) -> f64 {
    let slack = sol.solution.slacks(&sol.problem);
    slack.iter().zip(&sol.solution.mu).map(|(s, m)| s.max(*m)).fold(f64::INFINITY, f64::min)
}
