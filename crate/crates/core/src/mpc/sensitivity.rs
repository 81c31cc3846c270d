//! Policy sensitivity `∇_θπ` by implicit differentiation of the MPC's KKT system.
//!
//! For each agent the adjoint `(p, q)` of the seed `e = e_{b₀} − e_{s₀}` is
//! contracted with `∂R/∂θ`. Only the stationarity and equality blocks of the
//! residual depend on θ:
//!
//! | parameter | stationarity                         | equality (dynamics row `j`) |
//! |-----------|--------------------------------------|-----------------------------|
//! | `θ_α`     | `−λ_j` at `b_j`, `+λ_j` at `s_j`     | `s_j − b_j`                 |
//! | `θ_δ`     |                                      | `−1`                        |
//! | `θ_b`     | `γʲ` at `b_j`                        |                             |
//! | `θ_s`     | `−γʲ` at `s_j`                       |                             |
//! | `φ₁`      | `2γʲ soc_j` (j < N)                  |                             |
//! | `φ₂`      | `γʲ` at `soc_j` (j < N)              |                             |
//! | `T₁`      | `2 soc_N`                            |                             |
//! | `T₂`      | `1` at `soc_N`                       |                             |

use nalgebra::DMatrix;

use super::{solve_mpc, MpcConfig, MpcError, MpcSolution, Theta, ThetaGroup};
use crate::model::{FleetConfig, SocState};
use crate::prices::PriceWindow;
use crate::qp::{kkt_adjoint_solve, SensitivityError};

/// Solves the MPC and returns `∇_θπ` (`|θ| × n`). The outer error is a solve
/// failure; the inner one flags a degenerate active set.
pub fn policy_sensitivity(
    theta: &Theta,
    soc: &SocState,
    window: &PriceWindow,
    fleet: &FleetConfig,
    mpc: &MpcConfig,
) -> Result<Result<DMatrix<f64>, SensitivityError>, MpcError> {
    let sol = solve_mpc(theta, soc, window, fleet, mpc)?;
    Ok(sensitivity_from_solution(theta, &sol, mpc))
}

/// `∇_θπ` at an already solved instance.
pub fn sensitivity_from_solution(
    theta: &Theta,
    sol: &MpcSolution,
    mpc: &MpcConfig,
) -> Result<DMatrix<f64>, SensitivityError> {
    let lay = &sol.layout;
    let n = lay.n;
    let nh = lay.horizon;
    let nv = lay.num_vars();
    let x = &sol.solution.x;
    let lambda = &sol.solution.lambda;
    let disc: Vec<f64> = (0..=nh).map(|j| mpc.gamma.powi(j as i32)).collect();

    let seeds: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; nv];
            e[lay.buy(i, 0)] = 1.0;
            e[lay.sell(i, 0)] = -1.0;
            e
        })
        .collect();
    let adjoints = kkt_adjoint_solve(&sol.problem, &sol.solution, &seeds, mpc.sc_tol)?;

    let mut out = DMatrix::zeros(theta.len(), n);
    for (col, adj) in adjoints.iter().enumerate() {
        let (p, q) = (&adj.p, &adj.q);
        // θ enters agent m's blocks only.
        for m in 0..n {
            let mut d_alpha = 0.0;
            let mut d_delta = 0.0;
            let mut d_b = 0.0;
            let mut d_s = 0.0;
            let mut d_phi1 = 0.0;
            let mut d_phi2 = 0.0;
            for j in 0..nh {
                let r = lay.eq_dynamics(m, j);
                let (bj, sj, socj) = (lay.buy(m, j), lay.sell(m, j), lay.soc(m, j));
                d_alpha += p[bj] * (-lambda[r]) + p[sj] * lambda[r] + q[r] * (x[sj] - x[bj]);
                d_delta += -q[r];
                d_b += p[bj] * disc[j];
                d_s += -p[sj] * disc[j];
                d_phi1 += p[socj] * 2.0 * disc[j] * x[socj];
                d_phi2 += p[socj] * disc[j];
            }
            let soc_n = lay.soc(m, nh);
            let d_t1 = p[soc_n] * 2.0 * x[soc_n];
            let d_t2 = p[soc_n];
            for (g, v) in [
                (ThetaGroup::ThetaAlpha, d_alpha),
                (ThetaGroup::ThetaDelta, d_delta),
                (ThetaGroup::ThetaB, d_b),
                (ThetaGroup::ThetaS, d_s),
                (ThetaGroup::Phi1, d_phi1),
                (ThetaGroup::Phi2, d_phi2),
                (ThetaGroup::T1, d_t1),
                (ThetaGroup::T2, d_t2),
            ] {
                out[(theta.flat_index(g, m), col)] = -v;
            }
        }
    }
    Ok(out)
}
