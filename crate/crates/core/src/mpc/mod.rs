//! Parametrized economic MPC used as the policy approximator.
//!
//! For every agent `i` and prediction step `j` the scheme solves
//!
//! ```text
//! min  Σᵢ ( ω_fᵀσᵢ_N + T(socᵢ_N) + Σⱼ γʲ ( L(bᵢⱼ, sᵢⱼ) + φ(socᵢⱼ) + ωᵀσᵢⱼ ) )
//! s.t. socᵢ_{j+1} = socᵢⱼ + θ_α(bᵢⱼ − sᵢⱼ) + θ_δ
//!      socᵢⱼ − 0.9 ≤ σᵢⱼ[0],  0.1 − socᵢⱼ ≤ σᵢⱼ[1],  σ ≥ 0
//!      0 ≤ b, s ≤ Ū,   Σᵢ bᵢⱼ ≤ P̄,  Σᵢ sᵢⱼ ≤ P̄,   socᵢ₀ = current soc
//! ```
//!
//! with `L = (φ_b + θ_b)b − (φ_s + θ_s)s`, `φ(x) = φ₁x² + φ₂x + φ₃` and
//! `T(x) = T₁x² + T₂x + T₃`. A small `u_reg·(b² + s²)` term keeps the optimum
//! unique. The constants `φ₃`, `T₃` shift the objective only, so the policy and
//! its sensitivity never depend on them.

mod sensitivity;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ControlAction, FleetConfig, Policy, SocState, SOC_BAND_HIGH, SOC_BAND_LOW};
use crate::prices::{forecast_window, PriceSeries, PriceWindow};
use crate::qp::{self, CsrMatrix, QpProblem, QpSolution, QpStatus, SolverSettings};

pub use sensitivity::{policy_sensitivity, sensitivity_from_solution};

/// Lower bound kept on every `θ_α`.
pub const ALPHA_MIN: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid theta: {0}")]
    InvalidTheta(String),
    #[error("invalid MPC config: {0}")]
    Config(String),
    #[error(transparent)]
    Qp(#[from] qp::QpError),
    #[error("MPC solve ended with status {:?}", .0.status)]
    Unsolved(Box<Diagnostics>),
}

/// Parameter groups in flattening order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaGroup {
    ThetaAlpha,
    ThetaDelta,
    ThetaB,
    ThetaS,
    Phi1,
    Phi2,
    Phi3,
    T1,
    T2,
    T3,
}

impl ThetaGroup {
    pub const ALL: [ThetaGroup; 10] = [
        ThetaGroup::ThetaAlpha,
        ThetaGroup::ThetaDelta,
        ThetaGroup::ThetaB,
        ThetaGroup::ThetaS,
        ThetaGroup::Phi1,
        ThetaGroup::Phi2,
        ThetaGroup::Phi3,
        ThetaGroup::T1,
        ThetaGroup::T2,
        ThetaGroup::T3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ThetaGroup::ThetaAlpha => "theta_alpha",
            ThetaGroup::ThetaDelta => "theta_delta",
            ThetaGroup::ThetaB => "theta_b",
            ThetaGroup::ThetaS => "theta_s",
            ThetaGroup::Phi1 => "phi1",
            ThetaGroup::Phi2 => "phi2",
            ThetaGroup::Phi3 => "phi3",
            ThetaGroup::T1 => "t1",
            ThetaGroup::T2 => "t2",
            ThetaGroup::T3 => "t3",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Learnable MPC parameters, one entry per agent in every group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub theta_alpha: Vec<f64>,
    pub theta_delta: Vec<f64>,
    pub theta_b: Vec<f64>,
    pub theta_s: Vec<f64>,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub phi3: Vec<f64>,
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    pub t3: Vec<f64>,
}

impl Theta {
    /// Certainty-equivalent start: `θ_α = α`, everything else zero.
    pub fn nominal(fleet: &FleetConfig) -> Self {
        let mut t = Self::zeros(fleet.n);
        t.theta_alpha = fleet.alpha.clone();
        t
    }

    pub fn zeros(n: usize) -> Self {
        let z = vec![0.0; n];
        Self {
            theta_alpha: z.clone(),
            theta_delta: z.clone(),
            theta_b: z.clone(),
            theta_s: z.clone(),
            phi1: z.clone(),
            phi2: z.clone(),
            phi3: z.clone(),
            t1: z.clone(),
            t2: z.clone(),
            t3: z,
        }
    }

    pub fn n(&self) -> usize {
        self.theta_alpha.len()
    }

    /// Flattened length, `10·n`.
    pub fn len(&self) -> usize {
        10 * self.n()
    }

    pub fn is_empty(&self) -> bool {
        self.n() == 0
    }

    pub fn group(&self, g: ThetaGroup) -> &Vec<f64> {
        match g {
            ThetaGroup::ThetaAlpha => &self.theta_alpha,
            ThetaGroup::ThetaDelta => &self.theta_delta,
            ThetaGroup::ThetaB => &self.theta_b,
            ThetaGroup::ThetaS => &self.theta_s,
            ThetaGroup::Phi1 => &self.phi1,
            ThetaGroup::Phi2 => &self.phi2,
            ThetaGroup::Phi3 => &self.phi3,
            ThetaGroup::T1 => &self.t1,
            ThetaGroup::T2 => &self.t2,
            ThetaGroup::T3 => &self.t3,
        }
    }

    pub fn group_mut(&mut self, g: ThetaGroup) -> &mut Vec<f64> {
        match g {
            ThetaGroup::ThetaAlpha => &mut self.theta_alpha,
            ThetaGroup::ThetaDelta => &mut self.theta_delta,
            ThetaGroup::ThetaB => &mut self.theta_b,
            ThetaGroup::ThetaS => &mut self.theta_s,
            ThetaGroup::Phi1 => &mut self.phi1,
            ThetaGroup::Phi2 => &mut self.phi2,
            ThetaGroup::Phi3 => &mut self.phi3,
            ThetaGroup::T1 => &mut self.t1,
            ThetaGroup::T2 => &mut self.t2,
            ThetaGroup::T3 => &mut self.t3,
        }
    }

    /// Flat index of agent `i` in group `g`.
    pub fn flat_index(&self, g: ThetaGroup, i: usize) -> usize {
        g.index() * self.n() + i
    }

    pub fn to_vec(&self) -> Vec<f64> {
        ThetaGroup::ALL.iter().flat_map(|&g| self.group(g).iter().copied()).collect()
    }

    pub fn from_slice(n: usize, flat: &[f64]) -> Result<Self, MpcError> {
        if flat.len() != 10 * n {
            return Err(MpcError::Dimension(format!("theta vector of length {} for {n} agents", flat.len())));
        }
        let mut t = Self::zeros(n);
        for (gi, &g) in ThetaGroup::ALL.iter().enumerate() {
            t.group_mut(g).copy_from_slice(&flat[gi * n..(gi + 1) * n]);
        }
        Ok(t)
    }

    /// `theta_alpha[0]`, `theta_alpha[1]`, … in flattening order.
    pub fn names(n: usize) -> Vec<String> {
        ThetaGroup::ALL.iter().flat_map(|g| (0..n).map(move |i| format!("{}[{i}]", g.name()))).collect()
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        let n = self.n();
        for g in ThetaGroup::ALL {
            let v = self.group(g);
            if v.len() != n {
                return Err(MpcError::InvalidTheta(format!("{} has {} entries, expected {n}", g.name(), v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(MpcError::InvalidTheta(format!("{} has non-finite entries", g.name())));
            }
        }
        if let Some(i) = (0..n).find(|&i| self.phi1[i] < 0.0 || self.t1[i] < 0.0) {
            return Err(MpcError::InvalidTheta(format!("phi1/t1 of agent {i} must be nonnegative")));
        }
        if let Some(i) = (0..n).find(|&i| self.theta_alpha[i] < ALPHA_MIN) {
            return Err(MpcError::InvalidTheta(format!(
                "theta_alpha[{i}] = {} is below {ALPHA_MIN}",
                self.theta_alpha[i]
            )));
        }
        Ok(())
    }
}

/// Clips `φ₁, T₁` to be nonnegative and `θ_α` to at least [`ALPHA_MIN`].
pub fn project_theta(theta: &Theta) -> Theta {
    let mut t = theta.clone();
    for v in t.phi1.iter_mut().chain(t.t1.iter_mut()) {
        *v = v.max(0.0);
    }
    for v in t.theta_alpha.iter_mut() {
        *v = v.max(ALPHA_MIN);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Stage slack weights `[upper, lower]` per agent.
    pub omega: Vec<[f64; 2]>,
    /// Terminal slack weights per agent.
    pub omega_f: Vec<[f64; 2]>,
    pub gamma: f64,
    /// Weight of `b² + s²` in every stage.
    pub u_reg: f64,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Threshold below which an inequality with both slack and multiplier
    /// small counts as weakly active.
    #[serde(default = "default_sc_tol")]
    pub sc_tol: f64,
}

fn default_sc_tol() -> f64 {
    1e-9
}

impl MpcConfig {
    /// `N = 12`, `ω = ω_f = [20, 20]`, `γ = 0.99`, `u_reg = 1e-2`.
    pub fn reference(n: usize) -> Self {
        Self {
            horizon: 12,
            omega: vec![[20.0, 20.0]; n],
            omega_f: vec![[20.0, 20.0]; n],
            gamma: 0.99,
            u_reg: 1e-2,
            solver: SolverSettings::default(),
            sc_tol: default_sc_tol(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), MpcError> {
        if self.horizon == 0 {
            return Err(MpcError::Config("horizon must be at least 1".into()));
        }
        if self.omega.len() != n || self.omega_f.len() != n {
            return Err(MpcError::Config(format!("slack weights must have {n} entries")));
        }
        if self.omega.iter().chain(&self.omega_f).flatten().any(|w| !(*w > 0.0)) {
            return Err(MpcError::Config("slack weights must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(MpcError::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.u_reg >= 0.0) {
            return Err(MpcError::Config("u_reg must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Index bookkeeping for the assembled QP.
///
/// Per agent the variables are `soc₀…soc_N, b₀…b_{N−1}, s₀…s_{N−1}` followed by
/// the slack pairs `(σ_j[0], σ_j[1])` for `j = 0…N`. Equalities are, per agent,
/// the initial condition then the `N` dynamics rows. Inequalities come in four
/// blocks: SOC bands, slack nonnegativity, input boxes, grid peak sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MpcLayout {
    pub n: usize,
    pub horizon: usize,
}

impl MpcLayout {
    pub fn new(n: usize, horizon: usize) -> Self {
        Self { n, horizon }
    }

    pub fn vars_per_agent(&self) -> usize {
        5 * self.horizon + 3
    }

    pub fn num_vars(&self) -> usize {
        self.n * self.vars_per_agent()
    }

    pub fn num_eq(&self) -> usize {
        self.n * (self.horizon + 1)
    }

    pub fn num_ineq(&self) -> usize {
        4 * self.n * (self.horizon + 1) + 4 * self.n * self.horizon + 2 * self.horizon
    }

    pub fn soc(&self, i: usize, j: usize) -> usize {
        i * self.vars_per_agent() + j
    }

    pub fn buy(&self, i: usize, j: usize) -> usize {
        i * self.vars_per_agent() + self.horizon + 1 + j
    }

    pub fn sell(&self, i: usize, j: usize) -> usize {
        i * self.vars_per_agent() + 2 * self.horizon + 1 + j
    }

    /// `side` 0 is the upper-band slack, 1 the lower-band slack.
    pub fn slack(&self, i: usize, j: usize, side: usize) -> usize {
        i * self.vars_per_agent() + 3 * self.horizon + 1 + 2 * j + side
    }

    pub fn eq_initial(&self, i: usize) -> usize {
        i * (self.horizon + 1)
    }

    pub fn eq_dynamics(&self, i: usize, j: usize) -> usize {
        i * (self.horizon + 1) + 1 + j
    }

    pub fn ineq_band(&self, i: usize, j: usize, side: usize) -> usize {
        i * 2 * (self.horizon + 1) + 2 * j + side
    }

    pub fn ineq_slack_nonneg(&self, i: usize, j: usize, side: usize) -> usize {
        2 * self.n * (self.horizon + 1) + self.ineq_band(i, j, side)
    }

    /// `kind`: 0 `b ≤ Ū`, 1 `−b ≤ 0`, 2 `s ≤ Ū`, 3 `−s ≤ 0`.
    pub fn ineq_box(&self, i: usize, j: usize, kind: usize) -> usize {
        4 * self.n * (self.horizon + 1) + i * 4 * self.horizon + 4 * j + kind
    }

    /// `side` 0 bounds the summed buys, 1 the summed sells.
    pub fn ineq_peak(&self, j: usize, side: usize) -> usize {
        4 * self.n * (self.horizon + 1) + 4 * self.n * self.horizon + 2 * j + side
    }

    pub fn var_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.num_vars()];
        for i in 0..self.n {
            for j in 0..=self.horizon {
                names[self.soc(i, j)] = format!("soc[{i}][{j}]");
                names[self.slack(i, j, 0)] = format!("sigma_hi[{i}][{j}]");
                names[self.slack(i, j, 1)] = format!("sigma_lo[{i}][{j}]");
            }
            for j in 0..self.horizon {
                names[self.buy(i, j)] = format!("b[{i}][{j}]");
                names[self.sell(i, j)] = format!("s[{i}][{j}]");
            }
        }
        names
    }

    pub fn con_names(&self) -> Vec<String> {
        let mut eq = vec![String::new(); self.num_eq()];
        let mut ineq = vec![String::new(); self.num_ineq()];
        for i in 0..self.n {
            eq[self.eq_initial(i)] = format!("init[{i}]");
            for j in 0..self.horizon {
                eq[self.eq_dynamics(i, j)] = format!("dyn[{i}][{j}]");
                for (kind, tag) in ["b_max", "b_min", "s_max", "s_min"].iter().enumerate() {
                    ineq[self.ineq_box(i, j, kind)] = format!("{tag}[{i}][{j}]");
                }
            }
            for j in 0..=self.horizon {
                ineq[self.ineq_band(i, j, 0)] = format!("band_hi[{i}][{j}]");
                ineq[self.ineq_band(i, j, 1)] = format!("band_lo[{i}][{j}]");
                ineq[self.ineq_slack_nonneg(i, j, 0)] = format!("sigma_hi_nonneg[{i}][{j}]");
                ineq[self.ineq_slack_nonneg(i, j, 1)] = format!("sigma_lo_nonneg[{i}][{j}]");
            }
        }
        for j in 0..self.horizon {
            ineq[self.ineq_peak(j, 0)] = format!("peak_buy[{j}]");
            ineq[self.ineq_peak(j, 1)] = format!("peak_sell[{j}]");
        }
        eq.extend(ineq);
        eq
    }
}

fn check_inputs(
    theta: &Theta,
    soc: &SocState,
    window: &PriceWindow,
    fleet: &FleetConfig,
    mpc: &MpcConfig,
) -> Result<(), MpcError> {
    let n = fleet.n;
    if theta.n() != n || soc.len() != n {
        return Err(MpcError::Dimension(format!(
            "theta for {} agents and state for {} agents in a fleet of {n}",
            theta.n(),
            soc.len()
        )));
    }
    if window.len() != mpc.horizon || window.sell.len() != mpc.horizon {
        return Err(MpcError::Dimension(format!(
            "price window of length {} for horizon {}",
            window.len(),
            mpc.horizon
        )));
    }
    theta.validate()?;
    mpc.validate(n)
}

/// Assembles the MPC problem for the current state and price forecast.
pub fn build_qp(
    theta: &Theta,
    soc: &SocState,
    window: &PriceWindow,
    fleet: &FleetConfig,
    mpc: &MpcConfig,
) -> Result<QpProblem, MpcError> {
    check_inputs(theta, soc, window, fleet, mpc)?;
    let n = fleet.n;
    let nh = mpc.horizon;
    let lay = MpcLayout::new(n, nh);
    let nv = lay.num_vars();
    let disc: Vec<f64> = (0..=nh).map(|j| mpc.gamma.powi(j as i32)).collect();

    let mut h = Vec::new();
    let mut g = vec![0.0; nv];
    let mut a = Vec::new();
    let mut b = vec![0.0; lay.num_eq()];
    let mut c = Vec::new();
    let mut d = vec![0.0; lay.num_ineq()];

    for i in 0..n {
        for j in 0..nh {
            h.push((lay.soc(i, j), lay.soc(i, j), 2.0 * disc[j] * theta.phi1[i]));
            g[lay.soc(i, j)] = disc[j] * theta.phi2[i];
            h.push((lay.buy(i, j), lay.buy(i, j), 2.0 * mpc.u_reg));
            h.push((lay.sell(i, j), lay.sell(i, j), 2.0 * mpc.u_reg));
            g[lay.buy(i, j)] = disc[j] * (window.buy[j] + theta.theta_b[i]);
            g[lay.sell(i, j)] = -disc[j] * (window.sell[j] + theta.theta_s[i]);
            for side in 0..2 {
                g[lay.slack(i, j, side)] = disc[j] * mpc.omega[i][side];
            }
        }
        h.push((lay.soc(i, nh), lay.soc(i, nh), 2.0 * theta.t1[i]));
        g[lay.soc(i, nh)] = theta.t2[i];
        for side in 0..2 {
            g[lay.slack(i, nh, side)] = mpc.omega_f[i][side];
        }

        a.push((lay.eq_initial(i), lay.soc(i, 0), 1.0));
        b[lay.eq_initial(i)] = soc.soc[i];
        for j in 0..nh {
            let r = lay.eq_dynamics(i, j);
            a.push((r, lay.soc(i, j + 1), 1.0));
            a.push((r, lay.soc(i, j), -1.0));
            a.push((r, lay.buy(i, j), -theta.theta_alpha[i]));
            a.push((r, lay.sell(i, j), theta.theta_alpha[i]));
            b[r] = theta.theta_delta[i];
        }

        for j in 0..=nh {
            let r = lay.ineq_band(i, j, 0);
            c.push((r, lay.soc(i, j), 1.0));
            c.push((r, lay.slack(i, j, 0), -1.0));
            d[r] = SOC_BAND_HIGH;
            let r = lay.ineq_band(i, j, 1);
            c.push((r, lay.soc(i, j), -1.0));
            c.push((r, lay.slack(i, j, 1), -1.0));
            d[r] = -SOC_BAND_LOW;
            for side in 0..2 {
                c.push((lay.ineq_slack_nonneg(i, j, side), lay.slack(i, j, side), -1.0));
            }
        }
        for j in 0..nh {
            c.push((lay.ineq_box(i, j, 0), lay.buy(i, j), 1.0));
            d[lay.ineq_box(i, j, 0)] = fleet.u_max[i];
            c.push((lay.ineq_box(i, j, 1), lay.buy(i, j), -1.0));
            c.push((lay.ineq_box(i, j, 2), lay.sell(i, j), 1.0));
            d[lay.ineq_box(i, j, 2)] = fleet.u_max[i];
            c.push((lay.ineq_box(i, j, 3), lay.sell(i, j), -1.0));
        }
    }
    for j in 0..nh {
        for i in 0..n {
            c.push((lay.ineq_peak(j, 0), lay.buy(i, j), 1.0));
            c.push((lay.ineq_peak(j, 1), lay.sell(i, j), 1.0));
        }
        d[lay.ineq_peak(j, 0)] = fleet.p_max;
        d[lay.ineq_peak(j, 1)] = fleet.p_max;
    }

    Ok(QpProblem::new(
        CsrMatrix::from_triplets(nv, nv, &h),
        g,
        CsrMatrix::from_triplets(lay.num_eq(), nv, &a),
        b,
        CsrMatrix::from_triplets(lay.num_ineq(), nv, &c),
        d,
    ))
}

/// Snapshot of one MPC solve for offline inspection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub theta: Theta,
    pub soc: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub kkt_residual_norm: f64,
    pub first_stage_buy: Vec<f64>,
    pub first_stage_sell: Vec<f64>,
    /// Names of the inequalities reported active.
    pub active_set: Vec<String>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl Diagnostics {
    pub fn new(theta: &Theta, soc: &SocState, layout: &MpcLayout, sol: &QpSolution) -> Self {
        let names = layout.con_names();
        let me = layout.num_eq();
        Self {
            theta: theta.clone(),
            soc: soc.soc.clone(),
            status: sol.status,
            iterations: sol.iterations,
            kkt_residual_norm: sol.kkt_residual_norm,
            first_stage_buy: (0..layout.n).map(|i| sol.x[layout.buy(i, 0)]).collect(),
            first_stage_sell: (0..layout.n).map(|i| sol.x[layout.sell(i, 0)]).collect(),
            active_set: sol.active_set.iter().map(|&k| names[me + k].clone()).collect(),
            lambda: sol.lambda.clone(),
            mu: sol.mu.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagnostics serialize")
    }
}

/// Solved MPC instance.
#[derive(Debug, Clone)]
pub struct MpcSolution {
    pub problem: QpProblem,
    pub solution: QpSolution,
    pub layout: MpcLayout,
}

impl MpcSolution {
    /// First-stage net power `b₀ − s₀` per agent.
    pub fn action(&self) -> ControlAction {
        let lay = &self.layout;
        ControlAction::new(
            (0..lay.n).map(|i| self.solution.x[lay.buy(i, 0)] - self.solution.x[lay.sell(i, 0)]).collect(),
        )
    }

    /// Predicted SOC trajectory of agent `i`.
    pub fn predicted_soc(&self, i: usize) -> Vec<f64> {
        (0..=self.layout.horizon).map(|j| self.solution.x[self.layout.soc(i, j)]).collect()
    }

    pub fn planned_buy(&self, i: usize) -> Vec<f64> {
        (0..self.layout.horizon).map(|j| self.solution.x[self.layout.buy(i, j)]).collect()
    }

    pub fn planned_sell(&self, i: usize) -> Vec<f64> {
        (0..self.layout.horizon).map(|j| self.solution.x[self.layout.sell(i, j)]).collect()
    }
}

/// Builds and solves the MPC; any status other than solved is an error
/// carrying a [`Diagnostics`] snapshot.
pub fn solve_mpc(
    theta: &Theta,
    soc: &SocState,
    window: &PriceWindow,
    fleet: &FleetConfig,
    mpc: &MpcConfig,
) -> Result<MpcSolution, MpcError> {
    let problem = build_qp(theta, soc, window, fleet, mpc)?;
    let solution = qp::solve(&problem, &mpc.solver)?;
    let layout = MpcLayout::new(fleet.n, mpc.horizon);
    if !solution.is_solved() {
        let diag = Diagnostics::new(theta, soc, &layout, &solution);
        log::error!("MPC solve failed: {}", diag.to_json());
        return Err(MpcError::Unsolved(Box::new(diag)));
    }
    Ok(MpcSolution { problem, solution, layout })
}

/// The MPC policy `π_θ(s)`: first-stage `b − s` per agent.
pub fn policy(
    theta: &Theta,
    soc: &SocState,
    window: &PriceWindow,
    fleet: &FleetConfig,
    mpc: &MpcConfig,
) -> Result<ControlAction, MpcError> {
    Ok(solve_mpc(theta, soc, window, fleet, mpc)?.action())
}

/// Per-hour output of [`MpcPolicy`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInfo {
    /// `∇_θπ` (`|θ| × n`), absent when not requested or degenerate.
    pub sensitivity: Option<DMatrix<f64>>,
    /// The sensitivity was requested but the active set was degenerate.
    pub degenerate: bool,
    pub iterations: usize,
}

/// Closed-loop MPC policy reading forecasts from a price series.
#[derive(Debug, Clone)]
pub struct MpcPolicy<'a> {
    pub theta: &'a Theta,
    pub fleet: &'a FleetConfig,
    pub mpc: &'a MpcConfig,
    pub prices: &'a PriceSeries,
    pub with_sensitivity: bool,
}

impl Policy for MpcPolicy<'_> {
    type Info = PolicyInfo;
    type Error = MpcError;

    fn act(&self, k: usize, state: &SocState) -> Result<(ControlAction, PolicyInfo), MpcError> {
        let window = forecast_window(self.prices, k, self.mpc.horizon);
        let sol = solve_mpc(self.theta, state, &window, self.fleet, self.mpc)?;
        let mut info = PolicyInfo { sensitivity: None, degenerate: false, iterations: sol.solution.iterations };
        if self.with_sensitivity {
            match sensitivity_from_solution(self.theta, &sol, self.mpc) {
                Ok(m) => info.sensitivity = Some(m),
                Err(e) => {
                    log::debug!("hour {k}: zero-gradient sample ({e})");
                    info.degenerate = true;
                }
            }
        }
        Ok((sol.action(), info))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (FleetConfig, MpcConfig, Theta, PriceWindow) {
        let fleet = FleetConfig::reference();
        let mpc = MpcConfig::reference(3);
        let theta = Theta::nominal(&fleet);
        let window = PriceWindow::constant(30.0, 15.0, 12);
        (fleet, mpc, theta, window)
    }

    #[test]
    fn reference_dimensions() {
        let (fleet, mpc, theta, window) = setup();
        let p = build_qp(&theta, &SocState::uniform(3, 0.5), &window, &fleet, &mpc).unwrap();
        assert_eq!((p.num_vars(), p.num_eq(), p.num_ineq()), (189, 39, 324));
        let lay = MpcLayout::new(3, 12);
        let names = lay.var_names();
        assert!(names.iter().all(|s| !s.is_empty()));
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 189);
        assert!(lay.con_names().iter().all(|s| !s.is_empty()));
    }

    #[test]
    fn pure_lp_when_quadratic_terms_vanish() {
        let (fleet, mut mpc, theta, window) = setup();
        mpc.u_reg = 0.0;
        let p = build_qp(&theta, &SocState::uniform(3, 0.5), &window, &fleet, &mpc).unwrap();
        assert!(p.h.is_zero());
    }

    #[test]
    fn flattening_round_trip() {
        let mut t = Theta::zeros(3);
        for (k, v) in t.phi2.iter_mut().enumerate() {
            *v = k as f64;
        }
        t.t3[2] = -4.0;
        let flat = t.to_vec();
        assert_eq!(flat.len(), 30);
        assert_eq!(flat[t.flat_index(ThetaGroup::Phi2, 1)], 1.0);
        assert_eq!(flat[29], -4.0);
        assert_eq!(Theta::from_slice(3, &flat).unwrap(), t);
        assert_eq!(Theta::names(3)[t.flat_index(ThetaGroup::T1, 0)], "t1[0]");
    }

    #[test]
    fn projection_examples() {
        let fleet = FleetConfig::reference();
        let mut t = Theta::nominal(&fleet);
        assert_eq!(project_theta(&t), t);
        t.phi1[0] = -0.2;
        t.theta_alpha[1] = 0.0;
        t.t1[2] = -1.0;
        t.phi2[0] = -5.0;
        let p = project_theta(&t);
        assert_eq!(p.phi1[0], 0.0);
        assert_eq!(p.theta_alpha[1], ALPHA_MIN);
        assert_eq!(p.t1[2], 0.0);
        assert_eq!(p.phi2[0], -5.0);
        p.validate().unwrap();
        assert!(t.validate().is_err());
    }

    #[test]
    fn wrong_window_length_is_rejected() {
        let (fleet, mpc, theta, _) = setup();
        let w = PriceWindow::constant(30.0, 15.0, 5);
        assert!(matches!(build_qp(&theta, &SocState::uniform(3, 0.5), &w, &fleet, &mpc), Err(MpcError::Dimension(_))));
    }

    #[test]
    fn cheap_energy_now_is_bought_within_bounds() {
        let (fleet, mpc, mut theta, _) = setup();
        // Cheap now, expensive later: store energy while the peak bound binds.
        let mut window = PriceWindow::constant(60.0, 30.0, 12);
        window.buy[0] = 5.0;
        window.sell[0] = 2.5;
        theta.phi2 = vec![-100.0; 3];
        let a = policy(&theta, &SocState::uniform(3, 0.5), &window, &fleet, &mpc).unwrap();
        let total: f64 = (0..3).map(|i| a.buy(i)).sum();
        for i in 0..3 {
            assert!(a.a[i] > 0.0 && a.a[i] <= 1.0 + 1e-8, "{:?}", a.a);
            assert!((a.a[i] - 0.5).abs() < 1e-5, "symmetric split of the peak, got {:?}", a.a);
        }
        assert!(total <= fleet.p_max + 1e-6);
    }

    #[test]
    fn diagnostics_serialize() {
        let (fleet, mpc, theta, window) = setup();
        let soc = SocState::uniform(3, 0.5);
        let sol = solve_mpc(&theta, &soc, &window, &fleet, &mpc).unwrap();
        let diag = Diagnostics::new(&theta, &soc, &sol.layout, &sol.solution);
        let json = diag.to_json();
        assert!(json.contains("\"first_stage_buy\""));
        assert_eq!(diag.first_stage_buy.len(), 3);
    }
}
