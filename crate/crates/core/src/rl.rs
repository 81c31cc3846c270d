//! LSTD critic with compatible action-value features and the deterministic
//! policy gradient update.
//!
//! The critic is `Q(s, a) = (a − π(s))ᵀ∇_θπ(s)ᵀw + Φ(s)ᵀv`. LSTDQ fits `(w, v)`
//! on the joint feature `z = [∇_θπ(s)(a − π(s)); Φ(s)]` with successor feature
//! `z⁺ = [0; Φ(s⁺)]`, and the policy gradient is `mean(∇_θπ ∇_θπᵀ) w`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{SocState, Transition};
use crate::mpc::{project_theta, PolicyInfo, Theta, ThetaGroup};

pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("sample {index}: {msg}")]
    Sample { index: usize, msg: String },
    #[error("LSTD system is singular after ridge")]
    Singular,
    #[error("gradient has {got} entries, theta has {expected}")]
    Dimension { got: usize, expected: usize },
}

/// `[soc₁², …, soc_n², soc₁, …, soc_n, 1]`
pub fn state_features(state: &SocState) -> Vec<f64> {
    let mut f: Vec<f64> = state.soc.iter().map(|s| s * s).collect();
    f.extend_from_slice(&state.soc);
    f.push(1.0);
    f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticWeights {
    /// Compatible (advantage) weights, one per θ entry.
    pub w: Vec<f64>,
    /// Baseline weights, one per state feature.
    pub v: Vec<f64>,
}

/// `(a − π)ᵀ ∇_θπᵀ w + Φᵀv` with `∇_θπ` of shape `|θ| × n`.
pub fn compatible_q(
    phi: &[f64],
    action: &[f64],
    policy_action: &[f64],
    sensitivity: &DMatrix<f64>,
    critic: &CriticWeights,
) -> f64 {
    let w = DVector::from_column_slice(&critic.w);
    let grad_a = sensitivity.transpose() * w;
    let adv: f64 = (0..action.len()).map(|i| (action[i] - policy_action[i]) * grad_a[i]).sum();
    adv + phi.iter().zip(&critic.v).map(|(a, b)| a * b).sum::<f64>()
}

/// One LSTDQ sample with arbitrary features.
#[derive(Debug, Clone, PartialEq)]
pub struct LstdSample {
    /// `∇_θπ(s)(a − π(s))`, zero for degenerate samples.
    pub compat: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_next: Vec<f64>,
    pub cost: f64,
}

/// Solves `(Σ z(z − γz⁺)ᵀ + ridge·I)(w; v) = Σ z·cost`.
pub fn lstd_fit(samples: &[LstdSample], gamma: f64, ridge: f64) -> Result<CriticWeights, RlError> {
    let first = samples.first().ok_or(RlError::EmptyBatch)?;
    let dw = first.compat.len();
    let dv = first.phi.len();
    let d = dw + dv;
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut b = DVector::<f64>::zeros(d);
    let mut z = DVector::<f64>::zeros(d);
    let mut zn = DVector::<f64>::zeros(d);
    for (index, s) in samples.iter().enumerate() {
        if s.compat.len() != dw || s.phi.len() != dv || s.phi_next.len() != dv {
            return Err(RlError::Sample { index, msg: "feature dimensions differ from the first sample".into() });
        }
        if !s.cost.is_finite() || s.compat.iter().chain(&s.phi).chain(&s.phi_next).any(|v| !v.is_finite()) {
            return Err(RlError::Sample { index, msg: "non-finite features or cost".into() });
        }
        z.rows_mut(0, dw).copy_from_slice(&s.compat);
        z.rows_mut(dw, dv).copy_from_slice(&s.phi);
        zn.rows_mut(dw, dv).copy_from_slice(&s.phi_next);
        let diff = &z - gamma * &zn;
        a.ger(1.0, &z, &diff, 1.0);
        b.axpy(s.cost, &z, 1.0);
    }
    for i in 0..d {
        a[(i, i)] += ridge;
    }
    let sol = a.lu().solve(&b).ok_or(RlError::Singular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(RlError::Singular);
    }
    Ok(CriticWeights { w: sol.rows(0, dw).iter().copied().collect(), v: sol.rows(dw, dv).iter().copied().collect() })
}

/// LSTDQ samples from a rollout whose infos carry the sensitivities. Each day's
/// last hour bootstraps from its post-correction successor state.
pub fn samples_from_rollout(transitions: &[Transition], infos: &[PolicyInfo], theta_len: usize) -> Vec<LstdSample> {
    transitions
        .iter()
        .zip(infos)
        .map(|(t, info)| {
            let compat = match &info.sensitivity {
                Some(m) => {
                    let dev = DVector::from_iterator(
                        t.action.a.len(),
                        (0..t.action.a.len()).map(|i| t.action.a[i] - t.planned.a[i]),
                    );
                    (m * dev).iter().copied().collect()
                }
                None => vec![0.0; theta_len],
            };
            LstdSample {
                compat,
                phi: state_features(&t.state),
                phi_next: state_features(&t.next_state),
                cost: t.realized_cost,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub grad: Vec<f64>,
    pub grad_norm: f64,
    pub samples_used: usize,
    pub samples_degenerate: usize,
    pub month_index: usize,
}

/// `mean_k ∇_θπ(s_k) ∇_θπ(s_k)ᵀ w`; `None` entries (degenerate samples)
/// contribute zero but still count towards the mean.
pub fn policy_gradient(sensitivities: &[Option<&DMatrix<f64>>], w: &[f64], month_index: usize) -> GradientReport {
    let wv = DVector::from_column_slice(w);
    let mut grad = DVector::<f64>::zeros(w.len());
    let mut used = 0;
    let mut degenerate = 0;
    for s in sensitivities {
        match s {
            Some(m) => {
                let ga = m.transpose() * &wv;
                grad.gemv(1.0, m, &ga, 1.0);
                used += 1;
            }
            None => degenerate += 1,
        }
    }
    if !sensitivities.is_empty() {
        grad /= sensitivities.len() as f64;
    }
    GradientReport {
        grad_norm: grad.norm(),
        grad: grad.iter().copied().collect(),
        samples_used: used,
        samples_degenerate: degenerate,
        month_index,
    }
}

/// `project(θ − step·grad)`, leaving frozen groups untouched.
pub fn update_theta(theta: &Theta, grad: &[f64], step: f64, frozen: &[ThetaGroup]) -> Result<Theta, RlError> {
    let mut flat = theta.to_vec();
    if grad.len() != flat.len() {
        return Err(RlError::Dimension { got: grad.len(), expected: flat.len() });
    }
    let n = theta.n();
    for g in ThetaGroup::ALL {
        if frozen.contains(&g) {
            continue;
        }
        for i in 0..n {
            let k = theta.flat_index(g, i);
            flat[k] -= step * grad[k];
        }
    }
    let next = Theta::from_slice(n, &flat).expect("length checked above");
    Ok(project_theta(&next))
}
