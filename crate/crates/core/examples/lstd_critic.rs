//! Fits the compatible critic on one month of closed-loop data and prints the
//! resulting policy gradient by parameter.

use battery_mpcrl::model::{rollout_month, FleetConfig, RolloutSettings};
use battery_mpcrl::mpc::{MpcConfig, MpcPolicy, Theta};
use battery_mpcrl::prices::{synth_daily, SyntheticProfile};
use battery_mpcrl::rl::{lstd_fit, policy_gradient, samples_from_rollout, DEFAULT_RIDGE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fleet = FleetConfig::reference();
    let mut mpc = MpcConfig::reference(fleet.n);
    mpc.u_reg = 1e-2;
    let prices = synth_daily(&SyntheticProfile::default(), 0.5)?;
    let theta = Theta::nominal(&fleet);
    let settings = RolloutSettings { exploration_scale: 0.3, ..RolloutSettings::default() };
    let policy = MpcPolicy { theta: &theta, fleet: &fleet, mpc: &mpc, prices: &prices, with_sensitivity: true };
    let month = rollout_month(&policy, &prices, &fleet, &settings, 30, 0, 1)?;
    let samples = samples_from_rollout(&month.transitions, &month.infos, theta.len());
    let critic = lstd_fit(&samples, fleet.gamma, DEFAULT_RIDGE)?;
    let sens: Vec<_> = month.infos.iter().map(|i| i.sensitivity.as_ref()).collect();
    let report = policy_gradient(&sens, &critic.w, 0);
    println!("samples {} (degenerate {}), |grad| = {:.4e}", sens.len(), report.samples_degenerate, report.grad_norm);
    println!("baseline v = {:?}", critic.v);
    for (name, (w, g)) in Theta::names(fleet.n).iter().zip(critic.w.iter().zip(&report.grad)) {
        println!("{name:>16}  w = {w:>12.4e}  grad = {g:>12.4e}");
    }
    Ok(())
}
