//! Rolls out one simulated day under the nominal MPC and writes the
//! trajectory CSV to stdout.

use battery_mpcrl::model::{rollout_day, write_transitions_csv, FleetConfig, RolloutSettings};
use battery_mpcrl::mpc::{MpcConfig, MpcPolicy, Theta};
use battery_mpcrl::prices::{synth_daily, SyntheticProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fleet = FleetConfig::reference();
    let mpc = MpcConfig::reference(fleet.n);
    let prices = synth_daily(&SyntheticProfile::default(), 0.5)?;
    let theta = Theta::nominal(&fleet);
    let policy = MpcPolicy { theta: &theta, fleet: &fleet, mpc: &mpc, prices: &prices, with_sensitivity: false };
    let day = rollout_day(&policy, &prices, &fleet, &RolloutSettings::default(), 0, 42)?;
    let total: f64 = day.transitions.iter().map(|t| t.realized_cost).sum();
    eprintln!("24 hours, realized cost {total:.2}");
    write_transitions_csv(std::io::stdout().lock(), fleet.n, &day.transitions)?;
    Ok(())
}
