//! Evaluates the MPC policy for the reference three-agent fleet at one state
//! and prints the planned trajectories.

use battery_mpcrl::model::{FleetConfig, SocState};
use battery_mpcrl::mpc::{solve_mpc, MpcConfig, Theta};
use battery_mpcrl::prices::{forecast_window, synth_daily, SyntheticProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fleet = FleetConfig::reference();
    let mpc = MpcConfig::reference(fleet.n);
    let prices = synth_daily(&SyntheticProfile::default(), 0.5)?;
    let mut theta = Theta::nominal(&fleet);
    theta.phi1 = vec![20.0; 3];
    theta.phi2 = vec![-20.0; 3];
    let soc = SocState::new(vec![0.3, 0.6, 0.85]);
    let hour = 6;
    let window = forecast_window(&prices, hour, mpc.horizon);
    let sol = solve_mpc(&theta, &soc, &window, &fleet, &mpc)?;
    println!("hour {hour}, buy prices {:?}", window.buy);
    println!("first-stage action {:?}", sol.action().a);
    for i in 0..fleet.n {
        let fmt = |v: Vec<f64>| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        println!("agent {i}");
        println!("  soc  {}", fmt(sol.predicted_soc(i)));
        println!("  buy  {}", fmt(sol.planned_buy(i)));
        println!("  sell {}", fmt(sol.planned_sell(i)));
    }
    println!("iterations {}, polished {}", sol.solution.iterations, sol.solution.polished);
    Ok(())
}
