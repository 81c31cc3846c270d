//! Computes the policy sensitivity ∇θπ by implicit differentiation and
//! compares a few rows with central differences.

use battery_mpcrl::model::{FleetConfig, SocState};
use battery_mpcrl::mpc::{policy, policy_sensitivity, MpcConfig, Theta};
use battery_mpcrl::prices::{forecast_window, synth_daily, SyntheticProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fleet = FleetConfig::uniform(2, 1.0 / 12.0, 0.0, 0.5, 1.0, 1.5, 1000.0, 0.99);
    let mpc = MpcConfig::reference(fleet.n);
    let prices = synth_daily(&SyntheticProfile::default(), 0.5)?;
    let window = forecast_window(&prices, 3, mpc.horizon);
    let mut theta = Theta::nominal(&fleet);
    theta.phi1 = vec![200.0, 150.0];
    theta.phi2 = vec![-200.0, -150.0];
    theta.t1 = vec![40.0, 40.0];
    theta.t2 = vec![-40.0, -40.0];
    let soc = SocState::new(vec![0.45, 0.56]);

    let grad = match policy_sensitivity(&theta, &soc, &window, &fleet, &mpc)? {
        Ok(g) => g,
        Err(e) => {
            println!("sensitivity unavailable: {e}");
            return Ok(());
        }
    };
    let names = Theta::names(fleet.n);
    let base = theta.to_vec();
    let h = 1e-5;
    println!("{:>16} {:>13} {:>13} {:>13} {:>13}", "parameter", "dπ0 (KKT)", "dπ0 (FD)", "dπ1 (KKT)", "dπ1 (FD)");
    for (k, name) in names.iter().enumerate() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[k] += h;
        minus[k] -= h;
        let (Ok(tp), Ok(tm)) = (Theta::from_slice(fleet.n, &plus), Theta::from_slice(fleet.n, &minus)) else {
            continue;
        };
        if tm.validate().is_err() {
            continue;
        }
        let ap = policy(&tp, &soc, &window, &fleet, &mpc)?;
        let am = policy(&tm, &soc, &window, &fleet, &mpc)?;
        let fd: Vec<f64> = (0..fleet.n).map(|i| (ap.a[i] - am.a[i]) / (2.0 * h)).collect();
        println!("{name:>16} {:>13.5e} {:>13.5e} {:>13.5e} {:>13.5e}", grad[(k, 0)], fd[0], grad[(k, 1)], fd[1]);
    }
    Ok(())
}
