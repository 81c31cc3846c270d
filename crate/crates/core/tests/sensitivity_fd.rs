mod common;

use battery_mpcrl::model::FleetConfig;
use battery_mpcrl::mpc::{sensitivity_from_solution, solve_mpc, MpcConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sensitivity_matches_central_differences_on_small_fleets() {
    let fleet = FleetConfig::uniform(2, 1.0 / 12.0, 0.0, 0.5, 1.0, 1.5, 1000.0, 0.99);
    let mut mpc = MpcConfig::reference(2);
    mpc.horizon = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 15 {
        attempts += 1;
        assert!(attempts < 500, "too few strictly complementary instances");
        let (theta, soc, window) = common::random_mpc_instance(&mut rng, &fleet, mpc.horizon);
        let sol = solve_mpc(&theta, &soc, &window, &fleet, &mpc).unwrap();
        if common::complementarity_margin(&sol) < 1e-5 {
            continue;
        }
        let Ok(grad) = sensitivity_from_solution(&theta, &sol, &mpc) else { continue };
        let Some(fd) = common::fd_policy_jacobian(&theta, &soc, &window, &fleet, &mpc, 1e-5) else { continue };
        for (k, row) in fd.iter().enumerate() {
            for (i, &f) in row.iter().enumerate() {
                let an = grad[(k, i)];
                assert!((an - f).abs() <= 1e-4 * f.abs() + 1e-7, "instance {attempts}, θ[{k}], agent {i}: {an} vs {f}");
            }
        }
        checked += 1;
    }
}
