//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test --release --test acceptance`.

mod common;

use std::fs;
use std::time::{Duration, Instant};

use battery_mpcrl::model::{rollout_month, FleetConfig, RolloutSettings};
use battery_mpcrl::mpc::{sensitivity_from_solution, solve_mpc, MpcConfig, MpcPolicy, Theta, ThetaGroup};
use battery_mpcrl::prices::{synth_daily, PriceSeries, SyntheticProfile};
use battery_mpcrl::qp::{kkt_residual, solve, QpStatus, SolverSettings};
use battery_mpcrl::rl::{lstd_fit, policy_gradient, samples_from_rollout, LstdSample, DEFAULT_RIDGE};
use battery_mpcrl::train::{run, train, RunConfig, RunOutput};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, elapsed: Duration, o: &Outcome) {
    println!(
        "criterion {id} [{name}]: {} ({:.1} s) {}",
        if o.pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        o.detail
    );
}

fn qp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut solve_time = Duration::ZERO;
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=25);
        let me = rng.random_range(0..=n.min(4) - 1);
        let mi = rng.random_range(0..=10);
        let p = common::random_qp(&mut rng, n, me, mi);
        let t = Instant::now();
        let sol = solve(&p, &SolverSettings::default()).expect("well-formed QP");
        solve_time += t.elapsed();
        let (best, _) = common::enumerate_active_sets(&p).expect("feasible by construction");
        if sol.status != QpStatus::Solved {
            failures += 1;
            continue;
        }
        worst = worst.max((p.objective(&sol.x) - best).abs());
    }
    Outcome {
        pass: failures == 0 && worst <= 1e-6 && solve_time.as_secs_f64() < 10.0,
        detail: format!(
            "200 QPs, unsolved {failures}, max |Δobjective| {worst:.2e}, interior-point time {:.2} s",
            solve_time.as_secs_f64()
        ),
    }
}

fn kkt_residuals() -> Outcome {
    let fleet = FleetConfig::reference();
    let mpc = MpcConfig::reference(fleet.n);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut unsolved = 0;
    for _ in 0..1000 {
        let (theta, soc, window) = common::random_mpc_instance(&mut rng, &fleet, mpc.horizon);
        match solve_mpc(&theta, &soc, &window, &fleet, &mpc) {
            Ok(sol) => {
                let r = kkt_residual(&sol.problem, &sol.solution.x, &sol.solution.lambda, &sol.solution.mu).unwrap();
                let slack = sol.solution.slacks(&sol.problem);
                let infeas = slack.iter().fold(0.0_f64, |m, s| m.max(-s));
                let neg_mu = sol.solution.mu.iter().fold(0.0_f64, |m, v| m.max(-v));
                worst = worst.max(r.iter().fold(infeas.max(neg_mu), |m, v| m.max(v.abs())));
            }
            Err(_) => unsolved += 1,
        }
    }
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("1000 draws, {unsolved} unsolved, max ‖R‖∞ over solved {worst:.2e}"),
    }
}

fn sensitivity_fd() -> Outcome {
    let fleet = FleetConfig::reference();
    let mpc = MpcConfig::reference(fleet.n);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let start = Instant::now();
    let (mut checked, mut drawn, mut mismatched, mut rejected) = (0, 0, 0, 0);
    let mut worst_rel: f64 = 0.0;
    while checked < 100 && drawn < 2000 {
        drawn += 1;
        let (theta, soc, window) = common::random_mpc_instance(&mut rng, &fleet, mpc.horizon);
        let Ok(sol) = solve_mpc(&theta, &soc, &window, &fleet, &mpc) else { continue };
        if common::complementarity_margin(&sol) < 1e-6 {
            continue;
        }
        let Ok(grad) = sensitivity_from_solution(&theta, &sol, &mpc) else {
            rejected += 1;
            continue;
        };
        let Some(fd) = common::fd_policy_jacobian(&theta, &soc, &window, &fleet, &mpc, 1e-5) else { continue };
        checked += 1;
        let mut ok = true;
        for (k, row) in fd.iter().enumerate() {
            for (i, &f) in row.iter().enumerate() {
                let err = (grad[(k, i)] - f).abs();
                if err > 1e-4 * f.abs() + 1e-7 {
                    ok = false;
                }
                if f.abs() > 1e-3 {
                    worst_rel = worst_rel.max(err / f.abs());
                }
            }
        }
        if !ok {
            mismatched += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: checked == 100 && mismatched == 0 && secs < 60.0,
        detail: format!(
            "{checked} strictly complementary instances of {drawn} drawn ({rejected} rejected by the sensitivity solve), {mismatched} mismatched, worst relative error {worst_rel:.2e}"
        ),
    }
}

fn lstd_oracle() -> Outcome {
    let gamma = 0.9;
    let one_hot = |k: usize| -> Vec<f64> { (0..2).map(|i| if i == k { 1.0 } else { 0.0 }).collect() };
    let p = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4]);
    let c = DVector::from_vec(vec![1.0, 2.0]);
    let mut samples = Vec::new();
    for (s, counts) in [(0usize, [3, 7]), (1, [6, 4])] {
        for (next, &k) in counts.iter().enumerate() {
            for _ in 0..k {
                samples.push(LstdSample { compat: vec![], phi: one_hot(s), phi_next: one_hot(next), cost: c[s] });
            }
        }
    }
    let fit = lstd_fit(&samples, gamma, 0.0).unwrap();
    let exact = (DMatrix::identity(2, 2) - &p * gamma).lu().solve(&c).unwrap();
    let chain_err = (0..2).map(|s| (fit.v[s] - exact[s]).abs()).fold(0.0, f64::max);
    let g = 0.99;
    let self_loop = lstd_fit(&[LstdSample { compat: vec![], phi: vec![1.0], phi_next: vec![1.0], cost: 1.0 }], g, 0.0)
        .unwrap()
        .v[0];
    Outcome {
        pass: chain_err <= 1e-9 && self_loop == 1.0 / (1.0 - g),
        detail: format!("chain max error {chain_err:.2e}, self-loop v = {self_loop} (1/(1−γ) = {})", 1.0 / (1.0 - g)),
    }
}

/// Exploration-free discounted return of one month, averaged per transition.
fn deterministic_return(theta: &Theta, fleet: &FleetConfig, mpc: &MpcConfig, prices: &PriceSeries) -> f64 {
    let settings = RolloutSettings { exploration_scale: 0.0, ..RolloutSettings::default() };
    let pol = MpcPolicy { theta, fleet, mpc, prices, with_sensitivity: false };
    let r = rollout_month(&pol, prices, fleet, &settings, 30, 0, 0).unwrap();
    let total: f64 = r.transitions.iter().map(|t| fleet.gamma.powi(t.hour as i32) * t.realized_cost).sum();
    total / r.transitions.len() as f64
}

fn gradient_check() -> Outcome {
    let fleet = FleetConfig::uniform(1, 1.0 / 12.0, 0.0, 0.0, 1.0, 1.5, 1000.0, 0.99);
    let mpc = MpcConfig::reference(1);
    let prices = synth_daily(&SyntheticProfile::default(), 0.5).unwrap();
    let theta = Theta::nominal(&fleet);

    let settings = RolloutSettings::default();
    let pol = MpcPolicy { theta: &theta, fleet: &fleet, mpc: &mpc, prices: &prices, with_sensitivity: true };
    let month = rollout_month(&pol, &prices, &fleet, &settings, 30, 0, 0).unwrap();
    let samples = samples_from_rollout(&month.transitions, &month.infos, theta.len());
    let critic = lstd_fit(&samples, fleet.gamma, DEFAULT_RIDGE).unwrap();
    let sens: Vec<_> = month.infos.iter().map(|i| i.sensitivity.as_ref()).collect();
    let est = policy_gradient(&sens, &critic.w, 0).grad;

    let h = 1e-5;
    let base = theta.to_vec();
    let lower_bounded = [theta.flat_index(ThetaGroup::Phi1, 0), theta.flat_index(ThetaGroup::T1, 0)];
    let fd: Vec<f64> = (0..base.len())
        .map(|k| {
            let mut plus = base.clone();
            plus[k] += h;
            let mut minus = base.clone();
            let one_sided = lower_bounded.contains(&k) && base[k] < h;
            if !one_sided {
                minus[k] -= h;
            }
            let jp = deterministic_return(&Theta::from_slice(1, &plus).unwrap(), &fleet, &mpc, &prices);
            let jm = deterministic_return(&Theta::from_slice(1, &minus).unwrap(), &fleet, &mpc, &prices);
            (jp - jm) / if one_sided { h } else { 2.0 * h }
        })
        .collect();

    let max_fd = fd.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let names = Theta::names(1);
    let sign_bad: Vec<&str> = (0..fd.len())
        .filter(|&k| fd[k].abs() > 0.1 * max_fd && est[k].signum() != fd[k].signum())
        .map(|k| names[k].as_str())
        .collect();
    let mut order: Vec<usize> = (0..fd.len()).collect();
    order.sort_by(|&a, &b| fd[b].abs().total_cmp(&fd[a].abs()));
    let top: Vec<String> = order[..5].iter().map(|&k| format!("{}={:.3}", names[k], est[k] / fd[k])).collect();
    let rel_ok = order[..5].iter().all(|&k| (est[k] - fd[k]).abs() <= 0.05 * fd[k].abs());
    Outcome {
        pass: sign_bad.is_empty() && rel_ok,
        detail: format!("sign mismatches {sign_bad:?}; estimate/FD on top-5: {}", top.join(", ")),
    }
}

fn learning_config(seed: u64) -> RunConfig {
    RunConfig {
        months: 40,
        exploration_scale: 0.3,
        step_size: 1e-4,
        max_update: Some(0.02),
        frozen: vec![ThetaGroup::ThetaAlpha],
        master_seed: seed,
        ..RunConfig::default()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 0 {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

fn learning_runs() -> Vec<(u64, RunOutput)> {
    [1, 2, 3]
        .into_iter()
        .map(|seed| {
            let cfg = learning_config(seed);
            let prices = cfg.prices.load(None).unwrap();
            (seed, run(&cfg, &prices, cfg.starting_theta(), true).unwrap())
        })
        .collect()
}

fn learning_improves(runs: &[(u64, RunOutput)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, out) in runs {
        let j: Vec<f64> = out.metrics.months.iter().map(|m| m.j_discounted).collect();
        let (first, last) = (mean(&j[..5]), mean(&j[j.len() - 5..]));
        pass &= last < first;
        parts.push(format!("seed {seed}: J {first:.1} -> {last:.1}"));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn constraint_compliance(runs: &[(u64, RunOutput)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, out) in runs {
        let peak = out.last_month.iter().map(|t| t.planned_peak()).fold(0.0, f64::max);
        let m = &out.metrics.months;
        let (b0, b1) = (m[0].band_violation_rate, m[m.len() - 1].band_violation_rate);
        pass &= peak <= 1.5 + 1e-6 && b1 < b0;
        parts.push(format!("seed {seed}: max planned peak {peak:.6}, band violations {b0:.3} -> {b1:.3}"));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn gradient_norm_trend(runs: &[(u64, RunOutput)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, out) in runs {
        let g: Vec<f64> = out.metrics.months.iter().map(|m| m.grad_norm).collect();
        let (first, last) = (median(&g[..10]), median(&g[g.len() - 10..]));
        pass &= last < first;
        parts.push(format!("seed {seed}: median |grad| {first:.3e} -> {last:.3e}"));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg =
        RunConfig { months: 2, days_per_month: 3, master_seed: 99, exploration_scale: 0.3, ..RunConfig::default() };
    let files = ["metrics.csv", "theta_trace.csv", "trajectories_first.csv", "trajectories_last.csv", "peak_power.csv"];
    let mut contents = Vec::new();
    for name in ["a", "b"] {
        cfg.output_dir = Some(dir.path().join(name));
        train(&cfg, None).unwrap();
        contents.push(files.map(|f| fs::read(dir.path().join(name).join(f)).unwrap()));
    }
    let differing: Vec<&str> =
        files.iter().zip(contents[0].iter().zip(&contents[1])).filter(|(_, (a, b))| a != b).map(|(f, _)| *f).collect();
    Outcome { pass: differing.is_empty(), detail: format!("{} files compared, differing {differing:?}", files.len()) }
}

fn main() {
    let mut all = true;
    let mut check = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        report(id, name, t.elapsed(), &o);
        all &= o.pass;
    };
    check(1, "QP oracle equivalence", &mut qp_oracle);
    check(2, "KKT residual", &mut kkt_residuals);
    check(3, "sensitivity vs finite differences", &mut sensitivity_fd);
    check(4, "LSTD oracle", &mut lstd_oracle);
    check(5, "end-to-end gradient check", &mut gradient_check);
    let t = Instant::now();
    let runs = learning_runs();
    let learn_time = t.elapsed();
    check(6, "learning improves performance", &mut || {
        let mut o = learning_improves(&runs);
        o.pass &= learn_time.as_secs_f64() < 1800.0;
        o.detail.push_str(&format!("; three 40-month runs took {:.0} s", learn_time.as_secs_f64()));
        o
    });
    check(7, "constraint compliance", &mut || constraint_compliance(&runs));
    check(8, "gradient-norm trend", &mut || gradient_norm_trend(&runs));
    check(9, "determinism", &mut determinism);
    if !all {
        std::process::exit(1);
    }
}
