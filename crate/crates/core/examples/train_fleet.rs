//! Short learning run on the reference fleet; pass an output directory to
//! write the CSV artifacts.

use battery_mpcrl::train::{train, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = RunConfig { months: 4, days_per_month: 10, master_seed: 7, ..RunConfig::default() };
    cfg.output_dir = std::env::args().nth(1).map(Into::into);
    let out = train(&cfg, None)?;
    for m in &out.metrics.months {
        println!(
            "month {:>2}  J = {:>9.2}  |grad| = {:>10.3e}  band violations = {:.3}  max planned peak = {:.3}",
            m.month, m.j_discounted, m.grad_norm, m.band_violation_rate, m.max_planned_peak
        );
    }
    println!("final theta: {}", serde_json::to_string(&out.metrics.final_theta)?);
    Ok(())
}
