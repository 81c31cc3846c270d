//! Seeded training and evaluation runs with CSV/JSON artifacts.
//!
//! Every month rolls out `days_per_month` independent days under the current
//! θ, fits the critic on the month's transitions, and takes one projected
//! gradient step. All randomness flows from `master_seed`, so two runs with the
//! same config write byte-identical files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    rollout_month, write_transitions_csv, FleetConfig, ModelError, Rollout, RolloutSettings, SocState, Transition,
    SOC_BAND_HIGH, SOC_BAND_LOW,
};
use crate::mpc::{policy, MpcConfig, MpcError, MpcPolicy, PolicyInfo, Theta, ThetaGroup};
use crate::prices::{forecast_window, load_csv, synth_daily, PriceError, PriceSeries, SyntheticProfile};
use crate::rl::{lstd_fit, policy_gradient, samples_from_rollout, update_theta, CriticWeights, RlError, DEFAULT_RIDGE};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Prices(#[from] PriceError),
    #[error("month {month}: {source}")]
    Rollout {
        month: usize,
        #[source]
        source: ModelError,
    },
    #[error("month {month}: {source}")]
    Learning {
        month: usize,
        #[source]
        source: RlError,
    },
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Where hourly buy prices come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriceSource {
    /// `hour_index,buy_price` file; relative paths resolve against the config file.
    Csv { path: PathBuf, sell_ratio: f64 },
    Synthetic {
        #[serde(flatten)]
        profile: SyntheticProfile,
        sell_ratio: f64,
    },
}

impl Default for PriceSource {
    fn default() -> Self {
        PriceSource::Synthetic { profile: SyntheticProfile::default(), sell_ratio: 0.5 }
    }
}

impl PriceSource {
    pub fn load(&self, base_dir: Option<&Path>) -> Result<PriceSeries, PriceError> {
        match self {
            PriceSource::Csv { path, sell_ratio } => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                load_csv(&full, *sell_ratio)
            }
            PriceSource::Synthetic { profile, sell_ratio } => synth_daily(profile, *sell_ratio),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub fleet: FleetConfig,
    pub mpc: MpcConfig,
    pub prices: PriceSource,
    pub months: usize,
    pub days_per_month: usize,
    pub hours_per_day: usize,
    pub soc_reset: f64,
    /// Exploration std as a fraction of each agent's input bound.
    pub exploration_scale: f64,
    pub step_size: f64,
    /// Bound on `‖Δθ‖∞` per month; larger steps are scaled down uniformly.
    pub max_update: Option<f64>,
    pub master_seed: u64,
    /// θ groups excluded from the gradient step.
    pub frozen: Vec<ThetaGroup>,
    pub ridge: f64,
    /// Starting θ; the nominal certainty-equivalent θ when absent.
    pub initial_theta: Option<Theta>,
    /// Hour of the day whose price forecast is used for `policy_slice.csv`.
    pub policy_slice_hour: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fleet = FleetConfig::reference();
        let mpc = MpcConfig::reference(fleet.n);
        Self {
            fleet,
            mpc,
            prices: PriceSource::default(),
            months: 100,
            days_per_month: 30,
            hours_per_day: 24,
            soc_reset: 0.6,
            exploration_scale: 0.05,
            step_size: 5e-8,
            max_update: None,
            master_seed: 0,
            frozen: Vec::new(),
            ridge: DEFAULT_RIDGE,
            initial_theta: None,
            policy_slice_hour: 0,
            output_dir: None,
        }
    }
}

impl RunConfig {
    /// Parses a JSON config. Missing fields take defaults; a missing `mpc`
    /// block is sized to the configured fleet.
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let has_mpc = value.get("mpc").is_some();
        let mut cfg: Self = serde_json::from_value(value)?;
        if !has_mpc {
            cfg.mpc = MpcConfig::reference(cfg.fleet.n);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(|source| RunError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.fleet.validate()?;
        self.mpc.validate(self.fleet.n)?;
        for (name, v) in
            [("months", self.months), ("days_per_month", self.days_per_month), ("hours_per_day", self.hours_per_day)]
        {
            if v == 0 {
                return Err(RunError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.step_size > 0.0) {
            return Err(RunError::Config("step_size must be positive".into()));
        }
        if let Some(m) = self.max_update {
            if !(m > 0.0) {
                return Err(RunError::Config("max_update must be positive".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.soc_reset) {
            return Err(RunError::Config("soc_reset must lie in [0, 1]".into()));
        }
        if !(self.exploration_scale >= 0.0) {
            return Err(RunError::Config("exploration_scale must be nonnegative".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(RunError::Config("ridge must be nonnegative".into()));
        }
        if self.policy_slice_hour >= self.hours_per_day {
            return Err(RunError::Config("policy_slice_hour must be below hours_per_day".into()));
        }
        if let Some(t) = &self.initial_theta {
            if t.n() != self.fleet.n {
                return Err(RunError::Config(format!("initial_theta has {} agents", t.n())));
            }
            t.validate()?;
        }
        Ok(())
    }

    pub fn rollout_settings(&self) -> RolloutSettings {
        RolloutSettings {
            hours_per_day: self.hours_per_day,
            soc_reset: self.soc_reset,
            exploration_scale: self.exploration_scale,
        }
    }

    pub fn starting_theta(&self) -> Theta {
        self.initial_theta.clone().unwrap_or_else(|| Theta::nominal(&self.fleet))
    }
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthRecord {
    pub month: usize,
    /// `(1/days) Σ_d Σ_k γᵏ L̃`
    pub j_discounted: f64,
    /// Same without discounting.
    pub j_undiscounted: f64,
    /// Per-agent discounted share of `j_discounted`.
    pub j_agent: Vec<f64>,
    pub grad_norm: f64,
    pub samples_used: usize,
    pub samples_degenerate: usize,
    /// Fraction of (hour, agent) pairs ending outside `[0.1, 0.9]`.
    pub band_violation_rate: f64,
    pub max_planned_peak: f64,
    pub max_applied_peak: f64,
    /// Hours whose corrective trades pushed the total exchange above `P̄`.
    pub correction_peak_violations: usize,
    pub critic: Option<CriticWeights>,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub months: Vec<MonthRecord>,
    /// θ used during each month.
    pub theta_trace: Vec<Theta>,
    pub final_theta: Theta,
}

/// Discounted per-day return averaged over the days of a rollout.
pub fn monthly_return(transitions: &[Transition], gamma: f64, days: usize) -> (f64, f64, Vec<f64>) {
    let n = transitions.first().map_or(0, |t| t.agent_costs.len());
    let mut disc = 0.0;
    let mut undisc = 0.0;
    let mut agent = vec![0.0; n];
    for t in transitions {
        let w = gamma.powi(t.hour as i32);
        disc += w * t.realized_cost;
        undisc += t.realized_cost;
        for (a, c) in agent.iter_mut().zip(&t.agent_costs) {
            *a += w * c;
        }
    }
    let d = days as f64;
    (disc / d, undisc / d, agent.into_iter().map(|a| a / d).collect())
}

fn month_stats(month: usize, rollout: &Rollout<PolicyInfo>, cfg: &RunConfig) -> MonthRecord {
    let tr = &rollout.transitions;
    let (j_discounted, j_undiscounted, j_agent) = monthly_return(tr, cfg.fleet.gamma, cfg.days_per_month);
    let n = cfg.fleet.n;
    let outside = tr
        .iter()
        .flat_map(|t| t.next_state.soc.iter())
        .filter(|&&s| !(SOC_BAND_LOW..=SOC_BAND_HIGH).contains(&s))
        .count();
    MonthRecord {
        month,
        j_discounted,
        j_undiscounted,
        j_agent,
        grad_norm: 0.0,
        samples_used: 0,
        samples_degenerate: 0,
        band_violation_rate: outside as f64 / (tr.len() * n).max(1) as f64,
        max_planned_peak: tr.iter().map(Transition::planned_peak).fold(0.0, f64::max),
        max_applied_peak: tr.iter().map(Transition::applied_peak).fold(0.0, f64::max),
        correction_peak_violations: tr.iter().filter(|t| t.corrected_peak() > cfg.fleet.p_max + 1e-9).count(),
        critic: None,
        grad: Vec::new(),
    }
}

/// Everything a run produces, kept in memory until written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub first_month: Vec<Transition>,
    pub last_month: Vec<Transition>,
    pub initial_theta: Theta,
}

/// `step`, shrunk so that no free θ entry moves by more than `max_update`.
pub fn clipped_step(theta: &Theta, grad: &[f64], step: f64, max_update: Option<f64>, frozen: &[ThetaGroup]) -> f64 {
    let Some(limit) = max_update else { return step };
    let mut largest: f64 = 0.0;
    for g in ThetaGroup::ALL.into_iter().filter(|g| !frozen.contains(g)) {
        for i in 0..theta.n() {
            largest = largest.max((step * grad[theta.flat_index(g, i)]).abs());
        }
    }
    if largest > limit {
        step * limit / largest
    } else {
        step
    }
}

/// Rolls out every month and, when `learn` is set, fits the critic and updates θ.
pub fn run(cfg: &RunConfig, prices: &PriceSeries, theta0: Theta, learn: bool) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    theta0.validate()?;
    let settings = cfg.rollout_settings();
    let mut theta = theta0.clone();
    let mut records = Vec::with_capacity(cfg.months);
    let mut trace = Vec::with_capacity(cfg.months);
    let mut first_month = Vec::new();
    let mut last_month = Vec::new();

    for month in 0..cfg.months {
        let pol = MpcPolicy { theta: &theta, fleet: &cfg.fleet, mpc: &cfg.mpc, prices, with_sensitivity: learn };
        let rollout = rollout_month(&pol, prices, &cfg.fleet, &settings, cfg.days_per_month, month, cfg.master_seed)
            .map_err(|source| RunError::Rollout { month, source })?;
        let mut rec = month_stats(month, &rollout, cfg);
        trace.push(theta.clone());

        if learn {
            let samples = samples_from_rollout(&rollout.transitions, &rollout.infos, theta.len());
            let critic = lstd_fit(&samples, cfg.fleet.gamma, cfg.ridge)
                .map_err(|source| RunError::Learning { month, source })?;
            let sens: Vec<_> = rollout.infos.iter().map(|i| i.sensitivity.as_ref()).collect();
            let report = policy_gradient(&sens, &critic.w, month);
            let step = clipped_step(&theta, &report.grad, cfg.step_size, cfg.max_update, &cfg.frozen);
            theta = update_theta(&theta, &report.grad, step, &cfg.frozen)
                .map_err(|source| RunError::Learning { month, source })?;
            rec.grad_norm = report.grad_norm;
            rec.samples_used = report.samples_used;
            rec.samples_degenerate = report.samples_degenerate;
            rec.grad = report.grad;
            rec.critic = Some(critic);
        }
        log::info!(
            "month {month}: J = {:.4}, grad_norm = {:.4e}, band violations = {:.4}, degenerate = {}",
            rec.j_discounted,
            rec.grad_norm,
            rec.band_violation_rate,
            rec.samples_degenerate
        );
        records.push(rec);
        if month == 0 {
            first_month = rollout.transitions.clone();
        }
        if month + 1 == cfg.months {
            last_month = rollout.transitions;
        }
    }
    Ok(RunOutput {
        metrics: RunMetrics { months: records, theta_trace: trace, final_theta: theta },
        first_month,
        last_month,
        initial_theta: theta0,
    })
}

/// Learning run from the configured starting θ; writes artifacts when an
/// output directory is configured.
pub fn train(cfg: &RunConfig, config_dir: Option<&Path>) -> Result<RunOutput, RunError> {
    let prices = cfg.prices.load(config_dir)?;
    let out = run(cfg, &prices, cfg.starting_theta(), true)?;
    if let Some(dir) = &cfg.output_dir {
        write_outputs(dir, cfg, &prices, &out)?;
    }
    Ok(out)
}

/// Fixed-θ evaluation run.
pub fn simulate(cfg: &RunConfig, theta: &Theta, config_dir: Option<&Path>) -> Result<RunOutput, RunError> {
    let prices = cfg.prices.load(config_dir)?;
    let out = run(cfg, &prices, theta.clone(), false)?;
    if let Some(dir) = &cfg.output_dir {
        write_outputs(dir, cfg, &prices, &out)?;
    }
    Ok(out)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, RunError> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|source| RunError::Io { path, source })
}

/// Writes `metrics.csv`, `theta_trace.csv`, `theta_final.json`,
/// `trajectories_first.csv`, `trajectories_last.csv`, `peak_power.csv` and
/// `policy_slice.csv` into `dir`.
pub fn write_outputs(dir: &Path, cfg: &RunConfig, prices: &PriceSeries, out: &RunOutput) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.to_path_buf(), source })?;
    let n = cfg.fleet.n;
    write_metrics_csv(create(dir, "metrics.csv")?, n, &out.metrics.months)?;
    write_theta_trace_csv(create(dir, "theta_trace.csv")?, &out.metrics.theta_trace)?;
    let mut f = create(dir, "theta_final.json")?;
    writeln!(f, "{}", serde_json::to_string_pretty(&out.metrics.final_theta)?)
        .map_err(|source| RunError::Io { path: dir.join("theta_final.json"), source })?;
    write_transitions_csv(create(dir, "trajectories_first.csv")?, n, &out.first_month)?;
    write_transitions_csv(create(dir, "trajectories_last.csv")?, n, &out.last_month)?;
    write_peak_power_csv(create(dir, "peak_power.csv")?, cfg, &out.first_month, &out.last_month)?;
    let slice = policy_slice(cfg, prices, &[&out.initial_theta, &out.metrics.final_theta])?;
    write_policy_slice_csv(create(dir, "policy_slice.csv")?, &slice)?;
    Ok(())
}

/// Columns: `month,j_discounted,j_undiscounted,j_agent_i…,grad_norm,samples_used,
/// samples_degenerate,band_violation_rate,max_planned_peak,max_applied_peak,
/// correction_peak_violations,critic_w_k…,critic_v_k…,grad_k…`
pub fn write_metrics_csv<W: Write>(w: W, n: usize, months: &[MonthRecord]) -> Result<(), RunError> {
    let n_theta = 10 * n;
    let n_v = 2 * n + 1;
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = vec!["month".into(), "j_discounted".into(), "j_undiscounted".into()];
    header.extend((0..n).map(|i| format!("j_agent_{i}")));
    header.extend(
        [
            "grad_norm",
            "samples_used",
            "samples_degenerate",
            "band_violation_rate",
            "max_planned_peak",
            "max_applied_peak",
            "correction_peak_violations",
        ]
        .map(String::from),
    );
    header.extend((0..n_theta).map(|k| format!("critic_w_{k}")));
    header.extend((0..n_v).map(|k| format!("critic_v_{k}")));
    header.extend((0..n_theta).map(|k| format!("grad_{k}")));
    wtr.write_record(&header)?;
    for r in months {
        let mut row = vec![r.month.to_string(), r.j_discounted.to_string(), r.j_undiscounted.to_string()];
        row.extend(r.j_agent.iter().map(f64::to_string));
        row.extend([
            r.grad_norm.to_string(),
            r.samples_used.to_string(),
            r.samples_degenerate.to_string(),
            r.band_violation_rate.to_string(),
            r.max_planned_peak.to_string(),
            r.max_applied_peak.to_string(),
            r.correction_peak_violations.to_string(),
        ]);
        match &r.critic {
            Some(c) => {
                row.extend(c.w.iter().map(f64::to_string));
                row.extend(c.v.iter().map(f64::to_string));
            }
            None => row.extend(std::iter::repeat_n(String::new(), n_theta + n_v)),
        }
        if r.grad.is_empty() {
            row.extend(std::iter::repeat_n(String::new(), n_theta));
        } else {
            row.extend(r.grad.iter().map(f64::to_string));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Columns: `month` then one column per θ entry (`theta_alpha[0]`, …).
pub fn write_theta_trace_csv<W: Write>(w: W, trace: &[Theta]) -> Result<(), RunError> {
    let mut wtr = csv::Writer::from_writer(w);
    let n = trace.first().map_or(0, Theta::n);
    let mut header = vec!["month".to_string()];
    header.extend(Theta::names(n));
    wtr.write_record(&header)?;
    for (m, t) in trace.iter().enumerate() {
        let mut row = vec![m.to_string()];
        row.extend(t.to_vec().iter().map(f64::to_string));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Columns: `month,day,hour,planned_peak,applied_peak,corrected_peak,p_max`
/// for the first (`month = first`) and last (`month = last`) months.
fn write_peak_power_csv<W: Write>(
    w: W,
    cfg: &RunConfig,
    first: &[Transition],
    last: &[Transition],
) -> Result<(), RunError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["month", "day", "hour", "planned_peak", "applied_peak", "corrected_peak", "p_max"])?;
    for (tag, tr) in [("first", first), ("last", last)] {
        for t in tr {
            wtr.write_record([
                tag.to_string(),
                t.day.to_string(),
                t.hour.to_string(),
                t.planned_peak().to_string(),
                t.applied_peak().to_string(),
                t.corrected_peak().to_string(),
                cfg.fleet.p_max.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub const POLICY_SLICE_POINTS: usize = 101;

/// One row of `policy_slice.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceRow {
    pub agent: usize,
    pub soc: f64,
    /// The agent's own action under each θ passed to [`policy_slice`].
    pub actions: Vec<f64>,
}

/// Sweeps each agent's SOC over 101 points in `[0, 1]` with the others pinned
/// at 0.5, at hour `policy_slice_hour`, without noise or exploration.
pub fn policy_slice(cfg: &RunConfig, prices: &PriceSeries, thetas: &[&Theta]) -> Result<Vec<SliceRow>, RunError> {
    let n = cfg.fleet.n;
    let window = forecast_window(prices, cfg.policy_slice_hour, cfg.mpc.horizon);
    let mut rows = Vec::with_capacity(n * POLICY_SLICE_POINTS);
    for agent in 0..n {
        for p in 0..POLICY_SLICE_POINTS {
            let x = p as f64 / (POLICY_SLICE_POINTS - 1) as f64;
            let mut soc = SocState::uniform(n, 0.5);
            soc.soc[agent] = x;
            let actions = thetas
                .iter()
                .map(|t| policy(t, &soc, &window, &cfg.fleet, &cfg.mpc).map(|a| a.a[agent]))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(SliceRow { agent, soc: x, actions });
        }
    }
    Ok(rows)
}

/// Columns: `agent,soc,action_initial,action_final`.
fn write_policy_slice_csv<W: Write>(w: W, rows: &[SliceRow]) -> Result<(), RunError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["agent", "soc", "action_initial", "action_final"])?;
    for r in rows {
        let mut rec = vec![r.agent.to_string(), r.soc.to_string()];
        rec.extend(r.actions.iter().map(f64::to_string));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_config_takes_defaults() {
        let cfg = RunConfig::from_json(r#"{"months": 2, "master_seed": 9, "frozen": ["phi3", "t3"]}"#).unwrap();
        assert_eq!(cfg.months, 2);
        assert_eq!(cfg.days_per_month, 30);
        assert_eq!(cfg.frozen, vec![ThetaGroup::Phi3, ThetaGroup::T3]);
        assert!(RunConfig::from_json(r#"{"monthz": 2}"#).is_err());
        assert!(RunConfig::from_json(r#"{"months": 0}"#).is_err());
    }

    #[test]
    fn clipped_step_bounds_free_entries() {
        let theta = Theta::nominal(&FleetConfig::reference());
        let mut grad = vec![0.0; theta.len()];
        grad[theta.flat_index(ThetaGroup::ThetaAlpha, 0)] = 1e6;
        grad[theta.flat_index(ThetaGroup::Phi2, 1)] = -2e3;
        assert_eq!(clipped_step(&theta, &grad, 1e-6, None, &[]), 1e-6);
        let s = clipped_step(&theta, &grad, 1e-6, Some(0.01), &[]);
        assert!((s * 1e6 - 0.01).abs() < 1e-15);
        let s = clipped_step(&theta, &grad, 1e-6, Some(0.01), &[ThetaGroup::ThetaAlpha]);
        assert_eq!(s, 1e-6);
    }

    #[test]
    fn monthly_return_discounts_within_day() {
        let t = |day, hour, cost: f64| Transition {
            day,
            hour,
            k: day * 24 + hour,
            state: SocState::uniform(1, 0.5),
            planned: crate::model::ControlAction::zeros(1),
            action: crate::model::ControlAction::zeros(1),
            buy_price: 1.0,
            sell_price: 0.5,
            realized_cost: cost,
            agent_costs: vec![cost],
            correction: vec![0.0],
            next_state: SocState::uniform(1, 0.5),
            noise: vec![0.0],
        };
        let tr = vec![t(0, 0, 1.0), t(0, 1, 2.0), t(1, 0, 3.0), t(1, 1, 4.0)];
        let (d, u, a) = monthly_return(&tr, 0.5, 2);
        assert!((d - (1.0 + 1.0 + 3.0 + 2.0) / 2.0).abs() < 1e-15);
        assert_eq!(u, 5.0);
        assert_eq!(a, vec![d]);
    }
}
