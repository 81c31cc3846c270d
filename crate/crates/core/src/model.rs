//! Ground-truth fleet simulator.
//!
//! Each agent's state of charge evolves as `soc⁺ = soc + α(Δ + b − s)` with
//! Gaussian production-demand noise `Δ`. After every step a low-level
//! controller clamps the state back into `[0, 1]` by trading the missing or
//! excess energy at the current hour's prices. Stage costs combine the
//! economic trade value with a soft penalty outside the `[0.1, 0.9]` band,
//! charged on the post-correction state the hour ends in.

use std::error::Error as StdError;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prices::PriceSeries;

pub const SOC_BAND_LOW: f64 = 0.1;
pub const SOC_BAND_HIGH: f64 = 0.9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid fleet config: {0}")]
    Config(String),
    #[error("policy failed at day {day}, hour {hour}: {source}")]
    Policy {
        day: usize,
        hour: usize,
        #[source]
        source: Box<dyn StdError + Send + Sync>,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Physical and economic constants of the fleet and its grid connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub n: usize,
    /// Battery size scaling per agent.
    pub alpha: Vec<f64>,
    /// Mean of the production-demand noise.
    pub delta_mean: Vec<f64>,
    /// Variance of the production-demand noise (sampled with std `√var`).
    pub delta_var: Vec<f64>,
    /// Per-agent buy/sell power bound.
    pub u_max: Vec<f64>,
    /// Grid peak bound on the summed buys and on the summed sells.
    pub p_max: f64,
    /// SOC band penalty weight per agent.
    pub penalty: Vec<f64>,
    pub gamma: f64,
}

impl FleetConfig {
    /// Three identical agents with `α = 1/12`, `Δ ~ N(0, 0.5)`, `Ū = 1`,
    /// `P̄ = 1.5`, `p = 1000`, `γ = 0.99`.
    pub fn reference() -> Self {
        Self::uniform(3, 1.0 / 12.0, 0.0, 0.5, 1.0, 1.5, 1000.0, 0.99)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        n: usize,
        alpha: f64,
        delta_mean: f64,
        delta_var: f64,
        u_max: f64,
        p_max: f64,
        penalty: f64,
        gamma: f64,
    ) -> Self {
        Self {
            n,
            alpha: vec![alpha; n],
            delta_mean: vec![delta_mean; n],
            delta_var: vec![delta_var; n],
            u_max: vec![u_max; n],
            p_max,
            penalty: vec![penalty; n],
            gamma,
        }
    }

    /// Checks the invariants. A peak bound that can never bind is only warned about.
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n;
        if n == 0 {
            return Err(ModelError::Config("n must be at least 1".into()));
        }
        for (name, v) in [
            ("alpha", &self.alpha),
            ("delta_mean", &self.delta_mean),
            ("delta_var", &self.delta_var),
            ("u_max", &self.u_max),
            ("penalty", &self.penalty),
        ] {
            if v.len() != n {
                return Err(ModelError::Config(format!("{name} has {} entries for {n} agents", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::Config(format!("{name} has non-finite entries")));
            }
        }
        if self.alpha.iter().any(|&a| a <= 0.0) {
            return Err(ModelError::Config("alpha must be positive".into()));
        }
        if self.u_max.iter().any(|&u| u <= 0.0) {
            return Err(ModelError::Config("u_max must be positive".into()));
        }
        if self.penalty.iter().any(|&p| p < 0.0) {
            return Err(ModelError::Config("penalty must be nonnegative".into()));
        }
        if self.delta_var.iter().any(|&v| v < 0.0) {
            return Err(ModelError::Config("delta_var must be nonnegative".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ModelError::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.p_max > 0.0) {
            return Err(ModelError::Config("p_max must be positive".into()));
        }
        if self.p_max >= self.u_max.iter().sum::<f64>() {
            log::warn!(
                "p_max = {} is not below the summed input bounds ({}); the peak constraint is vacuous",
                self.p_max,
                self.u_max.iter().sum::<f64>()
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocState {
    pub soc: Vec<f64>,
}

impl SocState {
    pub fn new(soc: Vec<f64>) -> Self {
        Self { soc }
    }

    pub fn uniform(n: usize, value: f64) -> Self {
        Self { soc: vec![value; n] }
    }

    pub fn len(&self) -> usize {
        self.soc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.soc.is_empty()
    }

    /// True when every agent sits inside the `[0.1, 0.9]` band.
    pub fn in_band(&self) -> bool {
        self.soc.iter().all(|&s| (SOC_BAND_LOW..=SOC_BAND_HIGH).contains(&s))
    }
}

/// Net power per agent; positive values buy, negative values sell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub a: Vec<f64>,
}

impl ControlAction {
    pub fn new(a: Vec<f64>) -> Self {
        Self { a }
    }

    pub fn zeros(n: usize) -> Self {
        Self { a: vec![0.0; n] }
    }

    pub fn buy(&self, i: usize) -> f64 {
        self.a[i].max(0.0)
    }

    pub fn sell(&self, i: usize) -> f64 {
        (-self.a[i]).max(0.0)
    }

    pub fn clip(&mut self, u_max: &[f64]) {
        for (a, u) in self.a.iter_mut().zip(u_max) {
            *a = a.clamp(-u, *u);
        }
    }
}

/// `soc + α(Δ + a)` per agent, without clamping.
pub fn step_dynamics(state: &SocState, action: &ControlAction, noise: &[f64], cfg: &FleetConfig) -> Vec<f64> {
    (0..cfg.n).map(|i| state.soc[i] + cfg.alpha[i] * (noise[i] + action.a[i])).collect()
}

/// Clamps to `[0, 1]` and returns the corrective power that achieves it
/// (positive: extra bought, negative: extra sold).
pub fn low_level_correct(raw: &[f64], cfg: &FleetConfig) -> (SocState, Vec<f64>) {
    let soc: Vec<f64> = raw.iter().map(|r| r.clamp(0.0, 1.0)).collect();
    let correction = (0..cfg.n).map(|i| (soc[i] - raw[i]) / cfg.alpha[i]).collect();
    (SocState { soc }, correction)
}

/// Economic cost `φ_b·b − φ_s·s` per agent.
pub fn stage_cost(action: &ControlAction, buy_price: &[f64], sell_price: &[f64]) -> Vec<f64> {
    (0..action.a.len()).map(|i| buy_price[i] * action.buy(i) - sell_price[i] * action.sell(i)).collect()
}

/// SOC band penalty `p·max(soc − 0.9, 0) + p·max(0.1 − soc, 0)`.
pub fn band_penalty(soc: f64, weight: f64) -> f64 {
    weight * (soc - SOC_BAND_HIGH).max(0.0) + weight * (SOC_BAND_LOW - soc).max(0.0)
}

/// Per-agent modified stage cost (economic cost plus band penalty).
pub fn agent_stage_costs(
    state: &SocState,
    action: &ControlAction,
    buy_price: &[f64],
    sell_price: &[f64],
    cfg: &FleetConfig,
) -> Vec<f64> {
    stage_cost(action, buy_price, sell_price)
        .into_iter()
        .enumerate()
        .map(|(i, l)| l + band_penalty(state.soc[i], cfg.penalty[i]))
        .collect()
}

/// Fleet-wide modified stage cost.
pub fn modified_stage_cost(
    state: &SocState,
    action: &ControlAction,
    buy_price: &[f64],
    sell_price: &[f64],
    cfg: &FleetConfig,
) -> f64 {
    agent_stage_costs(state, action, buy_price, sell_price, cfg).iter().sum()
}

/// `max(Σ buys, Σ sells)`
pub fn peak_power(action: &ControlAction) -> f64 {
    let n = action.a.len();
    let buys: f64 = (0..n).map(|i| action.buy(i)).sum();
    let sells: f64 = (0..n).map(|i| action.sell(i)).sum();
    buys.max(sells)
}

/// One simulated hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub day: usize,
    /// Hour of the day.
    pub hour: usize,
    /// Absolute hour index used for price lookup.
    pub k: usize,
    pub state: SocState,
    /// Action proposed by the policy, before exploration.
    pub planned: ControlAction,
    /// Action actually applied.
    pub action: ControlAction,
    pub buy_price: f64,
    pub sell_price: f64,
    /// Economic cost of the applied and corrective trades plus the band
    /// penalty on `next_state`.
    pub realized_cost: f64,
    /// Per-agent share of `realized_cost`.
    pub agent_costs: Vec<f64>,
    pub correction: Vec<f64>,
    pub next_state: SocState,
    pub noise: Vec<f64>,
}

impl Transition {
    pub fn planned_peak(&self) -> f64 {
        peak_power(&self.planned)
    }

    pub fn applied_peak(&self) -> f64 {
        peak_power(&self.action)
    }

    /// Peak including the low-level controller's corrective trades.
    pub fn corrected_peak(&self) -> f64 {
        let total = ControlAction::new(self.action.a.iter().zip(&self.correction).map(|(a, c)| a + c).collect());
        peak_power(&total)
    }
}

/// A state-feedback controller evaluated once per simulated hour.
pub trait Policy {
    /// Extra per-hour output carried alongside each transition (e.g. sensitivities).
    type Info;
    type Error: StdError + Send + Sync + 'static;

    /// Action for absolute hour `k` from `state`.
    fn act(&self, k: usize, state: &SocState) -> Result<(ControlAction, Self::Info), Self::Error>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutSettings {
    pub hours_per_day: usize,
    /// SOC every agent starts each day from.
    pub soc_reset: f64,
    /// Exploration std as a fraction of each agent's input bound.
    pub exploration_scale: f64,
}

impl Default for RolloutSettings {
    fn default() -> Self {
        Self { hours_per_day: 24, soc_reset: 0.6, exploration_scale: 0.05 }
    }
}

#[derive(Debug, Clone)]
pub struct Rollout<I> {
    pub transitions: Vec<Transition>,
    pub infos: Vec<I>,
}

impl<I> Rollout<I> {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

const NOISE_STREAM: u64 = 0;
const EXPLORATION_STREAM: u64 = 1;

/// splitmix64 finalizer, used to derive independent per-day seeds.
pub fn mix_seed(master: u64, salt: u64) -> u64 {
    let mut z = master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates one day starting from the reset state. Prices are read at
/// absolute hours `day·hours_per_day + h`.
pub fn rollout_day<P: Policy>(
    policy: &P,
    prices: &PriceSeries,
    cfg: &FleetConfig,
    settings: &RolloutSettings,
    day: usize,
    seed: u64,
) -> Result<Rollout<P::Info>, ModelError> {
    let n = cfg.n;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(NOISE_STREAM);
    let mut explore_rng = ChaCha8Rng::seed_from_u64(seed);
    explore_rng.set_stream(EXPLORATION_STREAM);

    let noise_dists: Vec<Normal<f64>> = (0..n)
        .map(|i| Normal::new(cfg.delta_mean[i], cfg.delta_var[i].sqrt()))
        .collect::<Result<_, _>>()
        .map_err(|e| ModelError::Config(format!("noise distribution: {e}")))?;
    let explore = Normal::new(0.0, 1.0).expect("unit normal");

    let mut state = SocState::uniform(n, settings.soc_reset);
    let mut rollout = Rollout { transitions: Vec::with_capacity(settings.hours_per_day), infos: Vec::new() };
    for hour in 0..settings.hours_per_day {
        let k = day * settings.hours_per_day + hour;
        let (planned, info) =
            policy.act(k, &state).map_err(|e| ModelError::Policy { day, hour, source: Box::new(e) })?;

        let mut action = planned.clone();
        for i in 0..n {
            let draw: f64 = explore.sample(&mut explore_rng);
            action.a[i] += settings.exploration_scale * cfg.u_max[i] * draw;
        }
        action.clip(&cfg.u_max);

        let noise: Vec<f64> = noise_dists.iter().map(|d| d.sample(&mut noise_rng)).collect();
        let raw = step_dynamics(&state, &action, &noise, cfg);
        let (next_state, correction) = low_level_correct(&raw, cfg);

        let (buy, sell) = (prices.buy(k), prices.sell(k));
        let buy_v = vec![buy; n];
        let sell_v = vec![sell; n];
        let mut agent_costs = agent_stage_costs(&next_state, &action, &buy_v, &sell_v, cfg);
        let corrective = ControlAction::new(correction.clone());
        for (c, extra) in agent_costs.iter_mut().zip(stage_cost(&corrective, &buy_v, &sell_v)) {
            *c += extra;
        }
        rollout.transitions.push(Transition {
            day,
            hour,
            k,
            state: state.clone(),
            planned,
            action,
            buy_price: buy,
            sell_price: sell,
            realized_cost: agent_costs.iter().sum(),
            agent_costs,
            correction,
            next_state: next_state.clone(),
            noise,
        });
        rollout.infos.push(info);
        state = next_state;
    }
    Ok(rollout)
}

/// `days` independent day rollouts, concatenated in day order. Day `d` of
/// `month` uses seed `mix_seed(master_seed, month·days + d)` and the prices of
/// absolute day `d`.
pub fn rollout_month<P: Policy>(
    policy: &P,
    prices: &PriceSeries,
    cfg: &FleetConfig,
    settings: &RolloutSettings,
    days: usize,
    month: usize,
    master_seed: u64,
) -> Result<Rollout<P::Info>, ModelError> {
    let mut out = Rollout { transitions: Vec::new(), infos: Vec::new() };
    for day in 0..days {
        let seed = mix_seed(master_seed, (month * days + day) as u64);
        let r = rollout_day(policy, prices, cfg, settings, day, seed)?;
        out.transitions.extend(r.transitions);
        out.infos.extend(r.infos);
    }
    Ok(out)
}

/// Columnar CSV, one row per hour:
/// `day,hour,k,soc_i…,planned_i…,action_i…,correction_i…,noise_i…,next_soc_i…,buy_price,sell_price,cost,planned_peak,applied_peak`
pub fn write_transitions_csv<W: Write>(w: W, n: usize, transitions: &[Transition]) -> Result<(), ModelError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = vec!["day".into(), "hour".into(), "k".into()];
    for prefix in ["soc", "planned", "action", "correction", "noise", "next_soc"] {
        header.extend((0..n).map(|i| format!("{prefix}_{i}")));
    }
    header.extend(["buy_price", "sell_price", "cost", "planned_peak", "applied_peak"].map(String::from));
    wtr.write_record(&header)?;
    for t in transitions {
        let mut row: Vec<String> = vec![t.day.to_string(), t.hour.to_string(), t.k.to_string()];
        for v in [&t.state.soc, &t.planned.a, &t.action.a, &t.correction, &t.noise, &t.next_state.soc] {
            row.extend(v.iter().map(|x| x.to_string()));
        }
        row.extend(
            [t.buy_price, t.sell_price, t.realized_cost, t.planned_peak(), t.applied_peak()].map(|x| x.to_string()),
        );
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
