//! Slot-level Monte Carlo simulation on the untruncated dynamics.
//!
//! Every trial owns three ChaCha8 streams derived from one trial seed:
//! fresh-update generation, channel failures and the policy's own coins.
//! Generation and channel draws happen every slot whatever the policy does,
//! so two policies run with the same seeds face the identical environment.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constrained::{evaluate_stationary, MixturePolicy};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{advance, Action, Kernel, ModelParams, State, StateClass};
use crate::policy::{DeterministicPolicy, UniformRandomPolicy};

const STREAM_GENERATION: u64 = 0;
const STREAM_CHANNEL: u64 = 1;
const STREAM_POLICY: u64 = 2;

/// Tolerance band below the budget accepted by the baseline calibration.
pub const CALIBRATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Slots per trial.
    pub horizon: u64,
    pub trials: usize,
    pub seed: u64,
    pub params: ModelParams,
    /// Saturate the age at `delta_max` like the truncated kernel does.
    /// Off by default: trials run the untruncated chain.
    pub saturate_age: bool,
    pub execution: Execution,
}

impl SimConfig {
    pub fn new(params: ModelParams) -> Self {
        SimConfig {
            horizon: 10_000,
            trials: 1000,
            seed: 0,
            params,
            saturate_age: false,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.horizon == 0 || self.trials == 0 {
            return Err(Error::InvalidParams(
                "horizon and trials must both be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Transmit with probability `q` whenever a transmission is allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub q: f64,
    /// Exact long-run transmission rate at `q`.
    pub avg_tx: f64,
    /// Exact long-run average age at `q`.
    pub avg_aoi: f64,
}

/// Policy as executed by the simulator.
#[derive(Debug, Clone, Copy)]
pub enum SimPolicy<'a> {
    Deterministic(&'a DeterministicPolicy),
    /// One `Bernoulli(mu)` draw per trial picks the policy run for the
    /// whole trial.
    Mixture(&'a MixturePolicy),
    Random(RandomBaseline),
}

impl<'a> SimPolicy<'a> {
    /// Wraps a deterministic policy after checking that clamping ages above
    /// the truncation bound is exact.
    pub fn deterministic(policy: &'a DeterministicPolicy) -> Result<Self> {
        policy.check_clamp_safe()?;
        Ok(SimPolicy::Deterministic(policy))
    }

    pub fn mixture(policy: &'a MixturePolicy) -> Result<Self> {
        policy.pi1.check_clamp_safe()?;
        policy.pi2.check_clamp_safe()?;
        Ok(SimPolicy::Mixture(policy))
    }
}

/// What happened on the channel in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Silent,
    Delivered,
    Failed,
}

impl Outcome {
    pub fn label(self) -> &'static str {
        match self {
            Outcome::Silent => "none",
            Outcome::Delivered => "success",
            Outcome::Failed => "failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    pub state: State,
    pub action: Action,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub aoi_avg: f64,
    pub tx_freq: f64,
    /// Slots that started with a fresh update.
    pub fresh_slots: u64,
    /// Of those, slots where the fresh update was sent.
    pub fresh_sent: u64,
    /// For mixtures: whether the over-budget policy was drawn.
    pub first_component: Option<bool>,
}

/// Deterministic per-trial seed (SplitMix64 of base and trial index).
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    let mut z = base.wrapping_add(
        (trial as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

enum Decider<'a> {
    Fixed(&'a DeterministicPolicy),
    Coin(f64),
}

impl Decider<'_> {
    fn decide(&self, s: State, l_max: u32, rng: &mut ChaCha8Rng) -> Result<Action> {
        match *self {
            Decider::Fixed(policy) => policy.action_clamped(s).ok_or(Error::InvalidState(s)),
            Decider::Coin(q) => Ok(match StateClass::of(s, l_max).transmit_action() {
                Some(a) if rng.random_bool(q) => a,
                _ => Action::Idle,
            }),
        }
    }
}

/// Runs one trial of `cfg.horizon` slots from `(1, 1, b0)`.
///
/// The age is recorded at the start of each slot, so the first slot
/// contributes 1. Optionally appends every slot to `trace`.
pub fn run_trial(
    policy: &SimPolicy<'_>,
    cfg: &SimConfig,
    seed: u64,
    mut trace: Option<&mut Vec<TraceRecord>>,
) -> Result<TrialOutcome> {
    let params = &cfg.params;
    let horizon = cfg.horizon;
    let mut generation = stream(seed, STREAM_GENERATION);
    let mut channel = stream(seed, STREAM_CHANNEL);
    let mut coins = stream(seed, STREAM_POLICY);

    let mut first_component = None;
    let decider = match *policy {
        SimPolicy::Deterministic(p) => Decider::Fixed(p),
        SimPolicy::Mixture(m) => {
            let first = coins.random_bool(m.mu);
            first_component = Some(first);
            Decider::Fixed(if first { &m.pi1 } else { &m.pi2 })
        }
        SimPolicy::Random(b) => Decider::Coin(b.q),
    };

    let mut s = State::new(1, 1, generation.random_bool(params.p));
    let (mut age_sum, mut sent, mut fresh_slots, mut fresh_sent) = (0u64, 0u64, 0u64, 0u64);
    for t in 0..horizon {
        age_sum += u64::from(s.age);
        let action = decider.decide(s, params.l_max, &mut coins)?;
        if !StateClass::of(s, params.l_max).actions().contains(&action) {
            return Err(Error::DisallowedAction { state: s, action });
        }
        let failed = channel.random_bool(params.gamma);
        let fresh_next = generation.random_bool(params.p);
        let outcome = match (action.transmits(), failed) {
            (false, _) => Outcome::Silent,
            (true, false) => Outcome::Delivered,
            (true, true) => Outcome::Failed,
        };
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(TraceRecord {
                t,
                state: s,
                action,
                outcome,
            });
        }
        sent += u64::from(action.transmits());
        if s.fresh {
            fresh_slots += 1;
            fresh_sent += u64::from(action == Action::TransmitFresh);
        }
        s = advance(s, action, outcome == Outcome::Delivered, fresh_next);
        if cfg.saturate_age {
            s.age = s.age.min(params.delta_max);
        }
    }
    Ok(TrialOutcome {
        trial: 0,
        seed,
        aoi_avg: age_sum as f64 / horizon as f64,
        tx_freq: sent as f64 / horizon as f64,
        fresh_slots,
        fresh_sent,
        first_component,
    })
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub mean_aoi: f64,
    pub se_aoi: f64,
    pub mean_tx: f64,
    pub se_tx: f64,
    /// Pooled fraction of fresh-update slots in which the update was sent.
    pub fresh_tx_given_new: f64,
    pub base_seed: u64,
    pub horizon: u64,
    pub per_trial: Vec<TrialOutcome>,
}

impl SimReport {
    fn from_trials(cfg: &SimConfig, per_trial: Vec<TrialOutcome>) -> Self {
        let (mean_aoi, se_aoi) = mean_and_se(per_trial.iter().map(|t| t.aoi_avg));
        let (mean_tx, se_tx) = mean_and_se(per_trial.iter().map(|t| t.tx_freq));
        let fresh: u64 = per_trial.iter().map(|t| t.fresh_slots).sum();
        let sent: u64 = per_trial.iter().map(|t| t.fresh_sent).sum();
        SimReport {
            mean_aoi,
            se_aoi,
            mean_tx,
            se_tx,
            fresh_tx_given_new: if fresh > 0 {
                sent as f64 / fresh as f64
            } else {
                0.0
            },
            base_seed: cfg.seed,
            horizon: cfg.horizon,
            per_trial,
        }
    }

    /// Mean and standard error of the per-trial age difference
    /// `self - other`; meaningful when both ran on the same seeds.
    pub fn paired_aoi_difference(&self, other: &SimReport) -> (f64, f64) {
        let diffs: Vec<f64> = self
            .per_trial
            .iter()
            .zip(&other.per_trial)
            .map(|(a, b)| a.aoi_avg - b.aoi_avg)
            .collect();
        mean_and_se(diffs.iter().copied())
    }
}

/// Runs `cfg.trials` independent trials of one policy.
pub fn simulate(policy: &SimPolicy<'_>, cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let results = cfg.execution.map(cfg.trials, |trial| {
        run_trial(policy, cfg, trial_seed(cfg.seed, trial), None)
            .map(|o| TrialOutcome { trial, ..o })
    });
    let per_trial = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SimReport::from_trials(cfg, per_trial))
}

/// Simulates every policy on the same per-trial seeds.
pub fn compare_policies(
    cfg: &SimConfig,
    policies: &[(String, SimPolicy<'_>)],
) -> Result<Vec<(String, SimReport)>> {
    policies
        .iter()
        .map(|(name, policy)| Ok((name.clone(), simulate(policy, cfg)?)))
        .collect()
}

/// Finds the transmission probability `q` whose exact long-run rate meets
/// the budget, or `q = 1` when even always transmitting stays within it.
pub fn calibrate_random_baseline(kernel: &Kernel) -> Result<RandomBaseline> {
    calibrate_with(kernel, Execution::default())
}

pub fn calibrate_with(kernel: &Kernel, execution: Execution) -> Result<RandomBaseline> {
    let gamma_max = kernel.params().gamma_max;
    let space = kernel.space();
    let mut warm: Option<Vec<f64>> = None;
    let mut eval_at = |q: f64| -> Result<RandomBaseline> {
        let ev = evaluate_stationary(
            kernel,
            &UniformRandomPolicy { space, q },
            warm.as_deref(),
            execution,
        )?;
        warm = Some(ev.stationary);
        Ok(RandomBaseline {
            q,
            avg_tx: ev.avg_tx,
            avg_aoi: ev.avg_aoi,
        })
    };

    let top = eval_at(1.0)?;
    if top.avg_tx <= gamma_max {
        return Ok(top);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let b = eval_at(mid)?;
        if b.avg_tx > gamma_max {
            hi = mid;
        } else {
            lo = mid;
            if b.avg_tx >= gamma_max - CALIBRATION_TOL {
                return Ok(b);
            }
            best = Some(b);
        }
        if hi - lo <= f64::EPSILON {
            break;
        }
    }
    // Reached only if the rate jumps over the tolerance band.
    Ok(best.unwrap_or(RandomBaseline {
        q: 0.0,
        avg_tx: 0.0,
        avg_aoi: kernel.params().delta_max as f64,
    }))
}

/// Writes a trace as CSV with columns `t,delta,l,b,action,outcome`.
pub fn write_trace_csv<W: Write>(mut out: W, trace: &[TraceRecord]) -> Result<()> {
    writeln!(out, "t,delta,l,b,action,outcome")?;
    for r in trace {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t,
            r.state.age,
            r.state.attempts,
            u8::from(r.state.fresh),
            r.action.code(),
            r.outcome.label()
        )?;
    }
    Ok(())
}
