//! Constrained problem: exact policy evaluation, the dual search over the
//! transmission price, and the two-policy mixture that meets the budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Action, Kernel};
use crate::policy::{DeterministicPolicy, StationaryPolicy};
use crate::solver::{rvi_solve, RviConfig, RviSolution};

/// L1 residual `|pi P - pi|` the stationary solver aims for.
const STATIONARY_TARGET: f64 = 1e-12;
/// Residual above which a run that hits the iteration cap is an error.
pub const STATIONARY_TOL: f64 = 1e-9;
pub const STATIONARY_MAX_ITERS: usize = 1_000_000;

/// Transmission rates closer than this to the budget count as meeting it.
pub const BINDING_TOL: f64 = 1e-9;
pub const DEFAULT_EPSILON_LAMBDA: f64 = 0.01;
const MAX_DOUBLINGS: usize = 60;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    /// Long-run average age.
    pub avg_aoi: f64,
    /// Long-run fraction of slots spent transmitting.
    pub avg_tx: f64,
    /// Fraction of fresh-update slots in which the fresh update is sent.
    pub fresh_tx_given_new: f64,
    #[serde(skip)]
    pub stationary: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Policy-induced chain in gather form: `incoming[j]` lists `(i, P(i -> j))`.
struct InducedChain {
    start: Vec<u32>,
    entries: Vec<(u32, f64)>,
}

impl InducedChain {
    fn build<P: StationaryPolicy + ?Sized>(kernel: &Kernel, policy: &P) -> Self {
        let n = kernel.len();
        let mut counts = vec![0u32; n + 1];
        let mut flat = Vec::with_capacity(n * 4);
        for (i, &s) in kernel.states().iter().enumerate() {
            let t = policy.transmit_probability(i, s);
            for row in kernel.rows(i) {
                let w = if row.action == Action::Idle {
                    1.0 - t
                } else {
                    t
                };
                if w == 0.0 {
                    continue;
                }
                for &(j, pr) in row.successors() {
                    flat.push((j, i as u32, w * pr));
                    counts[j as usize + 1] += 1;
                }
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let mut cursor = counts.clone();
        let mut entries = vec![(0u32, 0.0); flat.len()];
        for (j, i, pr) in flat {
            let c = &mut cursor[j as usize];
            entries[*c as usize] = (i, pr);
            *c += 1;
        }
        InducedChain {
            start: counts,
            entries,
        }
    }

    #[inline]
    fn pull(&self, j: usize, pi: &[f64]) -> f64 {
        self.entries[self.start[j] as usize..self.start[j + 1] as usize]
            .iter()
            .map(|&(i, pr)| pr * pi[i as usize])
            .sum()
    }
}

/// Stationary distribution by power iteration on the lazy chain
/// `(I + P) / 2`, which shares its stationary law with `P` and is aperiodic.
fn stationary<P: StationaryPolicy + ?Sized>(
    kernel: &Kernel,
    policy: &P,
    start: Option<&[f64]>,
    execution: Execution,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = kernel.len();
    let chain = InducedChain::build(kernel, policy);
    let mut pi = match start {
        Some(s) if s.len() == n => s.to_vec(),
        _ => vec![1.0 / n as f64; n],
    };
    let mut moved = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for iter in 1..=STATIONARY_MAX_ITERS {
        execution.fill(&mut moved, |j, v| *v = chain.pull(j, &pi));
        residual = moved.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        if residual < STATIONARY_TARGET {
            return Ok((normalized(moved), iter, residual));
        }
        let mut total = 0.0;
        for (p, m) in pi.iter_mut().zip(&moved) {
            *p = 0.5 * (*p + m);
            total += *p;
        }
        pi.iter_mut().for_each(|p| *p /= total);
    }
    if residual < STATIONARY_TOL {
        return Ok((pi, STATIONARY_MAX_ITERS, residual));
    }
    Err(Error::StationaryNotConverged {
        iterations: STATIONARY_MAX_ITERS,
        residual,
    })
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

/// Exact long-run averages of any stationary policy.
pub fn evaluate_stationary<P: StationaryPolicy + ?Sized>(
    kernel: &Kernel,
    policy: &P,
    start: Option<&[f64]>,
    execution: Execution,
) -> Result<PolicyEvaluation> {
    if policy.space() != kernel.space() {
        return Err(Error::SpaceMismatch);
    }
    let (pi, iterations, residual) = stationary(kernel, policy, start, execution)?;
    let (mut aoi, mut tx, mut new_mass, mut fresh_tx) = (0.0, 0.0, 0.0, 0.0);
    for (i, (&s, &w)) in kernel.states().iter().zip(&pi).enumerate() {
        let t = policy.transmit_probability(i, s);
        aoi += w * s.age as f64;
        tx += w * t;
        if s.fresh {
            new_mass += w;
            fresh_tx += w * t;
        }
    }
    Ok(PolicyEvaluation {
        avg_aoi: aoi,
        avg_tx: tx,
        fresh_tx_given_new: if new_mass > 0.0 {
            fresh_tx / new_mass
        } else {
            0.0
        },
        stationary: pi,
        iterations,
        residual,
    })
}

/// Exact long-run average age and transmission rate of a deterministic
/// policy.
pub fn evaluate_policy(policy: &DeterministicPolicy, kernel: &Kernel) -> Result<PolicyEvaluation> {
    evaluate_stationary(kernel, policy, None, Execution::default())
}

/// One probed multiplier of the dual search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaProbe {
    pub lambda: f64,
    pub gain: f64,
    pub avg_aoi: f64,
    pub avg_tx: f64,
    pub rvi_iterations: usize,
}

/// Optimal stationary policy of the constrained problem: at the start of
/// an episode run `pi1` with probability `mu`, otherwise `pi2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixturePolicy {
    pub gamma_max: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu: f64,
    pub pi1: DeterministicPolicy,
    pub pi2: DeterministicPolicy,
    pub eval1: PolicyEvaluation,
    pub eval2: PolicyEvaluation,
    /// Every multiplier evaluated, in probe order.
    pub probes: Vec<LambdaProbe>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureTargets {
    pub expected_aoi: f64,
    pub expected_tx: f64,
    pub fresh_tx_given_new: f64,
}

impl MixturePolicy {
    /// True when the budget is met with equality by randomizing.
    pub fn is_randomized(&self) -> bool {
        self.mu > 0.0 && self.mu < 1.0
    }

    pub fn targets(&self) -> MixtureTargets {
        mixture_targets(self)
    }
}

/// Long-run averages of the mixture: the `mu`-weighted combination of the
/// two deterministic policies' averages.
pub fn mixture_targets(m: &MixturePolicy) -> MixtureTargets {
    let mix = |a: f64, b: f64| m.mu * a + (1.0 - m.mu) * b;
    MixtureTargets {
        expected_aoi: mix(m.eval1.avg_aoi, m.eval2.avg_aoi),
        expected_tx: mix(m.eval1.avg_tx, m.eval2.avg_tx),
        fresh_tx_given_new: mix(m.eval1.fresh_tx_given_new, m.eval2.fresh_tx_given_new),
    }
}

/// Weight on the over-budget policy that makes the mixture spend exactly
/// the budget.
pub fn mixing_weight(gamma_max: f64, tx_over: f64, tx_under: f64) -> f64 {
    ((gamma_max - tx_under) / (tx_over - tx_under)).clamp(0.0, 1.0)
}

struct Probe {
    solution: RviSolution,
    eval: PolicyEvaluation,
}

struct DualSearch<'a> {
    kernel: &'a Kernel,
    rvi: RviConfig,
    probes: Vec<LambdaProbe>,
    warm: Option<Vec<f64>>,
}

impl DualSearch<'_> {
    fn probe(&mut self, lambda: f64) -> Result<Probe> {
        let mut cfg = self.rvi.with_lambda(lambda);
        let mut solution = rvi_solve(self.kernel, &cfg)?;
        if !solution.converged {
            // Periodic optimal chains make the plain recursion oscillate.
            cfg.aperiodicity = 0.5;
            solution = rvi_solve(self.kernel, &cfg)?;
            if !solution.converged {
                return Err(Error::RviNotConverged {
                    lambda,
                    iterations: solution.iterations,
                    span: solution.span,
                });
            }
        }
        let eval = evaluate_stationary(
            self.kernel,
            &solution.policy,
            self.warm.as_deref(),
            self.rvi.execution,
        )?;
        self.warm = Some(eval.stationary.clone());
        self.probes.push(LambdaProbe {
            lambda,
            gain: solution.gain,
            avg_aoi: eval.avg_aoi,
            avg_tx: eval.avg_tx,
            rvi_iterations: solution.iterations,
        });
        Ok(Probe { solution, eval })
    }

    fn finish(
        self,
        lambda1: f64,
        over: Probe,
        lambda2: f64,
        under: Probe,
        mu: f64,
    ) -> MixturePolicy {
        MixturePolicy {
            gamma_max: self.kernel.params().gamma_max,
            lambda1,
            lambda2,
            mu,
            pi1: over.solution.policy,
            pi2: under.solution.policy,
            eval1: over.eval,
            eval2: under.eval,
            probes: self.probes,
        }
    }

    fn single(self, lambda: f64, probe: Probe) -> MixturePolicy {
        let twin = Probe {
            solution: probe.solution.clone(),
            eval: probe.eval.clone(),
        };
        self.finish(lambda, probe, lambda, twin, 1.0)
    }
}

/// Solves the constrained problem for the budget in `kernel.params()`.
///
/// 1. Solve at `lambda = 0`; if that policy is within budget it is optimal.
/// 2. Double `lambda` from 1 until the optimal policy is within budget, then
///    bisect until the bracket is at most `epsilon_lambda` wide, keeping the
///    lower end over budget and the upper end under it.
/// 3. Mix the two end policies so the average spend equals the budget.
///
/// A probe whose rate is within [`BINDING_TOL`] of the budget is returned
/// directly as a deterministic solution.
pub fn solve_cmdp(kernel: &Kernel, epsilon_lambda: f64, rvi: &RviConfig) -> Result<MixturePolicy> {
    if epsilon_lambda.is_nan() || epsilon_lambda <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "epsilon_lambda must be > 0, got {epsilon_lambda}"
        )));
    }
    rvi.validate()?;
    let gamma_max = kernel.params().gamma_max;
    let mut search = DualSearch {
        kernel,
        rvi: *rvi,
        probes: Vec::new(),
        warm: None,
    };

    let free = search.probe(0.0)?;
    if free.eval.avg_tx <= gamma_max {
        return Ok(search.single(0.0, free));
    }

    let (mut lo, mut lo_probe) = (0.0, free);
    let mut hi = 1.0;
    let mut hi_probe = None;
    for _ in 0..MAX_DOUBLINGS {
        let probe = search.probe(hi)?;
        if (probe.eval.avg_tx - gamma_max).abs() < BINDING_TOL {
            return Ok(search.single(hi, probe));
        }
        if probe.eval.avg_tx < gamma_max {
            hi_probe = Some(probe);
            break;
        }
        lo = hi;
        lo_probe = probe;
        hi *= 2.0;
    }
    let Some(mut hi_probe) = hi_probe else {
        return Err(Error::BracketFailure {
            lambda: lo,
            avg_tx: lo_probe.eval.avg_tx,
            gamma_max,
        });
    };

    while hi - lo > epsilon_lambda {
        let mid = 0.5 * (lo + hi);
        let probe = search.probe(mid)?;
        if (probe.eval.avg_tx - gamma_max).abs() < BINDING_TOL {
            return Ok(search.single(mid, probe));
        }
        if probe.eval.avg_tx > gamma_max {
            lo = mid;
            lo_probe = probe;
        } else {
            hi = mid;
            hi_probe = probe;
        }
    }

    let mu = mixing_weight(gamma_max, lo_probe.eval.avg_tx, hi_probe.eval.avg_tx);
    Ok(search.finish(lo, lo_probe, hi, hi_probe, mu))
}
