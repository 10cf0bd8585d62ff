//! Relative value iteration for the Lagrangian-relaxed average-cost MDP.
//!
//! For a multiplier `lambda` the per-slot objective is
//! `age + lambda * 1[action transmits]`. Each sweep computes, for every
//! state, the minimum over its allowed actions of
//!
//! ```text
//! Q(s, a) = age(s) + lambda * cost(a) + E[h(s') | s, a]
//! ```
//!
//! and renormalizes so the reference state has zero bias. Iteration stops
//! once the span of the per-state change falls under `span_tol`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Action, Kernel, Row, State};
use crate::policy::DeterministicPolicy;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RviConfig {
    pub lambda: f64,
    pub span_tol: f64,
    pub max_iters: usize,
    pub ref_state: State,
    /// Weight `tau` of the aperiodicity transform `tau * P + (1 - tau) * I`.
    /// `1.0` runs the plain recursion; anything in `(0, 1)` also converges
    /// on periodic chains. Gain, bias and policy are reported for the
    /// original chain either way.
    pub aperiodicity: f64,
    pub execution: Execution,
}

impl Default for RviConfig {
    fn default() -> Self {
        RviConfig {
            lambda: 0.0,
            span_tol: 1e-6,
            max_iters: 100_000,
            ref_state: State::new(1, 1, false),
            aperiodicity: 1.0,
            execution: Execution::default(),
        }
    }
}

impl RviConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if self.span_tol.is_nan() || self.span_tol <= 0.0 {
            return bad(format!("span_tol must be > 0, got {}", self.span_tol));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".into());
        }
        if !(self.aperiodicity > 0.0 && self.aperiodicity <= 1.0) {
            return bad(format!(
                "aperiodicity must lie in (0, 1], got {}",
                self.aperiodicity
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RviSolution {
    pub lambda: f64,
    pub policy: DeterministicPolicy,
    /// Optimal Lagrangian gain: average age plus lambda times the
    /// transmission rate.
    pub gain: f64,
    /// Relative values, zero at the reference state.
    pub bias: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Span of the last bias update.
    pub span: f64,
}

impl RviSolution {
    /// Largest violation of `gain + h(s) = min_a Q(s, a)` over all states.
    pub fn optimality_residual(&self, kernel: &Kernel) -> f64 {
        (0..kernel.len())
            .map(|i| {
                let (best, _) = best_row(kernel, i, &self.bias, self.lambda, 1.0);
                (self.gain + self.bias[i] - best).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[inline]
fn row_q(kernel: &Kernel, index: usize, row: &Row, h: &[f64], lambda: f64, tau: f64) -> f64 {
    let future = if tau == 1.0 {
        row.expect(h)
    } else {
        tau * row.expect(h) + (1.0 - tau) * h[index]
    };
    kernel.reward(index) + lambda * row.action.cost() + future
}

/// Minimum Q over the state's rows; exact ties go to the smaller action.
#[inline]
fn best_row(kernel: &Kernel, index: usize, h: &[f64], lambda: f64, tau: f64) -> (f64, Action) {
    let mut rows = kernel.rows(index).iter();
    let first = rows.next().expect("every state has an idle row");
    let mut best = (row_q(kernel, index, first, h, lambda, tau), first.action);
    for row in rows {
        let q = row_q(kernel, index, row, h, lambda, tau);
        if q < best.0 {
            best = (q, row.action);
        }
    }
    best
}

/// `age + lambda * cost + E[h(next)]` for an allowed (state, action) pair.
pub fn q_value(kernel: &Kernel, s: State, action: Action, h: &[f64], lambda: f64) -> Result<f64> {
    let index = kernel.index(s).ok_or(Error::InvalidState(s))?;
    let row = kernel
        .row(index, action)
        .ok_or(Error::DisallowedAction { state: s, action })?;
    Ok(row_q(kernel, index, row, h, lambda, 1.0))
}

/// Greedy policy with respect to a bias vector.
pub fn greedy_policy(
    kernel: &Kernel,
    h: &[f64],
    lambda: f64,
    execution: Execution,
) -> DeterministicPolicy {
    let mut actions = vec![Action::Idle; kernel.len()];
    execution.fill(&mut actions, |i, a| {
        *a = best_row(kernel, i, h, lambda, 1.0).1
    });
    DeterministicPolicy::from_raw(kernel.space(), actions)
}

/// Runs relative value iteration from `h = 0`.
///
/// A run that hits `max_iters` is returned with `converged == false`; the
/// caller decides whether that is fatal.
pub fn rvi_solve(kernel: &Kernel, cfg: &RviConfig) -> Result<RviSolution> {
    rvi_solve_from(kernel, cfg, None)
}

/// Like [`rvi_solve`], starting from a given bias vector.
pub fn rvi_solve_from(
    kernel: &Kernel,
    cfg: &RviConfig,
    start: Option<&[f64]>,
) -> Result<RviSolution> {
    cfg.validate()?;
    let ref_index = kernel
        .index(cfg.ref_state)
        .ok_or(Error::InvalidState(cfg.ref_state))?;
    let n = kernel.len();
    let tau = cfg.aperiodicity;
    let lambda = cfg.lambda;

    // Iterates for the transformed chain; the original bias is tau * h.
    let mut h = match start {
        Some(h0) if h0.len() == n => h0.iter().map(|v| v / tau).collect(),
        Some(_) => return Err(Error::SpaceMismatch),
        None => vec![0.0; n],
    };
    let mut next = vec![0.0; n];
    let mut span = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        iterations += 1;
        cfg.execution.fill(&mut next, |i, v| {
            *v = best_row(kernel, i, &h, lambda, tau).0
        });
        let offset = next[ref_index];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (new, old) in next.iter_mut().zip(h.iter()) {
            *new -= offset;
            let d = *new - *old;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        std::mem::swap(&mut h, &mut next);
        span = hi - lo;
        if span < cfg.span_tol {
            converged = true;
            break;
        }
    }

    if tau != 1.0 {
        h.iter_mut().for_each(|v| *v *= tau);
    }
    let gain = best_row(kernel, ref_index, &h, lambda, 1.0).0 - h[ref_index];
    let policy = greedy_policy(kernel, &h, lambda, cfg.execution);
    Ok(RviSolution {
        lambda,
        policy,
        gain,
        bias: h,
        iterations,
        converged,
        span,
    })
}
