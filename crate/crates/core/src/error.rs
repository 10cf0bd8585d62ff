use thiserror::Error;

use crate::model::{Action, State};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("state {0} is outside the truncated state space")]
    InvalidState(State),

    #[error("action {action} is not allowed in state {state}")]
    DisallowedAction { state: State, action: Action },

    #[error("policy is defined over a different state space")]
    SpaceMismatch,

    #[error("stationary distribution did not converge after {iterations} iterations (L1 residual {residual:e})")]
    StationaryNotConverged { iterations: usize, residual: f64 },

    #[error("relative value iteration did not converge at lambda={lambda} after {iterations} iterations (span {span:e})")]
    RviNotConverged {
        lambda: f64,
        iterations: usize,
        span: f64,
    },

    #[error("no lambda up to {lambda} brings the transmission rate ({avg_tx}) under the budget {gamma_max}")]
    BracketFailure {
        lambda: f64,
        avg_tx: f64,
        gamma_max: f64,
    },

    #[error("policy is not monotone in slice (l={attempts}, b={}) at delta={age}", u8::from(*.fresh))]
    NonMonotone {
        attempts: u32,
        fresh: bool,
        age: u32,
    },

    #[error("policy changes action between delta_max-1 and delta_max in slice (l={attempts}, b={}); clamping would be inexact", u8::from(*.fresh))]
    ClampUnsafe { attempts: u32, fresh: bool },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
