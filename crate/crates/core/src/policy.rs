use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, State, StateClass, StateSpace};

/// Stationary policy over the truncated space, seen through the single
/// number that matters after action elimination: the probability of taking
/// the state's transmitting action.
pub trait StationaryPolicy: Sync {
    fn space(&self) -> StateSpace;

    /// Probability of the transmitting action in the state with this index.
    /// Zero for passive states.
    fn transmit_probability(&self, index: usize, state: State) -> f64;
}

/// One action per state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    space: StateSpace,
    actions: Vec<Action>,
}

impl DeterministicPolicy {
    /// Builds a policy from per-state actions, rejecting any that action
    /// elimination rules out.
    pub fn from_actions(space: StateSpace, actions: Vec<Action>) -> Result<Self> {
        if actions.len() != space.len() {
            return Err(Error::SpaceMismatch);
        }
        for (s, &a) in space.states().zip(&actions) {
            if !space.class(s).actions().contains(&a) {
                return Err(Error::DisallowedAction {
                    state: s,
                    action: a,
                });
            }
        }
        Ok(DeterministicPolicy { space, actions })
    }

    /// Builds a policy from a per-state choice of whether to transmit.
    pub fn from_fn(space: StateSpace, mut transmit: impl FnMut(State) -> bool) -> Self {
        let actions = space
            .states()
            .map(|s| match space.class(s).transmit_action() {
                Some(a) if transmit(s) => a,
                _ => Action::Idle,
            })
            .collect();
        DeterministicPolicy { space, actions }
    }

    pub fn idle(space: StateSpace) -> Self {
        Self::from_fn(space, |_| false)
    }

    /// Transmits in every state where some transmission is allowed.
    pub fn greedy(space: StateSpace) -> Self {
        Self::from_fn(space, |_| true)
    }

    pub(crate) fn from_raw(space: StateSpace, actions: Vec<Action>) -> Self {
        debug_assert_eq!(actions.len(), space.len());
        DeterministicPolicy { space, actions }
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action_at(&self, index: usize) -> Action {
        self.actions[index]
    }

    pub fn action(&self, s: State) -> Option<Action> {
        self.space.index(s).map(|i| self.actions[i])
    }

    /// Action for a state of the untruncated chain; ages beyond the
    /// truncation bound reuse the `delta_max` row.
    pub fn action_clamped(&self, s: State) -> Option<Action> {
        let clamped = State::new(s.age.min(self.space.delta_max), s.attempts, s.fresh);
        self.action(clamped)
    }

    /// Checks that clamping ages above `delta_max` is exact, i.e. every
    /// slice already has its final action at `delta_max - 1`.
    pub fn check_clamp_safe(&self) -> Result<()> {
        let dm = self.space.delta_max;
        for attempts in 0..=self.space.l_max {
            for fresh in [false, true] {
                let below = self.action(State::new(dm - 1, attempts, fresh));
                let at = self.action(State::new(dm, attempts, fresh));
                if below != at {
                    return Err(Error::ClampUnsafe { attempts, fresh });
                }
            }
        }
        Ok(())
    }

    pub fn transmitting_states(&self) -> usize {
        self.actions.iter().filter(|a| a.transmits()).count()
    }
}

impl StationaryPolicy for DeterministicPolicy {
    fn space(&self) -> StateSpace {
        self.space
    }

    fn transmit_probability(&self, index: usize, _state: State) -> f64 {
        if self.actions[index].transmits() {
            1.0
        } else {
            0.0
        }
    }
}

/// Transmits with a fixed probability in every state that allows a
/// transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformRandomPolicy {
    pub space: StateSpace,
    pub q: f64,
}

impl StationaryPolicy for UniformRandomPolicy {
    fn space(&self) -> StateSpace {
        self.space
    }

    fn transmit_probability(&self, _index: usize, state: State) -> f64 {
        match StateClass::of(state, self.space.l_max) {
            StateClass::Passive => 0.0,
            _ => self.q,
        }
    }
}
