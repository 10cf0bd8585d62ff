//! State space, action elimination and transition structure of the
//! status-update link.
//!
//! A state is `(age, attempts, fresh)`: the AoI at the start of the slot,
//! how many times the last transmitted update has been sent, and whether a
//! new update was generated this slot. The age coordinate is truncated at
//! `delta_max`, where it saturates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DELTA_MAX: u32 = 1000;
pub const DEFAULT_L_MAX: u32 = 10;

/// Largest admissible row-sum error for a kernel row.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Per-slot probability that a fresh update is generated.
    pub p: f64,
    /// Per-transmission failure probability.
    pub gamma: f64,
    /// Budget on the long-run fraction of slots spent transmitting.
    pub gamma_max: f64,
    pub delta_max: u32,
    pub l_max: u32,
}

impl ModelParams {
    pub fn new(p: f64, gamma: f64, gamma_max: f64) -> Result<Self> {
        Self::with_truncation(p, gamma, gamma_max, DEFAULT_DELTA_MAX, DEFAULT_L_MAX)
    }

    pub fn with_truncation(
        p: f64,
        gamma: f64,
        gamma_max: f64,
        delta_max: u32,
        l_max: u32,
    ) -> Result<Self> {
        let params = ModelParams {
            p,
            gamma,
            gamma_max,
            delta_max,
            l_max,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("p must lie in (0, 1], got {}", self.p));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.gamma_max > 0.0 && self.gamma_max <= 1.0) {
            return bad(format!(
                "gamma_max must lie in (0, 1], got {}",
                self.gamma_max
            ));
        }
        if self.l_max < 1 {
            return bad("l_max must be at least 1".into());
        }
        if self.delta_max < self.l_max + 2 {
            return bad(format!(
                "delta_max ({}) must be at least l_max + 2 ({})",
                self.delta_max,
                self.l_max + 2
            ));
        }
        Ok(())
    }

    pub fn space(&self) -> StateSpace {
        StateSpace {
            delta_max: self.delta_max,
            l_max: self.l_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    /// AoI at the start of the slot (delta).
    pub age: u32,
    /// Transmissions of the last transmitted update (l).
    pub attempts: u32,
    /// A new update was generated this slot (b).
    pub fresh: bool,
}

impl State {
    pub const fn new(age: u32, attempts: u32, fresh: bool) -> Self {
        State {
            age,
            attempts,
            fresh,
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{})",
            self.age,
            self.attempts,
            u8::from(self.fresh)
        )
    }
}

/// Device action; the derived order (idle < retransmit < fresh) is the
/// order the monotonicity results are stated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Idle = 1,
    Retransmit = 2,
    TransmitFresh = 3,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Idle, Action::Retransmit, Action::TransmitFresh];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Action> {
        match code {
            1 => Some(Action::Idle),
            2 => Some(Action::Retransmit),
            3 => Some(Action::TransmitFresh),
            _ => None,
        }
    }

    pub fn transmits(self) -> bool {
        self != Action::Idle
    }

    /// Immediate cost: one unit per slot spent transmitting.
    pub fn cost(self) -> f64 {
        if self.transmits() {
            1.0
        } else {
            0.0
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Eligibility class of a state after action elimination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateClass {
    /// A fresh update is waiting: idle or send it.
    NewUpdate,
    /// The last update failed and may be resent: idle or retransmit.
    PendingRetry,
    /// Nothing worth sending.
    Passive,
}

const IDLE_ONLY: &[Action] = &[Action::Idle];
const IDLE_OR_RETRY: &[Action] = &[Action::Idle, Action::Retransmit];
const IDLE_OR_FRESH: &[Action] = &[Action::Idle, Action::TransmitFresh];

impl StateClass {
    /// Classifies a (possibly untruncated) state.
    pub fn of(state: State, l_max: u32) -> StateClass {
        if state.fresh {
            StateClass::NewUpdate
        } else if state.attempts > 0 && state.attempts < l_max && state.age != state.attempts {
            StateClass::PendingRetry
        } else {
            StateClass::Passive
        }
    }

    /// Allowed actions in ascending order.
    pub fn actions(self) -> &'static [Action] {
        match self {
            StateClass::NewUpdate => IDLE_OR_FRESH,
            StateClass::PendingRetry => IDLE_OR_RETRY,
            StateClass::Passive => IDLE_ONLY,
        }
    }

    /// The transmitting action of this class, if any.
    pub fn transmit_action(self) -> Option<Action> {
        match self {
            StateClass::NewUpdate => Some(Action::TransmitFresh),
            StateClass::PendingRetry => Some(Action::Retransmit),
            StateClass::Passive => None,
        }
    }
}

/// Dense indexing of the truncated state space.
///
/// States are ordered by age, then attempts, then the fresh flag; attempts
/// run over `0..=min(age, l_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    pub delta_max: u32,
    pub l_max: u32,
}

impl StateSpace {
    fn level_width(&self, age: u32) -> usize {
        2 * (age.min(self.l_max) as usize + 1)
    }

    /// Index of the first state with the given age.
    fn offset(&self, age: u32) -> usize {
        let below = age as usize - 1;
        let lm = self.l_max as usize;
        if below <= lm {
            below * (below + 3)
        } else {
            lm * (lm + 3) + 2 * (lm + 1) * (below - lm)
        }
    }

    pub fn len(&self) -> usize {
        self.offset(self.delta_max + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, s: State) -> bool {
        s.age >= 1 && s.age <= self.delta_max && s.attempts <= s.age.min(self.l_max)
    }

    pub fn index(&self, s: State) -> Option<usize> {
        self.contains(s)
            .then(|| self.offset(s.age) + 2 * s.attempts as usize + usize::from(s.fresh))
    }

    pub fn state(&self, index: usize) -> Option<State> {
        if index >= self.len() {
            return None;
        }
        let lm = self.l_max as usize;
        let age = if index < self.offset(self.l_max + 1) {
            // Levels below l_max + 1 have width 2(age + 1).
            let mut age = 1;
            while self.offset(age + 1) <= index {
                age += 1;
            }
            age
        } else {
            let rest = index - lm * (lm + 3);
            (lm + 1 + rest / (2 * (lm + 1))) as u32
        };
        let within = index - self.offset(age);
        debug_assert!(within < self.level_width(age));
        Some(State::new(age, (within / 2) as u32, within % 2 == 1))
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (1..=self.delta_max).flat_map(move |age| {
            (0..=age.min(self.l_max))
                .flat_map(move |l| [false, true].map(|fresh| State::new(age, l, fresh)))
        })
    }

    pub fn class(&self, s: State) -> StateClass {
        StateClass::of(s, self.l_max)
    }
}

/// Allowed actions in `s`, ascending.
pub fn allowed_actions(s: State, params: &ModelParams) -> Result<&'static [Action]> {
    let space = params.space();
    if !space.contains(s) {
        return Err(Error::InvalidState(s));
    }
    Ok(space.class(s).actions())
}

/// Untruncated one-slot dynamics given the channel outcome and the next
/// slot's generation flag.
pub fn advance(s: State, action: Action, delivered: bool, fresh_next: bool) -> State {
    match (action, delivered) {
        (Action::Idle, _) => State::new(s.age + 1, 0, fresh_next),
        (Action::Retransmit, true) => State::new(s.attempts + 1, s.attempts + 1, fresh_next),
        (Action::Retransmit, false) => State::new(s.age + 1, s.attempts + 1, fresh_next),
        (Action::TransmitFresh, true) => State::new(1, 1, fresh_next),
        (Action::TransmitFresh, false) => State::new(s.age + 1, 1, fresh_next),
    }
}

/// Successor distribution of `(s, action)` on the truncated space.
///
/// Zero-probability branches are omitted; the age saturates at `delta_max`.
pub fn transition(s: State, action: Action, params: &ModelParams) -> Result<Vec<(State, f64)>> {
    if !allowed_actions(s, params)?.contains(&action) {
        return Err(Error::DisallowedAction { state: s, action });
    }
    Ok(branches(s, action, params).collect())
}

fn branches(s: State, action: Action, params: &ModelParams) -> impl Iterator<Item = (State, f64)> {
    let ModelParams {
        p,
        gamma,
        delta_max,
        ..
    } = *params;
    // Idle has a single channel outcome; the second slot carries no mass.
    let channel = if action.transmits() {
        [(false, gamma), (true, 1.0 - gamma)]
    } else {
        [(false, 1.0), (false, 0.0)]
    };
    channel
        .into_iter()
        .flat_map(move |(delivered, pr)| {
            [(true, p), (false, 1.0 - p)]
                .into_iter()
                .map(move |(fresh_next, pb)| {
                    let mut next = advance(s, action, delivered, fresh_next);
                    next.age = next.age.min(delta_max);
                    (next, pr * pb)
                })
        })
        .filter(|&(_, pr)| pr > 0.0)
}

/// One (state, action) row: up to four successors.
#[derive(Debug, Clone, Copy)]
pub struct Row {
    pub action: Action,
    len: u8,
    succ: [(u32, f64); 4],
}

impl Row {
    pub fn successors(&self) -> &[(u32, f64)] {
        &self.succ[..self.len as usize]
    }

    /// Expected value of `values` at the next state.
    #[inline]
    pub fn expect(&self, values: &[f64]) -> f64 {
        self.successors()
            .iter()
            .map(|&(j, pr)| pr * values[j as usize])
            .sum()
    }
}

/// Transition, reward and cost structure over the truncated space, with a
/// row for every allowed (state, action) pair and no others.
#[derive(Debug, Clone)]
pub struct Kernel {
    params: ModelParams,
    space: StateSpace,
    states: Vec<State>,
    row_start: Vec<u32>,
    rows: Vec<Row>,
}

pub fn build_kernel(params: &ModelParams) -> Result<Kernel> {
    params.validate()?;
    let space = params.space();
    let states: Vec<State> = space.states().collect();
    let mut row_start = Vec::with_capacity(states.len() + 1);
    let mut rows = Vec::with_capacity(states.len() * 3 / 2);
    for &s in &states {
        row_start.push(rows.len() as u32);
        for &action in space.class(s).actions() {
            let mut row = Row {
                action,
                len: 0,
                succ: [(0, 0.0); 4],
            };
            for (next, pr) in branches(s, action, params) {
                let j = space
                    .index(next)
                    .expect("successor outside the state space");
                row.succ[row.len as usize] = (j as u32, pr);
                row.len += 1;
            }
            rows.push(row);
        }
    }
    row_start.push(rows.len() as u32);
    Ok(Kernel {
        params: *params,
        space,
        states,
        row_start,
        rows,
    })
}

impl Kernel {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn state(&self, index: usize) -> State {
        self.states[index]
    }

    pub fn index(&self, s: State) -> Option<usize> {
        self.space.index(s)
    }

    /// Rows of state `index`, in ascending action order.
    #[inline]
    pub fn rows(&self, index: usize) -> &[Row] {
        &self.rows[self.row_start[index] as usize..self.row_start[index + 1] as usize]
    }

    pub fn row(&self, index: usize, action: Action) -> Option<&Row> {
        self.rows(index).iter().find(|r| r.action == action)
    }

    pub fn all_rows(&self) -> impl Iterator<Item = (usize, &Row)> {
        (0..self.len()).flat_map(move |i| self.rows(i).iter().map(move |r| (i, r)))
    }

    /// Immediate reward: the current age.
    #[inline]
    pub fn reward(&self, index: usize) -> f64 {
        self.states[index].age as f64
    }

    pub fn cost(&self, _index: usize, action: Action) -> f64 {
        action.cost()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, gamma: f64) -> ModelParams {
        ModelParams::with_truncation(p, gamma, 0.3, 20, 10).unwrap()
    }

    fn as_sorted(mut v: Vec<(State, f64)>) -> Vec<(State, f64)> {
        v.sort_by_key(|a| a.0);
        v
    }

    fn assert_dist(got: Vec<(State, f64)>, want: &[((u32, u32, u8), f64)]) {
        let want = as_sorted(
            want.iter()
                .map(|&((d, l, b), pr)| (State::new(d, l, b == 1), pr))
                .collect(),
        );
        let got = as_sorted(got);
        assert_eq!(got.len(), want.len(), "{got:?}");
        for ((gs, gp), (ws, wp)) in got.iter().zip(&want) {
            assert_eq!(gs, ws);
            assert!((gp - wp).abs() < 1e-15, "{gs}: {gp} vs {wp}");
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParams::new(0.0, 0.3, 0.3).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0).is_ok());
        assert!(ModelParams::new(0.3, 1.0, 0.3).is_err());
        assert!(ModelParams::new(0.3, 0.3, 0.0).is_err());
        assert!(ModelParams::new(0.3, 0.3, 1.5).is_err());
        assert!(ModelParams::with_truncation(0.3, 0.3, 0.3, 11, 10).is_err());
        assert!(ModelParams::with_truncation(0.3, 0.3, 0.3, 12, 10).is_ok());
        assert!(ModelParams::with_truncation(0.3, 0.3, 0.3, 5, 0).is_err());
    }

    #[test]
    fn allowed_action_classes() {
        let pr = params(0.3, 0.3);
        let acts = |d, l, b| allowed_actions(State::new(d, l, b), &pr).unwrap();
        assert_eq!(acts(5, 2, true), &[Action::Idle, Action::TransmitFresh]);
        assert_eq!(acts(5, 2, false), &[Action::Idle, Action::Retransmit]);
        assert_eq!(acts(5, 5, false), &[Action::Idle]);
        assert_eq!(acts(12, 10, false), &[Action::Idle]);
        assert_eq!(acts(5, 0, false), &[Action::Idle]);
        // (delta = l, b = 1) is a fresh-update state like any other.
        assert_eq!(acts(3, 3, true), &[Action::Idle, Action::TransmitFresh]);
    }

    #[test]
    fn invalid_states_rejected() {
        let pr = params(0.3, 0.3);
        for s in [
            State::new(0, 0, false),
            State::new(3, 4, false),
            State::new(21, 1, true),
            State::new(15, 11, false),
        ] {
            assert!(matches!(
                allowed_actions(s, &pr),
                Err(Error::InvalidState(_))
            ));
        }
    }

    #[test]
    fn transition_examples() {
        let pr = params(0.3, 0.3);
        assert_dist(
            transition(State::new(5, 2, false), Action::Retransmit, &pr).unwrap(),
            &[
                ((6, 3, 1), 0.09),
                ((6, 3, 0), 0.21),
                ((3, 3, 1), 0.21),
                ((3, 3, 0), 0.49),
            ],
        );
        assert_dist(
            transition(State::new(5, 2, true), Action::TransmitFresh, &pr).unwrap(),
            &[
                ((6, 1, 1), 0.09),
                ((6, 1, 0), 0.21),
                ((1, 1, 1), 0.21),
                ((1, 1, 0), 0.49),
            ],
        );
        assert_dist(
            transition(State::new(20, 0, false), Action::Idle, &pr).unwrap(),
            &[((20, 0, 1), 0.3), ((20, 0, 0), 0.7)],
        );
    }

    #[test]
    fn disallowed_transition_rejected() {
        let pr = params(0.3, 0.3);
        let err = transition(State::new(5, 2, true), Action::Retransmit, &pr).unwrap_err();
        assert!(matches!(err, Error::DisallowedAction { .. }));
        assert!(transition(State::new(5, 5, false), Action::Retransmit, &pr).is_err());
    }

    #[test]
    fn degenerate_probabilities_drop_branches() {
        let pr = ModelParams::with_truncation(1.0, 0.0, 1.0, 5, 1).unwrap();
        assert_dist(
            transition(State::new(3, 0, true), Action::TransmitFresh, &pr).unwrap(),
            &[((1, 1, 1), 1.0)],
        );
    }

    #[test]
    fn small_space_count() {
        // delta in {1,2,3} x l in {0,1} x b in {0,1}; l <= min(delta, 1) removes nothing.
        let space = StateSpace {
            delta_max: 3,
            l_max: 1,
        };
        assert_eq!(space.len(), 12);
        assert_eq!(space.states().count(), 12);
    }

    #[test]
    fn full_size_count() {
        let pr = ModelParams::new(0.3, 0.3, 0.3).unwrap();
        let k = build_kernel(&pr).unwrap();
        // 1000 * 11 * 2 minus the (delta < l) triples for delta = 1..9.
        assert_eq!(k.len(), 22_000 - 2 * 45);
    }

    #[test]
    fn index_is_a_bijection() {
        for (dm, lm) in [(3, 1), (6, 2), (12, 10), (40, 7)] {
            let space = StateSpace {
                delta_max: dm,
                l_max: lm,
            };
            for (i, s) in space.states().enumerate() {
                assert_eq!(space.index(s), Some(i), "{s}");
                assert_eq!(space.state(i), Some(s));
            }
            assert_eq!(space.state(space.len()), None);
        }
    }

    #[test]
    fn kernel_costs_and_rewards() {
        let k = build_kernel(&params(0.4, 0.2)).unwrap();
        for (i, row) in k.all_rows() {
            let want = if row.action == Action::Idle { 0.0 } else { 1.0 };
            assert_eq!(k.cost(i, row.action), want);
            assert_eq!(k.reward(i), k.state(i).age as f64);
        }
    }
}
