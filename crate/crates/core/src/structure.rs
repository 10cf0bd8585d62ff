//! Threshold structure of deterministic policies.
//!
//! Optimal tie-broken policies are nondecreasing in the age for every
//! `(attempts, fresh)` slice and nonincreasing in `attempts` among
//! retry-eligible states of equal age. A policy with that shape is fully
//! described by one switching age per slice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, State, StateClass, StateSpace};
use crate::policy::DeterministicPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    Age,
    Attempts,
}

/// An adjacent pair along `axis` where the action moves the wrong way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub axis: Axis,
    pub before: State,
    pub after: State,
    pub before_action: Action,
    pub after_action: Action,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// Adjacent pairs compared.
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl MonotonicityReport {
    pub fn is_monotone(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Slices `(attempts, fresh)` whose states have a real choice to make.
fn decision_slices(space: StateSpace) -> impl Iterator<Item = (u32, bool)> {
    let fresh = (0..=space.l_max).map(|l| (l, true));
    let retry = (1..space.l_max).map(|l| (l, false));
    fresh.chain(retry)
}

/// Decision states of one slice, ordered by age.
fn slice_states(space: StateSpace, attempts: u32, fresh: bool) -> impl Iterator<Item = State> {
    (attempts.max(1)..=space.delta_max)
        .map(move |age| State::new(age, attempts, fresh))
        .filter(move |&s| space.class(s) != StateClass::Passive)
}

fn scan(
    axis: Axis,
    pairs: impl Iterator<Item = (State, State)>,
    policy: &DeterministicPolicy,
    wrong_way: impl Fn(Action, Action) -> bool,
    report: &mut MonotonicityReport,
) {
    for (before, after) in pairs {
        let (Some(a), Some(b)) = (policy.action(before), policy.action(after)) else {
            continue;
        };
        report.checked += 1;
        if wrong_way(a, b) {
            report.violations.push(Violation {
                axis,
                before,
                after,
                before_action: a,
                after_action: b,
            });
        }
    }
}

/// Checks that the action never decreases as the age grows within a slice.
pub fn check_monotone_delta(policy: &DeterministicPolicy) -> MonotonicityReport {
    let space = policy.space();
    let mut report = MonotonicityReport::default();
    for (attempts, fresh) in decision_slices(space) {
        let states: Vec<State> = slice_states(space, attempts, fresh).collect();
        let pairs = states.windows(2).map(|w| (w[0], w[1]));
        scan(Axis::Age, pairs, policy, |a, b| b < a, &mut report);
    }
    report
}

/// Checks that, at fixed age and no fresh update, the action never
/// increases with the number of attempts across retry-eligible states.
pub fn check_monotone_l(policy: &DeterministicPolicy) -> MonotonicityReport {
    let space = policy.space();
    let mut report = MonotonicityReport::default();
    for age in 2..=space.delta_max {
        let states: Vec<State> = (1..space.l_max.min(age))
            .map(|l| State::new(age, l, false))
            .collect();
        let pairs = states.windows(2).map(|w| (w[0], w[1]));
        scan(Axis::Attempts, pairs, policy, |a, b| b > a, &mut report);
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceThreshold {
    pub attempts: u32,
    pub fresh: bool,
    /// Smallest age at which the slice transmits; `None` if it never does.
    pub delta_star: Option<u32>,
}

/// Switching age per decision slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdBoundary {
    pub space: StateSpace,
    pub slices: Vec<SliceThreshold>,
}

impl ThresholdBoundary {
    pub fn threshold(&self, attempts: u32, fresh: bool) -> Option<Option<u32>> {
        self.slices
            .iter()
            .find(|t| t.attempts == attempts && t.fresh == fresh)
            .map(|t| t.delta_star)
    }

    /// Expands the boundary back into a per-state policy.
    pub fn reconstruct(&self) -> DeterministicPolicy {
        DeterministicPolicy::from_fn(
            self.space,
            |s| matches!(self.threshold(s.attempts, s.fresh), Some(Some(t)) if s.age >= t),
        )
    }

    /// True when every slice of `self` switches no earlier than the same
    /// slice of `other` ("never" counts as later than any age).
    pub fn dominates(&self, other: &ThresholdBoundary) -> bool {
        let key = |t: Option<u32>| t.unwrap_or(u32::MAX);
        self.space == other.space
            && self.slices.iter().zip(&other.slices).all(|(a, b)| {
                a.attempts == b.attempts
                    && a.fresh == b.fresh
                    && key(a.delta_star) >= key(b.delta_star)
            })
    }
}

/// Compresses a monotone policy into its switching ages.
///
/// Fails on the first slice where the action is not nondecreasing in age.
pub fn extract_boundary(policy: &DeterministicPolicy) -> Result<ThresholdBoundary> {
    let space = policy.space();
    let mut slices = Vec::new();
    for (attempts, fresh) in decision_slices(space) {
        let mut delta_star = None;
        for s in slice_states(space, attempts, fresh) {
            let transmits = policy.action(s).is_some_and(Action::transmits);
            match (delta_star, transmits) {
                (None, true) => delta_star = Some(s.age),
                (Some(_), false) => {
                    return Err(Error::NonMonotone {
                        attempts,
                        fresh,
                        age: s.age,
                    })
                }
                _ => {}
            }
        }
        slices.push(SliceThreshold {
            attempts,
            fresh,
            delta_star,
        });
    }
    Ok(ThresholdBoundary { space, slices })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> StateSpace {
        StateSpace {
            delta_max: 12,
            l_max: 5,
        }
    }

    #[test]
    fn idle_policy_is_monotone() {
        let pol = DeterministicPolicy::idle(space());
        assert!(check_monotone_delta(&pol).is_monotone());
        assert!(check_monotone_l(&pol).is_monotone());
        let b = extract_boundary(&pol).unwrap();
        assert!(b.slices.iter().all(|t| t.delta_star.is_none()));
        assert_eq!(b.reconstruct(), pol);
    }

    #[test]
    fn single_upward_switch_in_age() {
        let pol = DeterministicPolicy::from_fn(space(), |s| s.fresh && s.age >= 3);
        let report = check_monotone_delta(&pol);
        assert!(report.is_monotone());
        assert!(report.checked > 0);
        let b = extract_boundary(&pol).unwrap();
        assert_eq!(b.threshold(0, true), Some(Some(3)));
        assert_eq!(b.threshold(4, true), Some(Some(4)));
        assert_eq!(b.threshold(2, false), Some(None));
        assert_eq!(b.threshold(0, false), None);
    }

    #[test]
    fn downward_switch_in_age_flagged() {
        let pol =
            DeterministicPolicy::from_fn(space(), |s| s.fresh && s.attempts == 0 && s.age < 4);
        let report = check_monotone_delta(&pol);
        assert_eq!(report.violations.len(), 1);
        let v = report.violations[0];
        assert_eq!((v.before.age, v.after.age), (3, 4));
        assert!(matches!(
            extract_boundary(&pol),
            Err(Error::NonMonotone {
                attempts: 0,
                fresh: true,
                age: 4
            })
        ));
    }

    #[test]
    fn retries_stop_as_attempts_grow() {
        // Retry at l = 1, 2 only: actions (2, 2, 1, 1) over l = 1..4.
        let pol = DeterministicPolicy::from_fn(space(), |s| !s.fresh && s.attempts <= 2);
        assert!(check_monotone_l(&pol).is_monotone());
        let row: Vec<Action> = (1..5)
            .map(|l| pol.action(State::new(9, l, false)).unwrap())
            .collect();
        assert_eq!(
            row,
            [
                Action::Retransmit,
                Action::Retransmit,
                Action::Idle,
                Action::Idle
            ]
        );
    }

    #[test]
    fn retry_increase_in_attempts_flagged() {
        // Actions (1, 2) over l = 1..2.
        let pol = DeterministicPolicy::from_fn(space(), |s| !s.fresh && s.attempts == 2);
        let report = check_monotone_l(&pol);
        assert!(!report.is_monotone());
        let v = report.violations[0];
        assert_eq!(v.axis, Axis::Attempts);
        assert_eq!((v.before.attempts, v.after.attempts), (1, 2));
        assert_eq!(
            (v.before_action, v.after_action),
            (Action::Idle, Action::Retransmit)
        );
    }

    #[test]
    fn round_trip_on_threshold_family() {
        let pol = DeterministicPolicy::from_fn(space(), |s| {
            if s.fresh {
                s.age >= 4 + s.attempts / 2
            } else {
                s.age >= 3 + 2 * s.attempts
            }
        });
        assert!(check_monotone_delta(&pol).is_monotone());
        let b = extract_boundary(&pol).unwrap();
        assert_eq!(b.reconstruct(), pol);
    }

    #[test]
    fn dominance_treats_never_as_latest() {
        let early =
            extract_boundary(&DeterministicPolicy::from_fn(space(), |s| s.age >= 3)).unwrap();
        let late =
            extract_boundary(&DeterministicPolicy::from_fn(space(), |s| s.age >= 6)).unwrap();
        let never = extract_boundary(&DeterministicPolicy::idle(space())).unwrap();
        assert!(late.dominates(&early));
        assert!(!early.dominates(&late));
        assert!(never.dominates(&late));
        assert!(early.dominates(&early));
    }
}
