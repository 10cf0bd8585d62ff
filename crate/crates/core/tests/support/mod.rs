//! Brute-force reference for small instances.
//!
//! Enumerates every deterministic policy on the eliminated action space,
//! builds its transition matrix straight from the slot dynamics (without
//! going through the library's kernel), and solves for the stationary law by
//! dense Gaussian elimination.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::HashMap;

const MAX_STATES: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct St {
    pub d: u32,
    pub l: u32,
    pub b: u32,
}

/// Long-run (average age, transmission rate) of one policy.
#[derive(Clone, Copy, Debug)]
pub struct Averages {
    pub aoi: f64,
    pub tx: f64,
}

pub struct BruteForce {
    pub states: Vec<St>,
    index: HashMap<St, usize>,
    /// (state index, transmitting action code) for every state with a choice.
    pub choices: Vec<(usize, u8)>,
    p: f64,
    gamma: f64,
    dm: u32,
}

impl BruteForce {
    pub fn new(p: f64, gamma: f64, dm: u32, lm: u32) -> Self {
        let mut states = Vec::new();
        for d in 1..=dm {
            for l in 0..=d.min(lm) {
                for b in 0..2 {
                    states.push(St { d, l, b });
                }
            }
        }
        assert!(states.len() <= MAX_STATES);
        let index = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut choices = Vec::new();
        for (i, s) in states.iter().enumerate() {
            // Age 1 with l = 0 has no predecessor; its action never matters.
            if s.d == 1 && s.l == 0 {
                continue;
            }
            if s.b == 1 {
                choices.push((i, 3));
            } else if s.l > 0 && s.l < lm && s.d != s.l {
                choices.push((i, 2));
            }
        }
        BruteForce {
            states,
            index,
            choices,
            p,
            gamma,
            dm,
        }
    }

    pub fn policy_count(&self) -> u64 {
        1u64 << self.choices.len()
    }

    /// Action code per state for policy number `mask`.
    pub fn actions(&self, mask: u64) -> Vec<u8> {
        let mut a = vec![1u8; self.states.len()];
        for (bit, &(i, code)) in self.choices.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                a[i] = code;
            }
        }
        a
    }

    fn add_successors(&self, s: St, action: u8, row: &mut [f64]) {
        let sat = |d: u32| d.min(self.dm);
        let mut put = |d: u32, l: u32, pr: f64| {
            for (b, pb) in [(1, self.p), (0, 1.0 - self.p)] {
                row[self.index[&St { d, l, b }]] += pr * pb;
            }
        };
        match action {
            1 => put(sat(s.d + 1), 0, 1.0),
            2 => {
                put(sat(s.d + 1), s.l + 1, self.gamma);
                put(s.l + 1, s.l + 1, 1.0 - self.gamma);
            }
            3 => {
                put(sat(s.d + 1), 1, self.gamma);
                put(1, 1, 1.0 - self.gamma);
            }
            _ => unreachable!(),
        }
    }

    /// Exact averages of the policy given as one action code per state.
    pub fn evaluate(&self, actions: &[u8]) -> Averages {
        let n = self.states.len();
        // Row j of `m` is the balance equation of state j: sum_i pi_i (I - P)_ij = 0.
        let mut m = [[0.0f64; MAX_STATES + 1]; MAX_STATES];
        let mut row = [0.0f64; MAX_STATES];
        for i in 0..n {
            row[..n].fill(0.0);
            self.add_successors(self.states[i], actions[i], &mut row);
            for j in 0..n {
                m[j][i] = if i == j { 1.0 } else { 0.0 } - row[j];
            }
        }
        // Replace the last balance equation by normalization.
        for i in 0..n {
            m[n - 1][i] = 1.0;
        }
        m[n - 1][n] = 1.0;
        let pi = gauss_solve(&mut m, n);
        let mut aoi = 0.0;
        let mut tx = 0.0;
        for i in 0..n {
            aoi += pi[i] * self.states[i].d as f64;
            if actions[i] != 1 {
                tx += pi[i];
            }
        }
        Averages { aoi, tx }
    }

    /// Averages of every policy, indexed by mask.
    pub fn enumerate(&self) -> Vec<Averages> {
        (0..self.policy_count())
            .map(|mask| self.evaluate(&self.actions(mask)))
            .collect()
    }
}

/// Minimum of `aoi + lambda * tx` over all policies.
pub fn best_lagrangian(all: &[Averages], lambda: f64) -> f64 {
    all.iter()
        .map(|a| a.aoi + lambda * a.tx)
        .fold(f64::INFINITY, f64::min)
}

/// Gaussian elimination with partial pivoting on an augmented n x (n+1) system.
fn gauss_solve(m: &mut [[f64; MAX_STATES + 1]; MAX_STATES], n: usize) -> [f64; MAX_STATES] {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let inv = 1.0 / m[col][col];
        for r in col + 1..n {
            let f = m[r][col] * inv;
            if f != 0.0 {
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let mut x = [0.0; MAX_STATES];
    for r in (0..n).rev() {
        let mut acc = m[r][n];
        for c in r + 1..n {
            acc -= m[r][c] * x[c];
        }
        x[r] = acc / m[r][r];
    }
    x
}
