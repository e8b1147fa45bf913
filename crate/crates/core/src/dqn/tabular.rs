//! Tabular Q-learning on small deterministic MDPs. Used as a reference for the
//! function-approximation stack.

use super::policy::argmax;

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { n_actions, values: vec![0.0; n_states * n_actions] }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, q: f64) {
        self.values[s * self.n_actions + a] = q;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn n_states(&self) -> usize {
        self.values.len() / self.n_actions
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.n_states()).map(|s| argmax(self.row(s))).collect()
    }
}

/// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`.
pub fn tabular_q_update(q: &mut QTable, s: usize, a: usize, r: f64, s_next: usize, alpha: f64, gamma: f64) {
    let best_next = q.row(s_next).iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let old = q.get(s, a);
    q.set(s, a, old + alpha * (r + gamma * best_next - old));
}

/// A finite MDP with deterministic transitions and rewards and no terminal states.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicMdp {
    /// `next[s][a]`
    pub next: Vec<Vec<usize>>,
    /// `reward[s][a]`
    pub reward: Vec<Vec<f64>>,
}

impl DeterministicMdp {
    /// Four states on a line with actions {left, right}. Moving right out of the
    /// last state pays 1 and returns to the start; bumping the left wall pays 0.1.
    /// Optimal play (for discounts above ~0.5) is to keep moving right.
    pub fn four_state_chain() -> Self {
        Self {
            next: vec![vec![0, 1], vec![0, 2], vec![1, 3], vec![2, 0]],
            reward: vec![vec![0.1, 0.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]],
        }
    }

    /// Four states where the best action differs per state: each state has a
    /// "cash out" action paying immediately and a "move on" action that leads to
    /// a better payout later.
    pub fn four_state_mixed() -> Self {
        Self {
            next: vec![vec![1, 0], vec![2, 0], vec![1, 3], vec![0, 0]],
            reward: vec![vec![0.0, 0.3], vec![0.0, 0.6], vec![0.2, 0.0], vec![1.0, 0.0]],
        }
    }

    pub fn n_states(&self) -> usize {
        self.next.len()
    }

    pub fn n_actions(&self) -> usize {
        self.next[0].len()
    }

    pub fn step(&self, s: usize, a: usize) -> (usize, f64) {
        (self.next[s][a], self.reward[s][a])
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states()];
        v[s] = 1.0;
        v
    }

    /// Synchronous sweeps of the tabular rule over every (s, a) until the largest
    /// change falls below `tol`.
    pub fn solve_tabular(&self, alpha: f64, gamma: f64, tol: f64, max_sweeps: usize) -> QTable {
        let mut q = QTable::new(self.n_states(), self.n_actions());
        for _ in 0..max_sweeps {
            let before = q.clone();
            for s in 0..self.n_states() {
                for a in 0..self.n_actions() {
                    let (s2, r) = self.step(s, a);
                    tabular_q_update(&mut q, s, a, r, s2, alpha, gamma);
                }
            }
            let delta = q.values.iter().zip(&before.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if delta < tol {
                break;
            }
        }
        q
    }
}
