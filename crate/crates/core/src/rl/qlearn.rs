//! Tabular Q-learning and a small deterministic chain MDP.

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    /// `q[state][action]`.
    pub q: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize, gamma: f64) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(domain("Q-table needs at least one state and one action"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(domain(format!("discount {gamma} outside [0, 1]")));
        }
        Ok(Self { q: vec![vec![0.0; n_actions]; n_states], gamma })
    }

    pub fn n_states(&self) -> usize {
        self.q.len()
    }

    pub fn n_actions(&self) -> usize {
        self.q[0].len()
    }

    /// Highest-valued action, lowest index on ties.
    pub fn greedy(&self, s: usize) -> usize {
        let row = &self.q[s];
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.n_states()).map(|s| self.greedy(s)).collect()
    }

    pub fn max_value(&self, s: usize) -> f64 {
        self.q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `Q(s,a) += alpha (reward + gamma max_a' Q(s',a') - Q(s,a))`; a terminal
/// transition (`s_next = None`) bootstraps from zero.
pub fn q_update(table: &mut QTable, s: usize, a: usize, reward: f64, s_next: Option<usize>, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(domain(format!("learning rate {alpha} outside (0, 1]")));
    }
    let (ns, na) = (table.n_states(), table.n_actions());
    if s >= ns || a >= na || s_next.is_some_and(|x| x >= ns) {
        return Err(domain(format!("transition ({s}, {a}) -> {s_next:?} outside a {ns}x{na} table")));
    }
    if !reward.is_finite() {
        return Err(domain("non-finite reward"));
    }
    let future = s_next.map_or(0.0, |x| table.max_value(x));
    let target = reward + table.gamma * future;
    let q = &mut table.q[s][a];
    *q += alpha * (target - *q);
    Ok(())
}

/// Four states in a row; action 0 moves left, action 1 moves right, both
/// clamped at the ends. Moving right from the last state pays 1, moving
/// left from the first pays 0.8, everything else pays 0. With a discount of
/// 0.9 the optimal policy loops left at the first state and heads right
/// everywhere else.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainMdp;

impl ChainMdp {
    pub const N_STATES: usize = 4;
    pub const N_ACTIONS: usize = 2;

    pub fn step(&self, s: usize, a: usize) -> (usize, f64) {
        let last = Self::N_STATES - 1;
        match a {
            0 => (s.saturating_sub(1), if s == 0 { 0.8 } else { 0.0 }),
            _ => ((s + 1).min(last), if s == last { 1.0 } else { 0.0 }),
        }
    }
}
