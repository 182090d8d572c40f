//! Exact shortest completion times for the kitchen.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SolverError;
use crate::kitchen::{JointAction, KitchenMdp, KitchenState, WorkerStatus};
use crate::mdp::{rollout_from, Mdp, Policy, QFunction};

/// Minimum ticks-to-finish for every state reachable from the start.
///
/// Assignment counts and the clock do not affect the dynamics, so states are
/// keyed on order stages and worker statuses only. Ignoring the horizon, the
/// state graph minus idle self-loops is acyclic, which makes a memoized
/// depth-first search exact.
#[derive(Debug, Clone)]
pub struct Oracle {
    mdp: KitchenMdp,
    dist: HashMap<u32, u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub ticks: u32,
    pub actions: Vec<JointAction>,
    pub states_explored: usize,
}

impl Oracle {
    pub fn build(mdp: &KitchenMdp, max_states: usize) -> Result<Self, SolverError> {
        let mut oracle = Self { mdp: mdp.clone(), dist: HashMap::new() };
        let s0 = mdp.initial_state();
        oracle.search(&s0, max_states)?;
        Ok(oracle)
    }

    pub fn mdp(&self) -> &KitchenMdp {
        &self.mdp
    }

    pub fn states_explored(&self) -> usize {
        self.dist.len()
    }

    /// Ticks to plate everything from `state`, ignoring the horizon.
    pub fn distance(&self, state: &KitchenState) -> Option<u32> {
        if state.all_plated() {
            return Some(0);
        }
        self.dist.get(&key(state)).map(|&d| u32::from(d))
    }

    /// Optimal value under the horizon: minus the ticks still to be spent.
    pub fn value(&self, state: &KitchenState) -> f64 {
        if self.mdp.is_terminal(state) {
            return 0.0;
        }
        let left = self.mdp.horizon().saturating_sub(state.tick);
        let d = self.distance(state).unwrap_or(left);
        -f64::from(d.min(left))
    }

    /// An optimal action, ties broken by enumeration order.
    pub fn best_action(&self, state: &KitchenState) -> Option<JointAction> {
        let here = key(state);
        self.mdp
            .legal_actions(state)
            .into_iter()
            .filter(|a| key(&self.mdp.next_state(state, a)) != here)
            .min_by_key(|a| self.distance(&self.mdp.next_state(state, a)).unwrap_or(u32::MAX))
    }

    pub fn solution(&self) -> OracleSolution {
        let mut s = self.mdp.initial_state();
        let mut actions = Vec::new();
        while !self.mdp.is_terminal(&s) {
            let a = self.best_action(&s).expect("non-terminal state has an action");
            s = self.mdp.next_state(&s, &a);
            actions.push(a);
        }
        OracleSolution { ticks: s.tick, actions, states_explored: self.dist.len() }
    }

    fn search(&mut self, state: &KitchenState, max_states: usize) -> Result<u32, SolverError> {
        if state.all_plated() {
            return Ok(0);
        }
        let k = key(state);
        if let Some(&d) = self.dist.get(&k) {
            return Ok(u32::from(d));
        }
        if self.dist.len() >= max_states {
            return Err(SolverError::Budget { limit: max_states });
        }
        let mut best = u32::MAX;
        for a in self.mdp.legal_actions(state) {
            let mut next = self.mdp.next_state(state, &a);
            if key(&next) == k {
                continue;
            }
            // Distances ignore the horizon, so keep the clock from running out.
            next.tick = 0;
            best = best.min(self.search(&next, max_states)?);
        }
        let d = best.saturating_add(1);
        self.dist.insert(k, u8::try_from(d).unwrap_or(u8::MAX));
        Ok(d)
    }
}

/// Solves the kitchen exactly and returns an optimal schedule.
pub fn solve_oracle(mdp: &KitchenMdp, max_states: usize) -> Result<OracleSolution, SolverError> {
    Ok(Oracle::build(mdp, max_states)?.solution())
}

impl QFunction<KitchenMdp> for Oracle {
    fn q(&self, mdp: &KitchenMdp, state: &KitchenState, action: &JointAction, _: u32) -> f64 {
        mdp.reward(state, action) + self.value(&mdp.next_state(state, action))
    }
}

fn key(s: &KitchenState) -> u32 {
    let mut k = 0u32;
    for st in s.stages {
        k = (k << 2) | st as u32;
    }
    for w in s.workers {
        let code = match w {
            WorkerStatus::Idle => 0,
            WorkerStatus::Absent => 1,
            WorkerStatus::Busy { order, remaining, .. } => 2 + u32::from(order) * 16 + u32::from(remaining.min(15)),
        };
        k = (k << 7) | code;
    }
    k
}

/// Exact Q-values of a deterministic policy, obtained by playing it out.
#[derive(Debug, Clone)]
pub struct PolicyValueQ<P> {
    policy: P,
}

impl<P> PolicyValueQ<P> {
    pub fn new(policy: P) -> Self {
        Self { policy }
    }
}

impl<M: Mdp, P: Policy<M>> QFunction<M> for PolicyValueQ<P> {
    fn q(&self, mdp: &M, state: &M::State, action: &M::Action, remaining: u32) -> f64 {
        let mut total = mdp.reward(state, action);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (next, p) in mdp.transitions(state, action) {
            let elapsed = mdp.horizon().saturating_sub(remaining) + 1;
            let tail = rollout_from(mdp, &self.policy, next, elapsed, &mut rng).map(|r| r.total_return).unwrap_or(0.0);
            total += p * tail;
        }
        total
    }
}
