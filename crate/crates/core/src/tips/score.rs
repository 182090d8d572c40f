use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Tip;
use crate::mdp::{mode, Featurizer, Mdp, Policy, QFunction, Rollout};

/// How a tip would have changed a set of traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TipScore<T> {
    pub tip: T,
    /// Mean over traces of the summed Q-values with the tip applied.
    pub score: f64,
    /// The same sum without the tip.
    pub identity: f64,
    pub delta: f64,
    /// Fraction of distinct featurized trace states where the tip is active.
    pub applicability: f64,
    /// Fraction of active states where the expert would not follow the tip.
    pub disagreement: f64,
}

/// Traces prepared for repeated scoring: the per-step Q-values of the
/// observed actions, the expert's preferred actions and the featurized state
/// of every step are computed once.
pub struct TraceSet<'a, M: Mdp> {
    traces: Vec<&'a Rollout<M::State, M::Action>>,
    base_q: Vec<Vec<f64>>,
    expert: Vec<Vec<M::Action>>,
    state_ids: Vec<Vec<usize>>,
    distinct: usize,
    steps: usize,
}

impl<'a, M: Featurizer> TraceSet<'a, M> {
    pub fn new<Q, P>(mdp: &M, traces: Vec<&'a Rollout<M::State, M::Action>>, q: &Q, expert: &P) -> Self
    where
        Q: QFunction<M> + ?Sized,
        P: Policy<M> + ?Sized,
    {
        let h = mdp.horizon();
        let base_q = traces
            .par_iter()
            .map(|r| r.steps.iter().enumerate().map(|(t, s)| q.q(mdp, &s.state, &s.action, h - t as u32)).collect())
            .collect();
        let expert = traces
            .par_iter()
            .map(|r| r.steps.iter().map(|s| mode(&expert.distribution(mdp, &s.state))).collect())
            .collect();
        let mut ids: HashMap<Vec<u64>, usize> = HashMap::new();
        let state_ids = traces
            .iter()
            .map(|r| {
                r.steps
                    .iter()
                    .map(|s| {
                        let n = ids.len();
                        *ids.entry(key(&mdp.state_features(&s.state))).or_insert(n)
                    })
                    .collect()
            })
            .collect();
        let steps = traces.iter().map(|r| r.len()).sum();
        Self { traces, base_q, expert, state_ids, distinct: ids.len(), steps }
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn total_steps(&self) -> usize {
        self.steps
    }

    pub fn distinct_states(&self) -> usize {
        self.distinct
    }

    pub fn identity_score(&self) -> f64 {
        self.base_q.iter().map(|v| v.iter().sum::<f64>()).sum::<f64>() / self.traces.len().max(1) as f64
    }

    /// Scores `tip` against these traces under `q`.
    pub fn score<T, Q>(&self, mdp: &M, q: &Q, tip: T) -> TipScore<T>
    where
        T: Tip<M>,
        Q: QFunction<M> + ?Sized,
    {
        let h = mdp.horizon();
        let (mut delta, mut active, mut disagree) = (0.0, 0usize, 0usize);
        let mut covered = vec![false; self.distinct];
        for (i, r) in self.traces.iter().enumerate() {
            for (t, s) in r.steps.iter().enumerate() {
                if !tip.is_active(mdp, &s.state) {
                    continue;
                }
                active += 1;
                covered[self.state_ids[i][t]] = true;
                if !tip.agrees_with(mdp, &s.state, &self.expert[i][t]) {
                    disagree += 1;
                }
                let a = tip.overlay(mdp, &s.state, &s.action);
                if a != s.action {
                    delta += q.q(mdp, &s.state, &a, h - t as u32) - self.base_q[i][t];
                }
            }
        }
        let n = self.traces.len().max(1) as f64;
        let identity = self.identity_score();
        TipScore {
            tip,
            score: identity + delta / n,
            identity,
            delta: delta / n,
            applicability: covered.iter().filter(|&&c| c).count() as f64 / self.distinct.max(1) as f64,
            disagreement: if active == 0 { 0.0 } else { disagree as f64 / active as f64 },
        }
    }
}

/// How often each featurized state-action pair occurs in expert rollouts,
/// per rollout. Used as a stand-in Q-function by the frequency baseline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyTable {
    counts: HashMap<Vec<u64>, u64>,
    rollouts: usize,
}

impl FrequencyTable {
    pub fn from_rollouts<M: Featurizer>(mdp: &M, rollouts: &[Rollout<M::State, M::Action>]) -> Self {
        let mut counts = HashMap::new();
        for r in rollouts {
            for s in &r.steps {
                *counts.entry(key(&mdp.joint_features(&s.state, &s.action))).or_insert(0) += 1;
            }
        }
        Self { counts, rollouts: rollouts.len() }
    }

    pub fn frequency(&self, features: &[f64]) -> f64 {
        let c = self.counts.get(&key(features)).copied().unwrap_or(0);
        c as f64 / self.rollouts.max(1) as f64
    }

    pub fn distinct_pairs(&self) -> usize {
        self.counts.len()
    }
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

impl<M: Featurizer> QFunction<M> for FrequencyTable {
    fn q(&self, mdp: &M, state: &M::State, action: &M::Action, _: u32) -> f64 {
        self.frequency(&mdp.joint_features(state, action))
    }
}
