//! Synthetic crews used in place of people.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kitchen::{Assignment, JointAction, KitchenMdp, KitchenState, ScriptedPolicy, Subtask, Worker};
use crate::mdp::{normalize, sample_weighted, Mdp, Mixture, Policy, UniformPolicy};
use crate::tips::{CountedTip, PartialCompliance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HumanError {
    #[error("unknown human model {0:?}; expected greedy, myopic, eps:<p>, avoid:<worker>.<subtask> or prefer:<worker>.<subtask>")]
    UnknownKind(String),
    #[error("exploration rate must be within [0, 1], got {0}")]
    BadEpsilon(f64),
    #[error("learning weights must lie in [0, 1] and never decrease: {0:?}")]
    BadSchedule(Vec<f64>),
    #[error("compliance must lie in [0, 1], got {0}")]
    BadCompliance(f64),
}

/// Which synthetic crew to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum HumanKind {
    /// Each free worker grabs the open job it is fastest at, in random order.
    Greedy,
    /// Uniform over ways of keeping as many workers busy as possible.
    Myopic,
    /// The scripted expert, replaced by a uniformly random action with probability `p`.
    EpsilonOptimal(f64),
    /// Greedy, except the worker never takes that subtask.
    Avoid(Worker, Subtask),
    /// Greedy, except the worker takes that subtask whenever it can.
    Prefer(Worker, Subtask),
}

impl fmt::Display for HumanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HumanKind::Greedy => f.write_str("greedy"),
            HumanKind::Myopic => f.write_str("myopic"),
            HumanKind::EpsilonOptimal(p) => write!(f, "eps:{p}"),
            HumanKind::Avoid(w, s) => write!(f, "avoid:{w}.{s}"),
            HumanKind::Prefer(w, s) => write!(f, "prefer:{w}.{s}"),
        }
    }
}

impl FromStr for HumanKind {
    type Err = HumanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || HumanError::UnknownKind(s.to_string());
        let pair = |rest: &str| -> Result<(Worker, Subtask), HumanError> {
            let (w, t) = rest.split_once('.').ok_or_else(unknown)?;
            Ok((w.parse().map_err(|_| unknown())?, t.parse().map_err(|_| unknown())?))
        };
        match s.split_once(':') {
            None if s == "greedy" => Ok(HumanKind::Greedy),
            None if s == "myopic" => Ok(HumanKind::Myopic),
            Some(("eps", p)) => {
                let p: f64 = p.parse().map_err(|_| unknown())?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(HumanError::BadEpsilon(p));
                }
                Ok(HumanKind::EpsilonOptimal(p))
            }
            Some(("avoid", rest)) => pair(rest).map(|(w, t)| HumanKind::Avoid(w, t)),
            Some(("prefer", rest)) => pair(rest).map(|(w, t)| HumanKind::Prefer(w, t)),
            _ => Err(unknown()),
        }
    }
}

impl TryFrom<String> for HumanKind {
    type Error = HumanError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<HumanKind> for String {
    fn from(k: HumanKind) -> String {
        k.to_string()
    }
}

/// Greedy matching with an optional forbidden or favourite (worker, subtask).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GreedyMatcher {
    pub avoid: Option<(Worker, Subtask)>,
    pub prefer: Option<(Worker, Subtask)>,
}

impl GreedyMatcher {
    /// Assignments when workers pick in the given order.
    pub fn assign(&self, mdp: &KitchenMdp, state: &KitchenState, order: &[Worker]) -> JointAction {
        let mut open = state.available();
        let mut picks = Vec::new();
        for &w in order {
            let allowed: Vec<usize> = (0..open.len()).filter(|&i| self.avoid != Some((w, open[i].1))).collect();
            let preferred = allowed.iter().copied().find(|&i| self.prefer == Some((w, open[i].1)));
            // Fastest first; on equal speed, the job nearest completion.
            let fastest = allowed
                .iter()
                .copied()
                .min_by_key(|&i| (mdp.duration(w, open[i].1), std::cmp::Reverse(open[i].1), open[i].0));
            if let Some(i) = preferred.or(fastest) {
                let (order, subtask) = open.remove(i);
                picks.push(Assignment { worker: w, order, subtask });
            }
        }
        JointAction::new(picks)
    }
}

impl Policy<KitchenMdp> for GreedyMatcher {
    fn distribution(&self, mdp: &KitchenMdp, state: &KitchenState) -> Vec<(JointAction, f64)> {
        let idle = state.idle_workers();
        let perms = permutations(&idle);
        let p = 1.0 / perms.len() as f64;
        normalize(perms.iter().map(|o| (self.assign(mdp, state, o), p)).collect())
    }

    fn act(&self, mdp: &KitchenMdp, state: &KitchenState, rng: &mut dyn RngCore) -> JointAction {
        let mut idle = state.idle_workers();
        if idle.len() > 1 {
            idle.shuffle(rng);
        }
        self.assign(mdp, state, &idle)
    }
}

fn permutations(items: &[Worker]) -> Vec<Vec<Worker>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let first = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, first);
            out.push(tail);
        }
    }
    out
}

/// Uniform over maximal joint actions: nobody who could start a job is left idle.
#[derive(Debug, Clone, Copy, Default)]
pub struct MyopicBusy;

impl MyopicBusy {
    fn is_maximal(state: &KitchenState, a: &JointAction) -> bool {
        let free = state.idle_workers().into_iter().any(|w| a.get(w).is_none());
        if !free {
            return true;
        }
        state.available().iter().all(|&(o, s)| a.assignments().iter().any(|x| x.order == o && x.subtask == s))
    }
}

impl Policy<KitchenMdp> for MyopicBusy {
    fn distribution(&self, mdp: &KitchenMdp, state: &KitchenState) -> Vec<(JointAction, f64)> {
        let acts: Vec<_> = mdp.legal_actions(state).into_iter().filter(|a| Self::is_maximal(state, a)).collect();
        let p = 1.0 / acts.len() as f64;
        acts.into_iter().map(|a| (a, p)).collect()
    }
}

/// Builds the policy for a synthetic crew in `mdp`.
pub fn make_human(kind: HumanKind, mdp: &KitchenMdp) -> Box<dyn Policy<KitchenMdp>> {
    match kind {
        HumanKind::Greedy => Box::new(GreedyMatcher::default()),
        HumanKind::Myopic => Box::new(MyopicBusy),
        HumanKind::EpsilonOptimal(p) => {
            Box::new(Mixture { first: ScriptedPolicy::for_config(mdp.config()), second: UniformPolicy, weight: p })
        }
        HumanKind::Avoid(w, s) => Box::new(GreedyMatcher { avoid: Some((w, s)), prefer: None }),
        HumanKind::Prefer(w, s) => Box::new(GreedyMatcher { avoid: None, prefer: Some((w, s)) }),
    }
}

/// A crew that drifts toward expert play over rounds and follows a tip
/// with some probability.
///
/// In round `r` each decision is the expert's with probability
/// `weights[r]`, otherwise the crew's own. The tip is then applied with
/// probability `compliance` wherever it is active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningPopulation {
    pub kind: HumanKind,
    pub weights: Vec<f64>,
    pub compliance: f64,
}

impl LearningPopulation {
    pub fn new(kind: HumanKind, weights: Vec<f64>, compliance: f64) -> Result<Self, HumanError> {
        let ok = weights.iter().all(|w| (0.0..=1.0).contains(w)) && weights.windows(2).all(|p| p[0] <= p[1]);
        if !ok {
            return Err(HumanError::BadSchedule(weights));
        }
        if !(0.0..=1.0).contains(&compliance) {
            return Err(HumanError::BadCompliance(compliance));
        }
        Ok(Self { kind, weights, compliance })
    }

    /// Weights rising by 0.1 per round from zero.
    pub fn default_weights(rounds: usize) -> Vec<f64> {
        (0..rounds).map(|r| (r as f64 * 0.1).min(1.0)).collect()
    }

    /// Weight toward the expert in round `round` (zero-based). Rounds past
    /// the schedule keep its last weight.
    pub fn weight(&self, round: usize) -> f64 {
        self.weights.get(round).or(self.weights.last()).copied().unwrap_or(0.0)
    }

    pub fn policy(&self, mdp: &KitchenMdp, round: usize, tip: Option<CountedTip>) -> Box<dyn Policy<KitchenMdp>> {
        let drift = Mixture {
            first: make_human(self.kind, mdp),
            second: ScriptedPolicy::for_config(mdp.config()),
            weight: self.weight(round),
        };
        match tip {
            Some(tip) => Box::new(PartialCompliance { base: drift, tip, compliance: self.compliance }),
            None => Box::new(drift),
        }
    }
}

/// Draws one joint action from a boxed policy. Handy for callers holding
/// trait objects.
pub fn act(
    policy: &dyn Policy<KitchenMdp>,
    mdp: &KitchenMdp,
    state: &KitchenState,
    rng: &mut dyn RngCore,
) -> JointAction {
    if mdp.is_terminal(state) {
        return JointAction::idle();
    }
    let d = policy.distribution(mdp, state);
    sample_weighted(d, rng)
}
