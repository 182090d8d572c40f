//! Tips: small rules that override part of what a crew would otherwise do.

mod compose;
mod infer;
mod score;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kitchen::{Assignment, JointAction, KitchenMdp, KitchenState, ParseError, Subtask, Worker, MAX_ORDERS};
use crate::mdp::{normalize, Mdp};

pub use compose::{ComposedPolicy, PartialCompliance};
pub use infer::{aggregate_and_filter, infer_tip, select_worst, InferConfig, Inference, RankedTip};
pub use score::{FrequencyTable, TipScore, TraceSet};

#[derive(Debug, Error)]
pub enum TipError {
    #[error("need at least {needed} traces, got {got}")]
    TooFewTraces { needed: usize, got: usize },
    #[error("trace {index} does not belong to this kitchen: {reason}")]
    ForeignTrace { index: usize, reason: String },
    #[error("invalid tip: {0}")]
    Invalid(String),
}

/// A rule `(predicate, override)` over an MDP.
pub trait Tip<M: Mdp>: Send + Sync {
    /// Whether the tip says anything in `state`.
    fn is_active(&self, mdp: &M, state: &M::State) -> bool;

    /// `action` with the tip applied. Must return `action` unchanged where
    /// the tip is inactive, and be idempotent.
    fn overlay(&self, mdp: &M, state: &M::State, action: &M::Action) -> M::Action;

    /// The composed action distribution in `state`.
    fn compose(&self, mdp: &M, state: &M::State, base: Vec<(M::Action, f64)>) -> Vec<(M::Action, f64)> {
        if !self.is_active(mdp, state) {
            return base;
        }
        normalize(base.into_iter().map(|(a, p)| (self.overlay(mdp, state, &a), p)).collect())
    }

    /// Whether following the tip leaves `expert_action` unchanged.
    fn agrees_with(&self, mdp: &M, state: &M::State, expert_action: &M::Action) -> bool {
        self.overlay(mdp, state, expert_action) == *expert_action
    }
}

impl<M: Mdp, T: Tip<M> + ?Sized> Tip<M> for &T {
    fn is_active(&self, mdp: &M, state: &M::State) -> bool {
        (**self).is_active(mdp, state)
    }
    fn overlay(&self, mdp: &M, state: &M::State, action: &M::Action) -> M::Action {
        (**self).overlay(mdp, state, action)
    }
    fn compose(&self, mdp: &M, state: &M::State, base: Vec<(M::Action, f64)>) -> Vec<(M::Action, f64)> {
        (**self).compose(mdp, state, base)
    }
    fn agrees_with(&self, mdp: &M, state: &M::State, expert_action: &M::Action) -> bool {
        (**self).agrees_with(mdp, state, expert_action)
    }
}

/// The tip that never applies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NoTip;

impl<M: Mdp> Tip<M> for NoTip {
    fn is_active(&self, _: &M, _: &M::State) -> bool {
        false
    }
    fn overlay(&self, _: &M, _: &M::State, action: &M::Action) -> M::Action {
        action.clone()
    }
}

/// "When `worker` is free and `subtask` of `order` is ready, do it."
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AtomicTip {
    pub order: u8,
    pub subtask: Subtask,
    pub worker: Worker,
}

impl Tip<KitchenMdp> for AtomicTip {
    fn is_active(&self, _: &KitchenMdp, s: &KitchenState) -> bool {
        s.worker(self.worker).is_idle() && s.is_available(self.order, self.subtask)
    }

    fn overlay(&self, mdp: &KitchenMdp, s: &KitchenState, action: &JointAction) -> JointAction {
        if !self.is_active(mdp, s) {
            return action.clone();
        }
        action.without_target(self.order, self.subtask).with(Assignment {
            worker: self.worker,
            order: self.order,
            subtask: self.subtask,
        })
    }
}

impl fmt::Display for AtomicTip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} should {} order #{}", self.worker.title(), self.subtask.verb(), self.order + 1)
    }
}

/// Every atomic tip for the kitchen's roster and orders.
pub fn enumerate_atomic_tips(mdp: &KitchenMdp) -> Vec<AtomicTip> {
    let mut out = Vec::new();
    for worker in mdp.config().workers() {
        for subtask in Subtask::ALL {
            for order in 0..mdp.config().orders {
                out.push(AtomicTip { order, subtask, worker });
            }
        }
    }
    out
}

/// "`worker` should `subtask` `count` times", where zero means never.
///
/// Active whenever the worker is free and some order needs `subtask`. While
/// the worker's assignment count for `subtask` is below `count` the tip
/// assigns it; once the count is reached (or when `count` is zero) it forbids
/// the assignment instead, so the rule reads as "exactly `count` times".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CountedTip {
    pub worker: Worker,
    pub subtask: Subtask,
    pub count: u8,
}

impl CountedTip {
    pub fn never(worker: Worker, subtask: Subtask) -> Self {
        Self { worker, subtask, count: 0 }
    }

    fn forcing(&self, s: &KitchenState) -> bool {
        s.count(self.worker, self.subtask) < self.count
    }

    /// Short identifier in the form accepted by `FromStr`, e.g. `server.cook=2`.
    pub fn key(&self) -> String {
        format!("{}.{}={}", self.worker.key(), self.subtask.verb(), self.count)
    }

    /// Every counted tip with a count up to the number of orders.
    pub fn all() -> Vec<CountedTip> {
        let mut out = Vec::new();
        for worker in Worker::ALL {
            for subtask in Subtask::ALL {
                for count in 0..=MAX_ORDERS as u8 {
                    out.push(CountedTip { worker, subtask, count });
                }
            }
        }
        out
    }

    /// Whether a finished episode with these counts obeyed the tip.
    pub fn satisfied_by(&self, final_state: &KitchenState) -> bool {
        final_state.count(self.worker, self.subtask) == self.count
    }
}

impl Tip<KitchenMdp> for CountedTip {
    fn is_active(&self, _: &KitchenMdp, s: &KitchenState) -> bool {
        s.worker(self.worker).is_idle() && s.available().iter().any(|&(_, t)| t == self.subtask)
    }

    fn overlay(&self, mdp: &KitchenMdp, s: &KitchenState, action: &JointAction) -> JointAction {
        if !self.is_active(mdp, s) {
            return action.clone();
        }
        if !self.forcing(s) {
            return if action.assigns(self.worker, self.subtask) {
                action.without_worker(self.worker)
            } else {
                action.clone()
            };
        }
        if action.assigns(self.worker, self.subtask) {
            return action.clone();
        }
        let open: Vec<u8> = s.available().into_iter().filter(|&(_, t)| t == self.subtask).map(|(o, _)| o).collect();
        let untaken = open
            .iter()
            .copied()
            .find(|&o| !action.assignments().iter().any(|a| a.order == o && a.worker != self.worker));
        let order = untaken.unwrap_or(open[0]);
        action.without_target(order, self.subtask).with(Assignment {
            worker: self.worker,
            order,
            subtask: self.subtask,
        })
    }

    fn compose(&self, mdp: &KitchenMdp, s: &KitchenState, base: Vec<(JointAction, f64)>) -> Vec<(JointAction, f64)> {
        if !self.is_active(mdp, s) {
            return base;
        }
        if self.forcing(s) {
            return normalize(base.into_iter().map(|(a, p)| (self.overlay(mdp, s, &a), p)).collect());
        }
        // Forbidding: drop the offending actions and renormalize; if nothing
        // is left, strip the assignment instead.
        let kept: Vec<_> = base.iter().filter(|(a, _)| !a.assigns(self.worker, self.subtask)).cloned().collect();
        if kept.is_empty() {
            normalize(base.into_iter().map(|(a, p)| (self.overlay(mdp, s, &a), p)).collect())
        } else {
            normalize(kept)
        }
    }
}

fn count_words(n: u8) -> String {
    match n {
        1 => "once".into(),
        2 => "twice".into(),
        3 => "three times".into(),
        4 => "four times".into(),
        n => format!("{n} times"),
    }
}

impl fmt::Display for CountedTip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.count == 0 {
            write!(f, "{} should never {}", self.worker.title(), self.subtask.verb())
        } else {
            write!(f, "{} should {} {}", self.worker.title(), self.subtask.verb(), count_words(self.count))
        }
    }
}

/// Parses `worker.subtask=count`, for example `server.cook=2` or `chef.plate=0`.
impl FromStr for CountedTip {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseError { kind: "tip", value: s.to_string() };
        let (ws, n) = s.split_once('=').ok_or_else(bad)?;
        let (w, t) = ws.split_once('.').ok_or_else(bad)?;
        let count = n.trim().parse::<u8>().map_err(|_| bad())?;
        if usize::from(count) > MAX_ORDERS {
            return Err(bad());
        }
        Ok(Self { worker: w.trim().parse()?, subtask: t.trim().parse()?, count })
    }
}

/// Either kind of kitchen tip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KitchenTip {
    Atomic(AtomicTip),
    Counted(CountedTip),
}

impl Tip<KitchenMdp> for KitchenTip {
    fn is_active(&self, mdp: &KitchenMdp, s: &KitchenState) -> bool {
        match self {
            KitchenTip::Atomic(t) => t.is_active(mdp, s),
            KitchenTip::Counted(t) => t.is_active(mdp, s),
        }
    }
    fn overlay(&self, mdp: &KitchenMdp, s: &KitchenState, a: &JointAction) -> JointAction {
        match self {
            KitchenTip::Atomic(t) => t.overlay(mdp, s, a),
            KitchenTip::Counted(t) => t.overlay(mdp, s, a),
        }
    }
    fn compose(&self, mdp: &KitchenMdp, s: &KitchenState, base: Vec<(JointAction, f64)>) -> Vec<(JointAction, f64)> {
        match self {
            KitchenTip::Atomic(t) => t.compose(mdp, s, base),
            KitchenTip::Counted(t) => t.compose(mdp, s, base),
        }
    }
}

impl fmt::Display for KitchenTip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KitchenTip::Atomic(t) => t.fmt(f),
            KitchenTip::Counted(t) => t.fmt(f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kitchen::ScenarioKind;

    #[test]
    fn display_strings() {
        let t = |w, s, n| CountedTip { worker: w, subtask: s, count: n }.to_string();
        assert_eq!(t(Worker::Chef, Subtask::Plate, 0), "Chef should never plate");
        assert_eq!(t(Worker::Server, Subtask::Cook, 2), "Server should cook twice");
        assert_eq!(t(Worker::SousChef, Subtask::Plate, 1), "Sous-chef should plate once");
        assert_eq!(t(Worker::Server, Subtask::Plate, 3), "Server should plate three times");
    }

    #[test]
    fn parse_counted() {
        let t: CountedTip = "server.cook=2".parse().unwrap();
        assert_eq!(t, CountedTip { worker: Worker::Server, subtask: Subtask::Cook, count: 2 });
        assert!("server.cook".parse::<CountedTip>().is_err());
        assert!("server.cook=9".parse::<CountedTip>().is_err());
        for t in CountedTip::all() {
            assert_eq!(t.key().parse::<CountedTip>().unwrap(), t);
        }
    }

    #[test]
    fn atomic_enumeration_sizes() {
        let fully = KitchenMdp::new(ScenarioKind::FullyStaffed.config()).unwrap();
        let under = KitchenMdp::new(ScenarioKind::Understaffed.config()).unwrap();
        assert_eq!(enumerate_atomic_tips(&fully).len(), 36);
        assert_eq!(enumerate_atomic_tips(&under).len(), 24);
    }

    #[test]
    fn atomic_overlay_bumps_the_previous_holder() {
        let mdp = KitchenMdp::new(ScenarioKind::FullyStaffed.config()).unwrap();
        let s = mdp.initial_state();
        let a = JointAction::new([Assignment { worker: Worker::Chef, order: 0, subtask: Subtask::Chop }]);
        let tip = AtomicTip { order: 0, subtask: Subtask::Chop, worker: Worker::Server };
        let b = tip.overlay(&mdp, &s, &a);
        assert_eq!(b, JointAction::new([Assignment { worker: Worker::Server, order: 0, subtask: Subtask::Chop }]));
        assert!(mdp.is_legal(&s, &b));
        assert_eq!(tip.overlay(&mdp, &s, &b), b);
    }

    #[test]
    fn counted_tip_forbids_once_spent() {
        let mdp = KitchenMdp::new(ScenarioKind::FullyStaffed.config()).unwrap();
        let mut s = mdp.initial_state();
        let tip = CountedTip { worker: Worker::Chef, subtask: Subtask::Chop, count: 1 };
        let forced = tip.overlay(&mdp, &s, &JointAction::idle());
        assert!(forced.assigns(Worker::Chef, Subtask::Chop));
        s.counts[Worker::Chef.index()][Subtask::Chop.index()] = 1;
        assert_eq!(tip.overlay(&mdp, &s, &forced), JointAction::idle());
    }
}
