use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{enumerate_atomic_tips, CountedTip, KitchenTip, TipError, TipScore, TraceSet};
use crate::kitchen::{JointAction, KitchenMdp, KitchenState, Subtask, Worker};
use crate::mdp::{Policy, QFunction, Rollout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferConfig {
    /// Fraction of traces, slowest first, that tips are scored against.
    pub worst_fraction: f64,
    /// Tips active in fewer trace states than this are dropped.
    pub min_applicability: f64,
    /// Tips the expert ignores more often than this where they apply are dropped.
    pub max_disagreement: f64,
    /// Also consider "never" tips for every (worker, subtask) pair.
    pub include_never: bool,
    pub min_traces: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            worst_fraction: 0.25,
            min_applicability: 0.10,
            max_disagreement: 0.5,
            include_never: true,
            min_traces: 4,
        }
    }
}

/// A counted tip with its aggregated evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTip {
    pub tip: CountedTip,
    pub text: String,
    /// Summed Q-sum improvement of the merged candidates.
    pub score: f64,
    /// Largest applicability among the merged candidates.
    pub applicability: f64,
    /// Largest disagreement among the merged candidates.
    pub disagreement: f64,
    pub members: Vec<KitchenTip>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    /// `None` when no candidate improves on the observed play.
    pub best: Option<RankedTip>,
    pub ranking: Vec<RankedTip>,
    pub candidates: Vec<TipScore<KitchenTip>>,
    pub traces_used: usize,
}

/// The slowest `fraction` of traces (at least one), slowest first.
pub fn select_worst<S: Clone, A>(traces: &[Rollout<S, A>], fraction: f64) -> Vec<&Rollout<S, A>> {
    let mut idx: Vec<usize> = (0..traces.len()).collect();
    idx.sort_by(|&a, &b| traces[b].len().cmp(&traces[a].len()).then(a.cmp(&b)));
    let k = ((traces.len() as f64 * fraction).ceil() as usize).clamp(1, traces.len().max(1));
    idx.into_iter().take(k).map(|i| &traces[i]).collect()
}

/// Drops candidates that rarely apply or that the expert disagrees with,
/// merges positive atomic candidates that share a (worker, subtask) into one
/// counted tip whose count is the number merged, and ranks the result by
/// score. Ties go to the lexicographically smallest (worker, subtask, count).
pub fn aggregate_and_filter(scores: &[TipScore<KitchenTip>], config: &InferConfig) -> Vec<RankedTip> {
    let keep = |s: &&TipScore<KitchenTip>| {
        s.applicability >= config.min_applicability && s.disagreement <= config.max_disagreement
    };
    let mut groups: BTreeMap<(Worker, Subtask), Vec<&TipScore<KitchenTip>>> = BTreeMap::new();
    let mut ranked = Vec::new();
    for s in scores.iter().filter(keep) {
        match s.tip {
            KitchenTip::Atomic(a) if s.delta > 0.0 => groups.entry((a.worker, a.subtask)).or_default().push(s),
            KitchenTip::Atomic(_) => {}
            KitchenTip::Counted(c) => ranked.push(RankedTip {
                tip: c,
                text: c.to_string(),
                score: s.delta,
                applicability: s.applicability,
                disagreement: s.disagreement,
                members: vec![s.tip],
            }),
        }
    }
    for ((worker, subtask), members) in groups {
        let tip = CountedTip { worker, subtask, count: members.len() as u8 };
        ranked.push(RankedTip {
            tip,
            text: tip.to_string(),
            score: members.iter().map(|m| m.delta).sum(),
            applicability: members.iter().map(|m| m.applicability).fold(0.0, f64::max),
            disagreement: members.iter().map(|m| m.disagreement).fold(0.0, f64::max),
            members: members.iter().map(|m| m.tip).collect(),
        });
    }
    ranked.sort_by(|a, b| {
        b.score.total_cmp(&a.score).then((a.tip.worker, a.tip.subtask, a.tip.count).cmp(&(
            b.tip.worker,
            b.tip.subtask,
            b.tip.count,
        )))
    });
    ranked
}

/// Finds the counted tip that most improves the slowest traces under `q`.
///
/// Works the same with a learned Q-model or with a frequency table standing
/// in for one.
pub fn infer_tip<Q, P>(
    mdp: &KitchenMdp,
    traces: &[Rollout<KitchenState, JointAction>],
    q: &Q,
    expert: &P,
    config: &InferConfig,
) -> Result<Inference, TipError>
where
    Q: QFunction<KitchenMdp> + ?Sized,
    P: Policy<KitchenMdp> + ?Sized,
{
    if traces.len() < config.min_traces.max(1) {
        return Err(TipError::TooFewTraces { needed: config.min_traces.max(1), got: traces.len() });
    }
    for (i, r) in traces.iter().enumerate() {
        r.verify(mdp).map_err(|e| TipError::ForeignTrace { index: i, reason: e.to_string() })?;
    }
    let worst = select_worst(traces, config.worst_fraction);
    let used = worst.len();
    let set = TraceSet::new(mdp, worst, q, expert);

    let mut tips: Vec<KitchenTip> = enumerate_atomic_tips(mdp).into_iter().map(KitchenTip::Atomic).collect();
    if config.include_never {
        for w in mdp.config().workers() {
            for s in Subtask::ALL {
                tips.push(KitchenTip::Counted(CountedTip::never(w, s)));
            }
        }
    }
    let candidates: Vec<TipScore<KitchenTip>> = tips.into_par_iter().map(|t| set.score(mdp, q, t)).collect();
    let ranking = aggregate_and_filter(&candidates, config);
    let best = ranking.first().filter(|r| r.score > 0.0).cloned();
    Ok(Inference { best, ranking, candidates, traces_used: used })
}
