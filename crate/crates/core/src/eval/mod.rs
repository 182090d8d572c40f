//! Randomized tip evaluation with synthetic crews.

mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::humans::{HumanError, LearningPopulation};
use crate::kitchen::{JointAction, KitchenMdp, KitchenState, ParseError, ScenarioKind, Subtask, Worker};
use crate::mdp::{derive_seed, sample_rollout, MdpError, ReturnEstimate, Rollout};
use crate::tips::{CountedTip, Tip};
use crate::trace::{TraceError, TraceRecord};

pub use report::{emit_report, ReportError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Human(#[from] HumanError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("trace for round {round}, condition {condition:?}: {source}")]
    Trace { round: usize, condition: String, source: TraceError },
}

/// Which sequence of rounds a player goes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Configuration {
    /// Three fully staffed rounds.
    Normal,
    /// Two fully staffed rounds, then four understaffed ones.
    Disrupted,
}

impl Configuration {
    pub fn rounds(self) -> Vec<ScenarioKind> {
        match self {
            Configuration::Normal => vec![ScenarioKind::FullyStaffed; 3],
            Configuration::Disrupted => {
                let mut r = vec![ScenarioKind::FullyStaffed; 2];
                r.extend([ScenarioKind::Understaffed; 4]);
                r
            }
        }
    }

    /// The tip everyone sees in round `round` (0-based) regardless of
    /// condition, if any. Disrupted players warm up with the fully staffed
    /// algorithm tip.
    pub fn shared_tip(self, round: usize) -> Option<TipFixture> {
        match (self, self.rounds().get(round)) {
            (Configuration::Disrupted, Some(ScenarioKind::FullyStaffed)) => {
                Some(TipFixture::counted(CountedTip::never(Worker::Chef, Subtask::Plate)))
            }
            _ => None,
        }
    }

    /// The four study conditions with their published tips.
    pub fn conditions(self) -> Vec<Condition> {
        let tip = |w, s, n| Some(TipFixture::counted(CountedTip { worker: w, subtask: s, count: n }));
        let (algorithm, baseline, human) = match self {
            Configuration::Normal => (
                tip(Worker::Chef, Subtask::Plate, 0),
                tip(Worker::Chef, Subtask::Chop, 1),
                Some(TipFixture::label("Strategically leave some workers idle")),
            ),
            Configuration::Disrupted => (
                tip(Worker::Server, Subtask::Cook, 2),
                tip(Worker::SousChef, Subtask::Plate, 2),
                tip(Worker::Server, Subtask::Cook, 1),
            ),
        };
        vec![
            Condition::new("control", None),
            Condition::new("algorithm", algorithm),
            Condition::new("baseline", baseline),
            Condition::new("human", human),
        ]
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Configuration::Normal => "normal",
            Configuration::Disrupted => "disrupted",
        })
    }
}

impl FromStr for Configuration {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(Configuration::Normal),
            "disrupted" => Ok(Configuration::Disrupted),
            _ => Err(ParseError { kind: "configuration", value: s.to_string() }),
        }
    }
}

/// Best achievable completion time under the reference expert.
pub fn reference_ticks(scenario: ScenarioKind) -> u32 {
    match scenario {
        ScenarioKind::FullyStaffed => 20,
        ScenarioKind::Understaffed => 34,
    }
}

/// A tip as shown to players. Free-text tips have no rule behind them and
/// are simulated like no tip at all.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct TipFixture {
    pub text: String,
    pub tip: Option<CountedTip>,
}

impl TipFixture {
    pub fn counted(tip: CountedTip) -> Self {
        Self { text: tip.to_string(), tip: Some(tip) }
    }

    pub fn label(text: impl Into<String>) -> Self {
        Self { text: text.into(), tip: None }
    }

    /// Column-friendly identifier.
    pub fn id(&self) -> String {
        match self.tip {
            Some(t) => t.key(),
            None => self
                .text
                .to_ascii_lowercase()
                .split(|c: char| !c.is_ascii_alphanumeric())
                .filter(|w| !w.is_empty())
                .collect::<Vec<_>>()
                .join("_"),
        }
    }

    /// Reads `worker.subtask=n`, an exact display string such as
    /// "Server should cook twice", or anything else as a free-text label.
    pub fn parse(text: &str) -> Self {
        if let Ok(t) = text.parse::<CountedTip>() {
            return Self::counted(t);
        }
        match CountedTip::all().into_iter().find(|t| t.to_string() == text) {
            Some(t) => Self::counted(t),
            None => Self::label(text),
        }
    }
}

impl From<String> for TipFixture {
    fn from(s: String) -> Self {
        TipFixture::parse(&s)
    }
}

impl From<TipFixture> for String {
    fn from(t: TipFixture) -> String {
        t.text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub label: String,
    #[serde(default)]
    pub tip: Option<TipFixture>,
    /// Overrides the population's compliance for this condition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compliance: Option<f64>,
}

impl Condition {
    pub fn new(label: impl Into<String>, tip: Option<TipFixture>) -> Self {
        Self { label: label.into(), tip, compliance: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub configuration: Configuration,
    /// Defaults to the four study conditions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<Vec<Condition>>,
    pub population: LearningPopulation,
    /// Rollouts per condition per round.
    pub rollouts: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn conditions(&self) -> Vec<Condition> {
        self.conditions.clone().unwrap_or_else(|| self.configuration.conditions())
    }

    /// The tip shown to `condition` in `round` (0-based).
    pub fn tip_for(&self, round: usize, condition: &Condition) -> Option<TipFixture> {
        self.configuration.shared_tip(round).or_else(|| condition.tip.clone())
    }

    /// Every distinct executable tip shown in the experiment, in order of
    /// first appearance. Cross-compliance is reported against this list.
    pub fn tip_list(&self) -> Vec<TipFixture> {
        let mut out: Vec<TipFixture> = Vec::new();
        let conditions = self.conditions();
        for round in 0..self.configuration.rounds().len() {
            for c in &conditions {
                if let Some(t) = self.tip_for(round, c).filter(|t| t.tip.is_some()) {
                    if !out.contains(&t) {
                        out.push(t);
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.rollouts == 0 {
            return Err(EvalError::Invalid("rollouts must be positive".into()));
        }
        LearningPopulation::new(self.population.kind, self.population.weights.clone(), self.population.compliance)?;
        let conditions = self.conditions();
        for (i, c) in conditions.iter().enumerate() {
            if let Some(x) = c.compliance.filter(|x| !(0.0..=1.0).contains(x)) {
                return Err(HumanError::BadCompliance(x).into());
            }
            if conditions[..i].iter().any(|d| d.label == c.label) {
                return Err(EvalError::Invalid(format!("duplicate condition {:?}", c.label)));
            }
        }
        Ok(())
    }
}

/// Whether a finished round obeyed `tip`.
///
/// "Never" tips count as followed when the pair never occurs. For other
/// tips the count must match exactly, and rounds where the tip never
/// applied are left out (`None`).
pub fn compliance(mdp: &KitchenMdp, rollout: &Rollout<KitchenState, JointAction>, tip: &CountedTip) -> Option<bool> {
    if !mdp.config().has_worker(tip.worker) {
        return None;
    }
    if tip.count > 0 && !rollout.steps.iter().any(|s| tip.is_active(mdp, &s.state)) {
        return None;
    }
    Some(tip.satisfied_by(&rollout.final_state))
}

fn rate(outcomes: impl Iterator<Item = Option<bool>>) -> Option<f64> {
    let (mut yes, mut n) = (0usize, 0usize);
    for o in outcomes.flatten() {
        n += 1;
        yes += usize::from(o);
    }
    (n > 0).then(|| yes as f64 / n as f64)
}

/// Metrics for one condition in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// 1-based.
    pub round: usize,
    pub scenario: ScenarioKind,
    pub condition: String,
    pub tip: Option<String>,
    pub rollouts: usize,
    pub mean_ticks: f64,
    pub std_error: f64,
    pub frac_optimal: f64,
    /// `None` when the tip has no rule or never applied.
    pub compliance: Option<f64>,
    /// Aligned with [`ExperimentReport::tips`].
    pub cross_compliance: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub configuration: Configuration,
    pub conditions: Vec<String>,
    /// Identifiers of the tips in the cross-compliance columns.
    pub tips: Vec<String>,
    pub rows: Vec<RoundMetrics>,
}

impl ExperimentReport {
    pub fn get(&self, round: usize, condition: &str) -> Option<&RoundMetrics> {
        self.rows.iter().find(|r| r.round == round && r.condition == condition)
    }

    pub fn final_round(&self) -> usize {
        self.rows.iter().map(|r| r.round).max().unwrap_or(0)
    }
}

/// Plays every condition through every round. Rollout `i` of a round uses
/// the same seed in every condition.
pub fn simulate(config: &ExperimentConfig) -> Result<Vec<TraceRecord>, EvalError> {
    config.validate()?;
    let rounds = config.configuration.rounds();
    let conditions = config.conditions();
    let jobs: Vec<(usize, usize)> =
        (0..rounds.len()).flat_map(|r| (0..conditions.len()).map(move |c| (r, c))).collect();
    let per_job = jobs
        .par_iter()
        .map(|&(round, ci)| {
            let cond = &conditions[ci];
            let scenario = rounds[round];
            let mdp = KitchenMdp::new(scenario.config()).expect("stock scenarios are valid");
            let fixture = config.tip_for(round, cond);
            let population = LearningPopulation {
                compliance: cond.compliance.unwrap_or(config.population.compliance),
                ..config.population.clone()
            };
            let policy = population.policy(&mdp, round, fixture.as_ref().and_then(|f| f.tip));
            (0..config.rollouts)
                .into_par_iter()
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[round as u64, i as u64]));
                    let r = sample_rollout(&mdp, &policy, &mut rng)?;
                    let mut rec = TraceRecord::from_rollout(format!("sim-{}-{}", cond.label, i), scenario, &r);
                    rec.configuration = Some(config.configuration);
                    rec.round = round + 1;
                    rec.condition = cond.label.clone();
                    rec.tip = fixture.as_ref().map(|f| f.text.clone());
                    Ok(rec)
                })
                .collect::<Result<Vec<_>, MdpError>>()
        })
        .collect::<Result<Vec<_>, MdpError>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

/// Computes the report from traces alone, so persisted traces give the same
/// numbers as a fresh simulation.
pub fn compute_metrics(config: &ExperimentConfig, records: &[TraceRecord]) -> Result<ExperimentReport, EvalError> {
    let conditions = config.conditions();
    let tips = config.tip_list();
    let mut groups: BTreeMap<(usize, String), Vec<&TraceRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.round, r.condition.clone())).or_default().push(r);
    }
    let mut rows = Vec::new();
    for (round, scenario) in config.configuration.rounds().into_iter().enumerate() {
        let mdp = KitchenMdp::new(scenario.config()).expect("stock scenarios are valid");
        for cond in &conditions {
            let Some(group) = groups.get(&(round + 1, cond.label.clone())) else {
                continue;
            };
            let rollouts = group
                .par_iter()
                .map(|r| r.replay_in(&mdp))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|source| EvalError::Trace { round: round + 1, condition: cond.label.clone(), source })?;
            let ticks: Vec<f64> = rollouts.iter().map(|r| r.len() as f64).collect();
            let est = ReturnEstimate::from_samples(&ticks);
            let best = reference_ticks(scenario) as usize;
            let optimal = rollouts.iter().filter(|r| r.len() <= best && r.final_state.all_plated()).count();
            let fixture = config.tip_for(round, cond);
            let compliance_with = |t: &CountedTip| rate(rollouts.iter().map(|r| compliance(&mdp, r, t)));
            rows.push(RoundMetrics {
                round: round + 1,
                scenario,
                condition: cond.label.clone(),
                tip: fixture.as_ref().map(|f| f.text.clone()),
                rollouts: rollouts.len(),
                mean_ticks: est.mean,
                std_error: est.std_error,
                frac_optimal: optimal as f64 / rollouts.len() as f64,
                compliance: fixture.and_then(|f| f.tip).and_then(|t| compliance_with(&t)),
                cross_compliance: tips.iter().map(|f| f.tip.and_then(|t| compliance_with(&t))).collect(),
            });
        }
    }
    Ok(ExperimentReport {
        configuration: config.configuration,
        conditions: conditions.into_iter().map(|c| c.label).collect(),
        tips: tips.iter().map(|t| t.id()).collect(),
        rows,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, EvalError> {
    compute_metrics(config, &simulate(config)?)
}
