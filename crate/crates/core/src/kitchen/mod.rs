//! The burger kitchen: four orders, each chopped, cooked, and plated by a
//! small crew whose speed depends on who does what.

mod env;
mod features;
mod scripted;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use env::KitchenMdp;
pub use scripted::ScriptedPolicy;

pub const MAX_ORDERS: usize = 4;
pub const DEFAULT_HORIZON: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Worker {
    Chef,
    SousChef,
    Server,
}

impl Worker {
    pub const ALL: [Worker; 3] = [Worker::Chef, Worker::SousChef, Worker::Server];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn key(self) -> &'static str {
        match self {
            Worker::Chef => "chef",
            Worker::SousChef => "sous_chef",
            Worker::Server => "server",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Worker::Chef => "Chef",
            Worker::SousChef => "Sous-chef",
            Worker::Server => "Server",
        }
    }
}

impl fmt::Display for Worker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} {value:?}")]
pub struct ParseError {
    pub kind: &'static str,
    pub value: String,
}

impl FromStr for Worker {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "chef" => Ok(Worker::Chef),
            "sous" | "sous_chef" | "sous-chef" | "souschef" => Ok(Worker::SousChef),
            "server" => Ok(Worker::Server),
            _ => Err(ParseError { kind: "worker", value: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtask {
    Chop,
    Cook,
    Plate,
}

impl Subtask {
    pub const ALL: [Subtask; 3] = [Subtask::Chop, Subtask::Cook, Subtask::Plate];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn verb(self) -> &'static str {
        match self {
            Subtask::Chop => "chop",
            Subtask::Cook => "cook",
            Subtask::Plate => "plate",
        }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.verb())
    }
}

impl FromStr for Subtask {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "chop" => Ok(Subtask::Chop),
            "cook" => Ok(Subtask::Cook),
            "plate" => Ok(Subtask::Plate),
            _ => Err(ParseError { kind: "subtask", value: s.to_string() }),
        }
    }
}

/// How far an order has progressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Raw,
    Chopped,
    Cooked,
    Plated,
}

impl Stage {
    /// The subtask that moves the order forward, if any.
    pub fn next_subtask(self) -> Option<Subtask> {
        match self {
            Stage::Raw => Some(Subtask::Chop),
            Stage::Chopped => Some(Subtask::Cook),
            Stage::Cooked => Some(Subtask::Plate),
            Stage::Plated => None,
        }
    }

    pub fn advance(self) -> Stage {
        match self {
            Stage::Raw => Stage::Chopped,
            Stage::Chopped => Stage::Cooked,
            Stage::Cooked | Stage::Plated => Stage::Plated,
        }
    }

    /// Subtasks still to be started, in order.
    pub fn remaining(self) -> &'static [Subtask] {
        match self {
            Stage::Raw => &Subtask::ALL,
            Stage::Chopped => &Subtask::ALL[1..],
            Stage::Cooked => &Subtask::ALL[2..],
            Stage::Plated => &[],
        }
    }
}

/// Ticks each worker needs for each subtask, indexed `[worker][subtask]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SkillMatrix(pub [[u8; 3]; 3]);

impl SkillMatrix {
    pub fn duration(&self, worker: Worker, subtask: Subtask) -> u8 {
        self.0[worker.index()][subtask.index()]
    }
}

impl Default for SkillMatrix {
    fn default() -> Self {
        SkillMatrix([[1, 4, 6], [2, 8, 2], [3, 12, 1]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    FullyStaffed,
    Understaffed,
}

impl ScenarioKind {
    pub fn roster(self) -> Vec<Worker> {
        match self {
            ScenarioKind::FullyStaffed => Worker::ALL.to_vec(),
            ScenarioKind::Understaffed => vec![Worker::SousChef, Worker::Server],
        }
    }

    pub fn config(self) -> KitchenConfig {
        KitchenConfig {
            roster: self.roster(),
            orders: MAX_ORDERS as u8,
            skills: SkillMatrix::default(),
            horizon: DEFAULT_HORIZON,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::FullyStaffed => "fully_staffed",
            ScenarioKind::Understaffed => "understaffed",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fully" | "fully_staffed" | "fully-staffed" | "fs" => Ok(ScenarioKind::FullyStaffed),
            "under" | "understaffed" | "us" => Ok(ScenarioKind::Understaffed),
            _ => Err(ParseError { kind: "scenario", value: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KitchenConfig {
    pub roster: Vec<Worker>,
    pub orders: u8,
    #[serde(default)]
    pub skills: SkillMatrix,
    pub horizon: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("roster must name at least one worker, each at most once")]
    BadRoster,
    #[error("order count must be between 1 and {MAX_ORDERS}, got {0}")]
    BadOrders(u8),
    #[error("durations must be at least one tick")]
    ZeroDuration,
    #[error("horizon must be positive")]
    ZeroHorizon,
}

impl KitchenConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut seen = [false; 3];
        for w in &self.roster {
            if std::mem::replace(&mut seen[w.index()], true) {
                return Err(ConfigError::BadRoster);
            }
        }
        if self.roster.is_empty() {
            return Err(ConfigError::BadRoster);
        }
        if self.orders == 0 || self.orders as usize > MAX_ORDERS {
            return Err(ConfigError::BadOrders(self.orders));
        }
        if self.skills.0.iter().flatten().any(|&d| d == 0) {
            return Err(ConfigError::ZeroDuration);
        }
        if self.horizon == 0 {
            return Err(ConfigError::ZeroHorizon);
        }
        Ok(())
    }

    pub fn has_worker(&self, worker: Worker) -> bool {
        self.roster.contains(&worker)
    }

    /// Roster in canonical worker order.
    pub fn workers(&self) -> Vec<Worker> {
        Worker::ALL.into_iter().filter(|w| self.has_worker(*w)).collect()
    }

    pub fn scenario(&self) -> Option<ScenarioKind> {
        [ScenarioKind::FullyStaffed, ScenarioKind::Understaffed].into_iter().find(|k| *self == k.config())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum WorkerStatus {
    Absent,
    Idle,
    /// `remaining` counts down to zero; the tick after that is the hand-off,
    /// when the order advances and the worker frees up.
    Busy {
        order: u8,
        subtask: Subtask,
        remaining: u8,
    },
}

impl WorkerStatus {
    pub fn is_idle(self) -> bool {
        self == WorkerStatus::Idle
    }

    /// Ticks until the worker is idle again.
    pub fn ticks_until_free(self) -> u32 {
        match self {
            WorkerStatus::Busy { remaining, .. } => u32::from(remaining) + 1,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KitchenState {
    pub stages: [Stage; MAX_ORDERS],
    pub workers: [WorkerStatus; 3],
    /// Assignments made so far, indexed `[worker][subtask]`.
    pub counts: [[u8; 3]; 3],
    pub tick: u32,
}

impl KitchenState {
    pub fn worker(&self, w: Worker) -> WorkerStatus {
        self.workers[w.index()]
    }

    pub fn count(&self, w: Worker, s: Subtask) -> u8 {
        self.counts[w.index()][s.index()]
    }

    pub fn all_plated(&self) -> bool {
        self.stages.iter().all(|s| *s == Stage::Plated)
    }

    pub fn is_in_progress(&self, order: u8) -> bool {
        self.workers.iter().any(|w| matches!(w, WorkerStatus::Busy { order: o, .. } if *o == order))
    }

    /// Whether `(order, subtask)` is the next step of an order nobody is working on.
    pub fn is_available(&self, order: u8, subtask: Subtask) -> bool {
        (order as usize) < MAX_ORDERS
            && self.stages[order as usize].next_subtask() == Some(subtask)
            && !self.is_in_progress(order)
    }

    /// Startable `(order, subtask)` pairs in order-index order.
    pub fn available(&self) -> Vec<(u8, Subtask)> {
        (0..MAX_ORDERS as u8)
            .filter_map(|o| {
                let s = self.stages[o as usize].next_subtask()?;
                (!self.is_in_progress(o)).then_some((o, s))
            })
            .collect()
    }

    pub fn idle_workers(&self) -> Vec<Worker> {
        Worker::ALL.into_iter().filter(|w| self.worker(*w).is_idle()).collect()
    }
}

/// One worker starting one subtask. `order` is zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Assignment {
    pub worker: Worker,
    pub order: u8,
    pub subtask: Subtask,
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} #{}", self.worker, self.subtask, self.order + 1)
    }
}

/// Assignments made in one tick, sorted by worker, at most one per worker.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointAction(Vec<Assignment>);

impl JointAction {
    pub fn idle() -> Self {
        Self(Vec::new())
    }

    /// Builds a joint action. Later assignments for the same worker win.
    pub fn new(assignments: impl IntoIterator<Item = Assignment>) -> Self {
        let mut out = Self::idle();
        for a in assignments {
            out = out.with(a);
        }
        out
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, worker: Worker) -> Option<&Assignment> {
        self.0.iter().find(|a| a.worker == worker)
    }

    /// Replaces whatever `a.worker` was doing with `a`.
    pub fn with(&self, a: Assignment) -> Self {
        let mut v: Vec<Assignment> = self.0.iter().copied().filter(|x| x.worker != a.worker).collect();
        v.push(a);
        v.sort();
        Self(v)
    }

    pub fn without_worker(&self, worker: Worker) -> Self {
        Self(self.0.iter().copied().filter(|x| x.worker != worker).collect())
    }

    pub fn without_target(&self, order: u8, subtask: Subtask) -> Self {
        Self(self.0.iter().copied().filter(|x| !(x.order == order && x.subtask == subtask)).collect())
    }

    pub fn assigns(&self, worker: Worker, subtask: Subtask) -> bool {
        self.get(worker).is_some_and(|a| a.subtask == subtask)
    }
}

impl fmt::Display for JointAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("(idle)");
        }
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Why an assignment cannot be made.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IllegalAssignment {
    #[error("the episode is over")]
    EpisodeOver,
    #[error("{0} is not on shift")]
    WorkerAbsent(Worker),
    #[error("{0} is busy")]
    WorkerBusy(Worker),
    #[error("{0} already has an assignment this tick")]
    WorkerAssignedTwice(Worker),
    #[error("there is no order #{}", .0 + 1)]
    OrderOutOfRange(u8),
    #[error("{subtask} is not available on order #{}", .order + 1)]
    SubtaskUnavailable { order: u8, subtask: Subtask },
    #[error("{subtask} on order #{} is already assigned this tick", .order + 1)]
    TargetAssignedTwice { order: u8, subtask: Subtask },
}

impl IllegalAssignment {
    /// Stable machine-readable reason.
    pub fn code(&self) -> &'static str {
        match self {
            IllegalAssignment::EpisodeOver => "episode_over",
            IllegalAssignment::WorkerAbsent(_) => "worker_absent",
            IllegalAssignment::WorkerBusy(_) => "worker_busy",
            IllegalAssignment::WorkerAssignedTwice(_) => "worker_assigned_twice",
            IllegalAssignment::OrderOutOfRange(_) => "order_out_of_range",
            IllegalAssignment::SubtaskUnavailable { .. } => "subtask_unavailable",
            IllegalAssignment::TargetAssignedTwice { .. } => "target_assigned_twice",
        }
    }
}
