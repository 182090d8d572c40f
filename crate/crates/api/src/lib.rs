//! Request and response bodies for the session service.
//!
//! Orders are numbered from 1 everywhere on the wire.

use std::collections::BTreeMap;

use kitchen_core::eval::Configuration;
use kitchen_core::kitchen::{Stage, Subtask, Worker};
use kitchen_core::tips::CountedTip;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

pub use kitchen_core::kitchen::ScenarioKind;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub configuration: Option<Configuration>,
    /// Pins the condition instead of drawing it. Meant for tests and demos.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    /// Stored with every trace, never interpreted.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub client: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireAssignment {
    pub worker: Worker,
    pub order: u8,
    pub subtask: Subtask,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubmitAssignments {
    pub assignments: Vec<WireAssignment>,
    /// Drop previously buffered assignments first.
    #[serde(default)]
    pub replace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderView {
    pub order: u8,
    pub stage: Stage,
    /// The order's next subtask when nobody is working on it.
    pub available: Option<Subtask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerState {
    Idle,
    Busy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerView {
    pub worker: Worker,
    pub title: String,
    pub state: WorkerState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<WireAssignment>,
    /// Ticks until the worker is free again.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remaining_ticks: Option<u32>,
    /// Durations this session has already seen, keyed by subtask.
    pub known_durations: BTreeMap<Subtask, u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub scenario: ScenarioKind,
    pub completion_ticks: u32,
    pub reference_ticks: u32,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: Uuid,
    pub configuration: Configuration,
    /// 1-based.
    pub round: usize,
    pub rounds: usize,
    pub scenario: ScenarioKind,
    pub tick: u32,
    pub horizon: u32,
    pub orders: Vec<OrderView>,
    pub workers: Vec<WorkerView>,
    pub pending: Vec<WireAssignment>,
    pub tip: Option<String>,
    /// Set right after a round ends; the board already shows the next round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_round: Option<RoundSummary>,
    pub history: Vec<RoundSummary>,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TipView {
    pub display: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker: Option<Worker>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtask: Option<Subtask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u8>,
}

impl TipView {
    pub fn label(display: impl Into<String>) -> Self {
        Self { display: display.into(), worker: None, subtask: None, count: None }
    }

    pub fn counted(tip: CountedTip) -> Self {
        Self { display: tip.to_string(), worker: Some(tip.worker), subtask: Some(tip.subtask), count: Some(tip.count) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TipResponse {
    pub round: usize,
    pub tip: Option<TipView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinishResponse {
    pub session_id: Uuid,
    pub rounds: Vec<RoundSummary>,
    /// Rounds whose traces were persisted.
    pub traces_written: usize,
    /// Whether an unfinished round was dropped.
    pub abandoned_round: bool,
}

/// Every error response has this shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    /// Finer-grained cause, e.g. `worker_busy` for an illegal assignment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}
