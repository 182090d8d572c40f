//! JSONL game traces: one finished round per line.
//!
//! Orders are numbered from 1 on disk, as players see them.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::Configuration;
use crate::kitchen::{
    Assignment, IllegalAssignment, JointAction, KitchenMdp, KitchenState, ScenarioKind, Subtask, Worker,
};
use crate::mdp::{Mdp, Rollout, Step};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("invalid JSON: {0}")]
    Parse(String),
    #[error("step {step}: order numbers start at 1")]
    OrderZero { step: usize },
    #[error("step {step}: expected tick {expected}, found {found}")]
    TickGap { step: usize, expected: u32, found: u32 },
    #[error("step {step}: {reason}")]
    Illegal { step: usize, reason: IllegalAssignment },
    #[error("step {step}: the round was already over")]
    PastTheEnd { step: usize },
    #[error("the round stops after {ticks} ticks with orders still open")]
    Unfinished { ticks: u32 },
    #[error("recorded {recorded} ticks but replay takes {replayed}")]
    CompletionMismatch { recorded: u32, replayed: u32 },
}

impl TraceError {
    pub fn code(&self) -> &'static str {
        match self {
            TraceError::Parse(_) => "parse_error",
            TraceError::OrderZero { .. } => "order_out_of_range",
            TraceError::TickGap { .. } => "tick_gap",
            TraceError::Illegal { .. } => "illegal_assignment",
            TraceError::PastTheEnd { .. } => "past_the_end",
            TraceError::Unfinished { .. } => "unfinished",
            TraceError::CompletionMismatch { .. } => "replay_mismatch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceAssignment {
    pub worker: Worker,
    /// 1-based.
    pub order: u8,
    pub subtask: Subtask,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub tick: u32,
    pub assignments: Vec<TraceAssignment>,
}

/// One played round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub session_id: String,
    pub scenario: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub configuration: Option<Configuration>,
    /// 1-based.
    pub round: usize,
    pub condition: String,
    pub tip: Option<String>,
    pub steps: Vec<TraceStep>,
    pub completion_ticks: u32,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub client: serde_json::Value,
}

impl TraceRecord {
    /// A record for `rollout` with empty study metadata.
    pub fn from_rollout(
        session_id: impl Into<String>,
        scenario: ScenarioKind,
        rollout: &Rollout<KitchenState, JointAction>,
    ) -> Self {
        let steps = rollout
            .steps
            .iter()
            .enumerate()
            .map(|(t, s)| TraceStep { tick: t as u32, assignments: to_disk(&s.action) })
            .collect();
        Self {
            session_id: session_id.into(),
            scenario,
            configuration: None,
            round: 1,
            condition: "none".into(),
            tip: None,
            steps,
            completion_ticks: rollout.len() as u32,
            client: serde_json::Value::Null,
        }
    }

    pub fn actions(&self) -> Result<Vec<JointAction>, TraceError> {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut out = Vec::with_capacity(s.assignments.len());
                for a in &s.assignments {
                    let order = a.order.checked_sub(1).ok_or(TraceError::OrderZero { step: i })?;
                    out.push(Assignment { worker: a.worker, order, subtask: a.subtask });
                }
                Ok(JointAction::new(out))
            })
            .collect()
    }

    /// Replays the record in its scenario and returns the rollout it
    /// describes.
    pub fn replay(&self) -> Result<Rollout<KitchenState, JointAction>, TraceError> {
        let mdp = KitchenMdp::new(self.scenario.config()).expect("stock scenarios are valid");
        self.replay_in(&mdp)
    }

    pub fn replay_in(&self, mdp: &KitchenMdp) -> Result<Rollout<KitchenState, JointAction>, TraceError> {
        let actions = self.actions()?;
        let mut state = mdp.initial_state();
        let mut steps = Vec::with_capacity(actions.len());
        let mut total = 0.0;
        for (i, (rec, action)) in self.steps.iter().zip(actions).enumerate() {
            if rec.tick != i as u32 {
                return Err(TraceError::TickGap { step: i, expected: i as u32, found: rec.tick });
            }
            if mdp.is_terminal(&state) {
                return Err(TraceError::PastTheEnd { step: i });
            }
            mdp.check_action(&state, &action).map_err(|reason| TraceError::Illegal { step: i, reason })?;
            let next = mdp.next_state(&state, &action);
            let r = mdp.reward(&state, &action);
            total += r;
            steps.push(Step { state, action, reward: r });
            state = next;
        }
        let ticks = steps.len() as u32;
        if !mdp.is_terminal(&state) {
            return Err(TraceError::Unfinished { ticks });
        }
        if ticks != self.completion_ticks {
            return Err(TraceError::CompletionMismatch { recorded: self.completion_ticks, replayed: ticks });
        }
        Ok(Rollout { steps, final_state: state, total_return: total })
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        self.replay().map(|_| ())
    }
}

fn to_disk(action: &JointAction) -> Vec<TraceAssignment> {
    action
        .assignments()
        .iter()
        .map(|a| TraceAssignment { worker: a.worker, order: a.order + 1, subtask: a.subtask })
        .collect()
}

/// A rejected line.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub file: PathBuf,
    /// 1-based.
    pub line: usize,
    pub error: TraceError,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.file.display(), self.line, self.error)
    }
}

/// Valid records and the lines that were skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    pub records: Vec<TraceRecord>,
    pub errors: Vec<LineError>,
}

impl Ingested {
    pub fn rollouts(&self) -> Vec<Rollout<KitchenState, JointAction>> {
        self.records.iter().map(|r| r.replay().expect("ingested records replay")).collect()
    }
}

/// Parses and replay-validates every line of a JSONL stream. Blank lines are
/// ignored.
pub fn read_jsonl(reader: impl BufRead, file: &Path) -> io::Result<Ingested> {
    let lines: Vec<(usize, String)> =
        reader.lines().enumerate().map(|(i, l)| l.map(|l| (i + 1, l))).collect::<io::Result<_>>()?;
    let parsed: Vec<Result<TraceRecord, LineError>> = lines
        .into_par_iter()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(line, text)| {
            let fail = |error| LineError { file: file.to_path_buf(), line, error };
            let record: TraceRecord =
                serde_json::from_str(&text).map_err(|e| fail(TraceError::Parse(e.to_string())))?;
            record.validate().map_err(fail)?;
            Ok(record)
        })
        .collect();
    let mut out = Ingested::default();
    for p in parsed {
        match p {
            Ok(r) => out.records.push(r),
            Err(e) => out.errors.push(e),
        }
    }
    Ok(out)
}

/// Reads one JSONL file, or every `*.jsonl` file in a directory in name
/// order.
pub fn ingest(path: &Path) -> io::Result<Ingested> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Ingested::default();
    for f in files {
        let part = read_jsonl(BufReader::new(File::open(&f)?), &f)?;
        out.records.extend(part.records);
        out.errors.extend(part.errors);
    }
    Ok(out)
}

/// Writes `records` to `path`, replacing any existing file.
pub fn write_jsonl(path: &Path, records: &[TraceRecord]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Appends one record as a single line.
pub fn append_jsonl(path: &Path, record: &TraceRecord) -> io::Result<()> {
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&line)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::kitchen::ScriptedPolicy;
    use crate::mdp::sample_rollout;

    fn scripted(kind: ScenarioKind) -> TraceRecord {
        let mdp = KitchenMdp::new(kind.config()).unwrap();
        let r =
            sample_rollout(&mdp, &ScriptedPolicy::for_config(mdp.config()), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        TraceRecord::from_rollout("s", kind, &r)
    }

    #[test]
    fn orders_are_one_based_on_disk() {
        let rec = scripted(ScenarioKind::FullyStaffed);
        let json = serde_json::to_value(&rec).unwrap();
        let first = &json["steps"][0]["assignments"];
        let mut orders: Vec<u64> = first.as_array().unwrap().iter().map(|a| a["order"].as_u64().unwrap()).collect();
        orders.sort();
        assert_eq!(orders, vec![1, 2, 3]);
        assert_eq!(rec.completion_ticks, 20);
        rec.validate().unwrap();
    }

    #[test]
    fn tampered_records_fail() {
        let mut rec = scripted(ScenarioKind::Understaffed);
        rec.completion_ticks = 30;
        assert!(matches!(rec.validate(), Err(TraceError::CompletionMismatch { recorded: 30, replayed: 34 })));

        let mut rec = scripted(ScenarioKind::Understaffed);
        rec.steps.truncate(10);
        rec.completion_ticks = 10;
        assert!(matches!(rec.validate(), Err(TraceError::Unfinished { ticks: 10 })));

        let mut rec = scripted(ScenarioKind::FullyStaffed);
        rec.steps[0].assignments[0].order = 0;
        assert_eq!(rec.validate().unwrap_err().code(), "order_out_of_range");

        let mut rec = scripted(ScenarioKind::FullyStaffed);
        rec.steps[1].assignments = rec.steps[0].assignments.clone();
        assert_eq!(rec.validate().unwrap_err().code(), "illegal_assignment");
    }

    #[test]
    fn bad_lines_are_reported_by_number() {
        let good = serde_json::to_string(&scripted(ScenarioKind::FullyStaffed)).unwrap();
        let text = format!("{good}\n\nnot json\n{good}\n");
        let out = read_jsonl(text.as_bytes(), Path::new("t.jsonl")).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].line, 3);
        assert_eq!(out.errors[0].error.code(), "parse_error");
    }
}
