//! One player's game: the round schedule, the live board and the traces of
//! finished rounds.

use std::collections::BTreeMap;

use kitchen_api::{OrderView, RoundSummary, SessionView, TipView, WireAssignment, WorkerState, WorkerView};
use kitchen_core::eval::{reference_ticks, Configuration, TipFixture};
use kitchen_core::kitchen::{
    Assignment, IllegalAssignment, JointAction, KitchenMdp, KitchenState, ScenarioKind, Subtask, Worker, WorkerStatus,
};
use kitchen_core::mdp::{Mdp, Rollout, Step};
use kitchen_core::trace::TraceRecord;
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("assignment {index}: {source}")]
    Illegal { index: usize, source: IllegalAssignment },
    #[error("order numbers start at 1")]
    OrderZero { index: usize },
    #[error("the session is finished")]
    Finished,
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::Illegal { .. } | SessionError::OrderZero { .. } => "illegal_assignment",
            SessionError::Finished => "session_finished",
        }
    }

    pub fn reason(&self) -> Option<&'static str> {
        match self {
            SessionError::Illegal { source, .. } => Some(source.code()),
            SessionError::OrderZero { .. } => Some("order_out_of_range"),
            SessionError::Finished => None,
        }
    }
}

/// What happened on a commit.
#[derive(Debug, Clone, PartialEq)]
pub enum CommitOutcome {
    Ticked,
    /// The round ended; its trace is attached.
    RoundOver(Box<TraceRecord>),
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: Uuid,
    pub configuration: Configuration,
    pub condition: String,
    /// Tips per round, as configured for this session's condition.
    tips: Vec<Option<TipFixture>>,
    rounds: Vec<ScenarioKind>,
    round: usize,
    mdp: KitchenMdp,
    state: KitchenState,
    steps: Vec<Step<KitchenState, JointAction>>,
    pending: Vec<Assignment>,
    known: BTreeMap<(Worker, Subtask), u8>,
    history: Vec<RoundSummary>,
    last_round: Option<RoundSummary>,
    finished: bool,
    client: serde_json::Value,
}

impl Session {
    pub fn new(
        id: Uuid,
        configuration: Configuration,
        condition: String,
        tips: Vec<Option<TipFixture>>,
        client: serde_json::Value,
    ) -> Self {
        let rounds = configuration.rounds();
        let mdp = KitchenMdp::new(rounds[0].config()).expect("stock scenarios are valid");
        let state = mdp.initial_state();
        Self {
            id,
            configuration,
            condition,
            tips,
            rounds,
            round: 0,
            mdp,
            state,
            steps: Vec::new(),
            pending: Vec::new(),
            known: BTreeMap::new(),
            history: Vec::new(),
            last_round: None,
            finished: false,
            client,
        }
    }

    /// 1-based.
    pub fn round(&self) -> usize {
        self.round + 1
    }

    pub fn scenario(&self) -> ScenarioKind {
        self.rounds[self.round]
    }

    pub fn state(&self) -> &KitchenState {
        &self.state
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn history(&self) -> &[RoundSummary] {
        &self.history
    }

    pub fn tip(&self) -> Option<&TipFixture> {
        self.tips.get(self.round).and_then(|t| t.as_ref())
    }

    pub fn tip_view(&self) -> Option<TipView> {
        self.tip().map(|f| match f.tip {
            Some(t) => TipView::counted(t),
            None => TipView::label(f.text.clone()),
        })
    }

    /// Validates each assignment against the board and the buffer, then
    /// buffers them all. Nothing is buffered if any is rejected.
    pub fn submit(&mut self, assignments: &[WireAssignment], replace: bool) -> Result<(), SessionError> {
        if self.finished {
            return Err(SessionError::Finished);
        }
        let mut pending = if replace { Vec::new() } else { self.pending.clone() };
        for (index, a) in assignments.iter().enumerate() {
            let order = a.order.checked_sub(1).ok_or(SessionError::OrderZero { index })?;
            let a = Assignment { worker: a.worker, order, subtask: a.subtask };
            self.mdp
                .check_assignment(&self.state, &pending, &a)
                .map_err(|source| SessionError::Illegal { index, source })?;
            pending.push(a);
        }
        self.pending = pending;
        Ok(())
    }

    /// Applies the buffered assignments and advances one tick.
    pub fn commit(&mut self) -> Result<CommitOutcome, SessionError> {
        if self.finished {
            return Err(SessionError::Finished);
        }
        let action = JointAction::new(std::mem::take(&mut self.pending));
        for a in action.assignments() {
            self.known.insert((a.worker, a.subtask), self.mdp.duration(a.worker, a.subtask));
        }
        let next = self.mdp.next_state(&self.state, &action);
        let reward = self.mdp.reward(&self.state, &action);
        let prev = std::mem::replace(&mut self.state, next);
        self.steps.push(Step { state: prev, action, reward });
        self.last_round = None;
        if !self.mdp.is_terminal(&self.state) {
            return Ok(CommitOutcome::Ticked);
        }
        let record = self.close_round();
        Ok(CommitOutcome::RoundOver(Box::new(record)))
    }

    fn close_round(&mut self) -> TraceRecord {
        let steps = std::mem::take(&mut self.steps);
        let total = steps.iter().map(|s| s.reward).sum();
        let rollout = Rollout { steps, final_state: self.state.clone(), total_return: total };
        let scenario = self.scenario();
        let mut record = TraceRecord::from_rollout(self.id.to_string(), scenario, &rollout);
        record.configuration = Some(self.configuration);
        record.round = self.round + 1;
        record.condition = self.condition.clone();
        record.tip = self.tip().map(|t| t.text.clone());
        record.client = self.client.clone();

        let summary = RoundSummary {
            round: self.round + 1,
            scenario,
            completion_ticks: rollout.len() as u32,
            reference_ticks: reference_ticks(scenario),
            completed: rollout.final_state.all_plated(),
        };
        self.history.push(summary.clone());
        self.last_round = Some(summary);
        if self.round + 1 < self.rounds.len() {
            self.round += 1;
            self.mdp = KitchenMdp::new(self.scenario().config()).expect("stock scenarios are valid");
            self.state = self.mdp.initial_state();
        } else {
            self.finished = true;
        }
        record
    }

    /// Ends the session. Returns whether an unfinished round was dropped.
    pub fn finish(&mut self) -> bool {
        let abandoned = !self.finished && !self.steps.is_empty();
        self.finished = true;
        self.pending.clear();
        abandoned
    }

    pub fn view(&self) -> SessionView {
        let s = &self.state;
        let orders = (0..self.mdp.config().orders)
            .map(|o| OrderView {
                order: o + 1,
                stage: s.stages[o as usize],
                available: s.stages[o as usize].next_subtask().filter(|&t| s.is_available(o, t)),
            })
            .collect();
        let workers = self
            .mdp
            .config()
            .workers()
            .into_iter()
            .map(|w| {
                let status = s.worker(w);
                let task = match status {
                    WorkerStatus::Busy { order, subtask, .. } => {
                        Some(WireAssignment { worker: w, order: order + 1, subtask })
                    }
                    _ => None,
                };
                WorkerView {
                    worker: w,
                    title: w.title().to_string(),
                    state: if status.is_idle() { WorkerState::Idle } else { WorkerState::Busy },
                    task,
                    remaining_ticks: task.map(|_| status.ticks_until_free()),
                    known_durations: self
                        .known
                        .iter()
                        .filter(|((kw, _), _)| *kw == w)
                        .map(|((_, t), d)| (*t, *d))
                        .collect(),
                }
            })
            .collect();
        SessionView {
            session_id: self.id,
            configuration: self.configuration,
            round: self.round + 1,
            rounds: self.rounds.len(),
            scenario: self.scenario(),
            tick: s.tick,
            horizon: self.mdp.horizon(),
            orders,
            workers,
            pending: self
                .pending
                .iter()
                .map(|a| WireAssignment { worker: a.worker, order: a.order + 1, subtask: a.subtask })
                .collect(),
            tip: self.tip().map(|t| t.text.clone()),
            last_round: self.last_round.clone(),
            history: self.history.clone(),
            finished: self.finished,
        }
    }
}
