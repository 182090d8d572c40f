use super::{
    Assignment, ConfigError, IllegalAssignment, JointAction, KitchenConfig, KitchenState, Stage, Worker, WorkerStatus,
    MAX_ORDERS,
};
use crate::mdp::Mdp;

/// The kitchen as an MDP: every tick costs one point, episodes end when all
/// orders are plated or the horizon runs out.
///
/// A subtask of duration `d` started at tick `t` frees its worker and unlocks
/// the order's next subtask at tick `t + d + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KitchenMdp {
    config: KitchenConfig,
}

impl KitchenMdp {
    pub fn new(config: KitchenConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &KitchenConfig {
        &self.config
    }

    pub fn duration(&self, worker: Worker, subtask: super::Subtask) -> u8 {
        self.config.skills.duration(worker, subtask)
    }

    /// Checks one assignment against the state and the assignments already
    /// chosen for this tick.
    pub fn check_assignment(
        &self,
        state: &KitchenState,
        pending: &[Assignment],
        a: &Assignment,
    ) -> Result<(), IllegalAssignment> {
        if self.is_terminal(state) {
            return Err(IllegalAssignment::EpisodeOver);
        }
        match state.worker(a.worker) {
            WorkerStatus::Absent => return Err(IllegalAssignment::WorkerAbsent(a.worker)),
            WorkerStatus::Busy { .. } => return Err(IllegalAssignment::WorkerBusy(a.worker)),
            WorkerStatus::Idle => {}
        }
        if pending.iter().any(|p| p.worker == a.worker) {
            return Err(IllegalAssignment::WorkerAssignedTwice(a.worker));
        }
        if a.order >= self.config.orders {
            return Err(IllegalAssignment::OrderOutOfRange(a.order));
        }
        if pending.iter().any(|p| p.order == a.order) {
            return Err(IllegalAssignment::TargetAssignedTwice { order: a.order, subtask: a.subtask });
        }
        if !state.is_available(a.order, a.subtask) {
            return Err(IllegalAssignment::SubtaskUnavailable { order: a.order, subtask: a.subtask });
        }
        Ok(())
    }

    pub fn check_action(&self, state: &KitchenState, action: &JointAction) -> Result<(), IllegalAssignment> {
        if self.is_terminal(state) {
            return Err(IllegalAssignment::EpisodeOver);
        }
        let mut pending = Vec::with_capacity(action.len());
        for a in action.assignments() {
            self.check_assignment(state, &pending, a)?;
            pending.push(*a);
        }
        Ok(())
    }

    /// Deterministic successor. The action must be legal.
    pub fn next_state(&self, state: &KitchenState, action: &JointAction) -> KitchenState {
        let mut s = state.clone();
        for a in action.assignments() {
            s.workers[a.worker.index()] = WorkerStatus::Busy {
                order: a.order,
                subtask: a.subtask,
                remaining: self.duration(a.worker, a.subtask),
            };
            let c = &mut s.counts[a.worker.index()][a.subtask.index()];
            *c = c.saturating_add(1);
        }
        for w in &mut s.workers {
            if let WorkerStatus::Busy { order, remaining, .. } = w {
                if *remaining == 0 {
                    let o = *order as usize;
                    s.stages[o] = s.stages[o].advance();
                    *w = WorkerStatus::Idle;
                } else {
                    *remaining -= 1;
                }
            }
        }
        s.tick += 1;
        s
    }

    /// Plays a sequence of joint actions from the initial state.
    pub fn replay<'a>(
        &self,
        actions: impl IntoIterator<Item = &'a JointAction>,
    ) -> Result<KitchenState, (usize, IllegalAssignment)> {
        let mut s = self.initial_state();
        for (t, a) in actions.into_iter().enumerate() {
            self.check_action(&s, a).map_err(|e| (t, e))?;
            s = self.next_state(&s, a);
        }
        Ok(s)
    }
}

impl Mdp for KitchenMdp {
    type State = KitchenState;
    type Action = JointAction;

    fn initial_state(&self) -> KitchenState {
        let mut stages = [Stage::Plated; MAX_ORDERS];
        for s in stages.iter_mut().take(self.config.orders as usize) {
            *s = Stage::Raw;
        }
        let mut workers = [WorkerStatus::Absent; 3];
        for w in &self.config.roster {
            workers[w.index()] = WorkerStatus::Idle;
        }
        KitchenState { stages, workers, counts: [[0; 3]; 3], tick: 0 }
    }

    fn horizon(&self) -> u32 {
        self.config.horizon
    }

    fn is_terminal(&self, state: &KitchenState) -> bool {
        state.all_plated() || state.tick >= self.config.horizon
    }

    fn legal_actions(&self, state: &KitchenState) -> Vec<JointAction> {
        if self.is_terminal(state) {
            return Vec::new();
        }
        let idle = state.idle_workers();
        let targets = state.available();
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(idle.len());
        let mut used = vec![false; targets.len()];
        enumerate(&idle, &targets, &mut used, &mut current, &mut out);
        out
    }

    fn is_legal(&self, state: &KitchenState, action: &JointAction) -> bool {
        self.check_action(state, action).is_ok()
    }

    fn reward(&self, _: &KitchenState, _: &JointAction) -> f64 {
        -1.0
    }

    fn transitions(&self, state: &KitchenState, action: &JointAction) -> Vec<(KitchenState, f64)> {
        vec![(self.next_state(state, action), 1.0)]
    }
}

fn enumerate(
    idle: &[Worker],
    targets: &[(u8, super::Subtask)],
    used: &mut [bool],
    current: &mut Vec<Assignment>,
    out: &mut Vec<JointAction>,
) {
    let Some((&worker, rest)) = idle.split_first() else {
        out.push(JointAction(current.clone()));
        return;
    };
    enumerate(rest, targets, used, current, out);
    for (i, &(order, subtask)) in targets.iter().enumerate() {
        if used[i] {
            continue;
        }
        used[i] = true;
        current.push(Assignment { worker, order, subtask });
        enumerate(rest, targets, used, current, out);
        current.pop();
        used[i] = false;
    }
}
