use super::{JointAction, KitchenMdp, KitchenState, Subtask, WorkerStatus, MAX_ORDERS};
use crate::mdp::Featurizer;

const PER_WORKER_STATE: usize = 5;
const PER_WORKER_ACTION: usize = 4;

/// State: one availability bit per (order, subtask), then per rostered worker
/// an idle flag, a one-hot of its current subtask and its normalized time
/// left, then the normalized tick.
///
/// Action: per rostered worker a one-hot over {nothing, chop, cook, plate}.
/// Order identity is dropped so the learned Q sees tasks, not tickets.
impl Featurizer for KitchenMdp {
    fn state_dim(&self) -> usize {
        MAX_ORDERS * 3 + self.config().roster.len() * PER_WORKER_STATE + 1
    }

    fn action_dim(&self) -> usize {
        self.config().roster.len() * PER_WORKER_ACTION
    }

    fn state_features(&self, state: &KitchenState) -> Vec<f64> {
        let mut x = vec![0.0; self.state_dim()];
        for (o, s) in state.available() {
            x[o as usize * 3 + s.index()] = 1.0;
        }
        let max_ticks = f64::from(self.max_duration()) + 1.0;
        let mut i = MAX_ORDERS * 3;
        for w in self.config().workers() {
            match state.worker(w) {
                WorkerStatus::Idle => x[i] = 1.0,
                WorkerStatus::Busy { subtask, .. } => {
                    x[i + 1 + subtask.index()] = 1.0;
                    x[i + 4] = f64::from(state.worker(w).ticks_until_free()) / max_ticks;
                }
                WorkerStatus::Absent => {}
            }
            i += PER_WORKER_STATE;
        }
        x[i] = f64::from(state.tick) / f64::from(self.config().horizon);
        x
    }

    fn action_features(&self, _: &KitchenState, action: &JointAction) -> Vec<f64> {
        let mut x = vec![0.0; self.action_dim()];
        for (k, w) in self.config().workers().into_iter().enumerate() {
            let slot = action.get(w).map_or(0, |a| 1 + a.subtask.index());
            x[k * PER_WORKER_ACTION + slot] = 1.0;
        }
        x
    }
}

impl KitchenMdp {
    fn max_duration(&self) -> u8 {
        self.config().workers().into_iter().flat_map(|w| Subtask::ALL.map(|s| self.duration(w, s))).max().unwrap_or(1)
    }
}
