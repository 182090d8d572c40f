use rand::RngCore;

use super::{Assignment, JointAction, KitchenConfig, KitchenMdp, KitchenState, ScenarioKind, Subtask, Worker};
use crate::mdp::Policy;

/// Hand-written dispatch rules that play each stock scenario in its
/// reference time (20 ticks fully staffed, 34 understaffed).
///
/// The rules only look at the current state, including the per-worker
/// assignment counts, so they define an expert action everywhere, not just
/// along the reference line. Other rosters fall back to "everyone takes the
/// job they are fastest at".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedPolicy {
    rules: Rules,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rules {
    FullyStaffed,
    Understaffed,
    Fastest,
}

impl ScriptedPolicy {
    pub fn for_config(config: &KitchenConfig) -> Self {
        let rules = match config.scenario() {
            Some(ScenarioKind::FullyStaffed) => Rules::FullyStaffed,
            Some(ScenarioKind::Understaffed) => Rules::Understaffed,
            None => Rules::Fastest,
        };
        Self { rules }
    }

    pub fn decide(&self, mdp: &KitchenMdp, state: &KitchenState) -> JointAction {
        let mut open = state.available();
        let mut picks = Vec::new();
        let order: &[Worker] = match self.rules {
            Rules::Understaffed => &[Worker::SousChef, Worker::Server],
            _ => &Worker::ALL,
        };
        for &w in order {
            if !state.worker(w).is_idle() {
                continue;
            }
            let has = |open: &[(u8, Subtask)], s| open.iter().any(|&(_, t)| t == s);
            let n = |s| state.count(w, s);
            let choice = match (self.rules, w) {
                (Rules::FullyStaffed, Worker::Chef) => first_of(&open, &[Subtask::Cook, Subtask::Chop]),
                (Rules::FullyStaffed, Worker::SousChef) => {
                    if n(Subtask::Cook) == 0 && has(&open, Subtask::Cook) {
                        Some(Subtask::Cook)
                    } else if n(Subtask::Plate) == 0 && has(&open, Subtask::Plate) {
                        Some(Subtask::Plate)
                    } else {
                        first_of(&open, &[Subtask::Chop])
                    }
                }
                (Rules::FullyStaffed, Worker::Server) => {
                    let may_chop = n(Subtask::Chop) == 0 || n(Subtask::Plate) >= 1;
                    if has(&open, Subtask::Plate) {
                        Some(Subtask::Plate)
                    } else if may_chop {
                        first_of(&open, &[Subtask::Chop])
                    } else {
                        None
                    }
                }
                (Rules::Understaffed, Worker::SousChef) => {
                    if n(Subtask::Chop) < 3 && has(&open, Subtask::Chop) {
                        Some(Subtask::Chop)
                    } else if n(Subtask::Cook) < 2 && has(&open, Subtask::Cook) {
                        Some(Subtask::Cook)
                    } else {
                        first_of(&open, &[Subtask::Plate, Subtask::Cook, Subtask::Chop])
                    }
                }
                (Rules::Understaffed, Worker::Server) => {
                    if n(Subtask::Chop) == 0 && has(&open, Subtask::Chop) {
                        Some(Subtask::Chop)
                    } else if n(Subtask::Cook) < 2 && has(&open, Subtask::Cook) {
                        Some(Subtask::Cook)
                    } else {
                        first_of(&open, &[Subtask::Plate, Subtask::Chop, Subtask::Cook])
                    }
                }
                _ => {
                    let mut by_speed = Subtask::ALL;
                    by_speed.sort_by_key(|s| mdp.duration(w, *s));
                    first_of(&open, &by_speed)
                }
            };
            if let Some(s) = choice {
                let idx = open.iter().position(|&(_, t)| t == s).expect("choice is open");
                let (order, subtask) = open.remove(idx);
                picks.push(Assignment { worker: w, order, subtask });
            }
        }
        JointAction::new(picks)
    }
}

fn first_of(open: &[(u8, Subtask)], prefs: &[Subtask]) -> Option<Subtask> {
    prefs.iter().copied().find(|s| open.iter().any(|&(_, t)| t == *s))
}

impl Policy<KitchenMdp> for ScriptedPolicy {
    fn distribution(&self, mdp: &KitchenMdp, state: &KitchenState) -> Vec<(JointAction, f64)> {
        vec![(self.decide(mdp, state), 1.0)]
    }

    fn act(&self, mdp: &KitchenMdp, state: &KitchenState, _: &mut dyn RngCore) -> JointAction {
        self.decide(mdp, state)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::mdp::{sample_rollout, Mdp};

    fn run(kind: ScenarioKind) -> crate::mdp::Rollout<KitchenState, JointAction> {
        let mdp = KitchenMdp::new(kind.config()).unwrap();
        let p = ScriptedPolicy::for_config(mdp.config());
        let r = sample_rollout(&mdp, &p, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        r.verify(&mdp).unwrap();
        r
    }

    fn starts(r: &crate::mdp::Rollout<KitchenState, JointAction>) -> Vec<(u32, Assignment)> {
        r.steps.iter().flat_map(|s| s.action.assignments().iter().map(move |a| (s.state.tick, *a))).collect()
    }

    #[test]
    fn fully_staffed_reference_line() {
        let r = run(ScenarioKind::FullyStaffed);
        assert_eq!(r.len(), 20);
        assert!(r.final_state.all_plated());
        let c = &r.final_state;
        assert_eq!(c.count(Worker::Chef, Subtask::Plate), 0);
        assert_eq!(c.count(Worker::Server, Subtask::Plate), 3);
        assert_eq!(c.count(Worker::Server, Subtask::Cook), 0);
        assert_eq!(c.count(Worker::Server, Subtask::Chop), 2);
        // The server sits out the first chop opportunity after its first chop.
        let server_free_at_4 = r.steps[4].state.worker(Worker::Server).is_idle();
        let chop_open_at_4 = r.steps[4].state.available().iter().any(|(_, s)| *s == Subtask::Chop);
        assert!(server_free_at_4 && chop_open_at_4);
        assert!(r.steps[4].action.get(Worker::Server).is_none());
    }

    #[test]
    fn understaffed_reference_line() {
        let r = run(ScenarioKind::Understaffed);
        assert_eq!(r.len(), 34);
        let c = &r.final_state;
        assert_eq!(c.count(Worker::Server, Subtask::Cook), 2);
        assert_eq!(c.count(Worker::SousChef, Subtask::Plate), 2);
        assert_eq!(c.count(Worker::Server, Subtask::Chop), 1);
        assert_eq!(c.count(Worker::SousChef, Subtask::Chop), 3);
        let s = starts(&r);
        assert_eq!(s[0], (0, Assignment { worker: Worker::SousChef, order: 0, subtask: Subtask::Chop }));
        assert_eq!(s[1], (0, Assignment { worker: Worker::Server, order: 1, subtask: Subtask::Chop }));
        // The second burger to finish cooking waits until the two later ones are cooked.
        let cooked_at = |order: u8| {
            r.steps.iter().position(|st| st.state.stages[order as usize] == super::super::Stage::Cooked).unwrap()
        };
        let mut by_cook: Vec<u8> = (0..4).collect();
        by_cook.sort_by_key(|&o| cooked_at(o));
        let second = by_cook[1];
        let plated_at = s.iter().find(|(_, a)| a.order == second && a.subtask == Subtask::Plate).unwrap().0;
        assert!(plated_at as usize >= cooked_at(by_cook[2]).max(cooked_at(by_cook[3])));
    }

    #[test]
    fn script_is_total() {
        let mdp = KitchenMdp::new(ScenarioKind::Understaffed.config()).unwrap();
        let p = ScriptedPolicy::for_config(mdp.config());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let mut s = mdp.initial_state();
            while !mdp.is_terminal(&s) {
                assert!(mdp.is_legal(&s, &p.decide(&mdp, &s)));
                let acts = mdp.legal_actions(&s);
                let a = &acts[(rng.next_u32() as usize) % acts.len()];
                s = mdp.next_state(&s, a);
            }
        }
    }
}
