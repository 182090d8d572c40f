use std::collections::HashMap;

use super::{Mdp, MdpError, QFunction};

/// Exact optimal Q-values keyed by state and steps remaining.
#[derive(Debug, Clone)]
pub struct QTable<S, A> {
    horizon: u32,
    entries: HashMap<(S, u32), Vec<(A, f64)>>,
}

impl<S, A> QTable<S, A>
where
    S: Clone + Eq + std::hash::Hash,
    A: Clone + PartialEq,
{
    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn q(&self, state: &S, remaining: u32, action: &A) -> Option<f64> {
        self.entries.get(&(state.clone(), remaining))?.iter().find(|(a, _)| a == action).map(|(_, q)| *q)
    }

    pub fn actions(&self, state: &S, remaining: u32) -> Option<&[(A, f64)]> {
        self.entries.get(&(state.clone(), remaining)).map(Vec::as_slice)
    }

    /// Optimal value; zero for terminal states and exhausted horizons.
    pub fn value(&self, state: &S, remaining: u32) -> f64 {
        self.entries
            .get(&(state.clone(), remaining))
            .map_or(0.0, |qs| qs.iter().map(|(_, q)| *q).fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn greedy(&self, state: &S, remaining: u32) -> Option<A> {
        let qs = self.entries.get(&(state.clone(), remaining))?;
        let mut best = qs.first()?;
        for e in &qs[1..] {
            if e.1 > best.1 {
                best = e;
            }
        }
        Some(best.0.clone())
    }

    /// Largest violation of the Bellman optimality equation over the table.
    pub fn bellman_residual<M: Mdp<State = S, Action = A>>(&self, mdp: &M) -> f64 {
        let mut worst: f64 = 0.0;
        for ((s, rem), qs) in &self.entries {
            for (a, q) in qs {
                let backup = mdp.reward(s, a)
                    + mdp
                        .transitions(s, a)
                        .iter()
                        .map(|(n, p)| p * self.value_or_terminal(mdp, n, rem - 1))
                        .sum::<f64>();
                worst = worst.max((backup - q).abs());
            }
        }
        worst
    }

    fn value_or_terminal<M: Mdp<State = S, Action = A>>(&self, mdp: &M, s: &S, rem: u32) -> f64 {
        if rem == 0 || mdp.is_terminal(s) {
            0.0
        } else {
            self.value(s, rem)
        }
    }
}

impl<M: Mdp> QFunction<M> for QTable<M::State, M::Action> {
    fn q(&self, _mdp: &M, state: &M::State, action: &M::Action, remaining: u32) -> f64 {
        QTable::q(self, state, remaining, action).unwrap_or(0.0)
    }
}

/// Solves the MDP exactly by memoized backward induction over the states
/// reachable from the initial state.
pub fn exact_q_dp<M: Mdp>(mdp: &M, max_states: usize) -> Result<QTable<M::State, M::Action>, MdpError> {
    let mut table = QTable { horizon: mdp.horizon(), entries: HashMap::new() };
    let s0 = mdp.initial_state();
    solve(mdp, &s0, mdp.horizon(), &mut table, max_states)?;
    Ok(table)
}

fn solve<M: Mdp>(
    mdp: &M,
    state: &M::State,
    remaining: u32,
    table: &mut QTable<M::State, M::Action>,
    max_states: usize,
) -> Result<f64, MdpError> {
    if remaining == 0 || mdp.is_terminal(state) {
        return Ok(0.0);
    }
    if let Some(qs) = table.entries.get(&(state.clone(), remaining)) {
        return Ok(qs.iter().map(|(_, q)| *q).fold(f64::NEG_INFINITY, f64::max));
    }
    if table.entries.len() >= max_states {
        return Err(MdpError::StateSpaceTooLarge { limit: max_states });
    }
    let mut qs = Vec::new();
    for a in mdp.legal_actions(state) {
        let mut q = mdp.reward(state, &a);
        for (next, p) in mdp.transitions(state, &a) {
            q += p * solve(mdp, &next, remaining - 1, table, max_states)?;
        }
        qs.push((a, q));
    }
    let v = qs.iter().map(|(_, q)| *q).fold(f64::NEG_INFINITY, f64::max);
    table.entries.insert((state.clone(), remaining), qs);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::super::toy::{BanditMdp, BanditState, ChainAction, ChainMdp};
    use super::*;

    #[test]
    fn chain_matches_hand_backups() {
        let t = exact_q_dp(&ChainMdp, 100).unwrap();
        // Worked by hand from the chain's definition.
        let expect = [
            (1u8, 1u32, ChainAction::Advance, 5.0),
            (1, 1, ChainAction::Wait, 0.0),
            (0, 1, ChainAction::Advance, -1.0),
            (0, 1, ChainAction::Wait, 0.0),
            (0, 2, ChainAction::Advance, 1.5),
            (0, 2, ChainAction::Wait, 0.0),
            (1, 2, ChainAction::Wait, 5.0),
            (0, 3, ChainAction::Advance, 2.25),
            (0, 3, ChainAction::Wait, 1.5),
        ];
        for (s, rem, a, q) in expect {
            let got = t.q(&s, rem, &a).unwrap();
            assert!((got - q).abs() < 1e-12, "Q({s},{rem},{a:?}) = {got}, want {q}");
        }
        assert!((t.value(&0, 3) - 2.25).abs() < 1e-12);
        assert!(t.bellman_residual(&ChainMdp) < 1e-12);
    }

    #[test]
    fn bandit_greedy_is_best_arm() {
        let mdp = BanditMdp::new(vec![0.0, 1.0, 0.2]);
        let t = exact_q_dp(&mdp, 10).unwrap();
        assert_eq!(t.greedy(&BanditState::Start, 1), Some(1));
        assert_eq!(t.value(&BanditState::Start, 1), 1.0);
    }

    #[test]
    fn state_cap_is_enforced() {
        assert_eq!(exact_q_dp(&ChainMdp, 1).unwrap_err(), MdpError::StateSpaceTooLarge { limit: 1 });
    }
}
