//! Small hand-built MDPs used as test oracles.

use serde::{Deserialize, Serialize};

use super::{Featurizer, Mdp};

/// Three states in a row. `Advance` costs 1 and moves right with
/// probability 1/2 from state 0 (certainly from state 1); moving from 1 to the
/// terminal state 2 pays 5 instead. `Wait` is free. Horizon 3.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChainMdp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChainAction {
    Advance,
    Wait,
}

impl Mdp for ChainMdp {
    type State = u8;
    type Action = ChainAction;

    fn initial_state(&self) -> u8 {
        0
    }

    fn horizon(&self) -> u32 {
        3
    }

    fn is_terminal(&self, state: &u8) -> bool {
        *state == 2
    }

    fn legal_actions(&self, state: &u8) -> Vec<ChainAction> {
        if self.is_terminal(state) {
            Vec::new()
        } else {
            vec![ChainAction::Advance, ChainAction::Wait]
        }
    }

    fn reward(&self, state: &u8, action: &ChainAction) -> f64 {
        match (state, action) {
            (1, ChainAction::Advance) => 5.0,
            (_, ChainAction::Advance) => -1.0,
            (_, ChainAction::Wait) => 0.0,
        }
    }

    fn transitions(&self, state: &u8, action: &ChainAction) -> Vec<(u8, f64)> {
        match (state, action) {
            (0, ChainAction::Advance) => vec![(1, 0.5), (0, 0.5)],
            (s, ChainAction::Advance) => vec![(s + 1, 1.0)],
            (s, ChainAction::Wait) => vec![(*s, 1.0)],
        }
    }
}

impl Featurizer for ChainMdp {
    fn state_dim(&self) -> usize {
        3
    }
    fn action_dim(&self) -> usize {
        2
    }
    fn state_features(&self, state: &u8) -> Vec<f64> {
        one_hot(*state as usize, 3)
    }
    fn action_features(&self, _: &u8, action: &ChainAction) -> Vec<f64> {
        one_hot(*action as usize, 2)
    }
}

/// One pull of a k-armed bandit with fixed payoffs.
#[derive(Debug, Clone)]
pub struct BanditMdp {
    payoffs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BanditState {
    Start,
    Done,
}

impl BanditMdp {
    pub fn new(payoffs: Vec<f64>) -> Self {
        assert!(!payoffs.is_empty());
        Self { payoffs }
    }
}

impl Mdp for BanditMdp {
    type State = BanditState;
    type Action = usize;

    fn initial_state(&self) -> BanditState {
        BanditState::Start
    }
    fn horizon(&self) -> u32 {
        1
    }
    fn is_terminal(&self, state: &BanditState) -> bool {
        *state == BanditState::Done
    }
    fn legal_actions(&self, state: &BanditState) -> Vec<usize> {
        match state {
            BanditState::Start => (0..self.payoffs.len()).collect(),
            BanditState::Done => Vec::new(),
        }
    }
    fn reward(&self, _: &BanditState, arm: &usize) -> f64 {
        self.payoffs[*arm]
    }
    fn transitions(&self, _: &BanditState, _: &usize) -> Vec<(BanditState, f64)> {
        vec![(BanditState::Done, 1.0)]
    }
}

impl Featurizer for BanditMdp {
    fn state_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        self.payoffs.len()
    }
    fn state_features(&self, state: &BanditState) -> Vec<f64> {
        vec![f64::from(*state == BanditState::Start)]
    }
    fn action_features(&self, _: &BanditState, arm: &usize) -> Vec<f64> {
        one_hot(*arm, self.payoffs.len())
    }
}

/// Three harmless lobby steps followed by one consequential choice.
///
/// In the lobby `Wait` and `Stroll` are both free. At the fork `Fix` is free
/// and `Ignore` costs 10. Tips about the lobby are common but worthless;
/// the tip about the fork is rare but valuable.
#[derive(Debug, Clone, Copy, Default)]
pub struct LobbyMdp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LobbyState {
    Lobby(u8),
    Fork,
    Good,
    Bad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LobbyAction {
    Wait,
    Stroll,
    Fix,
    Ignore,
}

pub const LOBBY_STEPS: u8 = 3;

impl Mdp for LobbyMdp {
    type State = LobbyState;
    type Action = LobbyAction;

    fn initial_state(&self) -> LobbyState {
        LobbyState::Lobby(0)
    }
    fn horizon(&self) -> u32 {
        u32::from(LOBBY_STEPS) + 1
    }
    fn is_terminal(&self, state: &LobbyState) -> bool {
        matches!(state, LobbyState::Good | LobbyState::Bad)
    }
    fn legal_actions(&self, state: &LobbyState) -> Vec<LobbyAction> {
        match state {
            LobbyState::Lobby(_) => vec![LobbyAction::Wait, LobbyAction::Stroll],
            LobbyState::Fork => vec![LobbyAction::Fix, LobbyAction::Ignore],
            _ => Vec::new(),
        }
    }
    fn reward(&self, _: &LobbyState, action: &LobbyAction) -> f64 {
        if *action == LobbyAction::Ignore {
            -10.0
        } else {
            0.0
        }
    }
    fn transitions(&self, state: &LobbyState, action: &LobbyAction) -> Vec<(LobbyState, f64)> {
        let next = match (state, action) {
            (LobbyState::Lobby(i), _) if i + 1 < LOBBY_STEPS => LobbyState::Lobby(i + 1),
            (LobbyState::Lobby(_), _) => LobbyState::Fork,
            (_, LobbyAction::Fix) => LobbyState::Good,
            _ => LobbyState::Bad,
        };
        vec![(next, 1.0)]
    }
}

impl Featurizer for LobbyMdp {
    fn state_dim(&self) -> usize {
        usize::from(LOBBY_STEPS) + 3
    }
    fn action_dim(&self) -> usize {
        4
    }
    fn state_features(&self, state: &LobbyState) -> Vec<f64> {
        let n = usize::from(LOBBY_STEPS);
        let idx = match state {
            LobbyState::Lobby(i) => usize::from(*i),
            LobbyState::Fork => n,
            LobbyState::Good => n + 1,
            LobbyState::Bad => n + 2,
        };
        one_hot(idx, self.state_dim())
    }
    fn action_features(&self, _: &LobbyState, action: &LobbyAction) -> Vec<f64> {
        one_hot(*action as usize, 4)
    }
}

pub(crate) fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}
