//! Finite-horizon MDPs, policies, and rollouts.
//!
//! Everything here is generic over the [`Mdp`] trait so the same tooling runs
//! on the kitchen game and on the small hand-built models in [`toy`].

mod dp;
pub mod toy;

use std::fmt::Debug;
use std::hash::Hash;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use dp::{exact_q_dp, QTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("illegal action {action} in state {state}")]
    IllegalAction { state: String, action: String },
    #[error("state {0} is terminal")]
    TerminalState(String),
    #[error("state space exceeds {limit} states")]
    StateSpaceTooLarge { limit: usize },
    #[error("rollout is inconsistent with the model at step {step}: {reason}")]
    InconsistentRollout { step: usize, reason: String },
}

/// A finite-horizon, undiscounted MDP with enumerable actions and transitions.
pub trait Mdp: Sync {
    type State: Clone + Eq + Hash + Debug + Send + Sync;
    type Action: Clone + Eq + Hash + Debug + Send + Sync;

    fn initial_state(&self) -> Self::State;

    /// Maximum number of steps in an episode.
    fn horizon(&self) -> u32;

    fn is_terminal(&self, state: &Self::State) -> bool;

    /// Legal actions in `state`. Empty only for terminal states.
    fn legal_actions(&self, state: &Self::State) -> Vec<Self::Action>;

    fn reward(&self, state: &Self::State, action: &Self::Action) -> f64;

    /// Successor distribution. Probabilities are positive and sum to one.
    fn transitions(&self, state: &Self::State, action: &Self::Action) -> Vec<(Self::State, f64)>;

    fn is_legal(&self, state: &Self::State, action: &Self::Action) -> bool {
        self.legal_actions(state).contains(action)
    }
}

/// Maps states and actions to fixed-length numeric vectors.
pub trait Featurizer: Mdp {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn state_features(&self, state: &Self::State) -> Vec<f64>;
    fn action_features(&self, state: &Self::State, action: &Self::Action) -> Vec<f64>;

    fn joint_features(&self, state: &Self::State, action: &Self::Action) -> Vec<f64> {
        let mut x = self.state_features(state);
        x.extend(self.action_features(state, action));
        x
    }
}

/// A (possibly stochastic) Markov policy.
pub trait Policy<M: Mdp>: Send + Sync {
    /// Action distribution in a non-terminal state. Entries have positive mass
    /// summing to one and only name legal actions.
    fn distribution(&self, mdp: &M, state: &M::State) -> Vec<(M::Action, f64)>;

    /// Draws an action. Deterministic policies never touch `rng`.
    fn act(&self, mdp: &M, state: &M::State, rng: &mut dyn RngCore) -> M::Action {
        sample_weighted(self.distribution(mdp, state), rng)
    }
}

impl<M: Mdp, P: Policy<M> + ?Sized> Policy<M> for &P {
    fn distribution(&self, mdp: &M, state: &M::State) -> Vec<(M::Action, f64)> {
        (**self).distribution(mdp, state)
    }
    fn act(&self, mdp: &M, state: &M::State, rng: &mut dyn RngCore) -> M::Action {
        (**self).act(mdp, state, rng)
    }
}

impl<M: Mdp, P: Policy<M> + ?Sized> Policy<M> for Box<P> {
    fn distribution(&self, mdp: &M, state: &M::State) -> Vec<(M::Action, f64)> {
        (**self).distribution(mdp, state)
    }
    fn act(&self, mdp: &M, state: &M::State, rng: &mut dyn RngCore) -> M::Action {
        (**self).act(mdp, state, rng)
    }
}

impl<M: Mdp, P: Policy<M> + ?Sized> Policy<M> for std::sync::Arc<P> {
    fn distribution(&self, mdp: &M, state: &M::State) -> Vec<(M::Action, f64)> {
        (**self).distribution(mdp, state)
    }
    fn act(&self, mdp: &M, state: &M::State, rng: &mut dyn RngCore) -> M::Action {
        (**self).act(mdp, state, rng)
    }
}

/// Uniformly random over legal actions.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl<M: Mdp> Policy<M> for UniformPolicy {
    fn distribution(&self, mdp: &M, state: &M::State) -> Vec<(M::Action, f64)> {
        let actions = mdp.legal_actions(state);
        let p = 1.0 / actions.len() as f64;
        actions.into_iter().map(|a| (a, p)).collect()
    }
}

/// Per-decision mixture: acts like `second` with probability `weight`,
/// otherwise like `first`.
#[derive(Debug, Clone)]
pub struct Mixture<P, Q> {
    pub first: P,
    pub second: Q,
    pub weight: f64,
}

impl<M: Mdp, P: Policy<M>, Q: Policy<M>> Policy<M> for Mixture<P, Q> {
    fn distribution(&self, mdp: &M, state: &M::State) -> Vec<(M::Action, f64)> {
        let w = self.weight.clamp(0.0, 1.0);
        if w == 0.0 {
            return self.first.distribution(mdp, state);
        }
        if w == 1.0 {
            return self.second.distribution(mdp, state);
        }
        let mut d: Vec<(M::Action, f64)> =
            self.first.distribution(mdp, state).into_iter().map(|(a, p)| (a, p * (1.0 - w))).collect();
        d.extend(self.second.distribution(mdp, state).into_iter().map(|(a, p)| (a, p * w)));
        normalize(d)
    }

    fn act(&self, mdp: &M, state: &M::State, rng: &mut dyn RngCore) -> M::Action {
        let w = self.weight.clamp(0.0, 1.0);
        if w == 0.0 {
            self.first.act(mdp, state, rng)
        } else if w == 1.0 {
            self.second.act(mdp, state, rng)
        } else if rng.random::<f64>() < w {
            self.second.act(mdp, state, rng)
        } else {
            self.first.act(mdp, state, rng)
        }
    }
}

/// Samples from a weighted list. A single entry is returned without drawing.
pub fn sample_weighted<T>(mut dist: Vec<(T, f64)>, rng: &mut dyn RngCore) -> T {
    assert!(!dist.is_empty(), "cannot sample from an empty distribution");
    if dist.len() == 1 {
        return dist.pop().unwrap().0;
    }
    let total: f64 = dist.iter().map(|(_, p)| p).sum();
    let mut u = rng.random::<f64>() * total;
    let last = dist.len() - 1;
    for (i, (_, p)) in dist.iter().enumerate() {
        if u < *p || i == last {
            return dist.swap_remove(i).0;
        }
        u -= p;
    }
    unreachable!()
}

/// The most likely action, ties broken by first occurrence.
pub fn mode<A: Clone>(dist: &[(A, f64)]) -> A {
    let mut best = &dist[0];
    for entry in &dist[1..] {
        if entry.1 > best.1 {
            best = entry;
        }
    }
    best.0.clone()
}

/// Merges duplicate actions and normalizes the mass to one.
pub fn normalize<A: Eq + Hash + Clone>(dist: Vec<(A, f64)>) -> Vec<(A, f64)> {
    let mut merged: Vec<(A, f64)> = Vec::with_capacity(dist.len());
    let mut index = std::collections::HashMap::with_capacity(dist.len());
    for (a, p) in dist {
        if p <= 0.0 {
            continue;
        }
        match index.get(&a) {
            Some(&i) => {
                let entry: &mut (A, f64) = &mut merged[i];
                entry.1 += p;
            }
            None => {
                index.insert(a.clone(), merged.len());
                merged.push((a, p));
            }
        }
    }
    let total: f64 = merged.iter().map(|(_, p)| p).sum();
    for entry in &mut merged {
        entry.1 /= total;
    }
    merged
}

/// Applies one action, sampling the successor with `rng`.
pub fn step<M: Mdp>(
    mdp: &M,
    state: &M::State,
    action: &M::Action,
    rng: &mut dyn RngCore,
) -> Result<(M::State, f64), MdpError> {
    if mdp.is_terminal(state) {
        return Err(MdpError::TerminalState(format!("{state:?}")));
    }
    if !mdp.is_legal(state, action) {
        return Err(MdpError::IllegalAction { state: format!("{state:?}"), action: format!("{action:?}") });
    }
    let reward = mdp.reward(state, action);
    let next = sample_weighted(mdp.transitions(state, action), rng);
    Ok((next, reward))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step<S, A> {
    pub state: S,
    pub action: A,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout<S, A> {
    pub steps: Vec<Step<S, A>>,
    pub final_state: S,
    pub total_return: f64,
}

impl<S: Clone, A> Rollout<S, A> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Visited states including the final one.
    pub fn states(&self) -> impl Iterator<Item = &S> {
        self.steps.iter().map(|s| &s.state).chain(std::iter::once(&self.final_state))
    }

    /// Checks that every transition has positive probability under `mdp`,
    /// rewards match, and the episode ends where the model says it ends.
    pub fn verify<M>(&self, mdp: &M) -> Result<(), MdpError>
    where
        M: Mdp<State = S, Action = A>,
        S: PartialEq,
    {
        let bad = |step: usize, reason: &str| MdpError::InconsistentRollout { step, reason: reason.to_string() };
        if self.steps.len() > mdp.horizon() as usize {
            return Err(bad(self.steps.len(), "longer than the horizon"));
        }
        let mut total = 0.0;
        for (t, s) in self.steps.iter().enumerate() {
            if mdp.is_terminal(&s.state) {
                return Err(bad(t, "acted in a terminal state"));
            }
            if !mdp.is_legal(&s.state, &s.action) {
                return Err(bad(t, "illegal action"));
            }
            if (mdp.reward(&s.state, &s.action) - s.reward).abs() > 1e-9 {
                return Err(bad(t, "reward mismatch"));
            }
            let next = self.steps.get(t + 1).map_or(&self.final_state, |n| &n.state);
            if !mdp.transitions(&s.state, &s.action).iter().any(|(n, p)| n == next && *p > 0.0) {
                return Err(bad(t, "successor has zero probability"));
            }
            total += s.reward;
        }
        if !mdp.is_terminal(&self.final_state) && self.steps.len() < mdp.horizon() as usize {
            return Err(bad(self.steps.len(), "stopped before a terminal state"));
        }
        if (total - self.total_return).abs() > 1e-9 {
            return Err(bad(self.steps.len(), "return does not equal summed rewards"));
        }
        Ok(())
    }
}

/// Runs `policy` from the initial state until termination or the horizon.
pub fn sample_rollout<M: Mdp, P: Policy<M> + ?Sized>(
    mdp: &M,
    policy: &P,
    rng: &mut dyn RngCore,
) -> Result<Rollout<M::State, M::Action>, MdpError> {
    rollout_from(mdp, policy, mdp.initial_state(), 0, rng)
}

/// Runs `policy` from `state`, which is assumed to be `elapsed` steps in.
pub fn rollout_from<M: Mdp, P: Policy<M> + ?Sized>(
    mdp: &M,
    policy: &P,
    mut state: M::State,
    elapsed: u32,
    rng: &mut dyn RngCore,
) -> Result<Rollout<M::State, M::Action>, MdpError> {
    let mut steps = Vec::new();
    let mut total = 0.0;
    let mut t = elapsed;
    while t < mdp.horizon() && !mdp.is_terminal(&state) {
        let action = policy.act(mdp, &state, rng);
        let (next, reward) = step(mdp, &state, &action, rng)?;
        total += reward;
        steps.push(Step { state, action, reward });
        state = next;
        t += 1;
    }
    Ok(Rollout { steps, final_state: state, total_return: total })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl ReturnEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_error: f64::NAN, n };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, n }
    }
}

/// Monte Carlo estimate of the policy's expected return.
///
/// Each rollout gets its own child seed drawn from `rng`, so the result does
/// not depend on how rayon schedules the work.
pub fn estimate_return<M: Mdp, P: Policy<M> + ?Sized>(
    mdp: &M,
    policy: &P,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<ReturnEstimate, MdpError> {
    let seeds: Vec<u64> = (0..n).map(|_| rng.next_u64()).collect();
    let returns = seeds
        .par_iter()
        .map(|&seed| {
            let mut child = ChaCha8Rng::seed_from_u64(seed);
            sample_rollout(mdp, policy, &mut child).map(|r| r.total_return)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReturnEstimate::from_samples(&returns))
}

/// Scores state-action pairs. `remaining` is the number of steps left before
/// the horizon, which only matters for models whose states do not carry time.
pub trait QFunction<M: Mdp>: Sync {
    fn q(&self, mdp: &M, state: &M::State, action: &M::Action, remaining: u32) -> f64;
}

/// Deterministic seed derivation (splitmix64 over the parts).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = base;
    for &p in parts {
        x = splitmix(x ^ splitmix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::toy::{ChainAction, ChainMdp};
    use super::*;

    struct Always(ChainAction);

    impl Policy<ChainMdp> for Always {
        fn distribution(&self, _: &ChainMdp, _: &u8) -> Vec<(ChainAction, f64)> {
            vec![(self.0, 1.0)]
        }
    }

    #[test]
    fn step_rejects_terminal_and_illegal() {
        let mdp = ChainMdp;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(step(&mdp, &2, &ChainAction::Advance, &mut rng), Err(MdpError::TerminalState(_))));
        let mdp = toy::BanditMdp::new(vec![0.0, 1.0]);
        assert!(matches!(step(&mdp, &toy::BanditState::Start, &5, &mut rng), Err(MdpError::IllegalAction { .. })));
    }

    #[test]
    fn rollouts_are_reproducible_and_verify() {
        let mdp = ChainMdp;
        let a = sample_rollout(&mdp, &Always(ChainAction::Advance), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_rollout(&mdp, &Always(ChainAction::Advance), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        a.verify(&mdp).unwrap();
        assert!(a.len() <= mdp.horizon() as usize);
    }

    #[test]
    fn verify_catches_tampering() {
        let mdp = ChainMdp;
        let mut r = sample_rollout(&mdp, &Always(ChainAction::Wait), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        r.steps[0].reward = 3.0;
        assert!(r.verify(&mdp).is_err());
    }

    #[test]
    fn estimate_is_seed_stable() {
        let mdp = ChainMdp;
        let p = Always(ChainAction::Advance);
        let a = estimate_return(&mdp, &p, 200, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = estimate_return(&mdp, &p, 200, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n, 200);
    }

    #[test]
    fn normalize_merges_duplicates() {
        let d = normalize(vec![(1, 1.0), (2, 1.0), (1, 2.0), (3, 0.0)]);
        assert_eq!(d, vec![(1, 0.75), (2, 0.25)]);
    }

    #[test]
    fn derived_seeds_differ_by_part() {
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(5, &[2]), derive_seed(5, &[2]));
    }
}
