use rand::{Rng, RngCore};

use super::Tip;
use crate::mdp::{normalize, Mdp, Policy};

/// `base` with `tip` applied wherever the tip is active.
#[derive(Debug, Clone)]
pub struct ComposedPolicy<P, T> {
    pub base: P,
    pub tip: T,
}

impl<M: Mdp, P: Policy<M>, T: Tip<M>> Policy<M> for ComposedPolicy<P, T> {
    fn distribution(&self, mdp: &M, state: &M::State) -> Vec<(M::Action, f64)> {
        self.tip.compose(mdp, state, self.base.distribution(mdp, state))
    }

    fn act(&self, mdp: &M, state: &M::State, rng: &mut dyn RngCore) -> M::Action {
        if !self.tip.is_active(mdp, state) {
            return self.base.act(mdp, state, rng);
        }
        crate::mdp::sample_weighted(self.distribution(mdp, state), rng)
    }
}

/// Follows the tip with probability `compliance` in states where it is
/// active and acts like `base` otherwise.
#[derive(Debug, Clone)]
pub struct PartialCompliance<P, T> {
    pub base: P,
    pub tip: T,
    pub compliance: f64,
}

impl<M: Mdp, P: Policy<M>, T: Tip<M>> Policy<M> for PartialCompliance<P, T> {
    fn distribution(&self, mdp: &M, state: &M::State) -> Vec<(M::Action, f64)> {
        let base = self.base.distribution(mdp, state);
        let c = self.compliance.clamp(0.0, 1.0);
        if c == 0.0 || !self.tip.is_active(mdp, state) {
            return base;
        }
        let composed = self.tip.compose(mdp, state, base.clone());
        let mut mix: Vec<_> = composed.into_iter().map(|(a, p)| (a, p * c)).collect();
        mix.extend(base.into_iter().map(|(a, p)| (a, p * (1.0 - c))));
        normalize(mix)
    }

    fn act(&self, mdp: &M, state: &M::State, rng: &mut dyn RngCore) -> M::Action {
        let c = self.compliance.clamp(0.0, 1.0);
        if c == 0.0 || !self.tip.is_active(mdp, state) {
            return self.base.act(mdp, state, rng);
        }
        let follow = c == 1.0 || rng.random::<f64>() < c;
        if follow {
            crate::mdp::sample_weighted(self.tip.compose(mdp, state, self.base.distribution(mdp, state)), rng)
        } else {
            self.base.act(mdp, state, rng)
        }
    }
}
