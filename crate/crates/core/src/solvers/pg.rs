//! REINFORCE with a learned softmax policy over legal actions.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nn::{Adam, Mlp};
use super::SolverError;
use crate::mdp::{derive_seed, estimate_return, sample_weighted, Featurizer, Policy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgConfig {
    pub hidden: usize,
    pub steps: usize,
    pub learning_rate: f64,
    /// Episodes per gradient step.
    pub batch: usize,
    /// Greedy evaluation cadence in gradient steps.
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
}

impl Default for PgConfig {
    fn default() -> Self {
        Self { hidden: 50, steps: 10_000, learning_rate: 1e-3, batch: 8, eval_every: 100, eval_episodes: 4, seed: 0 }
    }
}

/// Softmax over legal actions with logits `net(state features ++ action features)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralPolicy {
    pub net: Mlp,
    /// Act by argmax instead of sampling.
    pub greedy: bool,
}

impl NeuralPolicy {
    pub fn greedy(&self) -> Self {
        Self { net: self.net.clone(), greedy: true }
    }

    fn logits<M>(&self, mdp: &M, state: &M::State, actions: &[M::Action]) -> (Vec<Vec<f64>>, Vec<f64>)
    where
        M: Featurizer,
    {
        let sf = mdp.state_features(state);
        let feats: Vec<Vec<f64>> = actions
            .iter()
            .map(|a| {
                let mut x = sf.clone();
                x.extend(mdp.action_features(state, a));
                x
            })
            .collect();
        let logits = feats.iter().map(|x| self.net.predict(x)).collect();
        (feats, logits)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl<M> Policy<M> for NeuralPolicy
where
    M: Featurizer,
{
    fn distribution(&self, mdp: &M, state: &M::State) -> Vec<(M::Action, f64)> {
        let actions = mdp.legal_actions(state);
        if actions.len() == 1 {
            return actions.into_iter().map(|a| (a, 1.0)).collect();
        }
        let (_, logits) = self.logits(mdp, state, &actions);
        if self.greedy {
            let best = argmax(&logits);
            return vec![(actions[best].clone(), 1.0)];
        }
        actions.into_iter().zip(softmax(&logits)).collect()
    }

    fn act(&self, mdp: &M, state: &M::State, rng: &mut dyn RngCore) -> M::Action {
        sample_weighted(self.distribution(mdp, state), rng)
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Adds `weight * grad log pi(chosen)` for a softmax over `feats`.
fn add_score_grad(net: &Mlp, feats: &[Vec<f64>], probs: &[f64], chosen: usize, weight: f64, grad: &mut [f64]) {
    for (i, x) in feats.iter().enumerate() {
        let coeff = weight * (f64::from(u8::from(i == chosen)) - probs[i]);
        if coeff != 0.0 {
            let act = net.forward(x);
            net.accumulate_grad(x, &act, coeff, grad);
        }
    }
}

struct Decision {
    feats: Vec<Vec<f64>>,
    probs: Vec<f64>,
    chosen: usize,
    t: usize,
}

struct Episode {
    decisions: Vec<Decision>,
    /// Return-to-go from each step.
    to_go: Vec<f64>,
}

fn run_episode<M>(mdp: &M, policy: &NeuralPolicy, rng: &mut dyn RngCore) -> Result<Episode, SolverError>
where
    M: Featurizer,
{
    let mut state = mdp.initial_state();
    let mut decisions = Vec::new();
    let mut rewards = Vec::new();
    let mut t = 0;
    while (t as u32) < mdp.horizon() && !mdp.is_terminal(&state) {
        let actions = mdp.legal_actions(&state);
        let chosen = if actions.len() == 1 {
            0
        } else {
            let (feats, logits) = policy.logits(mdp, &state, &actions);
            let probs = softmax(&logits);
            let chosen = sample_weighted(probs.iter().copied().enumerate().collect(), rng);
            decisions.push(Decision { feats, probs, chosen, t });
            chosen
        };
        let (next, r) = crate::mdp::step(mdp, &state, &actions[chosen], rng)?;
        rewards.push(r);
        state = next;
        t += 1;
    }
    let mut to_go = vec![0.0; rewards.len() + 1];
    for i in (0..rewards.len()).rev() {
        to_go[i] = rewards[i] + to_go[i + 1];
    }
    Ok(Episode { decisions, to_go })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub greedy_return: f64,
}

#[derive(Debug, Clone)]
pub struct PgResult {
    /// Greedy policy from the best evaluation.
    pub policy: NeuralPolicy,
    pub best_return: f64,
    pub curve: Vec<CurvePoint>,
}

/// Trains a softmax policy with REINFORCE and a per-timestep batch-mean baseline.
pub fn train_pg<M>(mdp: &M, config: &PgConfig) -> Result<PgResult, SolverError>
where
    M: Featurizer,
{
    if config.batch == 0 || config.hidden == 0 || config.eval_every == 0 || config.learning_rate <= 0.0 {
        return Err(SolverError::InvalidConfig(format!("{config:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let inputs = mdp.state_dim() + mdp.action_dim();
    let mut policy = NeuralPolicy { net: Mlp::new(inputs, config.hidden, &mut rng), greedy: false };
    let mut opt = Adam::new(policy.net.num_params(), config.learning_rate);
    let mut curve = Vec::new();
    let mut best = (f64::NEG_INFINITY, policy.greedy());

    for step in 0..=config.steps {
        if step % config.eval_every == 0 || step == config.steps {
            let greedy = policy.greedy();
            let mut eval_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[1, step as u64]));
            let est = estimate_return(mdp, &greedy, config.eval_episodes.max(1), &mut eval_rng)?;
            tracing::debug!(step, greedy_return = est.mean, "policy gradient evaluation");
            curve.push(CurvePoint { step, greedy_return: est.mean });
            if est.mean > best.0 {
                best = (est.mean, greedy);
            }
        }
        if step == config.steps {
            break;
        }
        let seeds: Vec<u64> = (0..config.batch).map(|_| rng.next_u64()).collect();
        let episodes = seeds
            .par_iter()
            .map(|&s| run_episode(mdp, &policy, &mut ChaCha8Rng::seed_from_u64(s)))
            .collect::<Result<Vec<_>, _>>()?;
        let horizon = mdp.horizon() as usize;
        let mut base_sum = vec![0.0; horizon + 1];
        let mut base_n = vec![0.0; horizon + 1];
        for ep in &episodes {
            for (t, g) in ep.to_go.iter().enumerate() {
                base_sum[t] += g;
                base_n[t] += 1.0;
            }
        }
        let n_params = policy.net.num_params();
        let grad = episodes
            .par_iter()
            .map(|ep| {
                let mut g = vec![0.0; n_params];
                for d in &ep.decisions {
                    let adv = ep.to_go[d.t] - base_sum[d.t] / base_n[d.t];
                    if adv != 0.0 {
                        add_score_grad(&policy.net, &d.feats, &d.probs, d.chosen, adv, &mut g);
                    }
                }
                g
            })
            .reduce(
                || vec![0.0; n_params],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        let scale = 1.0 / config.batch as f64;
        let grad: Vec<f64> = grad.into_iter().map(|g| g * scale).collect();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(SolverError::Diverged { step });
        }
        let delta = opt.step(&grad);
        policy.net.apply_update(&delta);
        if !policy.net.is_finite() {
            return Err(SolverError::Diverged { step });
        }
    }
    Ok(PgResult { policy: best.1, best_return: best.0, curve })
}

/// Expected return and its exact gradient, by enumerating every trajectory.
/// Only feasible for tiny MDPs.
pub fn exact_objective<M>(mdp: &M, policy: &NeuralPolicy) -> (f64, Vec<f64>)
where
    M: Featurizer,
{
    let mut grad = vec![0.0; policy.net.num_params()];
    let mut score = vec![0.0; policy.net.num_params()];
    let j = enumerate(mdp, policy, &mdp.initial_state(), 0, 1.0, 0.0, &mut score, &mut grad);
    (j, grad)
}

#[allow(clippy::too_many_arguments)]
fn enumerate<M>(
    mdp: &M,
    policy: &NeuralPolicy,
    state: &M::State,
    t: u32,
    prob: f64,
    ret: f64,
    score: &mut Vec<f64>,
    grad: &mut [f64],
) -> f64
where
    M: Featurizer,
{
    if t >= mdp.horizon() || mdp.is_terminal(state) {
        for (g, s) in grad.iter_mut().zip(score.iter()) {
            *g += prob * ret * s;
        }
        return prob * ret;
    }
    let actions = mdp.legal_actions(state);
    let (feats, logits) = policy.logits(mdp, state, &actions);
    let probs = softmax(&logits);
    let mut total = 0.0;
    for (i, a) in actions.iter().enumerate() {
        let saved = score.clone();
        add_score_grad(&policy.net, &feats, &probs, i, 1.0, score);
        let r = mdp.reward(state, a);
        for (next, p) in mdp.transitions(state, a) {
            total += enumerate(mdp, policy, &next, t + 1, prob * probs[i] * p, ret + r, score, grad);
        }
        *score = saved;
    }
    total
}
