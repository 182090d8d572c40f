//! Learned approximations of the expert's Q-function.

use std::collections::HashSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::{ForestConfig, RandomForest};
use super::nn::{Adam, Mlp};
use super::SolverError;
use crate::mdp::{
    derive_seed, exact_q_dp, rollout_from, sample_rollout, Featurizer, Mdp, Mixture, Policy, QFunction, QTable,
    UniformPolicy,
};

pub const MIN_ROLLOUTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QModelKind {
    Forest,
    Network,
    ExactTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkFitConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
}

impl Default for NetworkFitConfig {
    fn default() -> Self {
        Self { hidden: 50, epochs: 60, batch: 64, learning_rate: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QFitConfig {
    pub kind: QModelKind,
    /// Behaviour rollouts used to collect training states.
    pub rollouts: usize,
    /// Exploration rates mixed into the expert for behaviour rollouts when no
    /// behaviour policies are supplied.
    pub exploration: Vec<f64>,
    /// Random legal actions labelled per visited state, besides the expert's.
    pub random_actions: usize,
    pub forest: ForestConfig,
    pub network: NetworkFitConfig,
    pub max_table_states: usize,
    pub seed: u64,
}

impl Default for QFitConfig {
    fn default() -> Self {
        Self {
            kind: QModelKind::Forest,
            rollouts: 400,
            exploration: vec![0.0, 0.1, 0.3, 0.6, 1.0],
            random_actions: 3,
            forest: ForestConfig::default(),
            network: NetworkFitConfig::default(),
            max_table_states: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Regressor {
    Forest(RandomForest),
    Network { net: Mlp, y_mean: f64, y_scale: f64 },
}

/// A regressor over `state features ++ action features`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QModel {
    pub kind: QModelKind,
    pub state_dim: usize,
    pub action_dim: usize,
    pub samples: usize,
    regressor: Regressor,
}

impl QModel {
    pub fn predict_features(&self, x: &[f64]) -> f64 {
        match &self.regressor {
            Regressor::Forest(f) => f.predict(x),
            Regressor::Network { net, y_mean, y_scale } => net.predict(x) * y_scale + y_mean,
        }
    }

    pub fn fits<F: Featurizer>(&self, featurizer: &F) -> bool {
        self.state_dim == featurizer.state_dim() && self.action_dim == featurizer.action_dim()
    }
}

impl<M> QFunction<M> for QModel
where
    M: Featurizer,
{
    fn q(&self, mdp: &M, state: &M::State, action: &M::Action, _: u32) -> f64 {
        self.predict_features(&mdp.joint_features(state, action))
    }
}

/// Either a learned model or an exact table for small MDPs.
#[derive(Debug, Clone)]
pub enum FittedQ<M: Mdp> {
    Model(QModel),
    Table(QTable<M::State, M::Action>),
}

impl<M> QFunction<M> for FittedQ<M>
where
    M: Featurizer,
{
    fn q(&self, mdp: &M, state: &M::State, action: &M::Action, remaining: u32) -> f64 {
        match self {
            FittedQ::Model(m) => m.q(mdp, state, action, remaining),
            FittedQ::Table(t) => QFunction::<M>::q(t, mdp, state, action, remaining),
        }
    }
}

/// A labelled training example: features and the observed return-to-go.
#[derive(Debug, Clone, PartialEq)]
pub struct QSample {
    pub features: Vec<f64>,
    pub target: f64,
}

/// Collects (state, action, return) examples.
///
/// States come from behaviour rollouts. At each state the expert's action
/// and a few random legal actions are tried, and the expert plays on from the
/// successor, so targets are Monte Carlo estimates of the expert's Q-values
/// (exact when the expert and the dynamics are deterministic).
pub fn collect_q_samples<M, P>(
    mdp: &M,
    expert: &P,
    behaviours: &[&dyn Policy<M>],
    config: &QFitConfig,
) -> Result<Vec<QSample>, SolverError>
where
    M: Featurizer,
    P: Policy<M>,
{
    if config.rollouts < MIN_ROLLOUTS {
        return Err(SolverError::InvalidConfig(format!(
            "need at least {MIN_ROLLOUTS} rollouts, got {}",
            config.rollouts
        )));
    }
    let mixes: Vec<Mixture<&P, UniformPolicy>> =
        config.exploration.iter().map(|&eps| Mixture { first: expert, second: UniformPolicy, weight: eps }).collect();
    let mut pool: Vec<&dyn Policy<M>> = behaviours.to_vec();
    if pool.is_empty() {
        pool.extend(mixes.iter().map(|m| m as &dyn Policy<M>));
    }
    if pool.is_empty() {
        pool.push(expert);
    }

    let per_rollout = (0..config.rollouts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[i as u64]));
            let behaviour = pool[i % pool.len()];
            let r = sample_rollout(mdp, behaviour, &mut rng)?;
            let mut out = Vec::new();
            for (t, step) in r.steps.iter().enumerate() {
                let legal = mdp.legal_actions(&step.state);
                let mut tried = vec![expert.act(mdp, &step.state, &mut rng)];
                for _ in 0..config.random_actions.min(legal.len()) {
                    tried.push(legal[rng.random_range(0..legal.len())].clone());
                }
                tried.sort_by_key(|a| legal.iter().position(|b| b == a));
                tried.dedup();
                for a in tried {
                    let target = q_by_rollout(mdp, expert, &step.state, &a, t as u32, &mut rng)?;
                    out.push((step.state.clone(), a, t, target));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, SolverError>>()?;

    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for (s, a, t, target) in per_rollout.into_iter().flatten() {
        if seen.insert((s.clone(), a.clone(), t)) {
            samples.push(QSample { features: mdp.joint_features(&s, &a), target });
        }
    }
    Ok(samples)
}

fn q_by_rollout<M: Mdp, P: Policy<M>>(
    mdp: &M,
    expert: &P,
    state: &M::State,
    action: &M::Action,
    t: u32,
    rng: &mut dyn RngCore,
) -> Result<f64, SolverError> {
    let (next, r) = crate::mdp::step(mdp, state, action, rng)?;
    let tail = rollout_from(mdp, expert, next, t + 1, rng)?;
    Ok(r + tail.total_return)
}

/// Fits a Q-model for `expert`. `behaviours` choose which states get
/// labelled; when empty, exploration-rate mixtures of the expert are used.
pub fn fit_q_model<M, P>(
    mdp: &M,
    expert: &P,
    behaviours: &[&dyn Policy<M>],
    config: &QFitConfig,
) -> Result<FittedQ<M>, SolverError>
where
    M: Featurizer,
    P: Policy<M>,
{
    if config.kind == QModelKind::ExactTable {
        return Ok(FittedQ::Table(exact_q_dp(mdp, config.max_table_states)?));
    }
    let samples = collect_q_samples(mdp, expert, behaviours, config)?;
    Ok(FittedQ::Model(fit_regressor(mdp, &samples, config)?))
}

pub fn fit_regressor<F: Featurizer>(
    featurizer: &F,
    samples: &[QSample],
    config: &QFitConfig,
) -> Result<QModel, SolverError> {
    if samples.is_empty() {
        return Err(SolverError::InvalidConfig("no training samples".into()));
    }
    let x: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.target).collect();
    let regressor = match config.kind {
        QModelKind::Forest => {
            let cfg = ForestConfig { seed: derive_seed(config.seed, &[7]), ..config.forest.clone() };
            Regressor::Forest(RandomForest::fit(&x, &y, &cfg))
        }
        QModelKind::Network => fit_network(&x, &y, &config.network, config.seed)?,
        QModelKind::ExactTable => {
            return Err(SolverError::InvalidConfig("exact tables are not regressors".into()));
        }
    };
    Ok(QModel {
        kind: config.kind,
        state_dim: featurizer.state_dim(),
        action_dim: featurizer.action_dim(),
        samples: samples.len(),
        regressor,
    })
}

fn fit_network(x: &[Vec<f64>], y: &[f64], cfg: &NetworkFitConfig, seed: u64) -> Result<Regressor, SolverError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[11]));
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let y_scale = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-9);
    let mut net = Mlp::new(x[0].len(), cfg.hidden.max(1), &mut rng);
    let mut opt = Adam::new(net.num_params(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let batch = cfg.batch.max(1);
    for epoch in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        for chunk in order.chunks(batch) {
            let mut grad = vec![0.0; net.num_params()];
            for &i in chunk {
                let act = net.forward(&x[i]);
                let err = act.output - (y[i] - y_mean) / y_scale;
                net.accumulate_grad(&x[i], &act, -err / chunk.len() as f64, &mut grad);
            }
            let delta = opt.step(&grad);
            net.apply_update(&delta);
        }
        if !net.is_finite() {
            return Err(SolverError::Diverged { step: epoch });
        }
    }
    Ok(Regressor::Network { net, y_mean, y_scale })
}
