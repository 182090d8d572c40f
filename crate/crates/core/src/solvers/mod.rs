//! Experts: an exact search for the kitchen, a policy-gradient learner, and
//! the Q-models that tip inference scores against.

mod artifact;
mod forest;
mod nn;
mod oracle;
mod pg;
mod qmodel;

use thiserror::Error;

use crate::mdp::MdpError;

pub use artifact::{Artifact, ArtifactError, Payload, ARTIFACT_VERSION};
pub use forest::{ForestConfig, RandomForest};
pub use nn::{Activations, Adam, Mlp};
pub use oracle::{solve_oracle, Oracle, OracleSolution, PolicyValueQ};
pub use pg::{exact_objective, train_pg, CurvePoint, NeuralPolicy, PgConfig, PgResult};
pub use qmodel::{
    collect_q_samples, fit_q_model, fit_regressor, FittedQ, NetworkFitConfig, QFitConfig, QModel, QModelKind, QSample,
    MIN_ROLLOUTS,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("search budget of {limit} states exhausted")]
    Budget { limit: usize },
    #[error("training diverged at step {step}")]
    Diverged { step: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}
