//! Versioned JSON files for fitted Q-models and trained policies.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{NeuralPolicy, QModel};
use crate::kitchen::ScenarioKind;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} is not a model file: {message}")]
    Format { path: String, message: String },
    #[error("{path} has format version {found}; this build reads version {ARTIFACT_VERSION}")]
    Version { path: String, found: u32 },
    #[error("{path} holds a {found}, expected a {expected}")]
    Kind { path: String, expected: &'static str, found: &'static str },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "artifact", rename_all = "snake_case")]
pub enum Payload {
    QModel(QModel),
    Policy(NeuralPolicy),
}

impl Payload {
    fn name(&self) -> &'static str {
        match self {
            Payload::QModel(_) => "q_model",
            Payload::Policy(_) => "policy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub version: u32,
    pub scenario: ScenarioKind,
    #[serde(flatten)]
    pub payload: Payload,
}

impl Artifact {
    pub fn new(scenario: ScenarioKind, payload: Payload) -> Self {
        Self { version: ARTIFACT_VERSION, scenario, payload }
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        let p = path.display().to_string();
        let json = serde_json::to_string(self)
            .map_err(|e| ArtifactError::Format { path: p.clone(), message: e.to_string() })?;
        fs::write(path, json).map_err(|source| ArtifactError::Io { path: p, source })
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        let p = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| ArtifactError::Io { path: p.clone(), source })?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| ArtifactError::Format { path: p.clone(), message: e.to_string() })?;
        let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != ARTIFACT_VERSION {
            return Err(ArtifactError::Version { path: p, found });
        }
        serde_json::from_value(value).map_err(|e| ArtifactError::Format { path: p, message: e.to_string() })
    }

    pub fn load_q_model(path: &Path) -> Result<(ScenarioKind, QModel), ArtifactError> {
        let a = Self::load(path)?;
        match a.payload {
            Payload::QModel(m) => Ok((a.scenario, m)),
            other => {
                Err(ArtifactError::Kind { path: path.display().to_string(), expected: "q_model", found: other.name() })
            }
        }
    }

    pub fn load_policy(path: &Path) -> Result<(ScenarioKind, NeuralPolicy), ArtifactError> {
        let a = Self::load(path)?;
        match a.payload {
            Payload::Policy(p) => Ok((a.scenario, p)),
            other => {
                Err(ArtifactError::Kind { path: path.display().to_string(), expected: "policy", found: other.name() })
            }
        }
    }
}
