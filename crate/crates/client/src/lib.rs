//! Thin async client for the kitchen session service.
//!
//! ```no_run
//! # async fn demo() -> Result<(), kitchen_client::ClientError> {
//! let client = kitchen_client::Client::new("http://127.0.0.1:8080")?;
//! let view = client.create_session(&Default::default()).await?;
//! let view = client.commit(view.session_id).await?;
//! assert_eq!(view.tick, 1);
//! # Ok(())
//! # }
//! ```

use kitchen_api::{
    CreateSession, ErrorBody, FinishResponse, SessionView, SubmitAssignments, TipResponse, WireAssignment,
};
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use uuid::Uuid;

pub use kitchen_api as api;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid base url {0:?}")]
    BaseUrl(String),
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service answered with an error body.
    #[error("{status}: {} ({})", .body.message, .body.code)]
    Api { status: StatusCode, body: ErrorBody },
    #[error("unexpected {status} response: {text}")]
    Unexpected { status: StatusCode, text: String },
}

impl ClientError {
    /// The service's error code, when it sent one.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.code),
            _ => None,
        }
    }

    pub fn reason(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => body.reason.as_deref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Result<Self, ClientError> {
        let base = base.into().trim_end_matches('/').to_string();
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(ClientError::BaseUrl(base));
        }
        Ok(Self { http: reqwest::Client::new(), base })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn send<B: Serialize, T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        body: Option<&B>,
    ) -> Result<T, ClientError> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await?;
        let status = resp.status();
        let bytes = resp.bytes().await?;
        if status.is_success() {
            return serde_json::from_slice(&bytes).map_err(|e| ClientError::Unexpected {
                status,
                text: format!("{e}: {}", String::from_utf8_lossy(&bytes)),
            });
        }
        match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(body) => Err(ClientError::Api { status, body }),
            Err(_) => Err(ClientError::Unexpected { status, text: String::from_utf8_lossy(&bytes).into_owned() }),
        }
    }

    pub async fn health(&self) -> Result<serde_json::Value, ClientError> {
        self.send::<(), _>(Method::GET, "/health", None).await
    }

    pub async fn create_session(&self, req: &CreateSession) -> Result<SessionView, ClientError> {
        self.send(Method::POST, "/sessions", Some(req)).await
    }

    pub async fn session(&self, id: Uuid) -> Result<SessionView, ClientError> {
        self.send::<(), _>(Method::GET, &format!("/sessions/{id}"), None).await
    }

    /// Buffers assignments for the next commit. With `replace`, earlier
    /// buffered assignments are dropped first.
    pub async fn assign(
        &self,
        id: Uuid,
        assignments: Vec<WireAssignment>,
        replace: bool,
    ) -> Result<SessionView, ClientError> {
        let body = SubmitAssignments { assignments, replace };
        self.send(Method::POST, &format!("/sessions/{id}/assignments"), Some(&body)).await
    }

    pub async fn commit(&self, id: Uuid) -> Result<SessionView, ClientError> {
        self.send::<(), _>(Method::POST, &format!("/sessions/{id}/commit"), None).await
    }

    pub async fn tip(&self, id: Uuid) -> Result<TipResponse, ClientError> {
        self.send::<(), _>(Method::GET, &format!("/sessions/{id}/tip"), None).await
    }

    pub async fn finish(&self, id: Uuid) -> Result<FinishResponse, ClientError> {
        self.send::<(), _>(Method::POST, &format!("/sessions/{id}/finish"), None).await
    }
}
