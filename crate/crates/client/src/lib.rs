//! Async client for the sbpm HTTP service.

use reqwest::header::{ACCEPT, CONTENT_TYPE};
use reqwest::{RequestBuilder, Response, StatusCode};
use sbpm_core::api::{
    CreateInstance, ErrorBody, InjectMessage, Injected, InstanceCreated, NotationAnalysis, StepRequest, StepResult, Stored,
};
use sbpm_core::check::ValidationReport;
use sbpm_core::engine::{Payload, SchedulerConfig, Status, Trace};
use sbpm_core::explore::{ExplorationBounds, ExplorationResult};
use sbpm_core::notation::NotationDefinition;
use sbpm_core::persistence::{Document, PersistError};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    /// The service answered with its error body.
    #[error("{status}: {} ({})", .body.code, .body.message)]
    Api { status: StatusCode, body: ErrorBody },
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ClientError {
    /// The service error code, when there is one.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.code),
            _ => None,
        }
    }
}

impl From<PersistError> for ClientError {
    fn from(e: PersistError) -> Self {
        ClientError::Decode(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    /// `base` is the service root, for example `http://127.0.0.1:7878`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            http: reqwest::Client::new(),
            base: base.into().trim_end_matches('/').to_string(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn send(req: RequestBuilder) -> Result<Response> {
        let resp = req.send().await?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status();
        let text = resp.text().await?;
        let body = serde_json::from_str(&text).unwrap_or_else(|_| ErrorBody::new("Http", text));
        Err(ClientError::Api { status, body })
    }

    async fn json<T: DeserializeOwned>(req: RequestBuilder) -> Result<T> {
        Ok(Self::send(req).await?.json().await?)
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Self::json(self.http.post(self.url(path)).json(body)).await
    }

    pub async fn health(&self) -> Result<()> {
        Self::send(self.http.get(self.url("/health"))).await.map(drop)
    }

    /// Stores a model document given as canonical XML.
    pub async fn put_model_xml(&self, id: &str, xml: impl Into<String>) -> Result<Stored> {
        self.put_raw(&format!("/models/{id}"), "application/xml", xml.into()).await
    }

    /// Stores a model document in its JSON rendering.
    pub async fn put_model_json(&self, id: &str, json: impl Into<String>) -> Result<Stored> {
        self.put_raw(&format!("/models/{id}"), "application/json", json.into()).await
    }

    async fn put_raw(&self, path: &str, content_type: &str, body: String) -> Result<Stored> {
        Self::json(self.http.put(self.url(path)).header(CONTENT_TYPE, content_type).body(body)).await
    }

    pub async fn get_model_xml(&self, id: &str) -> Result<String> {
        let req = self.http.get(self.url(&format!("/models/{id}"))).header(ACCEPT, "application/xml");
        Ok(Self::send(req).await?.text().await?)
    }

    /// Fetches the JSON rendering and decodes it.
    pub async fn get_model(&self, id: &str) -> Result<Document> {
        let req = self.http.get(self.url(&format!("/models/{id}"))).header(ACCEPT, "application/json");
        let text = Self::send(req).await?.text().await?;
        Ok(Document::from_json(&text)?)
    }

    pub async fn list_models(&self) -> Result<Vec<String>> {
        Self::json(self.http.get(self.url("/models"))).await
    }

    pub async fn validate(&self, id: &str) -> Result<ValidationReport> {
        Self::json(self.http.post(self.url(&format!("/models/{id}/validate")))).await
    }

    pub async fn explore(&self, id: &str, bounds: &ExplorationBounds) -> Result<ExplorationResult> {
        self.post(&format!("/models/{id}/explore"), bounds).await
    }

    pub async fn create_instance(&self, model_id: &str, config: SchedulerConfig) -> Result<InstanceCreated> {
        let req = CreateInstance {
            model_id: model_id.to_string(),
            config,
        };
        self.post("/instances", &req).await
    }

    pub async fn step(&self, instance: &str, count: u64) -> Result<StepResult> {
        self.post(&format!("/instances/{instance}/step"), &StepRequest { count }).await
    }

    /// Steps in batches of `batch` until the instance stops running.
    pub async fn run_to_end(&self, instance: &str, batch: u64) -> Result<Status> {
        loop {
            let r = self.step(instance, batch.max(1)).await?;
            if r.status != Status::Running {
                return Ok(r.status);
            }
        }
    }

    pub async fn inject(&self, instance: &str, from: &str, to: &str, message: &str, payload: Payload) -> Result<Injected> {
        let req = InjectMessage {
            from: from.to_string(),
            to: to.to_string(),
            message: message.to_string(),
            payload,
        };
        self.post(&format!("/instances/{instance}/messages"), &req).await
    }

    pub async fn trace(&self, instance: &str) -> Result<Trace> {
        let req = self
            .http
            .get(self.url(&format!("/instances/{instance}/trace")))
            .header(ACCEPT, "application/json");
        let text = Self::send(req).await?.text().await?;
        match Document::from_json(&text)? {
            Document::Trace(t) => Ok(t),
            other => Err(ClientError::Decode(format!("expected a trace, got a {}", other.kind().as_str()))),
        }
    }

    pub async fn trace_xml(&self, instance: &str) -> Result<String> {
        let req = self.http.get(self.url(&format!("/instances/{instance}/trace")));
        Ok(Self::send(req).await?.text().await?)
    }

    pub async fn delete_instance(&self, instance: &str) -> Result<()> {
        Self::send(self.http.delete(self.url(&format!("/instances/{instance}")))).await.map(drop)
    }

    pub async fn put_notation_xml(&self, id: &str, xml: impl Into<String>) -> Result<Stored> {
        self.put_raw(&format!("/notations/{id}"), "application/xml", xml.into()).await
    }

    pub async fn get_notation(&self, id: &str) -> Result<NotationDefinition> {
        let req = self.http.get(self.url(&format!("/notations/{id}"))).header(ACCEPT, "application/json");
        let text = Self::send(req).await?.text().await?;
        match Document::from_json(&text)? {
            Document::Notation(n) => Ok(n),
            other => Err(ClientError::Decode(format!("expected a notation, got a {}", other.kind().as_str()))),
        }
    }

    pub async fn analyze_notation(&self, id: &str) -> Result<NotationAnalysis> {
        Self::json(self.http.post(self.url(&format!("/notations/{id}/analyze")))).await
    }
}
