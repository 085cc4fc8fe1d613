//! Request and response bodies of the HTTP interface, shared by the service
//! and its client.

use serde::{Deserialize, Serialize};

use crate::engine::{Payload, SchedulerConfig, Status, TraceEvent};
use crate::notation::{AnomalyReport, Lint};
use crate::violation::Violation;

/// Every non-2xx response carries this body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    /// Violation list for `SemanticViolation` and `ModelInvalid`, null
    /// otherwise.
    #[serde(default)]
    pub details: serde_json::Value,
}

impl ErrorBody {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        ErrorBody {
            code: code.into(),
            message: message.into(),
            details: serde_json::Value::Null,
        }
    }

    pub fn with_violations(mut self, v: &[Violation]) -> Self {
        self.details = serde_json::to_value(v).unwrap_or_default();
        self
    }

    /// The violation list carried in `details`, if any.
    pub fn violations(&self) -> Option<Vec<Violation>> {
        serde_json::from_value(self.details.clone()).ok()
    }
}

/// Response to a document PUT.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stored {
    pub id: String,
    pub created: bool,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub updated_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateInstance {
    pub model_id: String,
    #[serde(default)]
    pub config: SchedulerConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceCreated {
    pub instance_id: String,
    pub model_id: String,
    pub status: Status,
    pub agents: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRequest {
    #[serde(default = "one")]
    pub count: u64,
}

fn one() -> u64 {
    1
}

impl Default for StepRequest {
    fn default() -> Self {
        StepRequest { count: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepResult {
    pub events: Vec<TraceEvent>,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectMessage {
    /// The external subject sending the message.
    pub from: String,
    pub to: String,
    pub message: String,
    #[serde(default)]
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injected {
    pub status: Status,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotationAnalysis {
    pub report: AnomalyReport,
    pub lints: Vec<Lint>,
}

impl NotationAnalysis {
    /// Lints are advisory; only mapping anomalies make a notation unclean.
    pub fn is_clean(&self) -> bool {
        self.report.is_clean()
    }
}
