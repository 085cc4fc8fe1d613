//! Versioned documents for models (with optional block layout), notations
//! and traces.
//!
//! XML is canonical. Every document is wrapped in
//! `<sbpm version="1" kind="model|notation|trace">`. The element vocabulary:
//!
//! ```text
//! process(id name)
//!   message(id name)            field(key)*
//!   subject(id name kind multiplicity)
//!     behavior
//!       state(id label kind start end [target message])
//!         branch(source message)* | outcome(label)*
//!       transition(id from to kind [guard] [timeout])
//!   channel(from to)            carries(message)*
//! layout(flow snap gap)
//!   stage(x y width height)
//!   block(id kind x y width height label)
//!     property(key value)*  [layout ...]
//!   arrow(id from to label)     point(x y)*
//! notation(id)
//!   blockkind(id name color brightness [texture] size orientation layer)
//!   rule(from to relation [max-out])
//!   construct(id name description)
//!   map(kind construct)
//! trace(model status)
//!   event(seq time agent state kind ...)  copy(msg-id to)*
//! ```
//!
//! Elements are written sorted by id and attributes in the order listed
//! above, so equal values always produce identical bytes. Readers ignore
//! unknown elements and attributes; a version other than 1 is rejected.
//!
//! The JSON rendering is the serde form of the same structures.

mod dot;
mod reader;
mod writer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::BlockDiagram;
use crate::engine::Trace;
use crate::model::ProcessModel;
use crate::notation::NotationDefinition;
use crate::violation::Violation;

pub use dot::export_dot;
pub use reader::{from_xml, from_xml_bytes, notation_from_xml, parse_document, trace_from_xml};
pub use writer::{notation_to_xml, to_xml, trace_to_xml};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    Model,
    Notation,
    Trace,
}

impl DocumentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DocumentKind::Model => "model",
            DocumentKind::Notation => "notation",
            DocumentKind::Trace => "trace",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "model" => Some(DocumentKind::Model),
            "notation" => Some(DocumentKind::Notation),
            "trace" => Some(DocumentKind::Trace),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PersistError {
    #[error("malformed document at {line}:{column}: {message}")]
    Malformed { line: u32, column: u32, message: String },
    #[error("unsupported format version '{found}' (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion { found: String },
    #[error("expected a {expected} document, found '{found}'")]
    WrongKind { expected: &'static str, found: String },
    #[error("document violates model rules ({} violation(s))", .0.len())]
    SemanticViolation(Vec<Violation>),
}

impl PersistError {
    pub fn code(&self) -> &'static str {
        match self {
            PersistError::Malformed { .. } => "MalformedDocument",
            PersistError::UnsupportedVersion { .. } => "UnsupportedVersion",
            PersistError::WrongKind { .. } => "WrongKind",
            PersistError::SemanticViolation(_) => "SemanticViolation",
        }
    }

    pub(crate) fn malformed(line: u32, column: u32, message: impl Into<String>) -> Self {
        PersistError::Malformed {
            line,
            column,
            message: message.into(),
        }
    }
}

/// Any parsed document.
#[derive(Debug, Clone, PartialEq)]
pub enum Document {
    Model {
        model: ProcessModel,
        layout: Option<BlockDiagram>,
    },
    Notation(NotationDefinition),
    Trace(Trace),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub kind: DocumentKind,
    pub process: ProcessModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<BlockDiagram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotationDocument {
    pub format_version: u32,
    pub kind: DocumentKind,
    pub notation: NotationDefinition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub format_version: u32,
    pub kind: DocumentKind,
    pub trace: Trace,
}

impl Document {
    pub fn kind(&self) -> DocumentKind {
        match self {
            Document::Model { .. } => DocumentKind::Model,
            Document::Notation(_) => DocumentKind::Notation,
            Document::Trace(_) => DocumentKind::Trace,
        }
    }

    pub fn to_xml(&self) -> String {
        match self {
            Document::Model { model, layout } => to_xml(model, layout.as_ref()),
            Document::Notation(n) => notation_to_xml(n),
            Document::Trace(t) => trace_to_xml(t),
        }
    }

    /// Pretty-printed JSON rendering of the document.
    pub fn to_json(&self) -> String {
        let value = match self {
            Document::Model { model, layout } => serde_json::to_value(ModelDocument {
                format_version: FORMAT_VERSION,
                kind: DocumentKind::Model,
                process: model.clone(),
                layout: layout.as_ref().map(BlockDiagram::canonicalized),
            }),
            Document::Notation(n) => serde_json::to_value(NotationDocument {
                format_version: FORMAT_VERSION,
                kind: DocumentKind::Notation,
                notation: n.clone(),
            }),
            Document::Trace(t) => serde_json::to_value(TraceDocument {
                format_version: FORMAT_VERSION,
                kind: DocumentKind::Trace,
                trace: t.clone(),
            }),
        };
        serde_json::to_string_pretty(&value.expect("documents are plain data")).expect("values serialize")
    }

    pub fn from_json(text: &str) -> Result<Document, PersistError> {
        #[derive(Deserialize)]
        struct Head {
            format_version: serde_json::Value,
            kind: String,
        }
        let json_err = |e: serde_json::Error| {
            // serde_json reports model rule failures from ModelParts as
            // custom errors; they still point at the offending position.
            PersistError::malformed(e.line() as u32, e.column() as u32, e.to_string())
        };
        let head: Head = serde_json::from_str(text).map_err(json_err)?;
        if head.format_version != serde_json::json!(FORMAT_VERSION) {
            return Err(PersistError::UnsupportedVersion {
                found: head.format_version.to_string(),
            });
        }
        match DocumentKind::parse(&head.kind) {
            Some(DocumentKind::Model) => {
                let d: ModelDocument = serde_json::from_str(text).map_err(json_err)?;
                if let Some(layout) = &d.layout {
                    reader::check_layout(layout)?;
                }
                Ok(Document::Model {
                    model: d.process,
                    layout: d.layout,
                })
            }
            Some(DocumentKind::Notation) => {
                let d: NotationDocument = serde_json::from_str(text).map_err(json_err)?;
                Ok(Document::Notation(d.notation))
            }
            Some(DocumentKind::Trace) => {
                let d: TraceDocument = serde_json::from_str(text).map_err(json_err)?;
                Ok(Document::Trace(d.trace))
            }
            None => Err(PersistError::malformed(1, 1, format!("unknown document kind '{}'", head.kind))),
        }
    }
}
