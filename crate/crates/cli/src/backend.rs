//! Where commands execute: in-process, or on a running service.
//!
//! Both backends return the same library types, so output rendering does
//! not depend on the backend.

use std::path::Path;
use std::sync::Arc;

use sbpm_client::{Client, ClientError};
use sbpm_core::api::NotationAnalysis;
use sbpm_core::check::{validate_document, ValidationReport};
use sbpm_core::engine::{instantiate, EngineError, Payload, SchedulerConfig, Trace};
use sbpm_core::explore::{state_space, ExplorationBounds, ExplorationResult, ExploreError};
use sbpm_core::model::ProcessModel;
use sbpm_core::block::BlockDiagram;
use sbpm_core::notation::{design_lints, notation_violations, ontological_analysis, NotationDefinition};
use sbpm_core::persistence::{parse_document, Document, DocumentKind, PersistError};
use sbpm_core::violation::Violation;

/// A failed command, carrying the library or service error code.
#[derive(Debug)]
pub struct Failure {
    pub code: String,
    pub message: String,
    pub violations: Option<Vec<Violation>>,
}

impl Failure {
    fn new(code: &str, message: impl Into<String>) -> Self {
        Failure {
            code: code.to_string(),
            message: message.into(),
            violations: None,
        }
    }
}

impl From<PersistError> for Failure {
    fn from(e: PersistError) -> Self {
        let violations = match &e {
            PersistError::SemanticViolation(v) => Some(v.clone()),
            _ => None,
        };
        Failure {
            code: e.code().to_string(),
            message: e.to_string(),
            violations,
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let violations = match &e {
            EngineError::ModelInvalid(v) => Some(v.clone()),
            _ => None,
        };
        Failure {
            code: e.code().to_string(),
            message: e.to_string(),
            violations,
        }
    }
}

impl From<ExploreError> for Failure {
    fn from(e: ExploreError) -> Self {
        match e {
            ExploreError::Engine(e) => e.into(),
            ExploreError::ModelInvalid(v) => Failure {
                code: "ModelInvalid".into(),
                message: format!("model is not executable: {} violation(s)", v.len()),
                violations: Some(v),
            },
            ExploreError::BadBounds => Failure::new("BadBounds", e.to_string()),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Api { body, .. } => Failure {
                violations: body.violations(),
                code: body.code,
                message: body.message,
            },
            ClientError::Http(e) => Failure::new("Unavailable", e.to_string()),
            ClientError::Decode(m) => Failure::new("BadResponse", m),
        }
    }
}

pub type Outcome<T> = Result<T, Failure>;

/// An injected external message: `from:to:message`.
#[derive(Debug, Clone)]
pub struct Injection {
    pub from: String,
    pub to: String,
    pub message: String,
}

pub enum Backend {
    Local,
    Remote { client: Client, rt: tokio::runtime::Runtime },
}

/// A model ready for commands: parsed in-process, or stored on the service.
pub enum ModelRef {
    Local(ProcessModel, Option<BlockDiagram>),
    Remote(String),
}

fn read(path: &Path) -> Outcome<Vec<u8>> {
    std::fs::read(path).map_err(|e| Failure::new("Io", format!("cannot read {}: {e}", path.display())))
}

fn is_json(bytes: &[u8]) -> bool {
    bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{')
}

fn decode(bytes: &[u8]) -> Outcome<&str> {
    std::str::from_utf8(bytes).map_err(|e| {
        let at = &bytes[..e.valid_up_to()];
        Failure::from(PersistError::Malformed {
            line: at.iter().filter(|b| **b == b'\n').count() as u32 + 1,
            column: at.iter().rev().take_while(|b| **b != b'\n').count() as u32 + 1,
            message: "document is not valid UTF-8".into(),
        })
    })
}

fn parse_local(bytes: &[u8], expected: DocumentKind) -> Outcome<Document> {
    let text = decode(bytes)?;
    let doc = if is_json(bytes) {
        Document::from_json(text)?
    } else {
        parse_document(text)?
    };
    if doc.kind() != expected {
        return Err(PersistError::WrongKind {
            expected: expected.as_str().into(),
            found: doc.kind().as_str().into(),
        }
        .into());
    }
    Ok(doc)
}

/// Storage id on the service: the file stem, reduced to the id alphabet.
fn remote_id(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let id: String = stem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    let id = id.trim_start_matches('.').to_string();
    if id.is_empty() {
        "model".into()
    } else {
        id
    }
}

impl Backend {
    pub fn remote(url: &str) -> Outcome<Self> {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .map_err(|e| Failure::new("Io", e.to_string()))?;
        Ok(Backend::Remote {
            client: Client::new(url),
            rt,
        })
    }

    pub fn load_model(&self, path: &Path) -> Outcome<ModelRef> {
        let bytes = read(path)?;
        match self {
            Backend::Local => match parse_local(&bytes, DocumentKind::Model)? {
                Document::Model { model, layout } => Ok(ModelRef::Local(model, layout)),
                _ => unreachable!("kind checked"),
            },
            Backend::Remote { client, rt } => {
                let id = remote_id(path);
                rt.block_on(async {
                    if is_json(&bytes) {
                        client.put_model_json(&id, decode(&bytes)?).await?;
                    } else {
                        client.put_model_xml(&id, decode(&bytes)?).await?;
                    }
                    Ok(ModelRef::Remote(id))
                })
            }
        }
    }

    pub fn validate(&self, m: &ModelRef) -> Outcome<ValidationReport> {
        match (self, m) {
            (Backend::Remote { client, rt }, ModelRef::Remote(id)) => Ok(rt.block_on(client.validate(id))?),
            (_, ModelRef::Local(model, layout)) => Ok(validate_document(model, layout.as_ref())),
            _ => unreachable!("model loaded by another backend"),
        }
    }

    pub fn explore(&self, m: &ModelRef, bounds: ExplorationBounds) -> Outcome<ExplorationResult> {
        match (self, m) {
            (Backend::Remote { client, rt }, ModelRef::Remote(id)) => Ok(rt.block_on(client.explore(id, &bounds))?),
            (_, ModelRef::Local(model, _)) => Ok(state_space(model, bounds)?),
            _ => unreachable!("model loaded by another backend"),
        }
    }

    /// Instantiates, delivers the injections, and runs to the end.
    pub fn run(&self, m: &ModelRef, config: SchedulerConfig, inject: &[Injection]) -> Outcome<Trace> {
        match (self, m) {
            (Backend::Remote { client, rt }, ModelRef::Remote(id)) => rt.block_on(async {
                let inst = client.create_instance(id, config).await?;
                let result = async {
                    for i in inject {
                        client.inject(&inst.instance_id, &i.from, &i.to, &i.message, Payload::new()).await?;
                    }
                    client.run_to_end(&inst.instance_id, 1_000).await?;
                    client.trace(&inst.instance_id).await
                }
                .await;
                let _ = client.delete_instance(&inst.instance_id).await;
                Ok(result?)
            }),
            (_, ModelRef::Local(model, _)) => {
                let mut inst = instantiate(Arc::new(model.clone()), config)?;
                for i in inject {
                    inst.inject_message(&i.from, &i.to, &i.message, Payload::new())?;
                }
                Ok(inst.run())
            }
            _ => unreachable!("model loaded by another backend"),
        }
    }

    /// The model as a document, for export.
    pub fn document(&self, m: &ModelRef) -> Outcome<Document> {
        match (self, m) {
            (Backend::Remote { client, rt }, ModelRef::Remote(id)) => Ok(rt.block_on(client.get_model(id))?),
            (_, ModelRef::Local(model, layout)) => Ok(Document::Model {
                model: model.clone(),
                layout: layout.clone(),
            }),
            _ => unreachable!("model loaded by another backend"),
        }
    }

    /// Checks a notation and analyzes its mapping. Reference or rule
    /// problems fail with `SemanticViolation`, as the service does on upload.
    pub fn analyze_notation(&self, path: &Path) -> Outcome<NotationAnalysis> {
        let bytes = read(path)?;
        match self {
            Backend::Local => {
                let Document::Notation(n) = parse_local(&bytes, DocumentKind::Notation)? else { unreachable!() };
                analyze_local(&n)
            }
            Backend::Remote { client, rt } => {
                let id = remote_id(path);
                rt.block_on(async {
                    client.put_notation_xml(&id, decode(&bytes)?).await?;
                    Ok(client.analyze_notation(&id).await?)
                })
            }
        }
    }
}

fn analyze_local(n: &NotationDefinition) -> Outcome<NotationAnalysis> {
    let v = notation_violations(n);
    if !v.is_empty() {
        return Err(PersistError::SemanticViolation(v).into());
    }
    Ok(NotationAnalysis {
        report: ontological_analysis(n),
        lints: design_lints(n),
    })
}
