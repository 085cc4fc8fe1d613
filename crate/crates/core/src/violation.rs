//! Structural findings reported by the checkers.
//!
//! Violations are plain values. Every checker returns them sorted by
//! `(subject, element, code, message)` so that repeated checks over the same
//! input produce identical lists.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    // model construction
    EmptyId,
    DuplicateId,
    DanglingReference,
    ExternalWithBehavior,
    MissingBehavior,
    BadMultiplicity,
    SelfChannel,
    EmptyChannel,
    DuplicateChannel,
    DuplicatePayloadKey,
    // behavior shape
    MissingStart,
    MultipleStart,
    MissingEnd,
    EmptyReceive,
    EmptyAction,
    DuplicateOutcome,
    DuplicateBranch,
    TimeoutNotFromReceive,
    MultipleTimeouts,
    TransitionShape,
    EndHasOutgoing,
    // interface
    UnmatchedSend,
    UnmatchedReceive,
    UnusedChannel,
    // notation conformance
    UnknownKind,
    ForbiddenConnection,
    MissingRequiredSuccessor,
    OutDegreeExceeded,
    // notation definition
    DanglingKind,
    DanglingConstruct,
    ContradictoryRule,
    // block translation
    MisplacedBlock,
    AmbiguousConstruct,
    MissingProperty,
    BadProperty,
    UnlabeledChannel,
    UnlabeledBranch,
    DanglingConnector,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// A single finding. `subject` is the owning subject (or diagram block) and
/// `element` the state, transition, channel or block the finding is about.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub subject: Option<String>,
    pub element: Option<String>,
    pub code: ViolationCode,
    pub severity: Severity,
    pub message: String,
}

impl Violation {
    pub fn error(code: ViolationCode, message: impl Into<String>) -> Self {
        Violation {
            subject: None,
            element: None,
            code,
            severity: Severity::Error,
            message: message.into(),
        }
    }

    pub fn warning(code: ViolationCode, message: impl Into<String>) -> Self {
        Violation {
            severity: Severity::Warning,
            ..Violation::error(code, message)
        }
    }

    pub fn in_subject(mut self, subject: impl Into<String>) -> Self {
        self.subject = Some(subject.into());
        self
    }

    pub fn at(mut self, element: impl Into<String>) -> Self {
        self.element = Some(element.into());
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev} {}", self.code)?;
        match (&self.subject, &self.element) {
            (Some(s), Some(e)) => write!(f, " [{s}/{e}]")?,
            (Some(s), None) => write!(f, " [{s}]")?,
            (None, Some(e)) => write!(f, " [{e}]")?,
            (None, None) => {}
        }
        write!(f, ": {}", self.message)
    }
}

/// Sorts into the canonical reporting order and drops exact duplicates.
pub fn canonical(mut violations: Vec<Violation>) -> Vec<Violation> {
    violations.sort();
    violations.dedup();
    violations
}

pub fn has_errors(violations: &[Violation]) -> bool {
    violations.iter().any(Violation::is_error)
}
