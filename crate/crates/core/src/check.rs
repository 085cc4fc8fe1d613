//! The combined validation report shared by the command line and the
//! service.

use serde::{Deserialize, Serialize};

use crate::block::BlockDiagram;
use crate::model::{interface_consistency, well_formed, ProcessModel};
use crate::notation::{conformance_check, sbpm_default_notation};
use crate::violation::{canonical, has_errors, Violation};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub well_formed: Vec<Violation>,
    pub interface: Vec<Violation>,
    /// Layout against the bundled S-BPM notation; empty without a layout.
    pub conformance: Vec<Violation>,
}

impl ValidationReport {
    /// All findings in canonical order.
    pub fn violations(&self) -> Vec<Violation> {
        canonical(
            self.well_formed
                .iter()
                .chain(&self.interface)
                .chain(&self.conformance)
                .cloned()
                .collect(),
        )
    }

    pub fn is_clean(&self) -> bool {
        self.well_formed.is_empty() && self.interface.is_empty() && self.conformance.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        has_errors(&self.violations())
    }
}

pub fn validate_document(model: &ProcessModel, layout: Option<&BlockDiagram>) -> ValidationReport {
    let conformance = match layout {
        Some(d) => match conformance_check(d, &sbpm_default_notation()) {
            Ok(v) => v,
            Err(e) => vec![e.to_violation()],
        },
        None => Vec::new(),
    };
    ValidationReport {
        well_formed: well_formed(model),
        interface: interface_consistency(model),
        conformance,
    }
}
