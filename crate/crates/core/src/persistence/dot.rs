use std::fmt::Write as _;

use crate::model::{ProcessModel, SubjectKind, TransitionKind};

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz rendering: the interaction graph (`sid`) followed by one digraph
/// per subject behavior, in subject id order.
pub fn export_dot(model: &ProcessModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph sid {{");
    for s in model.subjects() {
        let shape = match s.kind {
            SubjectKind::Standard => "box",
            SubjectKind::Multi => "box3d",
            SubjectKind::External => "box, style=dashed",
        };
        let _ = writeln!(out, "  {} [shape={shape}, label={}];", quote(&s.id), quote(&s.name));
    }
    for c in model.channels() {
        let label: Vec<&str> = c.message_ids.iter().map(String::as_str).collect();
        let _ = writeln!(
            out,
            "  {} -> {} [label={}];",
            quote(&c.from_subject),
            quote(&c.to_subject),
            quote(&label.join(", "))
        );
    }
    let _ = writeln!(out, "}}");

    for s in model.subjects() {
        let Some(b) = &s.behavior else { continue };
        let _ = writeln!(out, "digraph {} {{", quote(&format!("sbd_{}", s.id)));
        for st in &b.states {
            let periph = if st.is_end { ", peripheries=2" } else { "" };
            let style = if st.is_start { ", style=bold" } else { "" };
            let _ = writeln!(
                out,
                "  {} [label={}{periph}{style}];",
                quote(&st.id),
                quote(&format!("{}: {}", st.kind.name(), st.label))
            );
        }
        for t in &b.transitions {
            let label = match &t.kind {
                TransitionKind::Normal { guard } => guard.clone().unwrap_or_default(),
                TransitionKind::Timeout { duration } => format!("timeout {duration}"),
            };
            let _ = writeln!(
                out,
                "  {} -> {} [label={}];",
                quote(&t.from_state),
                quote(&t.to_state),
                quote(&label)
            );
        }
        let _ = writeln!(out, "}}");
    }
    out
}
