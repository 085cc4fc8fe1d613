use std::fmt::Write as _;

use super::{DocumentKind, FORMAT_VERSION};
use crate::block::BlockDiagram;
use crate::engine::{EventKind, Trace};
use crate::model::{ProcessModel, StateKind, TransitionKind};
use crate::notation::NotationDefinition;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

struct Xml {
    out: String,
    depth: usize,
}

type Attrs<'a> = &'a [(&'a str, String)];

impl Xml {
    fn new(kind: DocumentKind) -> Self {
        let mut x = Xml {
            out: String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"),
            depth: 0,
        };
        x.open(
            "sbpm",
            &[("version", FORMAT_VERSION.to_string()), ("kind", kind.as_str().to_string())],
        );
        x
    }

    fn tag(&mut self, name: &str, attrs: Attrs<'_>, close: bool) {
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
        self.out.push('<');
        self.out.push_str(name);
        for (k, v) in attrs {
            let _ = write!(self.out, " {k}=\"{}\"", escape(v));
        }
        self.out.push_str(if close { "/>\n" } else { ">\n" });
    }

    fn open(&mut self, name: &str, attrs: Attrs<'_>) {
        self.tag(name, attrs, false);
        self.depth += 1;
    }

    fn empty(&mut self, name: &str, attrs: Attrs<'_>) {
        self.tag(name, attrs, true);
    }

    fn close(&mut self, name: &str) {
        self.depth -= 1;
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
        let _ = writeln!(self.out, "</{name}>");
    }

    /// Opens `name` if `children` is non-empty, otherwise writes it empty.
    fn node<T>(&mut self, name: &str, attrs: Attrs<'_>, children: &[T], mut each: impl FnMut(&mut Self, &T)) {
        if children.is_empty() {
            self.empty(name, attrs);
        } else {
            self.open(name, attrs);
            for c in children {
                each(self, c);
            }
            self.close(name);
        }
    }

    fn finish(mut self) -> String {
        self.close("sbpm");
        self.out
    }
}

fn s(v: impl ToString) -> String {
    v.to_string()
}

/// Canonical XML for a model and its optional layout.
pub fn to_xml(model: &ProcessModel, layout: Option<&BlockDiagram>) -> String {
    let mut x = Xml::new(DocumentKind::Model);
    x.open("process", &[("id", s(model.id())), ("name", s(model.name()))]);
    for m in model.messages() {
        x.node(
            "message",
            &[("id", s(&m.id)), ("name", s(&m.name))],
            &m.payload_schema,
            |x, f| x.empty("field", &[("key", s(f))]),
        );
    }
    for subj in model.subjects() {
        let attrs = [
            ("id", s(&subj.id)),
            ("name", s(&subj.name)),
            ("kind", s(subj.kind.as_str())),
            ("multiplicity", s(subj.multiplicity_default)),
        ];
        match &subj.behavior {
            None => x.empty("subject", &attrs),
            Some(b) => {
                x.open("subject", &attrs);
                x.open("behavior", &[]);
                for st in &b.states {
                    let mut attrs = vec![
                        ("id", s(&st.id)),
                        ("label", s(&st.label)),
                        ("kind", s(st.kind.name())),
                        ("start", s(st.is_start)),
                        ("end", s(st.is_end)),
                    ];
                    match &st.kind {
                        StateKind::Send { target, message } => {
                            attrs.push(("target", s(target)));
                            attrs.push(("message", s(message)));
                            x.empty("state", &attrs);
                        }
                        StateKind::Receive { branches } => x.node("state", &attrs, branches, |x, br| {
                            x.empty("branch", &[("source", s(&br.source)), ("message", s(&br.message))])
                        }),
                        StateKind::Action { outcomes } => {
                            x.node("state", &attrs, outcomes, |x, o| x.empty("outcome", &[("label", s(o))]))
                        }
                    }
                }
                for t in &b.transitions {
                    let mut attrs = vec![("id", s(&t.id)), ("from", s(&t.from_state)), ("to", s(&t.to_state))];
                    match &t.kind {
                        TransitionKind::Normal { guard } => {
                            attrs.push(("kind", s("normal")));
                            if let Some(g) = guard {
                                attrs.push(("guard", s(g)));
                            }
                        }
                        TransitionKind::Timeout { duration } => {
                            attrs.push(("kind", s("timeout")));
                            attrs.push(("timeout", s(duration)));
                        }
                    }
                    x.empty("transition", &attrs);
                }
                x.close("behavior");
                x.close("subject");
            }
        }
    }
    for c in model.channels() {
        let messages: Vec<&String> = c.message_ids.iter().collect();
        x.node(
            "channel",
            &[("from", s(&c.from_subject)), ("to", s(&c.to_subject))],
            &messages,
            |x, m| x.empty("carries", &[("message", s(m))]),
        );
    }
    x.close("process");
    if let Some(layout) = layout {
        write_layout(&mut x, &layout.canonicalized());
    }
    x.finish()
}

fn write_layout(x: &mut Xml, d: &BlockDiagram) {
    x.open(
        "layout",
        &[
            ("flow", s(d.flow.axis.as_str())),
            ("snap", s(d.flow.snap_threshold)),
            ("gap", s(d.flow.gap)),
        ],
    );
    x.empty(
        "stage",
        &[
            ("x", s(d.stage.x)),
            ("y", s(d.stage.y)),
            ("width", s(d.stage.width)),
            ("height", s(d.stage.height)),
        ],
    );
    for b in &d.blocks {
        let attrs = [
            ("id", s(&b.id)),
            ("kind", s(&b.kind_ref)),
            ("x", s(b.position.x)),
            ("y", s(b.position.y)),
            ("width", s(b.size.width)),
            ("height", s(b.size.height)),
            ("label", s(&b.label)),
        ];
        if b.properties.is_empty() && b.inner.is_none() {
            x.empty("block", &attrs);
            continue;
        }
        x.open("block", &attrs);
        for (k, v) in &b.properties {
            x.empty("property", &[("key", s(k)), ("value", s(v))]);
        }
        if let Some(inner) = &b.inner {
            write_layout(x, inner);
        }
        x.close("block");
    }
    for a in &d.arrows {
        x.node(
            "arrow",
            &[
                ("id", s(&a.id)),
                ("from", s(&a.from_block)),
                ("to", s(&a.to_block)),
                ("label", s(&a.label)),
            ],
            &a.waypoints,
            |x, p| x.empty("point", &[("x", s(p.x)), ("y", s(p.y))]),
        );
    }
    x.close("layout");
}

pub fn notation_to_xml(n: &NotationDefinition) -> String {
    let mut x = Xml::new(DocumentKind::Notation);
    x.open("notation", &[("id", s(&n.id))]);
    let mut kinds: Vec<_> = n.kinds.iter().collect();
    kinds.sort_by(|a, b| a.id.cmp(&b.id));
    for k in kinds {
        let mut attrs = vec![
            ("id", s(&k.id)),
            ("name", s(&k.name)),
            ("color", format!("#{:02x}{:02x}{:02x}", k.color[0], k.color[1], k.color[2])),
            ("brightness", s(k.brightness)),
        ];
        if let Some(t) = &k.texture {
            attrs.push(("texture", s(t)));
        }
        attrs.push(("size", s(k.size_class.as_str())));
        attrs.push(("orientation", s(k.orientation)));
        attrs.push(("layer", s(k.layer)));
        x.empty("blockkind", &attrs);
    }
    let mut rules: Vec<_> = n.rules.iter().collect();
    rules.sort_by(|a, b| (&a.from_kind, &a.to_kind, a.relation).cmp(&(&b.from_kind, &b.to_kind, b.relation)));
    for r in rules {
        let mut attrs = vec![("from", s(&r.from_kind)), ("to", s(&r.to_kind)), ("relation", s(r.relation.as_str()))];
        if let Some(m) = r.max_out_degree {
            attrs.push(("max-out", s(m)));
        }
        x.empty("rule", &attrs);
    }
    let mut constructs: Vec<_> = n.constructs.iter().collect();
    constructs.sort_by(|a, b| a.id.cmp(&b.id));
    for c in constructs {
        x.empty(
            "construct",
            &[("id", s(&c.id)), ("name", s(&c.name)), ("description", s(&c.description))],
        );
    }
    let mut mapping: Vec<_> = n.mapping.iter().collect();
    mapping.sort();
    for (k, c) in mapping {
        x.empty("map", &[("kind", s(k)), ("construct", s(c))]);
    }
    x.close("notation");
    x.finish()
}

/// Events keep their recorded order.
pub fn trace_to_xml(t: &Trace) -> String {
    let mut x = Xml::new(DocumentKind::Trace);
    x.open("trace", &[("model", s(&t.model_id)), ("status", s(t.status))]);
    for e in &t.events {
        let mut attrs = vec![
            ("seq", s(e.seq)),
            ("time", s(e.time)),
            ("agent", s(&e.agent)),
            ("state", s(&e.state)),
            ("kind", s(e.kind.name())),
        ];
        match &e.kind {
            EventKind::Sent {
                message,
                to_subject,
                copies,
            } => {
                attrs.push(("message", s(message)));
                attrs.push(("to-subject", s(to_subject)));
                x.node("event", &attrs, copies, |x, c| {
                    x.empty("copy", &[("msg-id", s(c.msg_id)), ("to", s(&c.to))])
                });
                continue;
            }
            EventKind::Received { message, msg_id, from } => {
                attrs.push(("message", s(message)));
                attrs.push(("msg-id", s(msg_id)));
                attrs.push(("from", s(from)));
            }
            EventKind::ActionTaken { outcome } => attrs.push(("outcome", s(outcome))),
            EventKind::TimeoutFired { transition } => attrs.push(("transition", s(transition))),
            EventKind::EnteredEnd | EventKind::Blocked => {}
        }
        x.empty("event", &attrs);
    }
    x.close("trace");
    x.finish()
}
