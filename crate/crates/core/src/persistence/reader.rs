use std::str::FromStr;

use roxmltree::Node;

use super::{Document, DocumentKind, PersistError, FORMAT_VERSION};
use crate::block::{diagram_violations, Arrow, Block, BlockDiagram, FlowAxis, FlowConvention, Point, Rect, Size};
use crate::engine::{Delivery, EventKind, Status, Trace, TraceEvent};
use crate::model::{
    build_model, Behavior, Channel, MessageType, ModelParts, ProcessModel, ReceiveBranch, State, StateKind, Subject,
    SubjectKind, Transition, TransitionKind,
};
use crate::notation::{BlockKind, GrammarRule, NotationDefinition, Relation, SemanticConstruct, SizeClass};
use crate::violation::has_errors;

/// Parse context: positions come from the original text.
struct Cx<'a, 'input> {
    doc: &'a roxmltree::Document<'input>,
}

impl<'a, 'input> Cx<'a, 'input> {
    fn err(&self, node: Node<'_, '_>, msg: impl Into<String>) -> PersistError {
        let pos = self.doc.text_pos_at(node.range().start);
        PersistError::malformed(pos.row, pos.col, msg)
    }

    fn attr<'n>(&self, node: Node<'n, 'input>, name: &str) -> Result<&'n str, PersistError> {
        node.attribute(name).ok_or_else(|| {
            self.err(
                node,
                format!("<{}> is missing attribute '{name}'", node.tag_name().name()),
            )
        })
    }

    fn parse<T: FromStr>(&self, node: Node<'_, 'input>, name: &str) -> Result<T, PersistError> {
        let raw = self.attr(node, name)?;
        raw.trim().parse().map_err(|_| {
            self.err(
                node,
                format!("attribute '{name}' of <{}> has invalid value '{raw}'", node.tag_name().name()),
            )
        })
    }

    fn opt_parse<T: FromStr>(&self, node: Node<'_, 'input>, name: &str) -> Result<Option<T>, PersistError> {
        match node.attribute(name) {
            None => Ok(None),
            Some(_) => self.parse(node, name).map(Some),
        }
    }

    fn text(&self, node: Node<'_, 'input>, name: &str) -> String {
        node.attribute(name).unwrap_or_default().to_string()
    }
}

fn children<'a, 'input>(node: Node<'a, 'input>, name: &'static str) -> impl Iterator<Item = Node<'a, 'input>> {
    node.children().filter(move |c| c.is_element() && c.tag_name().name() == name)
}

fn child<'a, 'input>(node: Node<'a, 'input>, name: &'static str) -> Option<Node<'a, 'input>> {
    children(node, name).next()
}

/// Parses the envelope and returns the body element's parent.
fn envelope<'a, 'input>(
    doc: &'a roxmltree::Document<'input>,
    expected: Option<DocumentKind>,
) -> Result<(DocumentKind, Node<'a, 'input>), PersistError> {
    let cx = Cx { doc };
    let root = doc.root_element();
    if root.tag_name().name() != "sbpm" {
        return Err(cx.err(root, format!("root element is <{}>, expected <sbpm>", root.tag_name().name())));
    }
    let version = cx.attr(root, "version")?;
    if version.trim() != FORMAT_VERSION.to_string() {
        return Err(PersistError::UnsupportedVersion {
            found: version.to_string(),
        });
    }
    let kind_raw = cx.attr(root, "kind")?;
    let kind = DocumentKind::parse(kind_raw).ok_or_else(|| cx.err(root, format!("unknown document kind '{kind_raw}'")))?;
    if let Some(expected) = expected {
        if expected != kind {
            return Err(PersistError::WrongKind {
                expected: expected.as_str(),
                found: kind_raw.to_string(),
            });
        }
    }
    Ok((kind, root))
}

fn parse_xml(text: &str) -> Result<roxmltree::Document<'_>, PersistError> {
    roxmltree::Document::parse(text).map_err(|e| {
        // roxmltree reports a truncated stream at 1:1; point at the end instead.
        if matches!(e, roxmltree::Error::UnexpectedEndOfStream) {
            let line = text.matches('\n').count() as u32 + 1;
            let column = text.rsplit('\n').next().map_or(0, |l| l.chars().count()) as u32 + 1;
            return PersistError::malformed(line, column, e.to_string());
        }
        let pos = e.pos();
        PersistError::malformed(pos.row, pos.col, e.to_string())
    })
}

/// Decodes UTF-8 first; invalid bytes are reported at their position.
pub fn from_xml_bytes(bytes: &[u8]) -> Result<(ProcessModel, Option<BlockDiagram>), PersistError> {
    from_xml(utf8(bytes)?)
}

pub(crate) fn utf8(bytes: &[u8]) -> Result<&str, PersistError> {
    std::str::from_utf8(bytes).map_err(|e| {
        let good = &bytes[..e.valid_up_to()];
        let line = good.iter().filter(|b| **b == b'\n').count() as u32 + 1;
        let column = good.iter().rev().take_while(|b| **b != b'\n').count() as u32 + 1;
        PersistError::malformed(line, column, "document is not valid UTF-8")
    })
}

pub fn from_xml(text: &str) -> Result<(ProcessModel, Option<BlockDiagram>), PersistError> {
    let doc = parse_xml(text)?;
    let (_, root) = envelope(&doc, Some(DocumentKind::Model))?;
    read_model(&Cx { doc: &doc }, root)
}

/// Parses any document kind.
pub fn parse_document(text: &str) -> Result<Document, PersistError> {
    let doc = parse_xml(text)?;
    let (kind, root) = envelope(&doc, None)?;
    let cx = Cx { doc: &doc };
    Ok(match kind {
        DocumentKind::Model => {
            let (model, layout) = read_model(&cx, root)?;
            Document::Model { model, layout }
        }
        DocumentKind::Notation => Document::Notation(read_notation(&cx, root)?),
        DocumentKind::Trace => Document::Trace(read_trace(&cx, root)?),
    })
}

pub fn notation_from_xml(text: &str) -> Result<NotationDefinition, PersistError> {
    let doc = parse_xml(text)?;
    let (_, root) = envelope(&doc, Some(DocumentKind::Notation))?;
    read_notation(&Cx { doc: &doc }, root)
}

pub fn trace_from_xml(text: &str) -> Result<Trace, PersistError> {
    let doc = parse_xml(text)?;
    let (_, root) = envelope(&doc, Some(DocumentKind::Trace))?;
    read_trace(&Cx { doc: &doc }, root)
}

fn read_model(cx: &Cx<'_, '_>, root: Node<'_, '_>) -> Result<(ProcessModel, Option<BlockDiagram>), PersistError> {
    let process = child(root, "process").ok_or_else(|| cx.err(root, "model document has no <process>"))?;
    let mut parts = ModelParts {
        id: cx.attr(process, "id")?.to_string(),
        name: cx.text(process, "name"),
        subjects: Vec::new(),
        channels: Vec::new(),
        messages: Vec::new(),
    };
    for m in children(process, "message") {
        let fields = children(m, "field")
            .map(|f| cx.attr(f, "key").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let id = cx.attr(m, "id")?;
        parts.messages.push(MessageType {
            id: id.to_string(),
            name: m.attribute("name").unwrap_or(id).to_string(),
            payload_schema: fields,
        });
    }
    for s in children(process, "subject") {
        let id = cx.attr(s, "id")?;
        let kind_raw = cx.attr(s, "kind")?;
        let kind = SubjectKind::parse(kind_raw).ok_or_else(|| cx.err(s, format!("unknown subject kind '{kind_raw}'")))?;
        let behavior = match child(s, "behavior") {
            Some(b) => Some(read_behavior(cx, b)?),
            None => None,
        };
        parts.subjects.push(Subject {
            id: id.to_string(),
            name: s.attribute("name").unwrap_or(id).to_string(),
            kind,
            behavior,
            multiplicity_default: cx.opt_parse(s, "multiplicity")?.unwrap_or(1),
        });
    }
    for c in children(process, "channel") {
        let messages = children(c, "carries")
            .map(|m| cx.attr(m, "message").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        parts
            .channels
            .push(Channel::new(cx.attr(c, "from")?, cx.attr(c, "to")?, messages));
    }
    let layout = match child(root, "layout") {
        Some(l) => Some(read_layout(cx, l)?),
        None => None,
    };
    let model = build_model(parts).map_err(PersistError::SemanticViolation)?;
    if let Some(layout) = &layout {
        check_layout(layout)?;
    }
    Ok((model, layout))
}

pub(crate) fn check_layout(layout: &BlockDiagram) -> Result<(), PersistError> {
    let v = diagram_violations(layout);
    if has_errors(&v) {
        return Err(PersistError::SemanticViolation(v));
    }
    Ok(())
}

fn read_behavior(cx: &Cx<'_, '_>, b: Node<'_, '_>) -> Result<Behavior, PersistError> {
    let mut states = Vec::new();
    for st in children(b, "state") {
        let kind = match cx.attr(st, "kind")? {
            "send" => StateKind::Send {
                target: cx.attr(st, "target")?.to_string(),
                message: cx.attr(st, "message")?.to_string(),
            },
            "receive" => StateKind::Receive {
                branches: children(st, "branch")
                    .map(|br| Ok(ReceiveBranch::new(cx.attr(br, "source")?, cx.attr(br, "message")?)))
                    .collect::<Result<_, PersistError>>()?,
            },
            "action" => StateKind::Action {
                outcomes: children(st, "outcome")
                    .map(|o| cx.attr(o, "label").map(str::to_string))
                    .collect::<Result<_, _>>()?,
            },
            other => return Err(cx.err(st, format!("unknown state kind '{other}'"))),
        };
        let id = cx.attr(st, "id")?;
        states.push(State {
            id: id.to_string(),
            label: st.attribute("label").unwrap_or(id).to_string(),
            kind,
            is_start: cx.opt_parse(st, "start")?.unwrap_or(false),
            is_end: cx.opt_parse(st, "end")?.unwrap_or(false),
        });
    }
    let mut transitions = Vec::new();
    for t in children(b, "transition") {
        let kind = match t.attribute("kind").unwrap_or("normal") {
            "normal" => TransitionKind::Normal {
                guard: t.attribute("guard").map(str::to_string),
            },
            "timeout" => TransitionKind::Timeout {
                duration: cx.parse(t, "timeout")?,
            },
            other => return Err(cx.err(t, format!("unknown transition kind '{other}'"))),
        };
        transitions.push(Transition {
            id: cx.attr(t, "id")?.to_string(),
            from_state: cx.attr(t, "from")?.to_string(),
            to_state: cx.attr(t, "to")?.to_string(),
            kind,
        });
    }
    Ok(Behavior::new(states, transitions))
}

fn read_layout(cx: &Cx<'_, '_>, l: Node<'_, '_>) -> Result<BlockDiagram, PersistError> {
    let flow_raw = l.attribute("flow").unwrap_or("top-down");
    let defaults = FlowConvention::default();
    let flow = FlowConvention {
        axis: FlowAxis::parse(flow_raw).ok_or_else(|| cx.err(l, format!("unknown flow '{flow_raw}'")))?,
        snap_threshold: cx.opt_parse(l, "snap")?.unwrap_or(defaults.snap_threshold),
        gap: cx.opt_parse(l, "gap")?.unwrap_or(defaults.gap),
    };
    let mut d = BlockDiagram::new(flow);
    if let Some(st) = child(l, "stage") {
        d.stage = Rect::new(cx.parse(st, "x")?, cx.parse(st, "y")?, cx.parse(st, "width")?, cx.parse(st, "height")?);
    }
    for b in children(l, "block") {
        let id = cx.attr(b, "id")?;
        let properties = children(b, "property")
            .map(|p| Ok((cx.attr(p, "key")?.to_string(), cx.text(p, "value"))))
            .collect::<Result<Vec<_>, PersistError>>()?;
        let inner = match child(b, "layout") {
            Some(inner) => Some(Box::new(read_layout(cx, inner)?)),
            None => None,
        };
        d.blocks.push(Block {
            id: id.to_string(),
            kind_ref: cx.attr(b, "kind")?.to_string(),
            position: Point::new(cx.parse(b, "x")?, cx.parse(b, "y")?),
            size: Size::new(cx.parse(b, "width")?, cx.parse(b, "height")?),
            label: b.attribute("label").unwrap_or(id).to_string(),
            properties,
            inner,
        });
    }
    for a in children(l, "arrow") {
        let waypoints = children(a, "point")
            .map(|p| Ok(Point::new(cx.parse(p, "x")?, cx.parse(p, "y")?)))
            .collect::<Result<Vec<_>, PersistError>>()?;
        d.arrows.push(Arrow {
            id: cx.attr(a, "id")?.to_string(),
            from_block: cx.attr(a, "from")?.to_string(),
            to_block: cx.attr(a, "to")?.to_string(),
            label: cx.text(a, "label"),
            waypoints,
        });
    }
    Ok(d)
}

fn read_notation(cx: &Cx<'_, '_>, root: Node<'_, '_>) -> Result<NotationDefinition, PersistError> {
    let n = child(root, "notation").ok_or_else(|| cx.err(root, "notation document has no <notation>"))?;
    let mut def = NotationDefinition {
        id: cx.attr(n, "id")?.to_string(),
        kinds: Vec::new(),
        rules: Vec::new(),
        constructs: Vec::new(),
        mapping: Vec::new(),
    };
    for k in children(n, "blockkind") {
        let id = cx.attr(k, "id")?;
        let color_raw = cx.attr(k, "color")?;
        let color = parse_color(color_raw).ok_or_else(|| cx.err(k, format!("color '{color_raw}' is not #rrggbb")))?;
        let size_raw = k.attribute("size").unwrap_or("M");
        def.kinds.push(BlockKind {
            id: id.to_string(),
            name: k.attribute("name").unwrap_or(id).to_string(),
            color,
            brightness: cx.opt_parse(k, "brightness")?.unwrap_or(50),
            texture: k.attribute("texture").map(str::to_string),
            size_class: SizeClass::parse(size_raw).ok_or_else(|| cx.err(k, format!("unknown size class '{size_raw}'")))?,
            orientation: cx.opt_parse(k, "orientation")?.unwrap_or(0),
            layer: cx.opt_parse(k, "layer")?.unwrap_or(0),
        });
    }
    for r in children(n, "rule") {
        let rel_raw = cx.attr(r, "relation")?;
        let mut rule = GrammarRule::new(
            cx.attr(r, "from")?,
            cx.attr(r, "to")?,
            Relation::parse(rel_raw).ok_or_else(|| cx.err(r, format!("unknown relation '{rel_raw}'")))?,
        );
        rule.max_out_degree = cx.opt_parse(r, "max-out")?;
        def.rules.push(rule);
    }
    for c in children(n, "construct") {
        let id = cx.attr(c, "id")?;
        def.constructs.push(SemanticConstruct::new(
            id,
            c.attribute("name").unwrap_or(id),
            cx.text(c, "description"),
        ));
    }
    for m in children(n, "map") {
        def.mapping
            .push((cx.attr(m, "kind")?.to_string(), cx.attr(m, "construct")?.to_string()));
    }
    Ok(def)
}

fn parse_color(s: &str) -> Option<[u8; 3]> {
    let hex = s.strip_prefix('#')?;
    if hex.len() != 6 || !hex.is_ascii() {
        return None;
    }
    let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).ok();
    Some([byte(0)?, byte(2)?, byte(4)?])
}

fn read_trace(cx: &Cx<'_, '_>, root: Node<'_, '_>) -> Result<Trace, PersistError> {
    let t = child(root, "trace").ok_or_else(|| cx.err(root, "trace document has no <trace>"))?;
    let status = match cx.attr(t, "status")? {
        "Running" => Status::Running,
        "Completed" => Status::Completed,
        "Deadlocked" => Status::Deadlocked,
        "StepLimit" => Status::StepLimit,
        other => return Err(cx.err(t, format!("unknown status '{other}'"))),
    };
    let mut events = Vec::new();
    for e in children(t, "event") {
        let kind = match cx.attr(e, "kind")? {
            "Sent" => EventKind::Sent {
                message: cx.attr(e, "message")?.to_string(),
                to_subject: cx.attr(e, "to-subject")?.to_string(),
                copies: children(e, "copy")
                    .map(|c| {
                        Ok(Delivery {
                            msg_id: cx.parse(c, "msg-id")?,
                            to: cx.attr(c, "to")?.to_string(),
                        })
                    })
                    .collect::<Result<_, PersistError>>()?,
            },
            "Received" => EventKind::Received {
                message: cx.attr(e, "message")?.to_string(),
                msg_id: cx.parse(e, "msg-id")?,
                from: cx.attr(e, "from")?.to_string(),
            },
            "ActionTaken" => EventKind::ActionTaken {
                outcome: cx.attr(e, "outcome")?.to_string(),
            },
            "TimeoutFired" => EventKind::TimeoutFired {
                transition: cx.attr(e, "transition")?.to_string(),
            },
            "EnteredEnd" => EventKind::EnteredEnd,
            "Blocked" => EventKind::Blocked,
            other => return Err(cx.err(e, format!("unknown event kind '{other}'"))),
        };
        events.push(TraceEvent {
            seq: cx.parse(e, "seq")?,
            time: cx.parse(e, "time")?,
            agent: cx.attr(e, "agent")?.to_string(),
            state: cx.text(e, "state"),
            kind,
        });
    }
    Ok(Trace {
        model_id: cx.text(t, "model"),
        status,
        events,
    })
}
