//! Translation of S-BPM block diagrams into process models.
//!
//! The top-level diagram is the interaction view: subject blocks become
//! subjects, and connections between them (directly or through a channel
//! block) become channels. A subject block's nested diagram is its behavior:
//! state blocks become states and connections become transitions.
//!
//! Property conventions:
//! - multi-subject: `multiplicity` (default 1)
//! - channel block: one property per message, key = message id, value =
//!   comma-separated payload fields; without properties the label lists the
//!   message ids
//! - send: `to`, `message`
//! - receive: every property whose key starts with `branch`, value
//!   `source/message`
//! - action: `outcomes`, comma-separated (default `done`)
//! - any state: `start=true`, `end=true`, or a connected start/end flag
//! - transition blocks: optional `guard`; timeout transitions need `duration`
//!
//! Connections without a guard are resolved when the source state has a
//! single branch or outcome; arrow labels provide explicit guards.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{cross_adjacencies, infer_connections, Block, BlockDiagram, ConnectionOrigin};
use crate::model::{
    build_model, well_formed, Behavior, Channel, MessageType, ModelParts, ProcessModel, ReceiveBranch, State, StateKind,
    Subject, SubjectKind, Transition,
};
use crate::notation::{conformance_check, sbpm, NotationDefinition};
use crate::violation::{canonical, has_errors, Violation, ViolationCode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranslateError {
    #[error("diagram does not conform to the notation ({} violation(s))", .0.len())]
    NonConformant(Vec<Violation>),
    #[error("direction between '{first}' and '{second}' is not determined by flow or arrow")]
    AmbiguousDirection { first: String, second: String },
    #[error("diagram does not describe a valid model ({} violation(s))", .0.len())]
    Invalid(Vec<Violation>),
}

impl TranslateError {
    pub fn code(&self) -> &'static str {
        match self {
            TranslateError::NonConformant(_) => "NonConformant",
            TranslateError::AmbiguousDirection { .. } => "AmbiguousDirection",
            TranslateError::Invalid(_) => "Invalid",
        }
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            TranslateError::NonConformant(v) | TranslateError::Invalid(v) => v,
            TranslateError::AmbiguousDirection { .. } => &[],
        }
    }
}

/// Translates with the model id `diagram`.
pub fn to_semantic_model(d: &BlockDiagram, n: &NotationDefinition) -> Result<ProcessModel, TranslateError> {
    to_semantic_model_with_id(d, n, "diagram")
}

pub fn to_semantic_model_with_id(d: &BlockDiagram, n: &NotationDefinition, id: &str) -> Result<ProcessModel, TranslateError> {
    let conformance = conformance_check(d, n).map_err(|e| TranslateError::NonConformant(vec![e.to_violation()]))?;
    if has_errors(&conformance) {
        return Err(TranslateError::NonConformant(conformance));
    }
    check_direction(d)?;

    let mut t = Translator {
        notation: n,
        out: Vec::new(),
    };
    let parts = t.layer1(d, id);
    if !t.out.is_empty() {
        return Err(TranslateError::Invalid(canonical(t.out)));
    }
    let model = build_model(parts).map_err(TranslateError::Invalid)?;
    let v = well_formed(&model);
    if has_errors(&v) {
        return Err(TranslateError::Invalid(v));
    }
    Ok(model)
}

fn check_direction(d: &BlockDiagram) -> Result<(), TranslateError> {
    let arrowed: BTreeSet<(&str, &str)> = d
        .arrows
        .iter()
        .flat_map(|a| {
            [
                (a.from_block.as_str(), a.to_block.as_str()),
                (a.to_block.as_str(), a.from_block.as_str()),
            ]
        })
        .collect();
    if let Some(c) = cross_adjacencies(d)
        .into_iter()
        .find(|c| !arrowed.contains(&(c.first.as_str(), c.second.as_str())))
    {
        return Err(TranslateError::AmbiguousDirection {
            first: c.first,
            second: c.second,
        });
    }
    for b in &d.blocks {
        if let Some(inner) = &b.inner {
            check_direction(inner)?;
        }
    }
    Ok(())
}

/// A connection between two blocks with the best label available: the
/// first non-empty label of any arrow between them.
struct Link<'d> {
    from: &'d Block,
    to: &'d Block,
    label: Option<String>,
}

fn links(d: &BlockDiagram) -> Vec<Link<'_>> {
    let mut by_pair: BTreeMap<(String, String), Option<String>> = BTreeMap::new();
    for c in infer_connections(d) {
        let label = match &c.origin {
            ConnectionOrigin::Explicit(id) => d
                .arrows
                .iter()
                .find(|a| &a.id == id)
                .map(|a| a.label.trim().to_string())
                .filter(|l| !l.is_empty()),
            ConnectionOrigin::Implicit(_) => None,
        };
        let slot = by_pair.entry((c.from_block, c.to_block)).or_default();
        if slot.is_none() {
            *slot = label;
        }
    }
    by_pair
        .into_iter()
        .filter_map(|((f, t), label)| {
            Some(Link {
                from: d.block(&f)?,
                to: d.block(&t)?,
                label,
            })
        })
        .collect()
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

fn flag(b: &Block, key: &str) -> bool {
    b.property(key).is_some_and(|v| v.eq_ignore_ascii_case("true"))
}

struct Translator<'n> {
    notation: &'n NotationDefinition,
    out: Vec<Violation>,
}

impl Translator<'_> {
    /// Block id to construct id. A kind with no or several constructs has
    /// no single meaning and is reported.
    fn resolve(&mut self, blocks: &[Block], owner: Option<&str>) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        for b in blocks {
            match self.notation.constructs_of(&b.kind_ref).as_slice() {
                [one] => {
                    map.insert(b.id.clone(), one.to_string());
                }
                _ => {
                    let v = Violation::error(
                        ViolationCode::AmbiguousConstruct,
                        format!("kind '{}' does not map to exactly one construct", b.kind_ref),
                    )
                    .at(b.id.clone());
                    self.out.push(match owner {
                        Some(o) => v.in_subject(o),
                        None => v,
                    });
                }
            }
        }
        map
    }

    fn layer1(&mut self, d: &BlockDiagram, id: &str) -> ModelParts {
        let constructs = self.resolve(&d.blocks, None);
        let is = |b: &Block, c: &str| constructs.get(&b.id).map(String::as_str) == Some(c);
        let subject_construct = |b: &Block| {
            [sbpm::SUBJECT, sbpm::MULTI_SUBJECT, sbpm::EXTERNAL_SUBJECT]
                .into_iter()
                .find(|c| is(b, c))
        };

        let mut subjects = Vec::new();
        for b in &d.blocks {
            let Some(c) = subject_construct(b) else { continue };
            let kind = match c {
                sbpm::MULTI_SUBJECT => SubjectKind::Multi,
                sbpm::EXTERNAL_SUBJECT => SubjectKind::External,
                _ => SubjectKind::Standard,
            };
            let multiplicity = match (kind, b.property("multiplicity")) {
                (SubjectKind::Multi, Some(m)) => match m.trim().parse::<u32>() {
                    Ok(m) => m,
                    Err(_) => {
                        self.out.push(
                            Violation::error(ViolationCode::BadProperty, format!("multiplicity '{m}' is not a number"))
                                .at(b.id.clone()),
                        );
                        1
                    }
                },
                _ => 1,
            };
            let behavior = match (&b.inner, kind) {
                (Some(inner), _) => Some(self.layer2(inner, &b.id)),
                (None, SubjectKind::External) => None,
                (None, _) => Some(Behavior::default()),
            };
            subjects.push(Subject {
                id: b.id.clone(),
                name: b.label.clone(),
                kind,
                behavior,
                multiplicity_default: multiplicity,
            });
        }
        for b in &d.blocks {
            if subject_construct(b).is_none() && b.inner.is_some() {
                self.out.push(
                    Violation::error(ViolationCode::MisplacedBlock, "only subject blocks may contain a behavior")
                        .at(b.id.clone()),
                );
            }
        }

        let links = links(d);
        let mut channels: Vec<Channel> = Vec::new();
        let mut schemas: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut add_message = |t: &mut Self, id: &str, fields: Vec<String>, at: &str| match schemas.get(id) {
            Some(existing) if *existing != fields => t.out.push(
                Violation::error(ViolationCode::BadProperty, format!("message '{id}' has conflicting payload fields"))
                    .at(at.to_string()),
            ),
            Some(_) => {}
            None => {
                schemas.insert(id.to_string(), fields);
            }
        };

        for l in &links {
            if subject_construct(l.from).is_some() && subject_construct(l.to).is_some() {
                let messages = l.label.as_deref().map(split_list).unwrap_or_default();
                if messages.is_empty() {
                    self.out.push(
                        Violation::error(
                            ViolationCode::UnlabeledChannel,
                            format!("connection '{}' -> '{}' does not name any message", l.from.id, l.to.id),
                        )
                        .at(l.from.id.clone()),
                    );
                    continue;
                }
                for m in &messages {
                    add_message(self, m, Vec::new(), &l.from.id);
                }
                channels.push(Channel::new(l.from.id.clone(), l.to.id.clone(), messages));
            }
        }

        for b in d.blocks.iter().filter(|b| is(b, sbpm::CHANNEL)) {
            let senders: Vec<&Block> = links
                .iter()
                .filter(|l| l.to.id == b.id && subject_construct(l.from).is_some())
                .map(|l| l.from)
                .collect();
            let receivers: Vec<&Block> = links
                .iter()
                .filter(|l| l.from.id == b.id && subject_construct(l.to).is_some())
                .map(|l| l.to)
                .collect();
            if senders.is_empty() || receivers.is_empty() {
                self.out.push(
                    Violation::error(ViolationCode::DanglingConnector, "channel block needs a sender and a receiver")
                        .at(b.id.clone()),
                );
                continue;
            }
            let messages: Vec<String> = if b.properties.is_empty() {
                let ids = split_list(&b.label);
                for m in &ids {
                    add_message(self, m, Vec::new(), &b.id);
                }
                ids
            } else {
                b.properties
                    .iter()
                    .map(|(k, v)| {
                        add_message(self, k, split_list(v), &b.id);
                        k.clone()
                    })
                    .collect()
            };
            if messages.is_empty() {
                self.out.push(
                    Violation::error(ViolationCode::UnlabeledChannel, "channel block does not name any message").at(b.id.clone()),
                );
                continue;
            }
            for s in &senders {
                for r in &receivers {
                    channels.push(Channel::new(s.id.clone(), r.id.clone(), messages.clone()));
                }
            }
        }

        // Parallel channels between the same pair merge into one.
        let mut merged: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
        for c in channels {
            merged.entry((c.from_subject, c.to_subject)).or_default().extend(c.message_ids);
        }
        ModelParts {
            id: id.to_string(),
            name: id.to_string(),
            subjects,
            channels: merged
                .into_iter()
                .map(|((f, t), m)| Channel::new(f, t, m))
                .collect(),
            messages: schemas
                .into_iter()
                .map(|(id, fields)| MessageType::new(id).with_fields(fields))
                .collect(),
        }
    }

    fn layer2(&mut self, d: &BlockDiagram, owner: &str) -> Behavior {
        let constructs = self.resolve(&d.blocks, Some(owner));
        let c_of = |b: &Block| constructs.get(&b.id).map(String::as_str);
        let is_state = |b: &Block| matches!(c_of(b), Some(sbpm::SEND | sbpm::RECEIVE | sbpm::ACTION));
        let err = |code, msg: String, at: &str| Violation::error(code, msg).in_subject(owner).at(at.to_string());

        let mut states: Vec<State> = Vec::new();
        for b in d.blocks.iter().filter(|b| is_state(b)) {
            let kind = match c_of(b) {
                Some(sbpm::SEND) => {
                    let to = b.property("to");
                    let message = b.property("message");
                    if to.is_none() || message.is_none() {
                        self.out.push(err(
                            ViolationCode::MissingProperty,
                            "send block needs 'to' and 'message' properties".into(),
                            &b.id,
                        ));
                    }
                    StateKind::Send {
                        target: to.unwrap_or_default().trim().to_string(),
                        message: message.unwrap_or_default().trim().to_string(),
                    }
                }
                Some(sbpm::RECEIVE) => {
                    let mut branches = Vec::new();
                    for (k, v) in b.properties.iter().filter(|(k, _)| k.starts_with("branch")) {
                        match v.split_once('/') {
                            Some((s, m)) => branches.push(ReceiveBranch::new(s.trim(), m.trim())),
                            None => self.out.push(err(
                                ViolationCode::BadProperty,
                                format!("receive branch '{k}' must read 'source/message', got '{v}'"),
                                &b.id,
                            )),
                        }
                    }
                    StateKind::Receive { branches }
                }
                _ => StateKind::Action {
                    outcomes: match b.property("outcomes") {
                        Some(o) => split_list(o),
                        None => vec!["done".to_string()],
                    },
                },
            };
            states.push(State {
                id: b.id.clone(),
                label: b.label.clone(),
                kind,
                is_start: flag(b, "start"),
                is_end: flag(b, "end"),
            });
        }

        let links = links(d);
        let ids: Vec<String> = states.iter().map(|s| s.id.clone()).collect();
        let state_index = |id: &str| ids.iter().position(|s| s == id);

        // Flags mark whatever state they touch, in either direction.
        for b in d.blocks.iter().filter(|b| matches!(c_of(b), Some(sbpm::START_FLAG | sbpm::END_FLAG))) {
            let touched: Vec<usize> = links
                .iter()
                .filter_map(|l| {
                    if l.from.id == b.id {
                        state_index(&l.to.id)
                    } else if l.to.id == b.id {
                        state_index(&l.from.id)
                    } else {
                        None
                    }
                })
                .collect();
            if touched.is_empty() {
                self.out.push(err(ViolationCode::DanglingConnector, "flag is not attached to a state".into(), &b.id));
            }
            for i in touched {
                if c_of(b) == Some(sbpm::START_FLAG) {
                    states[i].is_start = true;
                } else {
                    states[i].is_end = true;
                }
            }
        }

        let mut transitions = Vec::new();
        for l in &links {
            if is_state(l.from) && is_state(l.to) {
                let id = format!("{}->{}", l.from.id, l.to.id);
                let source = &states[state_index(&l.from.id).unwrap()];
                if let Some(t) = self.transition(source, &id, &l.to.id, l.label.clone(), None, owner) {
                    transitions.push(t);
                }
            }
        }
        for b in d
            .blocks
            .iter()
            .filter(|b| matches!(c_of(b), Some(sbpm::TRANSITION | sbpm::TIMEOUT_TRANSITION)))
        {
            let ins: Vec<&Link> = links.iter().filter(|l| l.to.id == b.id && is_state(l.from)).collect();
            let outs: Vec<&Link> = links.iter().filter(|l| l.from.id == b.id && is_state(l.to)).collect();
            let (from, to) = match (ins.as_slice(), outs.as_slice()) {
                ([i], [o]) => (i, o),
                _ => {
                    self.out.push(err(
                        ViolationCode::DanglingConnector,
                        format!("transition block has {} incoming and {} outgoing state(s), expected one each", ins.len(), outs.len()),
                        &b.id,
                    ));
                    continue;
                }
            };
            let duration = if c_of(b) == Some(sbpm::TIMEOUT_TRANSITION) {
                match b.property("duration").map(|v| v.trim().parse::<u64>()) {
                    Some(Ok(v)) => Some(v),
                    Some(Err(_)) => {
                        self.out.push(err(ViolationCode::BadProperty, "duration must be a whole number".into(), &b.id));
                        continue;
                    }
                    None => {
                        self.out.push(err(ViolationCode::MissingProperty, "timeout transition needs 'duration'".into(), &b.id));
                        continue;
                    }
                }
            } else {
                None
            };
            let guard = b
                .property("guard")
                .map(|g| g.trim().to_string())
                .or_else(|| from.label.clone())
                .or_else(|| to.label.clone());
            let source = &states[state_index(&from.from.id).unwrap()];
            if let Some(t) = self.transition(source, &b.id, &to.to.id, guard, duration, owner) {
                transitions.push(t);
            }
        }
        Behavior::new(states, transitions)
    }

    fn transition(
        &mut self,
        source: &State,
        id: &str,
        to: &str,
        label: Option<String>,
        timeout: Option<u64>,
        owner: &str,
    ) -> Option<Transition> {
        if let Some(duration) = timeout {
            return Some(Transition::timeout(id, source.id.clone(), to, duration));
        }
        let single = match &source.kind {
            StateKind::Send { .. } => return Some(Transition::normal(id, source.id.clone(), to)),
            StateKind::Receive { branches } if branches.len() == 1 => Some(branches[0].label()),
            StateKind::Action { outcomes } if outcomes.len() == 1 => Some(outcomes[0].clone()),
            _ => None,
        };
        match label.or(single) {
            Some(g) => Some(Transition::guarded(id, source.id.clone(), to, g)),
            None => {
                self.out.push(
                    Violation::error(
                        ViolationCode::UnlabeledBranch,
                        format!("transition from '{}' needs a label naming its branch or outcome", source.id),
                    )
                    .in_subject(owner)
                    .at(id.to_string()),
                );
                None
            }
        }
    }
}
