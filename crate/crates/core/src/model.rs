//! Subject-oriented process models.
//!
//! A [`ProcessModel`] is the interaction view (subjects, unidirectional
//! channels, message types) together with one [`Behavior`] per subject that
//! has known internals. Models are only obtainable through [`build_model`],
//! which enforces the interaction-level invariants and canonicalizes element
//! order. Behavior shape is checked separately by [`well_formed`] and the
//! send/receive interface by [`interface_consistency`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::violation::{canonical, Violation, ViolationCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SubjectKind {
    Standard,
    Multi,
    External,
}

impl SubjectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SubjectKind::Standard => "standard",
            SubjectKind::Multi => "multi",
            SubjectKind::External => "external",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "standard" => Some(SubjectKind::Standard),
            "multi" => Some(SubjectKind::Multi),
            "external" => Some(SubjectKind::External),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub name: String,
    pub kind: SubjectKind,
    pub behavior: Option<Behavior>,
    /// Number of agents a Multi subject fans out to unless overridden at
    /// instantiation. Always 1 for other kinds.
    pub multiplicity_default: u32,
}

impl Subject {
    pub fn standard(id: impl Into<String>, behavior: Behavior) -> Self {
        let id = id.into();
        Subject {
            name: id.clone(),
            id,
            kind: SubjectKind::Standard,
            behavior: Some(behavior),
            multiplicity_default: 1,
        }
    }

    pub fn multi(id: impl Into<String>, behavior: Behavior, multiplicity: u32) -> Self {
        Subject {
            kind: SubjectKind::Multi,
            multiplicity_default: multiplicity,
            ..Subject::standard(id, behavior)
        }
    }

    pub fn external(id: impl Into<String>) -> Self {
        let id = id.into();
        Subject {
            name: id.clone(),
            id,
            kind: SubjectKind::External,
            behavior: None,
            multiplicity_default: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub from_subject: String,
    pub to_subject: String,
    pub message_ids: BTreeSet<String>,
}

impl Channel {
    pub fn new<I, S>(from: impl Into<String>, to: impl Into<String>, messages: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Channel {
            from_subject: from.into(),
            to_subject: to.into(),
            message_ids: messages.into_iter().map(Into::into).collect(),
        }
    }

    pub fn carries(&self, from: &str, to: &str, message: &str) -> bool {
        self.from_subject == from && self.to_subject == to && self.message_ids.contains(message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageType {
    pub id: String,
    pub name: String,
    pub payload_schema: Vec<String>,
}

impl MessageType {
    pub fn new(id: impl Into<String>) -> Self {
        let id = id.into();
        MessageType {
            name: id.clone(),
            id,
            payload_schema: Vec::new(),
        }
    }

    pub fn with_fields<I, S>(mut self, fields: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.payload_schema = fields.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReceiveBranch {
    pub source: String,
    pub message: String,
}

impl ReceiveBranch {
    pub fn new(source: impl Into<String>, message: impl Into<String>) -> Self {
        ReceiveBranch {
            source: source.into(),
            message: message.into(),
        }
    }

    /// Guard label a normal transition must carry to leave by this branch.
    pub fn label(&self) -> String {
        format!("{}/{}", self.source, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StateKind {
    Send { target: String, message: String },
    Receive { branches: Vec<ReceiveBranch> },
    Action { outcomes: Vec<String> },
}

impl StateKind {
    pub fn name(&self) -> &'static str {
        match self {
            StateKind::Send { .. } => "send",
            StateKind::Receive { .. } => "receive",
            StateKind::Action { .. } => "action",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub id: String,
    pub label: String,
    pub kind: StateKind,
    pub is_start: bool,
    pub is_end: bool,
}

impl State {
    fn new(id: impl Into<String>, kind: StateKind) -> Self {
        let id = id.into();
        State {
            label: id.clone(),
            id,
            kind,
            is_start: false,
            is_end: false,
        }
    }

    pub fn send(id: impl Into<String>, target: impl Into<String>, message: impl Into<String>) -> Self {
        State::new(
            id,
            StateKind::Send {
                target: target.into(),
                message: message.into(),
            },
        )
    }

    pub fn receive<I>(id: impl Into<String>, branches: I) -> Self
    where
        I: IntoIterator<Item = ReceiveBranch>,
    {
        State::new(
            id,
            StateKind::Receive {
                branches: branches.into_iter().collect(),
            },
        )
    }

    pub fn receive_one(id: impl Into<String>, source: impl Into<String>, message: impl Into<String>) -> Self {
        State::receive(id, [ReceiveBranch::new(source, message)])
    }

    pub fn action<I, S>(id: impl Into<String>, outcomes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        State::new(
            id,
            StateKind::Action {
                outcomes: outcomes.into_iter().map(Into::into).collect(),
            },
        )
    }

    /// A terminal state. End states are never executed, so the kind is a
    /// placeholder action.
    pub fn end(id: impl Into<String>) -> Self {
        State::action(id, ["done"]).as_end()
    }

    pub fn as_start(mut self) -> Self {
        self.is_start = true;
        self
    }

    pub fn as_end(mut self) -> Self {
        self.is_end = true;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TransitionKind {
    Normal { guard: Option<String> },
    /// Fires after `duration` logical time units spent waiting in a receive
    /// state.
    Timeout { duration: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub id: String,
    pub from_state: String,
    pub to_state: String,
    pub kind: TransitionKind,
}

impl Transition {
    pub fn normal(id: impl Into<String>, from: impl Into<String>, to: impl Into<String>) -> Self {
        Transition {
            id: id.into(),
            from_state: from.into(),
            to_state: to.into(),
            kind: TransitionKind::Normal { guard: None },
        }
    }

    pub fn guarded(
        id: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
        guard: impl Into<String>,
    ) -> Self {
        Transition {
            kind: TransitionKind::Normal {
                guard: Some(guard.into()),
            },
            ..Transition::normal(id, from, to)
        }
    }

    pub fn timeout(id: impl Into<String>, from: impl Into<String>, to: impl Into<String>, duration: u64) -> Self {
        Transition {
            kind: TransitionKind::Timeout { duration },
            ..Transition::normal(id, from, to)
        }
    }

    pub fn guard(&self) -> Option<&str> {
        match &self.kind {
            TransitionKind::Normal { guard } => guard.as_deref(),
            TransitionKind::Timeout { .. } => None,
        }
    }

    pub fn is_timeout(&self) -> bool {
        matches!(self.kind, TransitionKind::Timeout { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Behavior {
    pub states: Vec<State>,
    pub transitions: Vec<Transition>,
}

impl Behavior {
    pub fn new(states: Vec<State>, transitions: Vec<Transition>) -> Self {
        Behavior { states, transitions }
    }

    pub fn state(&self, id: &str) -> Option<&State> {
        self.states.iter().find(|s| s.id == id)
    }

    pub fn start_state(&self) -> Option<&State> {
        self.states.iter().find(|s| s.is_start)
    }

    pub fn outgoing<'a, 's>(&'a self, state: &'s str) -> impl Iterator<Item = &'a Transition> + use<'a, 's> {
        self.transitions.iter().filter(move |t| t.from_state == state)
    }

    pub fn timeout_of(&self, state: &str) -> Option<&Transition> {
        self.outgoing(state).find(|t| t.is_timeout())
    }

    /// The normal transition taken when leaving `state` under `guard`.
    /// A send state's single transition matches any guard.
    pub fn normal_exit(&self, state: &str, guard: Option<&str>) -> Option<&Transition> {
        let mut normals = self.outgoing(state).filter(|t| !t.is_timeout());
        match guard {
            None => normals.next(),
            Some(g) => normals.find(|t| t.guard() == Some(g)),
        }
    }

    fn sort(&mut self) {
        self.states.sort_by(|a, b| a.id.cmp(&b.id));
        self.transitions.sort_by(|a, b| a.id.cmp(&b.id));
    }
}

/// The plain parts of a model, before validation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelParts {
    pub id: String,
    pub name: String,
    pub subjects: Vec<Subject>,
    pub channels: Vec<Channel>,
    pub messages: Vec<MessageType>,
}

/// A validated process model. Element lists are kept sorted by id (channels
/// by endpoint pair) so structurally equal models compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ModelParts", into = "ModelParts")]
pub struct ProcessModel {
    id: String,
    name: String,
    subjects: Vec<Subject>,
    channels: Vec<Channel>,
    messages: Vec<MessageType>,
}

impl ProcessModel {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn messages(&self) -> &[MessageType] {
        &self.messages
    }

    pub fn subject(&self, id: &str) -> Option<&Subject> {
        self.subjects
            .binary_search_by(|s| s.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.subjects[i])
    }

    pub fn message(&self, id: &str) -> Option<&MessageType> {
        self.messages
            .binary_search_by(|m| m.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.messages[i])
    }

    pub fn has_channel(&self, from: &str, to: &str, message: &str) -> bool {
        self.channels.iter().any(|c| c.carries(from, to, message))
    }

    pub fn into_parts(self) -> ModelParts {
        ModelParts {
            id: self.id,
            name: self.name,
            subjects: self.subjects,
            channels: self.channels,
            messages: self.messages,
        }
    }

    pub fn empty(id: impl Into<String>) -> Self {
        let id = id.into();
        ProcessModel {
            name: id.clone(),
            id,
            subjects: Vec::new(),
            channels: Vec::new(),
            messages: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("model has {} violation(s)", .0.len())]
pub struct BuildError(pub Vec<Violation>);

impl TryFrom<ModelParts> for ProcessModel {
    type Error = BuildError;

    fn try_from(parts: ModelParts) -> Result<Self, Self::Error> {
        build_model(parts).map_err(BuildError)
    }
}

impl From<ProcessModel> for ModelParts {
    fn from(model: ProcessModel) -> Self {
        model.into_parts()
    }
}

impl fmt::Display for ProcessModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} subjects, {} channels, {} messages)",
            self.id,
            self.subjects.len(),
            self.channels.len(),
            self.messages.len()
        )
    }
}

fn duplicates<'a, I>(ids: I) -> Vec<&'a str>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut seen = BTreeSet::new();
    let mut dup = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            dup.insert(id);
        }
    }
    dup.into_iter().collect()
}

/// Validates the interaction-level invariants and returns a canonical model,
/// or every violation found. Behavior internals are not inspected here.
pub fn build_model(parts: ModelParts) -> Result<ProcessModel, Vec<Violation>> {
    let mut v = Vec::new();
    let ModelParts {
        id,
        name,
        mut subjects,
        channels,
        mut messages,
    } = parts;

    if id.is_empty() {
        v.push(Violation::error(ViolationCode::EmptyId, "model id is empty"));
    }
    for s in &subjects {
        if s.id.is_empty() {
            v.push(Violation::error(ViolationCode::EmptyId, "subject id is empty"));
        }
    }
    for m in &messages {
        if m.id.is_empty() {
            v.push(Violation::error(ViolationCode::EmptyId, "message id is empty"));
        }
    }
    for d in duplicates(subjects.iter().map(|s| s.id.as_str())) {
        v.push(Violation::error(ViolationCode::DuplicateId, format!("subject id '{d}' is not unique")).at(d));
    }
    for d in duplicates(messages.iter().map(|m| m.id.as_str())) {
        v.push(Violation::error(ViolationCode::DuplicateId, format!("message id '{d}' is not unique")).at(d));
    }

    for m in &messages {
        for k in duplicates(m.payload_schema.iter().map(String::as_str)) {
            v.push(
                Violation::error(
                    ViolationCode::DuplicatePayloadKey,
                    format!("payload key '{k}' repeated in message '{}'", m.id),
                )
                .at(m.id.clone()),
            );
        }
    }

    for s in &subjects {
        match (s.kind, &s.behavior) {
            (SubjectKind::External, Some(_)) => v.push(
                Violation::error(
                    ViolationCode::ExternalWithBehavior,
                    format!("external subject '{}' must not define a behavior", s.id),
                )
                .in_subject(s.id.clone()),
            ),
            (SubjectKind::Standard | SubjectKind::Multi, None) => v.push(
                Violation::error(
                    ViolationCode::MissingBehavior,
                    format!("subject '{}' has no behavior", s.id),
                )
                .in_subject(s.id.clone()),
            ),
            _ => {}
        }
        if s.kind == SubjectKind::Multi && s.multiplicity_default < 1 {
            v.push(
                Violation::error(
                    ViolationCode::BadMultiplicity,
                    format!("multi subject '{}' needs a multiplicity of at least 1", s.id),
                )
                .in_subject(s.id.clone()),
            );
        }
    }

    let subject_ids: BTreeSet<&str> = subjects.iter().map(|s| s.id.as_str()).collect();
    let message_ids: BTreeSet<&str> = messages.iter().map(|m| m.id.as_str()).collect();
    let mut triples = BTreeSet::new();
    for c in &channels {
        let label = format!("{}->{}", c.from_subject, c.to_subject);
        for end in [&c.from_subject, &c.to_subject] {
            if !subject_ids.contains(end.as_str()) {
                v.push(
                    Violation::error(
                        ViolationCode::DanglingReference,
                        format!("channel {label} references unknown subject '{end}'"),
                    )
                    .at(label.clone()),
                );
            }
        }
        if c.from_subject == c.to_subject {
            v.push(
                Violation::error(ViolationCode::SelfChannel, format!("channel {label} connects a subject to itself"))
                    .at(label.clone()),
            );
        }
        if c.message_ids.is_empty() {
            v.push(Violation::error(ViolationCode::EmptyChannel, format!("channel {label} carries no messages")).at(label.clone()));
        }
        for m in &c.message_ids {
            if !message_ids.contains(m.as_str()) {
                v.push(
                    Violation::error(
                        ViolationCode::DanglingReference,
                        format!("channel {label} references unknown message '{m}'"),
                    )
                    .at(label.clone()),
                );
            }
            if !triples.insert((c.from_subject.as_str(), c.to_subject.as_str(), m.as_str())) {
                v.push(
                    Violation::error(
                        ViolationCode::DuplicateChannel,
                        format!("message '{m}' declared twice on {label}"),
                    )
                    .at(label.clone()),
                );
            }
        }
    }

    if !v.is_empty() {
        return Err(canonical(v));
    }

    subjects.sort_by(|a, b| a.id.cmp(&b.id));
    for s in &mut subjects {
        if s.kind != SubjectKind::Multi {
            s.multiplicity_default = 1;
        }
        if let Some(b) = &mut s.behavior {
            b.sort();
        }
    }
    messages.sort_by(|a, b| a.id.cmp(&b.id));

    // Channels with the same endpoints are merged into one.
    let mut merged: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
    for c in channels {
        merged
            .entry((c.from_subject, c.to_subject))
            .or_default()
            .extend(c.message_ids);
    }
    let channels = merged
        .into_iter()
        .map(|((from_subject, to_subject), message_ids)| Channel {
            from_subject,
            to_subject,
            message_ids,
        })
        .collect();

    Ok(ProcessModel {
        id,
        name,
        subjects,
        channels,
        messages,
    })
}

/// Checks every behavior for start/end flags, reference resolution and
/// transition shape. Empty iff all behaviors are well formed.
pub fn well_formed(model: &ProcessModel) -> Vec<Violation> {
    let mut out = Vec::new();
    for subject in &model.subjects {
        if let Some(b) = &subject.behavior {
            check_behavior(model, subject, b, &mut out);
        }
    }
    canonical(out)
}

fn check_behavior(model: &ProcessModel, subject: &Subject, b: &Behavior, out: &mut Vec<Violation>) {
    let sid = subject.id.as_str();
    let err = |code, msg: String| Violation::error(code, msg).in_subject(sid);

    for d in duplicates(b.states.iter().map(|s| s.id.as_str())) {
        out.push(err(ViolationCode::DuplicateId, format!("state id '{d}' is not unique")).at(d));
    }
    for d in duplicates(b.transitions.iter().map(|t| t.id.as_str())) {
        out.push(err(ViolationCode::DuplicateId, format!("transition id '{d}' is not unique")).at(d));
    }
    for s in &b.states {
        if s.id.is_empty() {
            out.push(err(ViolationCode::EmptyId, "state id is empty".into()));
        }
    }

    let starts: Vec<&State> = b.states.iter().filter(|s| s.is_start).collect();
    match starts.len() {
        0 => out.push(err(ViolationCode::MissingStart, format!("behavior of '{sid}' has no start state"))),
        1 => {}
        _ => {
            for s in &starts[1..] {
                out.push(
                    err(
                        ViolationCode::MultipleStart,
                        format!("'{}' is an additional start state", s.id),
                    )
                    .at(s.id.clone()),
                );
            }
        }
    }
    if !b.states.iter().any(|s| s.is_end) {
        out.push(err(ViolationCode::MissingEnd, format!("behavior of '{sid}' has no end state")));
    }

    for s in &b.states {
        match &s.kind {
            StateKind::Send { target, message } => {
                if model.subject(target).is_none() {
                    out.push(
                        err(ViolationCode::DanglingReference, format!("send targets unknown subject '{target}'"))
                            .at(s.id.clone()),
                    );
                }
                if model.message(message).is_none() {
                    out.push(
                        err(ViolationCode::DanglingReference, format!("send uses unknown message '{message}'"))
                            .at(s.id.clone()),
                    );
                }
            }
            StateKind::Receive { branches } => {
                if branches.is_empty() {
                    out.push(err(ViolationCode::EmptyReceive, "receive state has no branches".into()).at(s.id.clone()));
                }
                let labels: Vec<String> = branches.iter().map(ReceiveBranch::label).collect();
                for d in duplicates(labels.iter().map(String::as_str)) {
                    out.push(err(ViolationCode::DuplicateBranch, format!("branch '{d}' repeated")).at(s.id.clone()));
                }
                for br in branches {
                    if model.subject(&br.source).is_none() {
                        out.push(
                            err(
                                ViolationCode::DanglingReference,
                                format!("receive expects unknown subject '{}'", br.source),
                            )
                            .at(s.id.clone()),
                        );
                    }
                    if model.message(&br.message).is_none() {
                        out.push(
                            err(
                                ViolationCode::DanglingReference,
                                format!("receive expects unknown message '{}'", br.message),
                            )
                            .at(s.id.clone()),
                        );
                    }
                }
            }
            StateKind::Action { outcomes } => {
                if outcomes.is_empty() {
                    out.push(err(ViolationCode::EmptyAction, "action state has no outcomes".into()).at(s.id.clone()));
                }
                for d in duplicates(outcomes.iter().map(String::as_str)) {
                    out.push(err(ViolationCode::DuplicateOutcome, format!("outcome '{d}' repeated")).at(s.id.clone()));
                }
            }
        }
    }

    let state_ids: BTreeSet<&str> = b.states.iter().map(|s| s.id.as_str()).collect();
    for t in &b.transitions {
        for end in [&t.from_state, &t.to_state] {
            if !state_ids.contains(end.as_str()) {
                out.push(
                    err(
                        ViolationCode::DanglingReference,
                        format!("transition references unknown state '{end}'"),
                    )
                    .at(t.id.clone()),
                );
            }
        }
    }

    for s in &b.states {
        let outgoing: Vec<&Transition> = b.outgoing(&s.id).collect();
        let timeouts: Vec<&&Transition> = outgoing.iter().filter(|t| t.is_timeout()).collect();
        if s.is_end {
            for t in &outgoing {
                out.push(
                    err(
                        ViolationCode::EndHasOutgoing,
                        format!("end state '{}' has outgoing transition '{}'", s.id, t.id),
                    )
                    .at(t.id.clone()),
                );
            }
            continue;
        }
        let is_receive = matches!(s.kind, StateKind::Receive { .. });
        if !is_receive {
            for t in &timeouts {
                out.push(
                    err(
                        ViolationCode::TimeoutNotFromReceive,
                        format!("timeout leaves non-receive state '{}'", s.id),
                    )
                    .at(t.id.clone()),
                );
            }
        } else if timeouts.len() > 1 {
            out.push(
                err(
                    ViolationCode::MultipleTimeouts,
                    format!("receive state '{}' has {} timeouts", s.id, timeouts.len()),
                )
                .at(s.id.clone()),
            );
        }

        let normals: Vec<&&Transition> = outgoing.iter().filter(|t| !t.is_timeout()).collect();
        let shape = |msg: String| err(ViolationCode::TransitionShape, msg).at(s.id.clone());
        match &s.kind {
            StateKind::Send { .. } => {
                if normals.len() != 1 {
                    out.push(shape(format!(
                        "send state needs exactly one normal transition, found {}",
                        normals.len()
                    )));
                }
            }
            StateKind::Receive { branches } => {
                let labels: Vec<String> = branches.iter().map(ReceiveBranch::label).collect();
                check_labeled_exits(&labels, &normals, "branch", &shape, out);
            }
            StateKind::Action { outcomes } => {
                check_labeled_exits(outcomes, &normals, "outcome", &shape, out);
            }
        }
    }
}

fn check_labeled_exits(
    labels: &[String],
    normals: &[&&Transition],
    what: &str,
    shape: &dyn Fn(String) -> Violation,
    out: &mut Vec<Violation>,
) {
    for label in labels {
        let n = normals.iter().filter(|t| t.guard() == Some(label.as_str())).count();
        if n != 1 {
            out.push(shape(format!("{what} '{label}' needs exactly one transition, found {n}")));
        }
    }
    for t in normals {
        let matches = t.guard().is_some_and(|g| labels.iter().any(|l| l == g));
        if !matches {
            out.push(shape(format!(
                "transition '{}' has guard {:?} that names no {what}",
                t.id,
                t.guard()
            )));
        }
    }
}

/// Cross-checks sends and receives against declared channels. Unused
/// channels are reported as warnings.
pub fn interface_consistency(model: &ProcessModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut used: BTreeSet<(&str, &str, &str)> = BTreeSet::new();
    for subject in &model.subjects {
        let Some(b) = &subject.behavior else { continue };
        for s in &b.states {
            match &s.kind {
                StateKind::Send { target, message } => {
                    used.insert((subject.id.as_str(), target.as_str(), message.as_str()));
                    if !model.has_channel(&subject.id, target, message) {
                        out.push(
                            Violation::error(
                                ViolationCode::UnmatchedSend,
                                format!("no channel {}->{target} carries '{message}'", subject.id),
                            )
                            .in_subject(subject.id.clone())
                            .at(s.id.clone()),
                        );
                    }
                }
                StateKind::Receive { branches } => {
                    for br in branches {
                        if !model.has_channel(&br.source, &subject.id, &br.message) {
                            out.push(
                                Violation::error(
                                    ViolationCode::UnmatchedReceive,
                                    format!("no channel {}->{} carries '{}'", br.source, subject.id, br.message),
                                )
                                .in_subject(subject.id.clone())
                                .at(s.id.clone()),
                            );
                        }
                    }
                }
                StateKind::Action { .. } => {}
            }
        }
    }
    for c in &model.channels {
        // Channels out of external subjects are used by injection, not sends.
        let external = model
            .subject(&c.from_subject)
            .is_some_and(|s| s.kind == SubjectKind::External);
        if external {
            continue;
        }
        for m in &c.message_ids {
            if !used.contains(&(c.from_subject.as_str(), c.to_subject.as_str(), m.as_str())) {
                out.push(
                    Violation::warning(
                        ViolationCode::UnusedChannel,
                        format!("no send uses '{m}' on {}->{}", c.from_subject, c.to_subject),
                    )
                    .in_subject(c.from_subject.clone())
                    .at(format!("{}->{}", c.from_subject, c.to_subject)),
                );
            }
        }
    }
    canonical(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown subject '{0}'")]
    UnknownSubject(String),
    #[error("external subject '{0}' has no behavior")]
    ExternalHasNoBehavior(String),
}

/// The behavior view of one subject.
pub fn drill_down<'m>(model: &'m ProcessModel, subject: &str) -> Result<&'m Behavior, ModelError> {
    let s = model
        .subject(subject)
        .ok_or_else(|| ModelError::UnknownSubject(subject.to_string()))?;
    match (&s.behavior, s.kind) {
        (Some(b), _) => Ok(b),
        (None, SubjectKind::External) => Err(ModelError::ExternalHasNoBehavior(subject.to_string())),
        // build_model guarantees non-external subjects have a behavior.
        (None, _) => unreachable!("subject '{subject}' without behavior passed build_model"),
    }
}
