//! Deterministic execution of a process model as communicating agents.
//!
//! Every non-external subject is instantiated as one agent (or one agent per
//! replica for multi subjects). Agents own a FIFO mailbox and advance one at a
//! time under a [`SchedulerConfig`]; each scheduler step appends exactly one
//! [`TraceEvent`]. Time is logical: it only moves when nothing is ready and
//! some agent waits on a timeout.
//!
//! Receives are selective per sender: for every sending agent only its oldest
//! pending message is eligible, and the earliest eligible message that
//! matches a branch is consumed. This keeps delivery FIFO for every sender and
//! receiver pair without letting one sender's unrelated message block another.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    interface_consistency, well_formed, Behavior, ProcessModel, State, StateKind, Subject, SubjectKind,
};
use crate::violation::{has_errors, Violation};

pub type Payload = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SchedulerPolicy {
    RoundRobin,
    SeededRandom { seed: u64 },
}

impl SchedulerPolicy {
    fn seed(self) -> u64 {
        match self {
            SchedulerPolicy::RoundRobin => 0,
            SchedulerPolicy::SeededRandom { seed } => seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub policy: SchedulerPolicy,
    pub max_steps: u64,
    /// Fan-out per multi subject; subjects not listed use their default.
    #[serde(default)]
    pub multiplicities: BTreeMap<String, u32>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            policy: SchedulerPolicy::RoundRobin,
            max_steps: 10_000,
            multiplicities: BTreeMap::new(),
        }
    }
}

impl SchedulerConfig {
    pub fn seeded(seed: u64) -> Self {
        SchedulerConfig {
            policy: SchedulerPolicy::SeededRandom { seed },
            ..SchedulerConfig::default()
        }
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_multiplicity(mut self, subject: impl Into<String>, count: u32) -> Self {
        self.multiplicities.insert(subject.into(), count);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Status {
    Running,
    Completed,
    Deadlocked,
    StepLimit,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageInstance {
    /// Unique per instance, in send order.
    pub id: u64,
    pub message: String,
    pub from_agent: String,
    pub from_subject: String,
    pub to_agent: String,
    pub payload: Payload,
    pub send_time: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentInstance {
    pub id: String,
    pub subject: String,
    pub replica: u32,
    pub current_state: String,
    pub mailbox: VecDeque<MessageInstance>,
    pub wait_deadline: Option<u64>,
    pub variables: Payload,
    /// Set once the agent has recorded entering its end state.
    pub finished: bool,
    visits: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub msg_id: u64,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    /// `copies` is empty when the target is an external subject; such
    /// messages are recorded and dropped.
    Sent {
        message: String,
        to_subject: String,
        copies: Vec<Delivery>,
    },
    Received {
        message: String,
        msg_id: u64,
        from: String,
    },
    ActionTaken {
        outcome: String,
    },
    TimeoutFired {
        transition: String,
    },
    EnteredEnd,
    Blocked,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Sent { .. } => "Sent",
            EventKind::Received { .. } => "Received",
            EventKind::ActionTaken { .. } => "ActionTaken",
            EventKind::TimeoutFired { .. } => "TimeoutFired",
            EventKind::EnteredEnd => "EnteredEnd",
            EventKind::Blocked => "Blocked",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub time: u64,
    pub agent: String,
    /// Agent state after the event.
    pub state: String,
    pub kind: EventKind,
}

impl TraceEvent {
    /// One tab-separated record: seq, time, agent, kind, details.
    pub fn to_line(&self) -> String {
        let details = match &self.kind {
            EventKind::Sent {
                message,
                to_subject,
                copies,
            } => {
                let to: Vec<String> = copies.iter().map(|d| format!("{}:{}", d.msg_id, d.to)).collect();
                format!("message={message} to_subject={to_subject} copies={}", to.join(","))
            }
            EventKind::Received { message, msg_id, from } => {
                format!("message={message} msg_id={msg_id} from={from}")
            }
            EventKind::ActionTaken { outcome } => format!("outcome={outcome}"),
            EventKind::TimeoutFired { transition } => format!("transition={transition}"),
            EventKind::EnteredEnd | EventKind::Blocked => String::new(),
        };
        let sep = if details.is_empty() { "" } else { " " };
        format!(
            "{}\t{}\t{}\t{}\tstate={}{sep}{details}",
            self.seq,
            self.time,
            self.agent,
            self.kind.name(),
            self.state
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub model_id: String,
    pub status: Status,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }
}

/// One scheduler decision, as recorded in exploration witnesses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Move {
    pub agent: String,
    pub action: MoveAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MoveAction {
    Send,
    Receive,
    Outcome { label: String },
    Timeout,
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.action {
            MoveAction::Send => write!(f, "{} sends", self.agent),
            MoveAction::Receive => write!(f, "{} receives", self.agent),
            MoveAction::Outcome { label } => write!(f, "{} takes outcome '{label}'", self.agent),
            MoveAction::Timeout => write!(f, "{} times out", self.agent),
        }
    }
}

/// Observable global state: per agent, its state and pending messages as
/// `(sending agent, message id)` in mailbox order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlobalSnapshot {
    pub agents: Vec<AgentSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub agent: String,
    pub state: String,
    pub mailbox: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("model is not executable: {} violation(s)", .0.len())]
    ModelInvalid(Vec<Violation>),
    #[error("bad multiplicity for '{0}'")]
    BadMultiplicity(String),
    #[error("bad scheduler configuration: {0}")]
    BadConfig(String),
    #[error("no agent is ready")]
    NoReadyAgent,
    #[error("instance is not running")]
    NotRunning,
    #[error("unknown subject '{0}'")]
    UnknownSubject(String),
    #[error("subject '{0}' is not external")]
    NotExternal(String),
    #[error("no channel {from}->{to} carries '{message}'")]
    NoSuchChannel { from: String, to: String, message: String },
    #[error("payload key '{key}' is not declared by message '{message}'")]
    InvalidPayload { message: String, key: String },
    #[error("witness does not match: {0}")]
    WitnessMismatch(String),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::ModelInvalid(_) => "ModelInvalid",
            EngineError::BadMultiplicity(_) => "BadMultiplicity",
            EngineError::BadConfig(_) => "BadConfig",
            EngineError::NoReadyAgent => "NoReadyAgent",
            EngineError::NotRunning => "NotRunning",
            EngineError::UnknownSubject(_) => "UnknownSubject",
            EngineError::NotExternal(_) => "NotExternal",
            EngineError::NoSuchChannel { .. } => "NoSuchChannel",
            EngineError::InvalidPayload { .. } => "InvalidPayload",
            EngineError::WitnessMismatch(_) => "WitnessMismatch",
        }
    }
}

/// Picks an action outcome from `(seed, agent, visit)`; stable across
/// platforms and releases.
pub fn select_outcome(seed: u64, agent: &str, visit: u64, outcomes: usize) -> usize {
    debug_assert!(outcomes > 0);
    // FNV-1a over the agent id, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in agent.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h ^ seed.rotate_left(17) ^ visit.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z % outcomes as u64) as usize
}

#[derive(Debug, Clone)]
pub struct ProcessInstance {
    model: Arc<ProcessModel>,
    agents: Vec<AgentInstance>,
    clock: u64,
    config: SchedulerConfig,
    events: Vec<TraceEvent>,
    status: Status,
    steps: u64,
    cursor: usize,
    rng: ChaCha8Rng,
    next_msg: u64,
    /// Per agent, per sending agent: ids of queued messages in arrival
    /// order. Only the front of each queue can be received.
    heads: Vec<BTreeMap<String, VecDeque<u64>>>,
}

/// Creates agents for every non-external subject, all at their start
/// states, clock 0 and an empty trace.
pub fn instantiate(model: Arc<ProcessModel>, config: SchedulerConfig) -> Result<ProcessInstance, EngineError> {
    let mut violations = well_formed(&model);
    violations.extend(interface_consistency(&model));
    if has_errors(&violations) {
        violations.retain(Violation::is_error);
        return Err(EngineError::ModelInvalid(violations));
    }
    for (subject, count) in &config.multiplicities {
        let ok = *count >= 1 && model.subject(subject).is_some_and(|s| s.kind == SubjectKind::Multi);
        if !ok {
            return Err(EngineError::BadMultiplicity(subject.clone()));
        }
    }
    if config.max_steps == 0 {
        return Err(EngineError::BadConfig("max_steps must be positive".into()));
    }

    let mut agents = Vec::new();
    for s in model.subjects() {
        let Some(b) = &s.behavior else { continue };
        let start = b.start_state().expect("well-formed behavior has a start state");
        let replicas = match s.kind {
            SubjectKind::Multi => config.multiplicities.get(&s.id).copied().unwrap_or(s.multiplicity_default),
            _ => 1,
        };
        for r in 0..replicas {
            let id = if s.kind == SubjectKind::Multi {
                format!("{}#{r}", s.id)
            } else {
                s.id.clone()
            };
            let mut agent = AgentInstance {
                id,
                subject: s.id.clone(),
                replica: r,
                current_state: start.id.clone(),
                mailbox: VecDeque::new(),
                wait_deadline: None,
                variables: Payload::new(),
                finished: false,
                visits: BTreeMap::new(),
            };
            arm_timeout(&mut agent, b, 0);
            agents.push(agent);
        }
    }
    let seed = config.policy.seed();
    let heads = vec![BTreeMap::new(); agents.len()];
    let mut inst = ProcessInstance {
        model,
        agents,
        clock: 0,
        config,
        events: Vec::new(),
        status: Status::Running,
        steps: 0,
        cursor: 0,
        rng: ChaCha8Rng::seed_from_u64(seed),
        next_msg: 0,
        heads,
    };
    if inst.agents.is_empty() {
        inst.status = Status::Completed;
    }
    Ok(inst)
}

fn arm_timeout(agent: &mut AgentInstance, behavior: &Behavior, clock: u64) {
    agent.wait_deadline = behavior.timeout_of(&agent.current_state).and_then(|t| match t.kind {
        crate::model::TransitionKind::Timeout { duration } => Some(clock.saturating_add(duration)),
        _ => None,
    });
}

/// What a ready agent would do if selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Readiness {
    EnterEnd,
    Send,
    Action,
    /// Index into the mailbox of the message to consume.
    Receive(usize),
    Timeout,
}

impl ProcessInstance {
    pub fn model(&self) -> &Arc<ProcessModel> {
        &self.model
    }

    pub fn agents(&self) -> &[AgentInstance] {
        &self.agents
    }

    pub fn agent(&self, id: &str) -> Option<&AgentInstance> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn trace(&self) -> Trace {
        Trace {
            model_id: self.model.id().to_string(),
            status: self.status,
            events: self.events.clone(),
        }
    }

    pub fn snapshot(&self) -> GlobalSnapshot {
        GlobalSnapshot {
            agents: self
                .agents
                .iter()
                .map(|a| AgentSnapshot {
                    agent: a.id.clone(),
                    state: a.current_state.clone(),
                    mailbox: a
                        .mailbox
                        .iter()
                        .map(|m| (m.from_agent.clone(), m.message.clone()))
                        .collect(),
                })
                .collect(),
        }
    }

    fn subject_of(&self, agent: usize) -> &Subject {
        self.model
            .subject(&self.agents[agent].subject)
            .expect("agents are created from model subjects")
    }

    fn behavior_of(&self, agent: usize) -> &Behavior {
        self.subject_of(agent)
            .behavior
            .as_ref()
            .expect("agents only exist for subjects with behavior")
    }

    fn current_state(&self, agent: usize) -> &State {
        let a = &self.agents[agent];
        self.behavior_of(agent)
            .state(&a.current_state)
            .expect("agents only rest in declared states")
    }

    /// Index of the message a receive would consume, if any.
    fn matching_message(&self, agent: usize) -> Option<usize> {
        let StateKind::Receive { branches } = &self.current_state(agent).kind else {
            return None;
        };
        // Mailboxes are in id order, so a head's position is a binary search.
        let mailbox = &self.agents[agent].mailbox;
        self.heads[agent]
            .values()
            .filter_map(|ids| ids.front())
            .map(|id| mailbox.binary_search_by_key(id, |m| m.id).expect("queued ids are in the mailbox"))
            .filter(|&i| {
                let m = &mailbox[i];
                branches.iter().any(|b| b.source == m.from_subject && b.message == m.message)
            })
            .min()
    }

    fn readiness(&self, agent: usize) -> Option<Readiness> {
        let a = &self.agents[agent];
        if a.finished {
            return None;
        }
        let state = self.current_state(agent);
        if state.is_end {
            return Some(Readiness::EnterEnd);
        }
        match &state.kind {
            StateKind::Send { .. } => Some(Readiness::Send),
            StateKind::Action { .. } => Some(Readiness::Action),
            StateKind::Receive { .. } => match self.matching_message(agent) {
                Some(i) => Some(Readiness::Receive(i)),
                None => match a.wait_deadline {
                    Some(d) if self.clock >= d => Some(Readiness::Timeout),
                    _ => None,
                },
            },
        }
    }

    fn ready_agents(&self) -> Vec<usize> {
        (0..self.agents.len()).filter(|&i| self.readiness(i).is_some()).collect()
    }

    pub fn is_ready(&self, agent: &str) -> bool {
        self.agents
            .iter()
            .position(|a| a.id == agent)
            .is_some_and(|i| self.readiness(i).is_some())
    }

    fn all_finished(&self) -> bool {
        self.agents.iter().all(|a| a.finished)
    }

    /// True iff nothing is ready, nobody waits on a timeout, and some agent
    /// has not finished.
    pub fn detect_deadlock(&self) -> bool {
        self.ready_agents().is_empty()
            && self.agents.iter().all(|a| a.wait_deadline.is_none() || a.finished)
            && !self.all_finished()
    }

    /// Jumps the clock to the earliest pending timeout deadline. Returns the
    /// new clock, or `None` if nobody waits (the caller should check for a
    /// deadlock instead).
    pub fn advance_time(&mut self) -> Option<u64> {
        let next = self
            .agents
            .iter()
            .filter(|a| !a.finished)
            .filter_map(|a| a.wait_deadline)
            .min()?;
        self.clock = self.clock.max(next);
        Some(self.clock)
    }

    /// Runs one scheduler step: picks a ready agent by policy and executes
    /// its current activity.
    pub fn step(&mut self) -> Result<&TraceEvent, EngineError> {
        if self.status != Status::Running {
            return Err(EngineError::NotRunning);
        }
        let ready = self.ready_agents();
        if ready.is_empty() {
            return Err(EngineError::NoReadyAgent);
        }
        let chosen = match self.config.policy {
            SchedulerPolicy::RoundRobin => {
                let n = self.agents.len();
                let pick = (0..n)
                    .map(|k| (self.cursor + k) % n)
                    .find(|i| ready.contains(i))
                    .expect("ready set is non-empty");
                self.cursor = (pick + 1) % n;
                pick
            }
            SchedulerPolicy::SeededRandom { .. } => ready[self.rng.random_range(0..ready.len())],
        };
        let how = self.readiness(chosen).expect("chosen agent is ready");
        self.execute(chosen, how, None);
        self.steps += 1;
        if self.all_finished() {
            self.status = Status::Completed;
        }
        Ok(self.events.last().expect("execute appends an event"))
    }

    fn push_event(&mut self, agent: usize, kind: EventKind) {
        let seq = self.events.len() as u64;
        let a = &self.agents[agent];
        self.events.push(TraceEvent {
            seq,
            time: self.clock,
            agent: a.id.clone(),
            state: a.current_state.clone(),
            kind,
        });
    }

    fn enter(&mut self, agent: usize, behavior: &Behavior, state: String) {
        self.agents[agent].current_state = state;
        arm_timeout(&mut self.agents[agent], behavior, self.clock);
    }

    /// Executes `how` for `agent`. `outcome` forces an action outcome.
    fn execute(&mut self, agent: usize, how: Readiness, outcome: Option<String>) {
        let model = Arc::clone(&self.model);
        let behavior = model
            .subject(&self.agents[agent].subject)
            .and_then(|s| s.behavior.as_ref())
            .expect("agents only exist for subjects with behavior");
        let state = behavior
            .state(&self.agents[agent].current_state)
            .expect("agents only rest in declared states");
        match how {
            Readiness::EnterEnd => {
                self.agents[agent].finished = true;
                self.agents[agent].wait_deadline = None;
                self.push_event(agent, EventKind::EnteredEnd);
            }
            Readiness::Send => {
                let StateKind::Send { target, message } = &state.kind else {
                    unreachable!("send readiness on a non-send state")
                };
                let schema = self
                    .model
                    .message(message)
                    .map(|m| m.payload_schema.clone())
                    .unwrap_or_default();
                let payload: Payload = schema
                    .iter()
                    .filter_map(|k| self.agents[agent].variables.get(k).map(|v| (k.clone(), v.clone())))
                    .collect();
                let from_agent = self.agents[agent].id.clone();
                let from_subject = self.agents[agent].subject.clone();
                let copies = self.deliver(&from_agent, &from_subject, target, message, &payload);
                let next = behavior
                    .normal_exit(&state.id, None)
                    .expect("well-formed send has one transition")
                    .to_state
                    .clone();
                self.enter(agent, behavior, next);
                self.push_event(
                    agent,
                    EventKind::Sent {
                        message: message.clone(),
                        to_subject: target.clone(),
                        copies,
                    },
                );
            }
            Readiness::Action => {
                let StateKind::Action { outcomes } = &state.kind else {
                    unreachable!("action readiness on a non-action state")
                };
                let visit = {
                    let v = self.agents[agent].visits.entry(state.id.clone()).or_insert(0);
                    let cur = *v;
                    *v += 1;
                    cur
                };
                let chosen = match outcome {
                    Some(o) => o,
                    None if outcomes.len() == 1 => outcomes[0].clone(),
                    None => {
                        let idx = select_outcome(self.config.policy.seed(), &self.agents[agent].id, visit, outcomes.len());
                        outcomes[idx].clone()
                    }
                };
                let next = behavior
                    .normal_exit(&state.id, Some(&chosen))
                    .expect("well-formed action has a transition per outcome")
                    .to_state
                    .clone();
                self.enter(agent, behavior, next);
                self.push_event(agent, EventKind::ActionTaken { outcome: chosen });
            }
            Readiness::Receive(idx) => {
                let msg = self.agents[agent].mailbox.remove(idx).expect("index from matching_message");
                let queue = self.heads[agent].get_mut(&msg.from_agent).expect("sender is queued");
                debug_assert_eq!(queue.front(), Some(&msg.id));
                queue.pop_front();
                if queue.is_empty() {
                    self.heads[agent].remove(&msg.from_agent);
                }
                let label = format!("{}/{}", msg.from_subject, msg.message);
                for (k, v) in &msg.payload {
                    self.agents[agent].variables.insert(k.clone(), v.clone());
                }
                let next = behavior
                    .normal_exit(&state.id, Some(&label))
                    .expect("well-formed receive has a transition per branch")
                    .to_state
                    .clone();
                self.enter(agent, behavior, next);
                self.push_event(
                    agent,
                    EventKind::Received {
                        message: msg.message,
                        msg_id: msg.id,
                        from: msg.from_agent,
                    },
                );
            }
            Readiness::Timeout => {
                let t = behavior
                    .timeout_of(&state.id)
                    .expect("timeout readiness requires a timeout transition")
                    .clone();
                self.enter(agent, behavior, t.to_state.clone());
                self.push_event(agent, EventKind::TimeoutFired { transition: t.id });
            }
        }
    }

    /// Enqueues a copy of the message for every agent of `target`. External
    /// targets receive nothing.
    fn deliver(&mut self, from_agent: &str, from_subject: &str, target: &str, message: &str, payload: &Payload) -> Vec<Delivery> {
        let mut copies = Vec::new();
        for i in 0..self.agents.len() {
            if self.agents[i].subject != target {
                continue;
            }
            let id = self.next_msg;
            self.next_msg += 1;
            let to = self.agents[i].id.clone();
            self.heads[i].entry(from_agent.to_string()).or_default().push_back(id);
            self.agents[i].mailbox.push_back(MessageInstance {
                id,
                message: message.to_string(),
                from_agent: from_agent.to_string(),
                from_subject: from_subject.to_string(),
                to_agent: to.clone(),
                payload: payload.clone(),
                send_time: self.clock,
            });
            copies.push(Delivery { msg_id: id, to });
        }
        copies
    }

    /// Records a `Blocked` event for every unfinished agent and marks the
    /// instance deadlocked.
    fn conclude_deadlock(&mut self) {
        for i in 0..self.agents.len() {
            if !self.agents[i].finished {
                self.push_event(i, EventKind::Blocked);
            }
        }
        self.status = Status::Deadlocked;
    }

    /// Advances by up to `limit` scheduler steps, moving time and detecting
    /// termination as needed. Returns the events appended.
    pub fn advance(&mut self, limit: u64) -> &[TraceEvent] {
        let before = self.events.len();
        let mut taken = 0;
        while self.status == Status::Running && taken < limit {
            if self.steps >= self.config.max_steps {
                self.status = Status::StepLimit;
                break;
            }
            match self.step() {
                Ok(_) => taken += 1,
                Err(EngineError::NoReadyAgent) => {
                    if self.detect_deadlock() {
                        self.conclude_deadlock();
                    } else if self.advance_time().is_none() {
                        unreachable!("no ready agent, no deadline, yet not deadlocked");
                    }
                }
                Err(e) => unreachable!("step failed while running: {e}"),
            }
        }
        &self.events[before..]
    }

    /// Runs until completion, deadlock, or the step limit.
    pub fn run(&mut self) -> Trace {
        self.advance(u64::MAX);
        self.trace()
    }

    /// Delivers a message on behalf of an external subject.
    pub fn inject_message(
        &mut self,
        external_subject: &str,
        to: &str,
        message: &str,
        payload: Payload,
    ) -> Result<(), EngineError> {
        let ext = self
            .model
            .subject(external_subject)
            .ok_or_else(|| EngineError::UnknownSubject(external_subject.to_string()))?;
        if ext.kind != SubjectKind::External {
            return Err(EngineError::NotExternal(external_subject.to_string()));
        }
        if self.model.subject(to).is_none() {
            return Err(EngineError::UnknownSubject(to.to_string()));
        }
        if !self.model.has_channel(external_subject, to, message) {
            return Err(EngineError::NoSuchChannel {
                from: external_subject.to_string(),
                to: to.to_string(),
                message: message.to_string(),
            });
        }
        let schema = &self
            .model
            .message(message)
            .expect("channel messages exist in the model")
            .payload_schema;
        if let Some(key) = payload.keys().find(|k| !schema.contains(k)) {
            return Err(EngineError::InvalidPayload {
                message: message.to_string(),
                key: key.clone(),
            });
        }
        let copies = self.deliver(external_subject, external_subject, to, message, &payload);
        let seq = self.events.len() as u64;
        self.events.push(TraceEvent {
            seq,
            time: self.clock,
            agent: external_subject.to_string(),
            state: String::new(),
            kind: EventKind::Sent {
                message: message.to_string(),
                to_subject: to.to_string(),
                copies,
            },
        });
        if self.status == Status::Deadlocked && !self.ready_agents().is_empty() {
            self.status = Status::Running;
        }
        Ok(())
    }

    /// Applies one recorded scheduler decision. Used to replay exploration
    /// witnesses; a timeout move jumps the clock to the agent's deadline.
    pub fn apply(&mut self, mv: &Move) -> Result<&TraceEvent, EngineError> {
        let mismatch = |why: String| EngineError::WitnessMismatch(why);
        if self.status != Status::Running {
            return Err(mismatch(format!("instance is {} before '{mv}'", self.status)));
        }
        let agent = self
            .agents
            .iter()
            .position(|a| a.id == mv.agent)
            .ok_or_else(|| mismatch(format!("no agent '{}'", mv.agent)))?;
        if self.agents[agent].finished {
            return Err(mismatch(format!("agent '{}' already finished", mv.agent)));
        }
        let state = self.current_state(agent).clone();
        if state.is_end {
            return Err(mismatch(format!("agent '{}' is at end state '{}'", mv.agent, state.id)));
        }
        let (how, outcome) = match (&mv.action, &state.kind) {
            (MoveAction::Send, StateKind::Send { .. }) => (Readiness::Send, None),
            (MoveAction::Outcome { label }, StateKind::Action { outcomes }) if outcomes.contains(label) => {
                (Readiness::Action, Some(label.clone()))
            }
            (MoveAction::Receive, StateKind::Receive { .. }) => match self.matching_message(agent) {
                Some(i) => (Readiness::Receive(i), None),
                None => return Err(mismatch(format!("'{}' has no matching message", mv.agent))),
            },
            (MoveAction::Timeout, StateKind::Receive { .. }) => {
                if self.matching_message(agent).is_some() {
                    return Err(mismatch(format!("'{}' has a message; timeout not possible", mv.agent)));
                }
                let deadline = self.agents[agent]
                    .wait_deadline
                    .ok_or_else(|| mismatch(format!("state '{}' has no timeout", state.id)))?;
                self.clock = self.clock.max(deadline);
                (Readiness::Timeout, None)
            }
            _ => {
                return Err(mismatch(format!(
                    "'{mv}' does not fit {} state '{}'",
                    state.kind.name(),
                    state.id
                )))
            }
        };
        self.execute(agent, how, outcome);
        self.steps += 1;
        Ok(self.events.last().expect("execute appends an event"))
    }

    /// Records end entries that are pending and determines the status
    /// without taking further activity steps.
    pub fn settle(&mut self) -> Status {
        if self.status != Status::Running {
            return self.status;
        }
        for i in 0..self.agents.len() {
            if self.readiness(i) == Some(Readiness::EnterEnd) {
                self.execute(i, Readiness::EnterEnd, None);
            }
        }
        if self.all_finished() {
            self.status = Status::Completed;
        } else if self.detect_deadlock() {
            self.conclude_deadlock();
        }
        self.status
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;
    use crate::model::{build_model, Behavior, Channel, MessageType, ModelParts, State, Subject, Transition};

    fn model(subjects: Vec<Subject>, channels: Vec<Channel>, messages: Vec<MessageType>) -> Arc<ProcessModel> {
        Arc::new(
            build_model(ModelParts {
                id: "t".into(),
                name: "t".into(),
                subjects,
                channels,
                messages,
            })
            .unwrap(),
        )
    }

    fn looping() -> Arc<ProcessModel> {
        let b = Behavior::new(
            vec![State::action("a", ["again", "stop"]).as_start(), State::end("z")],
            vec![
                Transition::guarded("t1", "a", "a", "again"),
                Transition::guarded("t2", "a", "z", "stop"),
            ],
        );
        model(vec![Subject::standard("A", b)], vec![], vec![])
    }

    #[test]
    fn action_then_end() {
        let b = Behavior::new(
            vec![State::action("a", ["ok"]).as_start(), State::end("z")],
            vec![Transition::guarded("t", "a", "z", "ok")],
        );
        let mut inst = instantiate(model(vec![Subject::standard("A", b)], vec![], vec![]), SchedulerConfig::default()).unwrap();
        let trace = inst.run();
        let kinds: Vec<&str> = trace.events.iter().map(|e| e.kind.name()).collect();
        assert_eq!(kinds, ["ActionTaken", "EnteredEnd"]);
        assert_eq!(trace.status, Status::Completed);
    }

    #[test]
    fn infinite_loop_hits_step_limit() {
        let b = Behavior::new(
            vec![State::action("a", ["again"]).as_start(), State::end("z")],
            vec![Transition::guarded("t1", "a", "a", "again")],
        );
        let mut inst = instantiate(
            model(vec![Subject::standard("A", b)], vec![], vec![]),
            SchedulerConfig::default().with_max_steps(100),
        )
        .unwrap();
        let trace = inst.run();
        assert_eq!(trace.status, Status::StepLimit);
        assert_eq!(inst.steps(), 100);
        assert_eq!(trace.events.len(), 100);
    }

    #[test]
    fn outcome_selection_is_seed_dependent_but_stable() {
        let run = |seed| {
            let mut inst = instantiate(looping(), SchedulerConfig::seeded(seed)).unwrap();
            inst.run()
        };
        assert_eq!(run(7), run(7));
        let lengths: BTreeSet<usize> = (0..20).map(|s| run(s).events.len()).collect();
        assert!(lengths.len() > 1, "outcomes never varied across seeds");
    }

    #[test]
    fn select_outcome_in_range() {
        for v in 0..100 {
            assert!(select_outcome(v * 31, "agent", v, 3) < 3);
        }
    }

    #[test]
    fn advance_time_picks_minimum_deadline() {
        let recv = |d| {
            Behavior::new(
                vec![State::receive_one("r", "E", "m").as_start(), State::end("z")],
                vec![Transition::guarded("t", "r", "z", "E/m"), Transition::timeout("to", "r", "z", d)],
            )
        };
        let m = model(
            vec![Subject::external("E"), Subject::standard("A", recv(10)), Subject::standard("B", recv(7))],
            vec![Channel::new("E", "A", ["m"]), Channel::new("E", "B", ["m"])],
            vec![MessageType::new("m")],
        );
        let mut inst = instantiate(m, SchedulerConfig::default()).unwrap();
        assert!(matches!(inst.step(), Err(EngineError::NoReadyAgent)));
        assert!(!inst.detect_deadlock());
        assert_eq!(inst.advance_time(), Some(7));
        let trace = inst.run();
        let fired: Vec<(String, u64)> = trace
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::TimeoutFired { .. }))
            .map(|e| (e.agent.clone(), e.time))
            .collect();
        assert_eq!(fired, [("B".to_string(), 7), ("A".to_string(), 10)]);
        assert_eq!(trace.status, Status::Completed);
    }

    #[test]
    fn selective_receive_skips_other_senders() {
        // C waits for B's message while A's unrelated message sits first.
        let a = Behavior::new(
            vec![State::send("s", "C", "x").as_start(), State::end("z")],
            vec![Transition::normal("t", "s", "z")],
        );
        let b = Behavior::new(
            vec![State::send("s", "C", "y").as_start(), State::end("z")],
            vec![Transition::normal("t", "s", "z")],
        );
        let c = Behavior::new(
            vec![
                State::receive_one("r1", "B", "y").as_start(),
                State::receive_one("r2", "A", "x"),
                State::end("z"),
            ],
            vec![Transition::guarded("t1", "r1", "r2", "B/y"), Transition::guarded("t2", "r2", "z", "A/x")],
        );
        let m = model(
            vec![Subject::standard("A", a), Subject::standard("B", b), Subject::standard("C", c)],
            vec![Channel::new("A", "C", ["x"]), Channel::new("B", "C", ["y"])],
            vec![MessageType::new("x"), MessageType::new("y")],
        );
        let trace = instantiate(m, SchedulerConfig::default()).unwrap().run();
        assert_eq!(trace.status, Status::Completed);
    }

    #[test]
    fn per_sender_head_of_line() {
        // A sends x then y; C wants y first. Only A's oldest message is
        // eligible, so C is stuck.
        let a = Behavior::new(
            vec![State::send("s1", "C", "x").as_start(), State::send("s2", "C", "y"), State::end("z")],
            vec![Transition::normal("t1", "s1", "s2"), Transition::normal("t2", "s2", "z")],
        );
        let c = Behavior::new(
            vec![
                State::receive_one("r1", "A", "y").as_start(),
                State::receive_one("r2", "A", "x"),
                State::end("z"),
            ],
            vec![Transition::guarded("t1", "r1", "r2", "A/y"), Transition::guarded("t2", "r2", "z", "A/x")],
        );
        let m = model(
            vec![Subject::standard("A", a), Subject::standard("C", c)],
            vec![Channel::new("A", "C", ["x", "y"])],
            vec![MessageType::new("x"), MessageType::new("y")],
        );
        let trace = instantiate(m, SchedulerConfig::default()).unwrap().run();
        assert_eq!(trace.status, Status::Deadlocked);
        assert_eq!(trace.events.last().unwrap().kind, EventKind::Blocked);
    }

    #[test]
    fn instantiate_rejects_bad_multiplicity() {
        let m = looping();
        let err = instantiate(m, SchedulerConfig::default().with_multiplicity("A", 2)).unwrap_err();
        assert_eq!(err, EngineError::BadMultiplicity("A".into()));
    }

    #[test]
    fn instantiate_rejects_ill_formed() {
        let b = Behavior::new(vec![State::action("a", ["ok"]).as_start()], vec![]);
        let err = instantiate(model(vec![Subject::standard("A", b)], vec![], vec![]), SchedulerConfig::default()).unwrap_err();
        assert!(matches!(err, EngineError::ModelInvalid(_)));
    }
}
