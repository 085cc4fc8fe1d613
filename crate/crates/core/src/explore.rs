//! Bounded breadth-first exploration of a model's global state space.
//!
//! The explorer works on its own compact encoding of the model and does not
//! reuse the engine's stepping code, so it can serve as an independent oracle
//! for the engine. Every unfinished agent contributes its enabled moves:
//! sends, each action outcome, receives of the eligible matching message, and
//! a timeout whenever a receive with a timeout has nothing to consume.
//!
//! States are deduplicated on a canonical key; replicas of a multi subject
//! are interchangeable, so their local states are sorted before hashing.
//! Stored states are the concrete ones first reached, which keeps witness
//! paths replayable on the engine.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use petgraph::algo::is_cyclic_directed;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    instantiate, AgentSnapshot, EngineError, GlobalSnapshot, Move, MoveAction, SchedulerConfig, Status, Trace,
};
use crate::model::{interface_consistency, well_formed, ProcessModel, StateKind, SubjectKind};
use crate::violation::{has_errors, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationBounds {
    pub max_states: usize,
    pub max_mailbox: usize,
    pub max_depth: usize,
    /// Treat replicas of a multi subject as interchangeable.
    #[serde(default = "default_true")]
    pub symmetry_reduction: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ExplorationBounds {
    fn default() -> Self {
        ExplorationBounds {
            max_states: 100_000,
            max_mailbox: 4,
            max_depth: 10_000,
            symmetry_reduction: true,
        }
    }
}

impl ExplorationBounds {
    pub fn with_max_states(mut self, n: usize) -> Self {
        self.max_states = n;
        self
    }
}

/// A reachable global state together with the shortest scheduler-choice
/// path found from the initial state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub path: Vec<Move>,
    pub state: GlobalSnapshot,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            writeln!(f, "  (initial state)")?;
        }
        for (i, m) in self.path.iter().enumerate() {
            writeln!(f, "  {}. {m}", i + 1)?;
        }
        for a in &self.state.agents {
            let mail: Vec<String> = a.mailbox.iter().map(|(from, m)| format!("{m}<-{from}")).collect();
            writeln!(f, "  {} @ {} [{}]", a.agent, a.state, mail.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationResult {
    pub states_visited: usize,
    pub transitions: usize,
    pub deadlocks: Vec<Witness>,
    /// True iff the whole reachable space was enumerated within bounds.
    pub complete: bool,
    /// Some reachable state lies on a cycle, so runs may not terminate.
    pub has_cycle: bool,
    /// Statuses an engine run can end in: Completed, Deadlocked, and
    /// StepLimit when a cycle exists.
    pub terminal_statuses: BTreeSet<Status>,
    /// Per non-external subject: whether some agent of it can reach an end
    /// state.
    pub end_reachable: BTreeMap<String, bool>,
    pub max_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("model is not executable: {} violation(s)", .0.len())]
    ModelInvalid(Vec<Violation>),
    #[error("bounds must be at least 1")]
    BadBounds,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl ExploreError {
    pub fn code(&self) -> &'static str {
        match self {
            ExploreError::ModelInvalid(_) => "ModelInvalid",
            ExploreError::BadBounds => "BadBounds",
            ExploreError::Engine(e) => e.code(),
        }
    }
}

type Ix = u16;

#[derive(Debug, Clone)]
enum Activity {
    Send { target: usize, message: Ix, next: Ix },
    Receive {
        /// (source subject, message, next state)
        branches: Vec<(usize, Ix, Ix)>,
        timeout: Option<Ix>,
    },
    Action { outcomes: Vec<(String, Ix)> },
}

#[derive(Debug, Clone)]
struct CState {
    id: String,
    is_end: bool,
    activity: Activity,
}

#[derive(Debug, Clone)]
struct CSubject {
    id: String,
    states: Vec<CState>,
    start: Ix,
    /// Agent indices instantiated for this subject.
    agents: Vec<usize>,
}

#[derive(Debug)]
struct Compiled {
    subjects: Vec<CSubject>,
    /// Per agent: (agent id, subject index).
    agents: Vec<(String, usize)>,
    messages: Vec<String>,
    /// Agent index ranges of interchangeable replicas.
    replica_groups: Vec<Vec<usize>>,
}

fn compile(model: &ProcessModel) -> Compiled {
    let subject_ix: HashMap<&str, usize> = model
        .subjects()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let message_ix: HashMap<&str, Ix> = model
        .messages()
        .iter()
        .enumerate()
        .map(|(i, m)| (m.id.as_str(), i as Ix))
        .collect();

    let mut agents = Vec::new();
    let mut subjects = Vec::new();
    let mut replica_groups = Vec::new();
    for (si, s) in model.subjects().iter().enumerate() {
        let mut cs = CSubject {
            id: s.id.clone(),
            states: Vec::new(),
            start: 0,
            agents: Vec::new(),
        };
        if let Some(b) = &s.behavior {
            let state_ix: HashMap<&str, Ix> = b
                .states
                .iter()
                .enumerate()
                .map(|(i, st)| (st.id.as_str(), i as Ix))
                .collect();
            let exit = |from: &str, guard: Option<&str>| -> Ix {
                let t = b
                    .transitions
                    .iter()
                    .find(|t| t.from_state == from && !t.is_timeout() && (guard.is_none() || t.guard() == guard))
                    .expect("well-formed behavior has the exit");
                state_ix[t.to_state.as_str()]
            };
            for st in &b.states {
                let activity = if st.is_end {
                    Activity::Action { outcomes: Vec::new() }
                } else {
                    match &st.kind {
                        StateKind::Send { target, message } => Activity::Send {
                            target: subject_ix[target.as_str()],
                            message: message_ix[message.as_str()],
                            next: exit(&st.id, None),
                        },
                        StateKind::Receive { branches } => Activity::Receive {
                            branches: branches
                                .iter()
                                .map(|br| {
                                    (
                                        subject_ix[br.source.as_str()],
                                        message_ix[br.message.as_str()],
                                        exit(&st.id, Some(&br.label())),
                                    )
                                })
                                .collect(),
                            timeout: b
                                .transitions
                                .iter()
                                .find(|t| t.from_state == st.id && t.is_timeout())
                                .map(|t| state_ix[t.to_state.as_str()]),
                        },
                        StateKind::Action { outcomes } => Activity::Action {
                            outcomes: outcomes.iter().map(|o| (o.clone(), exit(&st.id, Some(o)))).collect(),
                        },
                    }
                };
                cs.states.push(CState {
                    id: st.id.clone(),
                    is_end: st.is_end,
                    activity,
                });
            }
            cs.start = b
                .states
                .iter()
                .position(|st| st.is_start)
                .expect("well-formed behavior has a start") as Ix;
            let replicas = if s.kind == SubjectKind::Multi {
                s.multiplicity_default
            } else {
                1
            };
            for r in 0..replicas {
                let id = if s.kind == SubjectKind::Multi {
                    format!("{}#{r}", s.id)
                } else {
                    s.id.clone()
                };
                cs.agents.push(agents.len());
                agents.push((id, si));
            }
            if s.kind == SubjectKind::Multi && replicas > 1 {
                replica_groups.push(cs.agents.clone());
            }
        }
        subjects.push(cs);
    }
    Compiled {
        subjects,
        agents,
        messages: model.messages().iter().map(|m| m.id.clone()).collect(),
        replica_groups,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Local {
    state: Ix,
    /// (sending agent, message)
    mailbox: Vec<(Ix, Ix)>,
}

type GState = Vec<Local>;

impl Compiled {
    fn initial(&self) -> GState {
        self.agents
            .iter()
            .map(|&(_, s)| Local {
                state: self.subjects[s].start,
                mailbox: Vec::new(),
            })
            .collect()
    }

    fn cstate(&self, g: &GState, agent: usize) -> &CState {
        &self.subjects[self.agents[agent].1].states[g[agent].state as usize]
    }

    fn all_at_end(&self, g: &GState) -> bool {
        (0..g.len()).all(|a| self.cstate(g, a).is_end)
    }

    /// First message the agent may consume: only each sender's oldest
    /// message is eligible.
    fn eligible(&self, g: &GState, agent: usize, branches: &[(usize, Ix, Ix)]) -> Option<(usize, Ix)> {
        let mut senders: Vec<Ix> = Vec::new();
        for (pos, &(sender, msg)) in g[agent].mailbox.iter().enumerate() {
            if senders.contains(&sender) {
                continue;
            }
            senders.push(sender);
            let sender_subject = self.agents[sender as usize].1;
            if let Some(&(_, _, next)) = branches.iter().find(|&&(src, m, _)| src == sender_subject && m == msg) {
                return Some((pos, next));
            }
        }
        None
    }

    /// Successor states with the move leading to each. The flag reports
    /// that some successor was dropped for exceeding the mailbox bound.
    fn successors(&self, g: &GState, max_mailbox: usize) -> (Vec<(Move, GState)>, bool) {
        let mut out = Vec::new();
        let mut truncated = false;
        for a in 0..g.len() {
            let st = self.cstate(g, a);
            if st.is_end {
                continue;
            }
            let agent_id = &self.agents[a].0;
            let mv = |action| Move {
                agent: agent_id.clone(),
                action,
            };
            match &st.activity {
                Activity::Send { target, message, next } => {
                    let mut n = g.clone();
                    n[a].state = *next;
                    let mut overflow = false;
                    for &r in &self.subjects[*target].agents {
                        n[r].mailbox.push((a as Ix, *message));
                        overflow |= n[r].mailbox.len() > max_mailbox;
                    }
                    if overflow {
                        truncated = true;
                    } else {
                        out.push((mv(MoveAction::Send), n));
                    }
                }
                Activity::Action { outcomes } => {
                    for (label, next) in outcomes {
                        let mut n = g.clone();
                        n[a].state = *next;
                        out.push((mv(MoveAction::Outcome { label: label.clone() }), n));
                    }
                }
                Activity::Receive { branches, timeout } => match self.eligible(g, a, branches) {
                    Some((pos, next)) => {
                        let mut n = g.clone();
                        n[a].mailbox.remove(pos);
                        n[a].state = next;
                        out.push((mv(MoveAction::Receive), n));
                    }
                    None => {
                        if let Some(next) = timeout {
                            let mut n = g.clone();
                            n[a].state = *next;
                            out.push((mv(MoveAction::Timeout), n));
                        }
                    }
                },
            }
        }
        (out, truncated)
    }

    /// Hash key under replica symmetry: replicas are reordered by their
    /// local state and sender references renamed accordingly. Equal keys
    /// imply the states are replica permutations of each other.
    fn canonical_key(&self, g: &GState) -> GState {
        if self.replica_groups.is_empty() {
            return g.clone();
        }
        let mut perm: Vec<usize> = (0..g.len()).collect();
        for group in &self.replica_groups {
            let mut order = group.clone();
            order.sort_by(|&x, &y| g[x].cmp(&g[y]).then(x.cmp(&y)));
            for (slot, &old) in group.iter().zip(&order) {
                perm[old] = *slot;
            }
        }
        let mut key = g.clone();
        for (old, local) in g.iter().enumerate() {
            key[perm[old]] = Local {
                state: local.state,
                mailbox: local
                    .mailbox
                    .iter()
                    .map(|&(s, m)| (perm[s as usize] as Ix, m))
                    .collect(),
            };
        }
        key
    }

    fn snapshot(&self, g: &GState) -> GlobalSnapshot {
        GlobalSnapshot {
            agents: g
                .iter()
                .enumerate()
                .map(|(a, local)| AgentSnapshot {
                    agent: self.agents[a].0.clone(),
                    state: self.cstate(g, a).id.clone(),
                    mailbox: local
                        .mailbox
                        .iter()
                        .map(|&(s, m)| (self.agents[s as usize].0.clone(), self.messages[m as usize].clone()))
                        .collect(),
                })
                .collect(),
        }
    }
}

fn check_model(model: &ProcessModel) -> Result<(), ExploreError> {
    let mut v = well_formed(model);
    v.extend(interface_consistency(model));
    if has_errors(&v) {
        v.retain(Violation::is_error);
        return Err(ExploreError::ModelInvalid(v));
    }
    Ok(())
}

/// Enumerates all interleavings breadth first within `bounds`.
pub fn state_space(model: &ProcessModel, bounds: ExplorationBounds) -> Result<ExplorationResult, ExploreError> {
    if bounds.max_states == 0 || bounds.max_mailbox == 0 || bounds.max_depth == 0 {
        return Err(ExploreError::BadBounds);
    }
    check_model(model)?;
    let c = compile(model);
    if c.agents.len() > Ix::MAX as usize {
        return Err(ExploreError::BadBounds);
    }

    let key_of = |g: &GState| {
        if bounds.symmetry_reduction {
            c.canonical_key(g)
        } else {
            g.clone()
        }
    };

    let init = c.initial();
    let mut states: Vec<GState> = vec![init.clone()];
    let mut parent: Vec<Option<(usize, Move)>> = vec![None];
    let mut depth: Vec<usize> = vec![0];
    let mut index: HashMap<GState, usize> = HashMap::new();
    index.insert(key_of(&init), 0);
    let mut queue = VecDeque::from([0usize]);
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut complete = true;
    let mut deadlock_ix = Vec::new();
    let mut any_completed = false;
    let mut end_reachable: BTreeMap<String, bool> = c
        .subjects
        .iter()
        .filter(|s| !s.agents.is_empty())
        .map(|s| (s.id.clone(), false))
        .collect();

    while let Some(i) = queue.pop_front() {
        let g = states[i].clone();
        for (a, (_, s)) in c.agents.iter().enumerate() {
            if c.cstate(&g, a).is_end {
                end_reachable.insert(c.subjects[*s].id.clone(), true);
            }
        }
        let (succ, truncated) = c.successors(&g, bounds.max_mailbox);
        if truncated {
            complete = false;
        }
        if succ.is_empty() && !truncated {
            if c.all_at_end(&g) {
                any_completed = true;
            } else {
                deadlock_ix.push(i);
            }
            continue;
        }
        if depth[i] >= bounds.max_depth {
            complete = false;
            continue;
        }
        for (mv, n) in succ {
            let key = key_of(&n);
            let j = match index.get(&key) {
                Some(&j) => j,
                None => {
                    if states.len() >= bounds.max_states {
                        complete = false;
                        continue;
                    }
                    let j = states.len();
                    index.insert(key, j);
                    states.push(n);
                    parent.push(Some((i, mv)));
                    depth.push(depth[i] + 1);
                    queue.push_back(j);
                    j
                }
            };
            edges.push((i as u32, j as u32));
        }
    }

    let graph: DiGraph<(), ()> = DiGraph::from_edges(&edges);
    let has_cycle = is_cyclic_directed(&graph);

    let mut terminal_statuses = BTreeSet::new();
    if any_completed {
        terminal_statuses.insert(Status::Completed);
    }
    if !deadlock_ix.is_empty() {
        terminal_statuses.insert(Status::Deadlocked);
    }
    if has_cycle {
        terminal_statuses.insert(Status::StepLimit);
    }

    let deadlocks = deadlock_ix
        .iter()
        .map(|&i| {
            let mut path = Vec::new();
            let mut cur = i;
            while let Some((p, mv)) = &parent[cur] {
                path.push(mv.clone());
                cur = *p;
            }
            path.reverse();
            Witness {
                path,
                state: c.snapshot(&states[i]),
            }
        })
        .collect();

    Ok(ExplorationResult {
        states_visited: states.len(),
        transitions: edges.len(),
        deadlocks,
        complete,
        has_cycle,
        terminal_statuses,
        end_reachable,
        max_depth: depth.iter().copied().max().unwrap_or(0),
    })
}

/// All deadlocked states within bounds, each with a shortest witness.
pub fn find_deadlocks(model: &ProcessModel, bounds: ExplorationBounds) -> Result<Vec<Witness>, ExploreError> {
    Ok(state_space(model, bounds)?.deadlocks)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replay {
    pub trace: Trace,
    pub status: Status,
}

/// Drives the engine through the witness's scheduler choices and checks
/// that it arrives at the witness state.
pub fn replay(model: &Arc<ProcessModel>, witness: &Witness) -> Result<Replay, ExploreError> {
    let config = SchedulerConfig::default().with_max_steps((witness.path.len() as u64).saturating_add(1));
    let mut inst = instantiate(Arc::clone(model), config)?;
    for mv in &witness.path {
        inst.apply(mv)?;
    }
    let reached = inst.snapshot();
    if reached != witness.state {
        return Err(EngineError::WitnessMismatch("replay ended in a different global state".into()).into());
    }
    let status = inst.settle();
    Ok(Replay {
        trace: inst.trace(),
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, Behavior, Channel, MessageType, ModelParts, State, Subject, Transition};

    fn model(subjects: Vec<Subject>, channels: Vec<Channel>, messages: Vec<MessageType>) -> ProcessModel {
        build_model(ModelParts {
            id: "t".into(),
            name: "t".into(),
            subjects,
            channels,
            messages,
        })
        .unwrap()
    }

    #[test]
    fn single_action_model_has_two_states() {
        let b = Behavior::new(
            vec![State::action("a", ["ok"]).as_start(), State::end("z")],
            vec![Transition::guarded("t", "a", "z", "ok")],
        );
        let r = state_space(&model(vec![Subject::standard("A", b)], vec![], vec![]), ExplorationBounds::default()).unwrap();
        assert_eq!(r.states_visited, 2);
        assert!(r.deadlocks.is_empty());
        assert!(r.complete);
        assert!(!r.has_cycle);
        assert_eq!(r.terminal_statuses, BTreeSet::from([Status::Completed]));
        assert_eq!(r.end_reachable["A"], true);
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let b = Behavior::new(
            vec![State::action("a", ["again", "stop"]).as_start(), State::end("z")],
            vec![
                Transition::guarded("t1", "a", "a", "again"),
                Transition::guarded("t2", "a", "z", "stop"),
            ],
        );
        let r = state_space(&model(vec![Subject::standard("A", b)], vec![], vec![]), ExplorationBounds::default()).unwrap();
        assert!(r.has_cycle);
        assert!(r.terminal_statuses.contains(&Status::StepLimit));
    }

    fn fan_out(replicas: u32) -> ProcessModel {
        let boss = Behavior::new(
            vec![State::send("s", "W", "job").as_start(), State::end("z")],
            vec![Transition::normal("t", "s", "z")],
        );
        let worker = Behavior::new(
            vec![State::receive_one("r", "B", "job").as_start(), State::end("z")],
            vec![Transition::guarded("t", "r", "z", "B/job")],
        );
        model(
            vec![Subject::standard("B", boss), Subject::multi("W", worker, replicas)],
            vec![Channel::new("B", "W", ["job"])],
            vec![MessageType::new("job")],
        )
    }

    #[test]
    fn symmetry_reduction_merges_replica_permutations() {
        let m = fan_out(3);
        let full = state_space(&m, ExplorationBounds { symmetry_reduction: false, ..Default::default() }).unwrap();
        let reduced = state_space(&m, ExplorationBounds::default()).unwrap();
        // 1 initial + 2^3 receive subsets after the send.
        assert_eq!(full.states_visited, 9);
        // Subsets collapse to their size: 0..=3 received.
        assert_eq!(reduced.states_visited, 5);
        assert_eq!(full.terminal_statuses, reduced.terminal_statuses);
    }

    #[test]
    fn mailbox_bound_truncates() {
        let m = fan_out(1);
        let r = state_space(&m, ExplorationBounds { max_mailbox: 1, ..Default::default() }).unwrap();
        assert!(r.complete);
        let looping = {
            let a = Behavior::new(
                vec![State::send("s", "B", "m").as_start(), State::end("z")],
                vec![Transition::normal("t", "s", "s")],
            );
            let b = Behavior::new(
                vec![State::receive_one("r", "A", "m").as_start(), State::end("z")],
                vec![Transition::guarded("t", "r", "z", "A/m")],
            );
            model(
                vec![Subject::standard("A", a), Subject::standard("B", b)],
                vec![Channel::new("A", "B", ["m"])],
                vec![MessageType::new("m")],
            )
        };
        let r = state_space(&looping, ExplorationBounds::default()).unwrap();
        assert!(!r.complete);
    }

    #[test]
    fn zero_bounds_rejected() {
        let m = fan_out(1);
        let err = state_space(&m, ExplorationBounds { max_states: 0, ..Default::default() }).unwrap_err();
        assert_eq!(err, ExploreError::BadBounds);
    }

    #[test]
    fn state_limit_clears_complete() {
        let r = state_space(&fan_out(3), ExplorationBounds { max_states: 3, symmetry_reduction: false, ..Default::default() }).unwrap();
        assert!(!r.complete);
        assert_eq!(r.states_visited, 3);
    }
}
