//! Fixtures and seeded generators for tests and acceptance runs.
//!
//! Everything here is a pure function of its seed, so a failing case can be
//! reproduced from the seed alone.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block::{Arrow, Block, BlockDiagram, ConnectionOrigin, FlowConvention, Point, infer_connections};
use crate::model::{
    build_model, Behavior, Channel, MessageType, ModelParts, ProcessModel, ReceiveBranch, State, StateKind, Subject,
    SubjectKind, Transition,
};

fn assemble(id: &str, subjects: Vec<Subject>, channels: Vec<Channel>, messages: Vec<MessageType>) -> ProcessModel {
    build_model(ModelParts {
        id: id.to_string(),
        name: id.to_string(),
        subjects,
        channels,
        messages,
    })
    .expect("fixture is valid")
}

/// A sends `m1` to B, B answers with `m2`, both end.
pub fn pingpong() -> ProcessModel {
    let a = Behavior::new(
        vec![
            State::send("a0", "B", "m1").as_start(),
            State::receive_one("a1", "B", "m2"),
            State::end("a2"),
        ],
        vec![
            Transition::normal("ta0", "a0", "a1"),
            Transition::guarded("ta1", "a1", "a2", "B/m2"),
        ],
    );
    let b = Behavior::new(
        vec![
            State::receive_one("b0", "A", "m1").as_start(),
            State::send("b1", "A", "m2"),
            State::end("b2"),
        ],
        vec![
            Transition::guarded("tb0", "b0", "b1", "A/m1"),
            Transition::normal("tb1", "b1", "b2"),
        ],
    );
    assemble(
        "pingpong",
        vec![Subject::standard("A", a), Subject::standard("B", b)],
        vec![Channel::new("A", "B", ["m1"]), Channel::new("B", "A", ["m2"])],
        vec![MessageType::new("m1"), MessageType::new("m2")],
    )
}

fn cyclic(timeout: Option<u64>) -> ProcessModel {
    let mut at = vec![
        Transition::guarded("ta0", "a0", "a1", "B/m2"),
        Transition::normal("ta1", "a1", "a2"),
    ];
    if let Some(d) = timeout {
        at.push(Transition::timeout("ta0t", "a0", "a1", d));
    }
    let a = Behavior::new(
        vec![
            State::receive_one("a0", "B", "m2").as_start(),
            State::send("a1", "B", "m1"),
            State::end("a2"),
        ],
        at,
    );
    let b = Behavior::new(
        vec![
            State::receive_one("b0", "A", "m1").as_start(),
            State::send("b1", "A", "m2"),
            State::end("b2"),
        ],
        vec![
            Transition::guarded("tb0", "b0", "b1", "A/m1"),
            Transition::normal("tb1", "b1", "b2"),
        ],
    );
    assemble(
        if timeout.is_some() { "cyclicwait-timeout" } else { "cyclicwait" },
        vec![Subject::standard("A", a), Subject::standard("B", b)],
        vec![Channel::new("A", "B", ["m1"]), Channel::new("B", "A", ["m2"])],
        vec![MessageType::new("m1"), MessageType::new("m2")],
    )
}

/// Each subject waits for the other first.
pub fn cyclic_wait() -> ProcessModel {
    cyclic(None)
}

/// [`cyclic_wait`] with a `Timeout(duration)` on A's receive.
pub fn cyclic_wait_with_timeout(duration: u64) -> ProcessModel {
    cyclic(Some(duration))
}

/// An external customer orders from a shop, which fans out a request to a
/// multi-subject of suppliers and waits for one reply per supplier.
pub fn supply_chain(suppliers: u32) -> ProcessModel {
    let mut shop_states = vec![
        State::receive_one("s0", "Customer", "order").as_start(),
        State::send("s1", "Supplier", "request"),
    ];
    let mut shop_transitions = vec![
        Transition::guarded("t0", "s0", "s1", "Customer/order"),
        Transition::normal("t1", "s1", "w0"),
    ];
    for i in 0..suppliers {
        let next = if i + 1 == suppliers { "done".to_string() } else { format!("w{}", i + 1) };
        shop_states.push(State::receive_one(format!("w{i}"), "Supplier", "offer"));
        shop_transitions.push(Transition::guarded(format!("tw{i}"), format!("w{i}"), next, "Supplier/offer"));
    }
    shop_states.push(State::send("done", "Customer", "confirmation"));
    shop_states.push(State::end("z"));
    shop_transitions.push(Transition::normal("tz", "done", "z"));
    let supplier = Behavior::new(
        vec![
            State::receive_one("r0", "Shop", "request").as_start(),
            State::action("r1", ["quote"]),
            State::send("r2", "Shop", "offer"),
            State::end("r3"),
        ],
        vec![
            Transition::guarded("u0", "r0", "r1", "Shop/request"),
            Transition::guarded("u1", "r1", "r2", "quote"),
            Transition::normal("u2", "r2", "r3"),
        ],
    );
    assemble(
        "supply-chain",
        vec![
            Subject::external("Customer"),
            Subject::standard("Shop", Behavior::new(shop_states, shop_transitions)),
            Subject::multi("Supplier", supplier, suppliers),
        ],
        vec![
            Channel::new("Customer", "Shop", ["order"]),
            Channel::new("Shop", "Customer", ["confirmation"]),
            Channel::new("Shop", "Supplier", ["request"]),
            Channel::new("Supplier", "Shop", ["offer"]),
        ],
        vec![
            MessageType::new("confirmation"),
            MessageType::new("offer"),
            MessageType::new("order").with_fields(["item", "qty"]),
            MessageType::new("request").with_fields(["item"]),
        ],
    )
}

/// A Buyer block sends `Order` to a Seller block. Each subject holds a
/// start flag, one communication block, and an end action docked below.
pub fn order_diagram() -> BlockDiagram {
    let buyer = BlockDiagram::default()
        .with_block(Block::new("start", "start-flag", 0.0, 0.0, 160.0, 20.0))
        .with_block(Block::new("b0", "send", 0.0, 20.0, 160.0, 50.0).with_property("to", "Seller").with_property("message", "Order"))
        .with_block(Block::new("b1", "action", 0.0, 70.0, 160.0, 50.0).with_property("end", "true"));
    let seller = BlockDiagram::default()
        .with_block(Block::new("start", "start-flag", 0.0, 0.0, 160.0, 20.0))
        .with_block(Block::new("s0", "receive", 0.0, 20.0, 160.0, 50.0).with_property("branch", "Buyer/Order"))
        .with_block(Block::new("s1", "action", 0.0, 70.0, 160.0, 50.0).with_property("end", "true"));
    BlockDiagram::default()
        .with_block(Block::new("Buyer", "subject", 0.0, 0.0, 160.0, 60.0).with_inner(buyer))
        .with_block(Block::new("Seller", "subject", 400.0, 0.0, 160.0, 60.0).with_inner(seller))
        .with_arrow("Buyer", "Seller", "Order")
        .expect("fixture is valid")
}

/// Shape limits for generated models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenConfig {
    pub max_subjects: usize,
    pub max_states: usize,
    pub max_multiplicity: u32,
    pub externals: bool,
    pub timeouts: bool,
}

impl GenConfig {
    /// Up to 6 subjects with up to 12 states each.
    pub fn large() -> Self {
        GenConfig {
            max_subjects: 6,
            max_states: 12,
            max_multiplicity: 3,
            externals: true,
            timeouts: true,
        }
    }

    /// Small enough for exhaustive exploration.
    pub fn small() -> Self {
        GenConfig {
            max_subjects: 3,
            max_states: 4,
            max_multiplicity: 2,
            externals: false,
            timeouts: true,
        }
    }
}

/// A model that passes `well_formed` and has no interface errors.
pub fn random_model(seed: u64, cfg: &GenConfig) -> ProcessModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=cfg.max_subjects.max(1));
    let mut kinds = Vec::new();
    for i in 0..n {
        let roll = rng.random_range(0..10);
        let kind = if cfg.externals && i > 0 && roll == 0 {
            SubjectKind::External
        } else if cfg.max_multiplicity > 1 && roll < 3 {
            SubjectKind::Multi
        } else {
            SubjectKind::Standard
        };
        kinds.push(kind);
    }
    let ids: Vec<String> = (0..n).map(|i| format!("S{i}")).collect();

    // Channels between random distinct pairs, one or two messages each.
    let mut channels: Vec<Channel> = Vec::new();
    let mut messages: Vec<MessageType> = Vec::new();
    if n > 1 {
        let pairs = rng.random_range(1..=n * 2);
        for _ in 0..pairs {
            let from = rng.random_range(0..n);
            let mut to = rng.random_range(0..n - 1);
            if to >= from {
                to += 1;
            }
            let count = rng.random_range(1..=2);
            let mut ms = Vec::new();
            for _ in 0..count {
                let id = format!("m{}", messages.len());
                let fields: Vec<String> = (0..rng.random_range(0..=2)).map(|k| format!("f{k}")).collect();
                messages.push(MessageType::new(id.clone()).with_fields(fields));
                ms.push(id);
            }
            channels.push(Channel::new(ids[from].clone(), ids[to].clone(), ms));
        }
    }

    let mut subjects = Vec::new();
    for (i, kind) in kinds.iter().enumerate() {
        let id = &ids[i];
        if *kind == SubjectKind::External {
            subjects.push(Subject::external(id.clone()));
            continue;
        }
        let outgoing: Vec<(String, String)> = channels
            .iter()
            .filter(|c| &c.from_subject == id)
            .flat_map(|c| c.message_ids.iter().map(|m| (c.to_subject.clone(), m.clone())))
            .collect();
        let incoming: Vec<(String, String)> = channels
            .iter()
            .filter(|c| &c.to_subject == id)
            .flat_map(|c| c.message_ids.iter().map(|m| (c.from_subject.clone(), m.clone())))
            .collect();
        let behavior = random_behavior(&mut rng, cfg, &outgoing, &incoming);
        let subject = if *kind == SubjectKind::Multi {
            Subject::multi(id.clone(), behavior, rng.random_range(1..=cfg.max_multiplicity))
        } else {
            Subject::standard(id.clone(), behavior)
        };
        subjects.push(subject);
    }
    assemble(&format!("gen-{seed}"), subjects, channels, messages)
}

fn random_behavior(
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    outgoing: &[(String, String)],
    incoming: &[(String, String)],
) -> Behavior {
    let n = rng.random_range(2..=cfg.max_states.max(2));
    let sid = |i: usize| format!("q{i}");
    let mut states = Vec::new();
    let mut transitions = Vec::new();
    for i in 0..n - 1 {
        let roll = rng.random_range(0..3);
        let state = if roll == 0 && !outgoing.is_empty() {
            let (to, m) = outgoing.choose(rng).unwrap();
            State::send(sid(i), to.clone(), m.clone())
        } else if roll == 1 && !incoming.is_empty() {
            let k = rng.random_range(1..=incoming.len().min(2));
            let branches: Vec<ReceiveBranch> = incoming
                .choose_multiple(rng, k)
                .map(|(s, m)| ReceiveBranch::new(s.clone(), m.clone()))
                .collect();
            State::receive(sid(i), branches)
        } else {
            let k = rng.random_range(1..=2);
            State::action(sid(i), (0..k).map(|o| format!("o{o}")))
        };
        // Mostly forward edges so that generated processes tend to finish.
        let target = |rng: &mut ChaCha8Rng| {
            if rng.random_range(0..4) == 0 {
                rng.random_range(0..n)
            } else {
                rng.random_range(i + 1..n)
            }
        };
        match &state.kind {
            StateKind::Send { .. } => transitions.push(Transition::normal(format!("t{i}"), sid(i), sid(target(rng)))),
            StateKind::Receive { branches } => {
                for (k, b) in branches.iter().enumerate() {
                    transitions.push(Transition::guarded(format!("t{i}_{k}"), sid(i), sid(target(rng)), b.label()));
                }
                if cfg.timeouts && rng.random_range(0..4) == 0 {
                    let d = rng.random_range(1..=20);
                    transitions.push(Transition::timeout(format!("t{i}_to"), sid(i), sid(target(rng)), d));
                }
            }
            StateKind::Action { outcomes } => {
                for (k, o) in outcomes.iter().enumerate() {
                    transitions.push(Transition::guarded(format!("t{i}_{k}"), sid(i), sid(target(rng)), o.clone()));
                }
            }
        }
        states.push(if i == 0 { state.as_start() } else { state });
    }
    states.push(State::end(sid(n - 1)));
    Behavior::new(states, transitions)
}

/// An S-BPM block diagram that translates into a valid model. Layer-2
/// behaviors are laid out as a docked spine (state, transition block,
/// state, ...) with extra exits drawn as labelled arrows, so they mix
/// implicit and explicit connections.
pub fn random_diagram(seed: u64) -> BlockDiagram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d1a9);
    let n = rng.random_range(2..=4usize);
    let ids: Vec<String> = (0..n).map(|i| format!("P{i}")).collect();
    let external = n > 2 && rng.random_bool(0.3);
    let is_ext = |i: usize| external && i == n - 1;

    // Channels, each with its own message.
    let mut channels: Vec<(usize, usize, String, Vec<String>)> = Vec::new();
    for k in 0..rng.random_range(1..=n + 1) {
        let from = rng.random_range(0..n);
        let mut to = rng.random_range(0..n - 1);
        if to >= from {
            to += 1;
        }
        if channels.iter().any(|(f, t, _, _)| *f == from && *t == to) {
            continue;
        }
        let fields = (0..rng.random_range(0..=2)).map(|f| format!("k{f}")).collect();
        channels.push((from, to, format!("msg{k}"), fields));
    }

    let mut d = BlockDiagram::new(FlowConvention::default());
    let mut used_below = BTreeSet::new();
    for (i, id) in ids.iter().enumerate() {
        let x = i as f64 * 400.0;
        let kind = if is_ext(i) {
            "external-subject"
        } else if rng.random_bool(0.25) {
            "multi-subject"
        } else {
            "subject"
        };
        let mut b = Block::new(id.clone(), kind, x, 0.0, 160.0, 60.0).with_label(format!("Subject {i}"));
        if kind == "multi-subject" {
            b.set_property("multiplicity", rng.random_range(1..=3u32).to_string());
        }
        if !is_ext(i) {
            let outgoing: Vec<(String, String)> = channels
                .iter()
                .filter(|c| c.0 == i)
                .map(|c| (ids[c.1].clone(), c.2.clone()))
                .collect();
            let incoming: Vec<(String, String)> = channels
                .iter()
                .filter(|c| c.1 == i)
                .map(|c| (ids[c.0].clone(), c.2.clone()))
                .collect();
            b.inner = Some(Box::new(random_behavior_diagram(&mut rng, &outgoing, &incoming)));
        }
        d.blocks.push(b);
    }
    for (k, (from, to, msg, fields)) in channels.iter().enumerate() {
        if !used_below.contains(from) && rng.random_bool(0.5) {
            // Channel block docked under the sender, arrow to the receiver.
            used_below.insert(*from);
            let cid = format!("C{k}");
            let mut cb = Block::new(cid.clone(), "channel", *from as f64 * 400.0, 60.0, 160.0, 30.0);
            cb.set_property(msg.clone(), fields.join(","));
            d.blocks.push(cb);
            d = d.with_arrow(&cid, &ids[*to], "").expect("blocks are apart");
        } else {
            d = d.with_arrow(&ids[*from], &ids[*to], msg).expect("blocks are apart");
        }
    }
    d.grow_stage();
    d
}

fn random_behavior_diagram(
    rng: &mut ChaCha8Rng,
    outgoing: &[(String, String)],
    incoming: &[(String, String)],
) -> BlockDiagram {
    let n = rng.random_range(2..=5usize);
    let (w, sh, th) = (160.0, 50.0, 20.0);
    let mut d = BlockDiagram::new(FlowConvention::default());
    let mut y = 0.0;
    d.blocks.push(Block::new("start", "start-flag", 0.0, y, w, th));
    y += th;

    // Primary exit labels per spine state, and extra exits per state.
    let mut extras: Vec<(String, usize, String)> = Vec::new();
    let mut timeouts: Vec<(String, usize, u64)> = Vec::new();
    for i in 0..n {
        let sid = format!("st{i}");
        let last = i + 1 == n;
        let roll = rng.random_range(0..3);
        let mut b = Block::new(sid.clone(), "action", 0.0, y, w, sh);
        let mut labels: Vec<String> = Vec::new();
        if last {
            b.set_property("end", "true");
        } else if roll == 0 && !outgoing.is_empty() {
            let (to, m) = outgoing.choose(rng).unwrap();
            b.kind_ref = "send".into();
            b.set_property("to", to.clone());
            b.set_property("message", m.clone());
        } else if roll == 1 && !incoming.is_empty() {
            b.kind_ref = "receive".into();
            let mut branches: Vec<&(String, String)> = incoming.iter().collect();
            branches.shuffle(rng);
            branches.truncate(rng.random_range(1..=incoming.len().min(2)));
            for (k, (s, m)) in branches.iter().enumerate() {
                b.set_property(format!("branch{k}"), format!("{s}/{m}"));
                labels.push(format!("{s}/{m}"));
            }
        } else {
            let k = rng.random_range(1..=3usize);
            labels = (0..k).map(|o| format!("o{o}")).collect();
            b.set_property("outcomes", labels.join(","));
        }
        d.blocks.push(b);
        y += sh;
        if last {
            break;
        }
        // Extra exits go to distinct states other than self and the next one.
        let mut candidates: Vec<usize> = (0..n).filter(|j| *j != i && *j != i + 1).collect();
        candidates.shuffle(rng);
        while labels.len() > 1 + candidates.len() {
            labels.pop();
        }
        if !labels.is_empty() {
            let b = d.blocks.last_mut().unwrap();
            if b.kind_ref == "action" {
                b.set_property("outcomes", labels.join(","));
            } else {
                b.properties.retain(|(k, v)| !k.starts_with("branch") || labels.contains(v));
            }
        }
        for (label, target) in labels.iter().skip(1).zip(&candidates) {
            extras.push((sid.clone(), *target, label.clone()));
        }
        if d.blocks.last().unwrap().kind_ref == "receive" && rng.random_bool(0.3) {
            let target = rng.random_range(0..n);
            if target != i {
                timeouts.push((sid.clone(), target, rng.random_range(1..=30)));
            }
        }
        // Spine link: a transition block carrying the first label, or a
        // direct dock when the guard can be inferred.
        let primary = labels.first().cloned();
        if labels.len() <= 1 && rng.random_bool(0.5) {
            continue;
        }
        let mut t = Block::new(format!("tr{i}"), "transition", 0.0, y, w, th);
        if let Some(p) = primary {
            t.set_property("guard", p);
        }
        d.blocks.push(t);
        y += th;
    }
    for (from, to, label) in extras {
        d = d.with_arrow(&from, &format!("st{to}"), &label).expect("distinct blocks");
    }
    for (k, (from, to, duration)) in timeouts.into_iter().enumerate() {
        let tid = format!("tt{k}");
        let ty = d.block(&from).unwrap().position.y;
        d.blocks
            .push(Block::new(tid.clone(), "timeout-transition", 400.0 + 200.0 * k as f64, ty, w, th).with_property("duration", duration.to_string()));
        d = d.with_arrow(&from, &tid, "").expect("apart");
        d = d.with_arrow(&tid, &format!("st{to}"), "").expect("apart");
    }
    d.grow_stage();
    d
}

/// Scales every position by 2 (recursively) so that no two blocks touch,
/// and replaces each implicit connection by an unlabelled arrow in the same
/// direction.
pub fn separate_implicit(d: &BlockDiagram) -> BlockDiagram {
    let implicit: Vec<(String, String)> = infer_connections(d)
        .into_iter()
        .filter(|c| matches!(c.origin, ConnectionOrigin::Implicit(_)))
        .map(|c| (c.from_block, c.to_block))
        .collect();
    let mut out = d.clone();
    for b in &mut out.blocks {
        b.position = Point::new(b.position.x * 2.0, b.position.y * 2.0);
        if let Some(inner) = &b.inner {
            b.inner = Some(Box::new(separate_implicit(inner)));
        }
    }
    out.reroute();
    for (from, to) in implicit {
        let already = out.arrows.iter().any(|a: &Arrow| a.from_block == from && a.to_block == to);
        if !already {
            out = out.with_arrow(&from, &to, "").expect("separated blocks do not overlap");
        }
    }
    out.grow_stage();
    out
}

/// A diagram of 1 to 5 non-overlapping blocks plus a free-floating block
/// `M` to be dropped, and a drop position near the others.
pub fn docking_case(seed: u64) -> (BlockDiagram, Point) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd0c4);
    let mut d = BlockDiagram::new(FlowConvention {
        axis: if rng.random_bool(0.5) {
            crate::block::FlowAxis::TopDown
        } else {
            crate::block::FlowAxis::LeftRight
        },
        snap_threshold: [10.0, 20.0, 40.0][rng.random_range(0..3)],
        gap: [0.0, 0.0, 5.0][rng.random_range(0..3)],
    });
    let count = rng.random_range(1..=5);
    let mut placed = 0;
    while placed < count {
        // Coordinates on a 10-unit grid keep slot arithmetic exact.
        let b = Block::new(
            format!("B{placed}"),
            "k",
            rng.random_range(0..30) as f64 * 10.0,
            rng.random_range(0..30) as f64 * 10.0,
            rng.random_range(4..12) as f64 * 10.0,
            rng.random_range(2..6) as f64 * 10.0,
        );
        if d.blocks.iter().all(|o| !o.rect().overlaps(&b.rect())) {
            d.blocks.push(b);
            placed += 1;
        }
    }
    d.blocks.push(Block::new(
        "M",
        "k",
        10_000.0,
        10_000.0,
        rng.random_range(4..12) as f64 * 10.0,
        rng.random_range(2..6) as f64 * 10.0,
    ));
    let anchor = d.blocks[rng.random_range(0..count)].rect();
    let drop = Point::new(
        anchor.x + rng.random_range(-12..=12) as f64 * 5.0,
        anchor.y + rng.random_range(-12..=12) as f64 * 5.0,
    );
    (d, drop)
}
