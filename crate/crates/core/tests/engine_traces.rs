use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;
use sbpm_core::engine::{instantiate, EngineError, EventKind, Payload, SchedulerConfig, Status, Trace};
use sbpm_core::model::{ProcessModel, SubjectKind};
use sbpm_core::testkit::{cyclic_wait, cyclic_wait_with_timeout, pingpong, random_model, supply_chain, GenConfig};

fn run(model: &ProcessModel, cfg: SchedulerConfig) -> (Trace, usize) {
    let mut inst = instantiate(Arc::new(model.clone()), cfg).unwrap();
    let trace = inst.run();
    let residual = inst.agents().iter().map(|a| a.mailbox.len()).sum();
    (trace, residual)
}

/// Checks message accounting on a finished trace, independently of the
/// engine's internals: every receive matches an earlier send copy, each
/// copy is received at most once, per-pair receive order follows send
/// order, and multi-subject sends produce one copy per replica.
fn check_messages(model: &ProcessModel, trace: &Trace, residual: usize, replicas: &BTreeMap<String, usize>) {
    let mut sent: BTreeMap<u64, (String, String, usize)> = BTreeMap::new();
    let mut received = BTreeSet::new();
    let mut last_per_pair: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut copies_total = 0;
    for (i, e) in trace.events.iter().enumerate() {
        assert_eq!(e.seq, i as u64, "sequence numbers are dense");
        if i > 0 {
            assert!(e.time >= trace.events[i - 1].time, "time never decreases");
        }
        match &e.kind {
            EventKind::Sent {
                to_subject, copies, ..
            } => {
                let target = model.subject(to_subject).unwrap();
                let expected = match target.kind {
                    SubjectKind::External => 0,
                    SubjectKind::Multi => replicas[to_subject],
                    SubjectKind::Standard => 1,
                };
                assert_eq!(copies.len(), expected, "fan-out of {e:?}");
                for c in copies {
                    assert!(sent.insert(c.msg_id, (e.agent.clone(), c.to.clone(), i)).is_none());
                }
                copies_total += copies.len();
            }
            EventKind::Received { msg_id, from, .. } => {
                let (sender, to, at) = sent.get(msg_id).expect("received message was sent");
                assert!(*at < i);
                assert_eq!(sender, from);
                assert_eq!(to, &e.agent);
                assert!(received.insert(*msg_id), "message received twice");
                let pair = (from.clone(), e.agent.clone());
                if let Some(prev) = last_per_pair.insert(pair, *msg_id) {
                    assert!(prev < *msg_id, "per-pair FIFO violated");
                }
            }
            _ => {}
        }
    }
    assert_eq!(copies_total - received.len(), residual, "no lost messages");
}

fn replica_counts(model: &ProcessModel) -> BTreeMap<String, usize> {
    model
        .subjects()
        .iter()
        .map(|s| (s.id.clone(), s.multiplicity_default as usize))
        .collect()
}

#[test]
fn pingpong_event_sequence() {
    let (trace, residual) = run(&pingpong(), SchedulerConfig::default());
    let kinds: Vec<&str> = trace.events.iter().map(|e| e.kind.name()).collect();
    assert_eq!(
        kinds,
        ["Sent", "Received", "Sent", "Received", "EnteredEnd", "EnteredEnd"]
    );
    assert_eq!(trace.status, Status::Completed);
    assert_eq!(residual, 0);
    for seed in 0..20 {
        let (t, _) = run(&pingpong(), SchedulerConfig::seeded(seed));
        assert_eq!(t.status, Status::Completed);
        assert_eq!(t.events.len(), 6);
    }
}

#[test]
fn cyclic_wait_deadlocks() {
    let (trace, _) = run(&cyclic_wait(), SchedulerConfig::default());
    assert_eq!(trace.status, Status::Deadlocked);
    assert!(trace.events.iter().all(|e| matches!(e.kind, EventKind::Blocked)));
}

#[test]
fn timeout_breaks_cyclic_wait_at_exactly_ten() {
    let (trace, residual) = run(&cyclic_wait_with_timeout(10), SchedulerConfig::default());
    assert_eq!(trace.status, Status::Completed);
    let fired: Vec<_> = trace
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::TimeoutFired { .. }))
        .collect();
    assert_eq!(fired.len(), 1);
    assert_eq!(fired[0].time, 10);
    assert_eq!(fired[0].agent, "A");
    // B's answer arrives after A has stopped listening.
    assert_eq!(residual, 1);
}

#[test]
fn supply_chain_fans_out() {
    let model = supply_chain(3);
    let mut inst = instantiate(Arc::new(model.clone()), SchedulerConfig::default()).unwrap();
    assert_eq!(inst.agents().len(), 4);
    let first = inst.run();
    assert_eq!(first.status, Status::Deadlocked, "shop waits for the customer");
    let mut order = Payload::new();
    order.insert("item".into(), "bolts".into());
    assert_eq!(
        inst.inject_message("Shop", "Supplier", "request", Payload::new()),
        Err(EngineError::NotExternal("Shop".into()))
    );
    assert!(matches!(
        inst.inject_message("Customer", "Supplier", "order", Payload::new()),
        Err(EngineError::NoSuchChannel { .. })
    ));
    inst.inject_message("Customer", "Shop", "order", order).unwrap();
    assert_eq!(inst.agent("Shop").unwrap().mailbox.len(), 1);
    let trace = inst.run();
    assert_eq!(trace.status, Status::Completed);
    let residual = inst.agents().iter().map(|a| a.mailbox.len()).sum();
    check_messages(&model, &trace, residual, &replica_counts(&model));
    let request = trace
        .events
        .iter()
        .find(|e| matches!(&e.kind, EventKind::Sent { message, .. } if message == "request"))
        .unwrap();
    let EventKind::Sent { copies, .. } = &request.kind else { unreachable!() };
    let targets: Vec<&str> = copies.iter().map(|c| c.to.as_str()).collect();
    assert_eq!(targets, ["Supplier#0", "Supplier#1", "Supplier#2"]);
}

#[test]
fn configured_multiplicity_overrides_default() {
    let cfg = SchedulerConfig::default().with_multiplicity("Supplier", 5);
    let inst = instantiate(Arc::new(supply_chain(2)), cfg).unwrap();
    assert_eq!(inst.agents().iter().filter(|a| a.subject == "Supplier").count(), 5);
    let bad = SchedulerConfig::default().with_multiplicity("Shop", 2);
    assert_eq!(
        instantiate(Arc::new(supply_chain(2)), bad).unwrap_err(),
        EngineError::BadMultiplicity("Shop".into())
    );
}

#[test]
fn generated_models_are_runnable() {
    for seed in 0..300 {
        let m = random_model(seed, &GenConfig::large());
        assert!(instantiate(Arc::new(m), SchedulerConfig::default()).is_ok(), "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn runs_are_deterministic_and_conserve_messages(model_seed in 0u64..10_000, seed in any::<u64>()) {
        let model = random_model(model_seed, &GenConfig::large());
        let cfg = SchedulerConfig::seeded(seed).with_max_steps(2_000);
        let (a, residual) = run(&model, cfg.clone());
        let (b, _) = run(&model, cfg);
        prop_assert_eq!(&a, &b);
        check_messages(&model, &a, residual, &replica_counts(&model));
    }

    #[test]
    fn timeouts_fire_no_earlier_than_deadline(model_seed in 0u64..10_000) {
        let model = random_model(model_seed, &GenConfig::large());
        let (trace, _) = run(&model, SchedulerConfig::default().with_max_steps(2_000));
        // The agent's previous event marks when it entered the waiting state.
        let mut entered: BTreeMap<&str, u64> = BTreeMap::new();
        for e in &trace.events {
            if let EventKind::TimeoutFired { transition } = &e.kind {
                let subject = e.agent.split('#').next().unwrap();
                let b = model.subject(subject).unwrap().behavior.as_ref().unwrap();
                let t = b.transitions.iter().find(|t| &t.id == transition).unwrap();
                let sbpm_core::model::TransitionKind::Timeout { duration } = t.kind else { panic!() };
                let since = entered.get(e.agent.as_str()).copied().unwrap_or(0);
                prop_assert!(e.time >= since + duration);
            }
            entered.insert(&e.agent, e.time);
        }
    }
}
