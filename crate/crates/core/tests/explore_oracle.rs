use std::collections::BTreeSet;
use std::sync::Arc;

use sbpm_core::model::{build_model, Behavior, Channel, MessageType, ModelParts, ProcessModel, State, Subject, Transition};
use sbpm_core::engine::{instantiate, SchedulerConfig, Status};
use sbpm_core::explore::{find_deadlocks, replay, state_space, ExplorationBounds, ExploreError};
use sbpm_core::testkit::{cyclic_wait, cyclic_wait_with_timeout, pingpong, random_model, supply_chain, GenConfig};

#[test]
fn pingpong_has_no_deadlock_and_both_ends_reachable() {
    let r = state_space(&pingpong(), ExplorationBounds::default()).unwrap();
    assert!(r.deadlocks.is_empty());
    assert!(r.complete);
    assert!(r.states_visited <= 12);
    // By hand: (a0,b0) -> (a1,b0+m1) -> (a1,b1) -> (a1+m2,b2) -> (a2,b2).
    assert_eq!(r.states_visited, 5);
    assert!(r.end_reachable.values().all(|v| *v));
    assert_eq!(r.terminal_statuses, BTreeSet::from([Status::Completed]));
}

#[test]
fn cyclic_wait_has_one_deadlock_at_the_initial_state() {
    let model = cyclic_wait();
    let d = find_deadlocks(&model, ExplorationBounds::default()).unwrap();
    assert_eq!(d.len(), 1);
    assert!(d[0].path.is_empty());
    let r = replay(&Arc::new(model), &d[0]).unwrap();
    assert_eq!(r.status, Status::Deadlocked);
}

#[test]
fn timeout_removes_the_deadlock() {
    let d = find_deadlocks(&cyclic_wait_with_timeout(10), ExplorationBounds::default()).unwrap();
    assert!(d.is_empty());
}

#[test]
fn witness_from_another_model_mismatches() {
    let d = find_deadlocks(&cyclic_wait(), ExplorationBounds::default()).unwrap();
    let err = replay(&Arc::new(supply_chain(2)), &d[0]).unwrap_err();
    assert!(matches!(err, ExploreError::Engine(ref e) if e.code() == "WitnessMismatch"), "{err:?}");
}

#[test]
fn replica_symmetry_agrees_on_verdicts() {
    let model = fanout(3);
    let with = state_space(&model, ExplorationBounds::default()).unwrap();
    let without = state_space(
        &model,
        ExplorationBounds {
            symmetry_reduction: false,
            ..ExplorationBounds::default()
        },
    )
    .unwrap();
    assert!(with.states_visited < without.states_visited);
    assert_eq!(with.terminal_statuses, without.terminal_statuses);
    assert_eq!(with.deadlocks.is_empty(), without.deadlocks.is_empty());
    assert_eq!(with.end_reachable, without.end_reachable);
}

#[test]
fn exploration_is_deterministic() {
    for seed in 0..30 {
        let m = random_model(seed, &GenConfig::small());
        let a = state_space(&m, ExplorationBounds::default()).unwrap();
        let b = state_space(&m, ExplorationBounds::default()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn larger_bounds_keep_deadlocks() {
    for seed in 0..40 {
        let m = random_model(seed, &GenConfig::small());
        let small = ExplorationBounds::default().with_max_states(20);
        let states = |b| -> std::collections::HashSet<_> {
            state_space(&m, b)
                .unwrap()
                .deadlocks
                .into_iter()
                .map(|w| w.state)
                .collect()
        };
        let few = states(small);
        let many = states(ExplorationBounds::default());
        assert!(few.is_subset(&many), "seed {seed}");
    }
}

#[test]
fn engine_statuses_are_contained_in_explorer_terminals() {
    let mut checked = 0;
    for seed in 0..150 {
        let m = random_model(seed, &GenConfig::small());
        let r = state_space(&m, ExplorationBounds::default()).unwrap();
        if !r.complete {
            continue;
        }
        checked += 1;
        let arc = Arc::new(m);
        for run_seed in 0..10 {
            let mut inst = instantiate(Arc::clone(&arc), SchedulerConfig::seeded(run_seed).with_max_steps(500)).unwrap();
            let status = inst.run().status;
            assert!(r.terminal_statuses.contains(&status), "seed {seed}/{run_seed}: {status} not in {:?}", r.terminal_statuses);
        }
        for w in &r.deadlocks {
            assert_eq!(replay(&arc, w).unwrap().status, Status::Deadlocked, "seed {seed}");
        }
    }
    assert!(checked >= 100, "only {checked} models explored completely");
}

/// A boss broadcasts a job to `workers` replicas and collects one reply
/// from each; workers may first retry an internal step.
fn fanout(workers: u32) -> ProcessModel {
    let mut states = vec![State::send("b0", "W", "job").as_start()];
    let mut transitions = vec![Transition::normal("tb0", "b0", "c0")];
    for i in 0..workers {
        let next = if i + 1 == workers { "z".to_string() } else { format!("c{}", i + 1) };
        states.push(State::receive_one(format!("c{i}"), "W", "done"));
        transitions.push(Transition::guarded(format!("tc{i}"), format!("c{i}"), next, "W/done"));
    }
    states.push(State::end("z"));
    let worker = Behavior::new(
        vec![
            State::receive_one("w0", "Boss", "job").as_start(),
            State::action("w1", ["ok", "retry"]),
            State::send("w2", "Boss", "done"),
            State::end("w3"),
        ],
        vec![
            Transition::guarded("u0", "w0", "w1", "Boss/job"),
            Transition::guarded("u1", "w1", "w2", "ok"),
            Transition::guarded("u1r", "w1", "w1", "retry"),
            Transition::normal("u2", "w2", "w3"),
        ],
    );
    build_model(ModelParts {
        id: "fanout".into(),
        name: "fanout".into(),
        subjects: vec![Subject::standard("Boss", Behavior::new(states, transitions)), Subject::multi("W", worker, workers)],
        channels: vec![Channel::new("Boss", "W", ["job"]), Channel::new("W", "Boss", ["done"])],
        messages: vec![MessageType::new("job"), MessageType::new("done")],
    })
    .unwrap()
}
