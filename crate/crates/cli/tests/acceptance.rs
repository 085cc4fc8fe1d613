//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Runs without the test harness so that every line is printed, including
//! the ones after a failure.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use sbpm_core::block::{snap_dock, to_semantic_model, BlockDiagram, FlowAxis, Point, Rect};
use sbpm_core::engine::{instantiate, EventKind, SchedulerConfig, Status, Trace};
use sbpm_core::explore::{replay, state_space, ExplorationBounds};
use sbpm_core::model::{ProcessModel, SubjectKind};
use sbpm_core::notation::{ontological_analysis, sbpm_default_notation};
use sbpm_core::persistence::{from_xml, to_xml};
use sbpm_core::testkit::{random_diagram, random_model, separate_implicit, GenConfig};
use serde::Deserialize;

// Budgets and sizes.
const NOTATION_BUDGET: Duration = Duration::from_secs(1);
const ROUND_TRIP_MODELS: u64 = 1_000;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(30);
const DETERMINISM_MODELS: u64 = 200;
const DETERMINISM_SEEDS: u64 = 3;
const DETERMINISM_BUDGET: Duration = Duration::from_secs(60);
const CONTAINMENT_MIN_MODELS: usize = 100;
const CONTAINMENT_SEEDS: u64 = 10;
const CONTAINMENT_BUDGET: Duration = Duration::from_secs(120);
const TIMEOUT_AT: u64 = 10;
const DOCKING_MIN_CASES: usize = 30;
const ORIGIN_DIAGRAMS: u64 = 50;

type Verdict = Result<String, String>;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn within(label: &str, start: Instant, budget: Duration, detail: String) -> Verdict {
    let took = start.elapsed();
    if took < budget {
        Ok(format!("{detail}, {took:.2?}"))
    } else {
        Err(format!("{label} took {took:.2?}, budget {budget:?}"))
    }
}

fn notation_soundness() -> Verdict {
    let start = Instant::now();
    let r = ontological_analysis(&sbpm_default_notation());
    let counts = [r.deficits.len(), r.redundancies.len(), r.overloads.len(), r.excesses.len()];
    if counts != [0; 4] {
        return Err(format!("anomalies (deficit, redundancy, overload, excess) = {counts:?}"));
    }
    within("analysis", start, NOTATION_BUDGET, "no anomalies".into())
}

fn round_trip() -> Verdict {
    let start = Instant::now();
    let cfg = GenConfig::large();
    for seed in 0..ROUND_TRIP_MODELS {
        let m = random_model(seed, &cfg);
        let xml = to_xml(&m, None);
        if to_xml(&m, None) != xml {
            return Err(format!("seed {seed}: serialization is not byte-deterministic"));
        }
        match from_xml(&xml) {
            Ok((back, None)) if back == m => {}
            Ok(_) => return Err(format!("seed {seed}: model changed in the round trip")),
            Err(e) => return Err(format!("seed {seed}: {e}")),
        }
    }
    within("round trip", start, ROUND_TRIP_BUDGET, format!("{ROUND_TRIP_MODELS} models"))
}

/// Message accounting from the trace alone: each receive matches one
/// earlier send copy, receives per (sender, receiver) follow send order,
/// and a send yields one copy per receiving agent.
fn check_messages(m: &ProcessModel, t: &Trace) -> Result<(), String> {
    let replicas: BTreeMap<&str, usize> = m
        .subjects()
        .iter()
        .map(|s| (s.id.as_str(), s.multiplicity_default as usize))
        .collect();
    let mut sent = BTreeMap::new();
    let mut received = BTreeSet::new();
    let mut last: BTreeMap<(String, String), u64> = BTreeMap::new();
    for e in &t.events {
        match &e.kind {
            EventKind::Sent { to_subject, copies, .. } => {
                let want = match m.subject(to_subject).map(|s| s.kind) {
                    Some(SubjectKind::External) => 0,
                    Some(SubjectKind::Multi) => replicas[to_subject.as_str()],
                    _ => 1,
                };
                if copies.len() != want {
                    return Err(format!("event {}: {} copies, expected {want}", e.seq, copies.len()));
                }
                for c in copies {
                    sent.insert(c.msg_id, (e.agent.clone(), c.to.clone()));
                }
            }
            EventKind::Received { msg_id, from, .. } => {
                if sent.get(msg_id) != Some(&(from.clone(), e.agent.clone())) {
                    return Err(format!("event {}: message {msg_id} was not sent to {}", e.seq, e.agent));
                }
                if !received.insert(*msg_id) {
                    return Err(format!("event {}: message {msg_id} received twice", e.seq));
                }
                if let Some(prev) = last.insert((from.clone(), e.agent.clone()), *msg_id) {
                    if prev > *msg_id {
                        return Err(format!("event {}: {from}->{} out of order", e.seq, e.agent));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn engine_determinism() -> Verdict {
    let start = Instant::now();
    let cfg = GenConfig::large();
    let mut events = 0;
    for model_seed in 0..DETERMINISM_MODELS {
        let m = Arc::new(random_model(model_seed, &cfg));
        for seed in 0..DETERMINISM_SEEDS {
            let run = || instantiate(Arc::clone(&m), SchedulerConfig::seeded(seed)).map(|mut i| i.run());
            let (a, b) = match (run(), run()) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return Err(format!("model {model_seed}: {e}")),
            };
            if a != b || sbpm_core::persistence::trace_to_xml(&a) != sbpm_core::persistence::trace_to_xml(&b) {
                return Err(format!("model {model_seed} seed {seed}: runs differ"));
            }
            check_messages(&m, &a).map_err(|e| format!("model {model_seed} seed {seed}: {e}"))?;
            events += a.events.len();
        }
    }
    within(
        "determinism",
        start,
        DETERMINISM_BUDGET,
        format!("{} runs, {events} events", DETERMINISM_MODELS * DETERMINISM_SEEDS),
    )
}

fn oracle_containment() -> Verdict {
    let start = Instant::now();
    let cfg = GenConfig::small();
    let (mut complete, mut witnesses) = (0, 0);
    let mut seed = 0;
    while complete < CONTAINMENT_MIN_MODELS {
        if seed >= 10 * CONTAINMENT_MIN_MODELS as u64 {
            return Err(format!("only {complete} of {seed} models explored completely"));
        }
        let m = random_model(seed, &cfg);
        seed += 1;
        let r = state_space(&m, ExplorationBounds::default()).map_err(|e| format!("model {}: {e}", seed - 1))?;
        if !r.complete {
            continue;
        }
        complete += 1;
        let arc = Arc::new(m);
        for run_seed in 0..CONTAINMENT_SEEDS {
            let status = instantiate(Arc::clone(&arc), SchedulerConfig::seeded(run_seed))
                .map_err(|e| e.to_string())?
                .run()
                .status;
            if !r.terminal_statuses.contains(&status) {
                return Err(format!("model {}: engine ended {status}, explorer {:?}", seed - 1, r.terminal_statuses));
            }
        }
        for w in &r.deadlocks {
            witnesses += 1;
            match replay(&arc, w) {
                Ok(rep) if rep.status == Status::Deadlocked => {}
                Ok(rep) => return Err(format!("model {}: witness replays to {}", seed - 1, rep.status)),
                Err(e) => return Err(format!("model {}: witness replay failed: {e}", seed - 1)),
            }
        }
    }
    within(
        "containment",
        start,
        CONTAINMENT_BUDGET,
        format!("{complete} models, {witnesses} witnesses replayed"),
    )
}

fn timeout_semantics() -> Verdict {
    let load = |name: &str| -> Result<Arc<ProcessModel>, String> {
        let text = std::fs::read_to_string(fixtures().join(name)).map_err(|e| e.to_string())?;
        Ok(Arc::new(from_xml(&text).map_err(|e| e.to_string())?.0))
    };
    let run = |m| instantiate(m, SchedulerConfig::default()).map(|mut i| i.run()).map_err(|e| e.to_string());
    let plain = run(load("cyclicwait.xml")?)?;
    if plain.status != Status::Deadlocked {
        return Err(format!("cyclic wait ended {}", plain.status));
    }
    let timed = run(load("cyclicwait-timeout.xml")?)?;
    let fired: Vec<u64> = timed
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::TimeoutFired { .. }))
        .map(|e| e.time)
        .collect();
    if timed.status != Status::Completed || fired != [TIMEOUT_AT] {
        return Err(format!("with timeout: {} and TimeoutFired at {fired:?}", timed.status));
    }
    Ok(format!("Deadlocked, then Completed with TimeoutFired at t={TIMEOUT_AT}"))
}

#[derive(Deserialize)]
struct DockingFixture {
    diagram: BlockDiagram,
    drop: Point,
    expected: Point,
}

fn overlap(a: &Rect, b: &Rect) -> f64 {
    let w = (a.x + a.width).min(b.x + b.width) - a.x.max(b.x);
    let h = (a.y + a.height).min(b.y + b.height) - a.y.max(b.y);
    w.max(0.0) * h.max(0.0)
}

/// Nearest free side slot by brute force. `None` when the drop overlaps and
/// no slot is free anywhere.
fn nearest_slot(d: &BlockDiagram, moving: &str, drop: Point) -> Option<Point> {
    let m = d.block(moving)?;
    let (w, h) = (m.size.width, m.size.height);
    let others: Vec<Rect> = d.blocks.iter().filter(|b| b.id != moving).map(|b| b.rect()).collect();
    let free = |p: Point| others.iter().all(|o| overlap(&Rect::new(p.x, p.y, w, h), o) == 0.0);
    let g = d.flow.gap;
    let mut best: Option<(f64, usize, String, Point)> = None;
    for b in d.blocks.iter().filter(|b| b.id != moving) {
        let r = b.rect();
        let sides = [
            Point::new(r.x, r.y + r.height + g),
            Point::new(r.x + r.width + g, r.y),
            Point::new(r.x, r.y - h - g),
            Point::new(r.x - w - g, r.y),
        ];
        let order = match d.flow.axis {
            FlowAxis::TopDown => [0, 1, 2, 3],
            FlowAxis::LeftRight => [1, 0, 3, 2],
        };
        for (rank, &side) in order.iter().enumerate() {
            let p = sides[side];
            if !free(p) {
                continue;
            }
            let key = (p.distance(drop), rank, b.id.clone(), p);
            let better = match &best {
                None => true,
                Some(c) => key.0.total_cmp(&c.0).then(key.1.cmp(&c.1)).then(key.2.cmp(&c.2)).is_lt(),
            };
            if better {
                best = Some(key);
            }
        }
    }
    if free(drop) && best.as_ref().is_none_or(|c| c.0 > d.flow.snap_threshold) {
        return Some(drop);
    }
    best.map(|c| c.3)
}

fn docking_geometry() -> Verdict {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/docking.json");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let cases: Vec<DockingFixture> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let mut matched = 0;
    for (i, c) in cases.iter().enumerate() {
        let out = snap_dock(&c.diagram, "M", c.drop).map_err(|e| format!("case {i}: {e}"))?;
        let got = out.block("M").map(|b| b.position).ok_or(format!("case {i}: block lost"))?;
        if got != c.expected {
            return Err(format!("case {i}: docked at {got:?}, golden {:?}", c.expected));
        }
        if let Some(want) = nearest_slot(&c.diagram, "M", c.drop) {
            if got != want {
                return Err(format!("case {i}: docked at {got:?}, oracle {want:?}"));
            }
            matched += 1;
        }
        let rects: Vec<Rect> = out.blocks.iter().map(|b| b.rect()).collect();
        for (j, a) in rects.iter().enumerate() {
            for b in &rects[j + 1..] {
                if overlap(a, b) != 0.0 {
                    return Err(format!("case {i}: overlap after docking"));
                }
            }
        }
    }
    if matched < DOCKING_MIN_CASES {
        return Err(format!("only {matched} cases checked against the oracle"));
    }
    Ok(format!("{matched}/{} cases match the oracle, zero overlap", cases.len()))
}

fn origin_equivalence() -> Verdict {
    let n = sbpm_default_notation();
    for seed in 0..ORIGIN_DIAGRAMS {
        let d = random_diagram(seed);
        let implicit = to_semantic_model(&d, &n);
        let explicit = to_semantic_model(&separate_implicit(&d), &n);
        match (implicit, explicit) {
            (Ok(a), Ok(b)) if a == b => {}
            (Ok(_), Ok(_)) => return Err(format!("seed {seed}: models differ")),
            (a, b) => return Err(format!("seed {seed}: translation failed: {:?} / {:?}", a.err(), b.err())),
        }
    }
    Ok(format!("{ORIGIN_DIAGRAMS} diagrams"))
}

struct Output {
    code: Option<i32>,
    stdout: String,
    stderr: String,
}

fn sbpm(server: Option<&str>, args: &[&str]) -> Result<Output, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sbpm"));
    cmd.args(args).env_remove("SBPM_SERVER");
    if let Some(url) = server {
        cmd.arg("--server").arg(url);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    Ok(Output {
        code: out.status.code(),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    })
}

fn start_service(rt: &tokio::runtime::Runtime, dir: &Path) -> Result<String, String> {
    rt.block_on(async {
        let config = sbpm_service::Config {
            listen: "127.0.0.1:0".parse().unwrap(),
            data_dir: dir.to_path_buf(),
            instance_ttl: 3600,
        };
        let state = sbpm_service::AppState::new(&config).await.map_err(|e| e.to_string())?;
        let listener = tokio::net::TcpListener::bind(config.listen).await.map_err(|e| e.to_string())?;
        let url = format!("http://{}", listener.local_addr().map_err(|e| e.to_string())?);
        tokio::spawn(sbpm_service::serve(listener, state));
        Ok(url)
    })
}

fn cli_service_parity() -> Verdict {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let url = start_service(&rt, dir.path())?;
    let models = [
        "pingpong.xml",
        "cyclicwait.xml",
        "cyclicwait-timeout.xml",
        "supply-chain.xml",
        "supply-chain.json",
        "order.xml",
        "unmatched.xml",
        "dangling.xml",
        "truncated.xml",
        "garbage.bin",
    ];
    let mut compared = 0;
    for name in models {
        let file = fixtures().join(name);
        let file = file.to_str().ok_or("fixture path is not UTF-8")?;
        let commands: Vec<Vec<&str>> = vec![
            vec!["validate", file],
            vec!["explore", file],
            vec!["run", file],
            vec!["run", file, "--seed", "7"],
            vec!["run", file, "--seed", "3", "--inject", "Customer:Shop:order"],
        ];
        for args in commands {
            let local = sbpm(None, &args)?;
            let remote = sbpm(Some(&url), &args)?;
            if local.code.is_none() || local.code != remote.code || local.stdout != remote.stdout || local.stderr != remote.stderr {
                return Err(format!(
                    "`sbpm {}` differs: exit {:?} vs {:?}\n--- local\n{}{}--- service\n{}{}",
                    args.join(" "),
                    local.code,
                    remote.code,
                    local.stdout,
                    local.stderr,
                    remote.stdout,
                    remote.stderr
                ));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} command pairs identical"))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("notation soundness", notation_soundness),
        ("round-trip law", round_trip),
        ("engine determinism", engine_determinism),
        ("oracle containment", oracle_containment),
        ("timeout semantics", timeout_semantics),
        ("docking geometry", docking_geometry),
        ("connection-origin equivalence", origin_equivalence),
        ("CLI/service parity", cli_service_parity),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
