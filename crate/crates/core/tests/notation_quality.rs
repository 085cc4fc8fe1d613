use std::time::Instant;

use proptest::prelude::*;
use sbpm_core::block::{Block, BlockDiagram};
use sbpm_core::notation::{
    conformance_check, define_notation, design_lints, ontological_analysis, sbpm, sbpm_default_notation, BlockKind, GrammarRule,
    Lint, NotationDefinition, Relation, SemanticConstruct,
};
use sbpm_core::testkit::random_diagram;
use sbpm_core::violation::ViolationCode;

fn notation(kinds: usize, constructs: usize, mapping: u32) -> NotationDefinition {
    let mut pairs = Vec::new();
    for k in 0..kinds {
        for c in 0..constructs {
            if mapping & (1 << (k * constructs + c)) != 0 {
                pairs.push((format!("k{k}"), format!("c{c}")));
            }
        }
    }
    NotationDefinition {
        id: "n".into(),
        kinds: (0..kinds).map(|k| BlockKind::new(format!("k{k}"), [k as u8 * 60, 0, 0])).collect(),
        rules: Vec::new(),
        constructs: (0..constructs).map(|c| SemanticConstruct::new(format!("c{c}"), "", "")).collect(),
        mapping: pairs,
    }
}

/// Every mapping between up to four kinds and up to four constructs, read
/// as a 0/1 matrix: clean exactly when it is a permutation matrix, and each
/// anomaly list is a row or column count test.
#[test]
fn anomaly_classes_partition_every_small_mapping() {
    let mut checked = 0u64;
    for kinds in 0..=4usize {
        for constructs in 0..=4usize {
            for mapping in 0..(1u32 << (kinds * constructs)) {
                let bit = |k: usize, c: usize| mapping & (1 << (k * constructs + c)) != 0;
                let row = |k: usize| (0..constructs).filter(|c| bit(k, *c)).count();
                let col = |c: usize| (0..kinds).filter(|k| bit(*k, c)).count();
                let permutation = kinds == constructs && (0..kinds).all(|k| row(k) == 1) && (0..constructs).all(|c| col(c) == 1);
                let r = ontological_analysis(&notation(kinds, constructs, mapping));
                assert_eq!(r.is_clean(), permutation, "{kinds}x{constructs} {mapping:b}");
                let ids = |p: &str, n: usize, f: &dyn Fn(usize) -> bool| -> Vec<String> {
                    (0..n).filter(|i| f(*i)).map(|i| format!("{p}{i}")).collect()
                };
                assert_eq!(r.deficits, ids("c", constructs, &|c| col(c) == 0));
                assert_eq!(r.redundancies, ids("c", constructs, &|c| col(c) > 1));
                assert_eq!(r.overloads, ids("k", kinds, &|k| row(k) > 1));
                assert_eq!(r.excesses, ids("k", kinds, &|k| row(k) == 0));
                checked += 1;
            }
        }
    }
    assert!(checked > 65_536);
}

#[test]
fn bundled_notation_is_a_clean_bijection() {
    let started = Instant::now();
    let n = sbpm_default_notation();
    assert!(ontological_analysis(&n).is_clean());
    assert!(started.elapsed().as_secs_f64() < 1.0);
    let layer = |l: u32| n.kinds.iter().filter(|k| k.layer == l).count();
    assert_eq!((layer(1), layer(2)), (4, 7));
    assert_eq!(sbpm_default_notation(), n);
    assert!(n.constructs_of("channel") == [sbpm::CHANNEL]);
    assert!(define_notation(n.id.clone(), n.kinds.clone(), n.rules.clone(), n.constructs.clone(), n.mapping.clone()).is_ok());
}

#[test]
fn anomaly_examples() {
    // Two kinds share one construct.
    let r = ontological_analysis(&notation(2, 1, 0b11));
    assert_eq!(r.redundancies, ["c0"]);
    assert!(r.deficits.is_empty() && r.overloads.is_empty() && r.excesses.is_empty());
    // c1 has no symbol.
    let r = ontological_analysis(&notation(1, 2, 0b01));
    assert_eq!(r.deficits, ["c1"]);
}

#[test]
fn define_notation_checks_references_and_rules() {
    assert!(define_notation("empty", vec![], vec![], vec![], vec![]).is_ok());
    let kinds = vec![BlockKind::new("A", [0, 0, 0]), BlockKind::new("B", [255, 255, 255])];
    let err = define_notation(
        "x",
        kinds.clone(),
        vec![GrammarRule::new("A", "B", Relation::MayFollow), GrammarRule::new("A", "B", Relation::Forbidden)],
        vec![],
        vec![],
    )
    .unwrap_err();
    assert_eq!(err.iter().map(|v| v.code).collect::<Vec<_>>(), [ViolationCode::ContradictoryRule]);
    let err = define_notation(
        "x",
        kinds,
        vec![GrammarRule::new("A", "Z", Relation::MayFollow)],
        vec![SemanticConstruct::new("c", "c", "")],
        vec![("A".into(), "nope".into()), ("Q".into(), "c".into())],
    )
    .unwrap_err();
    let codes: Vec<_> = err.iter().map(|v| v.code).collect();
    assert_eq!(codes.iter().filter(|c| **c == ViolationCode::DanglingKind).count(), 2);
    assert!(codes.contains(&ViolationCode::DanglingConstruct));
}

fn send_transition_notation() -> NotationDefinition {
    define_notation(
        "st",
        vec![BlockKind::new("send", [200, 0, 0]), BlockKind::new("transition", [0, 0, 200])],
        vec![GrammarRule::new("send", "transition", Relation::MustFollow)],
        vec![],
        vec![],
    )
    .unwrap()
}

#[test]
fn must_follow_reports_each_block_without_the_successor() {
    let n = send_transition_notation();
    let d = BlockDiagram::default()
        .with_block(Block::new("s1", "send", 0.0, 0.0, 100.0, 40.0))
        .with_block(Block::new("s2", "send", 0.0, 40.0, 100.0, 40.0));
    let v = conformance_check(&d, &n).unwrap();
    // Scan: every send block lacking a transition successor is one finding.
    let expected: Vec<&str> = d
        .blocks
        .iter()
        .filter(|b| b.kind_ref == "send")
        .map(|b| b.id.as_str())
        .collect();
    assert_eq!(v.len(), expected.len());
    assert!(v.iter().all(|v| v.code == ViolationCode::MissingRequiredSuccessor));
    assert_eq!(v.iter().filter_map(|v| v.element.as_deref()).collect::<Vec<_>>(), expected);

    assert!(conformance_check(&BlockDiagram::default(), &n).unwrap().is_empty());
    let unknown = BlockDiagram::default().with_block(Block::new("x", "hexagon", 0.0, 0.0, 10.0, 10.0));
    let err = conformance_check(&unknown, &n).unwrap_err();
    assert_eq!((err.block.as_str(), err.kind.as_str()), ("x", "hexagon"));
}

#[test]
fn out_degree_caps_count_per_rule() {
    let n = define_notation(
        "cap",
        vec![BlockKind::new("a", [200, 0, 0]), BlockKind::new("b", [0, 0, 200])],
        vec![GrammarRule::new("a", "b", Relation::MayFollow).capped(1)],
        vec![],
        vec![],
    )
    .unwrap();
    let d = BlockDiagram::default()
        .with_block(Block::new("a", "a", 0.0, 0.0, 100.0, 40.0))
        .with_block(Block::new("b1", "b", 0.0, 200.0, 100.0, 40.0))
        .with_block(Block::new("b2", "b", 300.0, 200.0, 100.0, 40.0))
        .with_arrow("a", "b1", "")
        .unwrap();
    assert!(conformance_check(&d, &n).unwrap().is_empty());
    let d = d.with_arrow("a", "b2", "").unwrap();
    let v = conformance_check(&d, &n).unwrap();
    assert_eq!(v.iter().map(|v| v.code).collect::<Vec<_>>(), [ViolationCode::OutDegreeExceeded]);
}

#[test]
fn lint_examples() {
    let twins = define_notation(
        "t",
        vec![BlockKind::new("a", [10, 20, 30]), BlockKind::new("b", [10, 20, 30])],
        vec![],
        vec![],
        vec![],
    )
    .unwrap();
    assert!(design_lints(&twins)
        .iter()
        .any(|l| matches!(l, Lint::LowDiscriminability { distance, .. } if *distance == 0.0)));

    let one = define_notation("one", vec![BlockKind::new("a", [0, 0, 0])], vec![], vec![], vec![]).unwrap();
    assert!(design_lints(&one).is_empty());

    // Twelve kinds spread over the RGB cube, far apart from each other.
    let kinds: Vec<BlockKind> = (0..12u8)
        .map(|i| BlockKind::new(format!("k{i}"), [(i % 3) * 120, ((i / 3) % 2) * 250, (i / 6) * 250]))
        .collect();
    let count = kinds.iter().filter(|k| k.layer == 0).count();
    assert_eq!(count, 12);
    let many = define_notation("many", kinds, vec![], vec![], vec![]).unwrap();
    let lints = design_lints(&many);
    assert!(lints.contains(&Lint::GraphicEconomyExceeded {
        layer: 0,
        kinds: count,
        threshold: 9
    }));
    assert!(!lints.iter().any(|l| matches!(l, Lint::LowDiscriminability { .. })));
    assert!(lints.iter().any(|l| matches!(l, Lint::VisualExpressiveness { unused } if unused.contains(&"brightness".to_string()))));
    assert!(design_lints(&sbpm_default_notation()).is_empty());
}

fn kind_ids() -> Vec<String> {
    sbpm_default_notation().kinds.into_iter().map(|k| k.id).collect()
}

proptest! {
    #[test]
    fn forbidden_rules_only_add_violations(seed in 0u64..2_000, from in 0usize..11, to in 0usize..11) {
        let d = random_diagram(seed);
        let base = sbpm_default_notation();
        let ids = kind_ids();
        let mut stricter = base.clone();
        stricter.rules.push(GrammarRule::new(ids[from].clone(), ids[to].clone(), Relation::Forbidden));
        let before = conformance_check(&d, &base).unwrap();
        let after = conformance_check(&d, &stricter).unwrap();
        for v in &before {
            prop_assert!(after.contains(v), "{:?} disappeared", v);
        }
    }

    #[test]
    fn single_kind_is_always_discriminable(r in any::<u8>(), g in any::<u8>(), b in any::<u8>()) {
        let n = define_notation("one", vec![BlockKind::new("a", [r, g, b])], vec![], vec![], vec![]).unwrap();
        let low = design_lints(&n).iter().any(|l| matches!(l, Lint::LowDiscriminability { .. }));
        prop_assert!(!low);
    }
}
