//! The shared fixture corpus under `fixtures/` at the workspace root.
//!
//! The files are generated from the testkit fixtures. Set `SBPM_BLESS=1`
//! to rewrite them after a format change.

use std::path::PathBuf;

use sbpm_core::block::to_semantic_model_with_id;
use sbpm_core::check::validate_document;
use sbpm_core::model::{build_model, Behavior, Channel, MessageType, ModelParts, State, Subject, Transition};
use sbpm_core::notation::{define_notation, ontological_analysis, sbpm_default_notation, BlockKind, SemanticConstruct};
use sbpm_core::persistence::{from_xml, notation_to_xml, parse_document, to_xml, Document, PersistError};
use sbpm_core::testkit::{cyclic_wait, cyclic_wait_with_timeout, order_diagram, pingpong, supply_chain};

fn corpus() -> Vec<(&'static str, Vec<u8>)> {
    let order = order_diagram();
    let order_model = to_semantic_model_with_id(&order, &sbpm_default_notation(), "order").unwrap();

    // A receives m2 from B, but B never sends it.
    let unmatched = build_model(ModelParts {
        id: "unmatched".into(),
        name: "unmatched".into(),
        subjects: vec![
            Subject::standard(
                "A",
                Behavior::new(
                    vec![State::receive_one("a0", "B", "m2").as_start(), State::end("a1")],
                    vec![Transition::guarded("ta0", "a0", "a1", "B/m2")],
                ),
            ),
            Subject::standard("B", Behavior::new(vec![State::end("b0").as_start()], vec![])),
        ],
        channels: vec![Channel::new("B", "A", ["m2"])],
        messages: vec![MessageType::new("m2")],
    })
    .unwrap();

    let redundant = define_notation(
        "redundant",
        vec![BlockKind::new("box", [0, 0, 0]), BlockKind::new("crate", [255, 255, 255])],
        vec![],
        vec![SemanticConstruct::new("thing", "Thing", "")],
        vec![("box".into(), "thing".into()), ("crate".into(), "thing".into())],
    )
    .unwrap();

    let pp = to_xml(&pingpong(), None);
    vec![
        ("pingpong.xml", pp.clone().into_bytes()),
        ("cyclicwait.xml", to_xml(&cyclic_wait(), None).into_bytes()),
        ("cyclicwait-timeout.xml", to_xml(&cyclic_wait_with_timeout(10), None).into_bytes()),
        ("supply-chain.xml", to_xml(&supply_chain(2), None).into_bytes()),
        (
            "supply-chain.json",
            format!("{}\n", Document::Model { model: supply_chain(3), layout: None }.to_json()).into_bytes(),
        ),
        ("order.xml", to_xml(&order_model, Some(&order)).into_bytes()),
        ("unmatched.xml", to_xml(&unmatched, None).into_bytes()),
        (
            "dangling.xml",
            pp.replace("<carries message=\"m1\"/>", "<carries message=\"nope\"/>").into_bytes(),
        ),
        ("truncated.xml", pp[..pp.len() / 2].as_bytes().to_vec()),
        ("garbage.bin", vec![0xff, 0xfe, 0x00, 0x42, 0x13, 0x37]),
        ("sbpm-notation.xml", notation_to_xml(&sbpm_default_notation()).into_bytes()),
        ("redundant-notation.xml", notation_to_xml(&redundant).into_bytes()),
    ]
}

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[test]
fn corpus_files_are_current() {
    let bless = std::env::var_os("SBPM_BLESS").is_some();
    if bless {
        std::fs::create_dir_all(dir()).unwrap();
    }
    for (name, bytes) in corpus() {
        let path = dir().join(name);
        if bless {
            std::fs::write(&path, &bytes).unwrap();
        }
        let on_disk = std::fs::read(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(on_disk == bytes, "{name} drifted");
    }
}

#[test]
fn corpus_files_have_their_intended_faults() {
    let read = |n: &str| std::fs::read_to_string(dir().join(n)).unwrap();
    for clean in ["pingpong.xml", "cyclicwait.xml", "cyclicwait-timeout.xml", "supply-chain.xml", "order.xml"] {
        let (m, layout) = from_xml(&read(clean)).unwrap();
        let r = validate_document(&m, layout.as_ref());
        assert!(r.is_clean(), "{clean}: {:?}", r.violations());
    }
    let (m, _) = from_xml(&read("order.xml")).unwrap();
    assert!(m.subject("Buyer").is_some());

    let (m, _) = from_xml(&read("unmatched.xml")).unwrap();
    assert!(!validate_document(&m, None).is_clean());
    assert!(matches!(from_xml(&read("dangling.xml")), Err(PersistError::SemanticViolation(_))));
    assert!(matches!(from_xml(&read("truncated.xml")), Err(PersistError::Malformed { .. })));

    let Ok(Document::Notation(n)) = parse_document(&read("redundant-notation.xml")) else { panic!() };
    assert_eq!(ontological_analysis(&n).redundancies, ["thing"]);
}
