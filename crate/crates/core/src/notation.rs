//! User-defined block notations: a vocabulary of block kinds, pairwise
//! adjacency rules, and a mapping from kinds onto semantic constructs.
//!
//! The bundled S-BPM notation is one such definition; nothing in the block
//! layer depends on it except the translation to process models.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{infer_connections, BlockDiagram};
use crate::violation::{canonical, Violation, ViolationCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SizeClass {
    S,
    M,
    L,
}

impl SizeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::S => "S",
            SizeClass::M => "M",
            SizeClass::L => "L",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "S" => Some(SizeClass::S),
            "M" => Some(SizeClass::M),
            "L" => Some(SizeClass::L),
            _ => None,
        }
    }
}

/// Every block is a rectangle; the shape variable is not available to
/// notation designers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Rectangle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockKind {
    pub id: String,
    pub name: String,
    pub color: [u8; 3],
    /// 0 to 100.
    pub brightness: u8,
    pub texture: Option<String>,
    pub size_class: SizeClass,
    /// 0 or 90 degrees.
    pub orientation: u16,
    /// Diagram depth the kind belongs to (1 = top level); 0 means any.
    pub layer: u32,
}

impl BlockKind {
    pub fn new(id: impl Into<String>, color: [u8; 3]) -> Self {
        let id = id.into();
        BlockKind {
            name: id.clone(),
            id,
            color,
            brightness: 50,
            texture: None,
            size_class: SizeClass::M,
            orientation: 0,
            layer: 0,
        }
    }

    pub fn shape(&self) -> Shape {
        Shape::Rectangle
    }

    pub fn on_layer(mut self, layer: u32) -> Self {
        self.layer = layer;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    MayFollow,
    /// Every block of `from_kind` needs at least one successor of `to_kind`.
    MustFollow,
    Forbidden,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::MayFollow => "may-follow",
            Relation::MustFollow => "must-follow",
            Relation::Forbidden => "forbidden",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "may-follow" => Some(Relation::MayFollow),
            "must-follow" => Some(Relation::MustFollow),
            "forbidden" => Some(Relation::Forbidden),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarRule {
    pub from_kind: String,
    pub to_kind: String,
    pub relation: Relation,
    /// Cap on the number of `to_kind` successors a `from_kind` block may have.
    pub max_out_degree: Option<u32>,
}

impl GrammarRule {
    pub fn new(from: impl Into<String>, to: impl Into<String>, relation: Relation) -> Self {
        GrammarRule {
            from_kind: from.into(),
            to_kind: to.into(),
            relation,
            max_out_degree: None,
        }
    }

    pub fn capped(mut self, max: u32) -> Self {
        self.max_out_degree = Some(max);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticConstruct {
    pub id: String,
    pub name: String,
    pub description: String,
}

impl SemanticConstruct {
    pub fn new(id: impl Into<String>, name: impl Into<String>, description: impl Into<String>) -> Self {
        SemanticConstruct {
            id: id.into(),
            name: name.into(),
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotationDefinition {
    pub id: String,
    pub kinds: Vec<BlockKind>,
    pub rules: Vec<GrammarRule>,
    pub constructs: Vec<SemanticConstruct>,
    /// Pairs of (kind id, construct id).
    pub mapping: Vec<(String, String)>,
}

impl NotationDefinition {
    pub fn kind(&self, id: &str) -> Option<&BlockKind> {
        self.kinds.iter().find(|k| k.id == id)
    }

    /// Constructs a kind maps to, sorted.
    pub fn constructs_of(&self, kind: &str) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .mapping
            .iter()
            .filter(|(k, _)| k == kind)
            .map(|(_, c)| c.as_str())
            .collect();
        set.into_iter().collect()
    }
}

/// Checks references and rule consistency, returning the definition or every
/// violation found.
pub fn define_notation(
    id: impl Into<String>,
    kinds: Vec<BlockKind>,
    rules: Vec<GrammarRule>,
    constructs: Vec<SemanticConstruct>,
    mapping: Vec<(String, String)>,
) -> Result<NotationDefinition, Vec<Violation>> {
    let n = NotationDefinition {
        id: id.into(),
        kinds,
        rules,
        constructs,
        mapping,
    };
    let v = notation_violations(&n);
    if v.is_empty() {
        Ok(n)
    } else {
        Err(v)
    }
}

pub fn notation_violations(n: &NotationDefinition) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut kinds = BTreeSet::new();
    for k in &n.kinds {
        if k.id.is_empty() {
            out.push(Violation::error(ViolationCode::EmptyId, "block kind id is empty"));
        }
        if !kinds.insert(k.id.as_str()) {
            out.push(Violation::error(ViolationCode::DuplicateId, format!("block kind '{}' is defined twice", k.id)).at(k.id.clone()));
        }
        if k.brightness > 100 {
            out.push(Violation::error(ViolationCode::BadProperty, format!("brightness {} exceeds 100", k.brightness)).at(k.id.clone()));
        }
        if k.orientation != 0 && k.orientation != 90 {
            out.push(Violation::error(ViolationCode::BadProperty, format!("orientation {} is neither 0 nor 90", k.orientation)).at(k.id.clone()));
        }
    }
    let mut constructs = BTreeSet::new();
    for c in &n.constructs {
        if c.id.is_empty() {
            out.push(Violation::error(ViolationCode::EmptyId, "construct id is empty"));
        }
        if !constructs.insert(c.id.as_str()) {
            out.push(Violation::error(ViolationCode::DuplicateId, format!("construct '{}' is defined twice", c.id)).at(c.id.clone()));
        }
    }
    let dangling_kind = |k: &str, what: &str| {
        Violation::error(ViolationCode::DanglingKind, format!("{what} references unknown block kind '{k}'")).at(k.to_string())
    };
    for r in &n.rules {
        for k in [&r.from_kind, &r.to_kind] {
            if !kinds.contains(k.as_str()) {
                out.push(dangling_kind(k, "rule"));
            }
        }
        if r.max_out_degree == Some(0) {
            out.push(Violation::error(ViolationCode::BadProperty, "max out-degree must be positive").at(r.from_kind.clone()));
        }
    }
    for (k, c) in &n.mapping {
        if !kinds.contains(k.as_str()) {
            out.push(dangling_kind(k, "mapping"));
        }
        if !constructs.contains(c.as_str()) {
            out.push(
                Violation::error(ViolationCode::DanglingConstruct, format!("mapping references unknown construct '{c}'"))
                    .at(c.clone()),
            );
        }
    }
    let mut relations: BTreeMap<(&str, &str), BTreeSet<Relation>> = BTreeMap::new();
    for r in &n.rules {
        relations
            .entry((r.from_kind.as_str(), r.to_kind.as_str()))
            .or_default()
            .insert(r.relation);
    }
    for ((from, to), rels) in relations {
        if rels.contains(&Relation::Forbidden) && rels.len() > 1 {
            out.push(
                Violation::error(
                    ViolationCode::ContradictoryRule,
                    format!("'{from}' -> '{to}' is both forbidden and allowed"),
                )
                .at(from.to_string()),
            );
        }
    }
    canonical(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("block '{block}' uses kind '{kind}' which the notation does not define")]
pub struct UnknownKind {
    pub block: String,
    pub kind: String,
}

impl UnknownKind {
    pub fn to_violation(&self) -> Violation {
        Violation::error(ViolationCode::UnknownKind, self.to_string()).at(self.block.clone())
    }
}

/// Checks a diagram, and every nested diagram, against the notation's
/// adjacency grammar. Violations inside a nested diagram carry the owning
/// block id as their subject.
pub fn conformance_check(d: &BlockDiagram, n: &NotationDefinition) -> Result<Vec<Violation>, UnknownKind> {
    let mut out = Vec::new();
    check_level(d, n, 1, None, &mut out)?;
    Ok(canonical(out))
}

fn check_level(
    d: &BlockDiagram,
    n: &NotationDefinition,
    depth: u32,
    owner: Option<&str>,
    out: &mut Vec<Violation>,
) -> Result<(), UnknownKind> {
    let mut kind_of = BTreeMap::new();
    for b in &d.blocks {
        let kind = n.kind(&b.kind_ref).ok_or_else(|| UnknownKind {
            block: b.id.clone(),
            kind: b.kind_ref.clone(),
        })?;
        kind_of.insert(b.id.as_str(), b.kind_ref.as_str());
        if kind.layer != 0 && kind.layer != depth {
            out.push(scoped(
                Violation::error(
                    ViolationCode::MisplacedBlock,
                    format!("kind '{}' belongs on layer {}, found on layer {depth}", kind.id, kind.layer),
                )
                .at(b.id.clone()),
                owner,
            ));
        }
    }

    let links: BTreeSet<(String, String)> = infer_connections(d)
        .into_iter()
        .filter(|c| kind_of.contains_key(c.from_block.as_str()) && kind_of.contains_key(c.to_block.as_str()))
        .map(|c| (c.from_block, c.to_block))
        .collect();

    for (from, to) in &links {
        let (kf, kt) = (kind_of[from.as_str()], kind_of[to.as_str()]);
        if n.rules.iter().any(|r| r.relation == Relation::Forbidden && r.from_kind == kf && r.to_kind == kt) {
            out.push(scoped(
                Violation::error(
                    ViolationCode::ForbiddenConnection,
                    format!("'{kf}' may not connect to '{kt}' ({from} -> {to})"),
                )
                .at(from.clone()),
                owner,
            ));
        }
    }

    for b in &d.blocks {
        let kind = b.kind_ref.as_str();
        let successors: Vec<&str> = links
            .iter()
            .filter(|(f, _)| *f == b.id)
            .map(|(_, t)| kind_of[t.as_str()])
            .collect();
        for r in n.rules.iter().filter(|r| r.from_kind == kind) {
            let count = successors.iter().filter(|k| **k == r.to_kind).count();
            if r.relation == Relation::MustFollow && count == 0 {
                out.push(scoped(
                    Violation::error(
                        ViolationCode::MissingRequiredSuccessor,
                        format!("'{}' must be followed by a '{}' block", b.id, r.to_kind),
                    )
                    .at(b.id.clone()),
                    owner,
                ));
            }
            if let Some(max) = r.max_out_degree {
                if count > max as usize {
                    out.push(scoped(
                        Violation::error(
                            ViolationCode::OutDegreeExceeded,
                            format!("'{}' has {count} '{}' successors, at most {max} allowed", b.id, r.to_kind),
                        )
                        .at(b.id.clone()),
                        owner,
                    ));
                }
            }
        }
    }

    for b in &d.blocks {
        if let Some(inner) = &b.inner {
            check_level(inner, n, depth + 1, Some(&b.id), out)?;
        }
    }
    Ok(())
}

fn scoped(v: Violation, owner: Option<&str>) -> Violation {
    match owner {
        Some(o) => v.in_subject(o),
        None => v,
    }
}

/// Mapping defects between block kinds and semantic constructs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyReport {
    /// Constructs without any kind.
    pub deficits: Vec<String>,
    /// Constructs with more than one kind.
    pub redundancies: Vec<String>,
    /// Kinds mapped to more than one construct.
    pub overloads: Vec<String>,
    /// Kinds mapped to no construct.
    pub excesses: Vec<String>,
}

impl AnomalyReport {
    pub fn is_clean(&self) -> bool {
        self.deficits.is_empty() && self.redundancies.is_empty() && self.overloads.is_empty() && self.excesses.is_empty()
    }

    pub fn anomaly_count(&self) -> usize {
        self.deficits.len() + self.redundancies.len() + self.overloads.len() + self.excesses.len()
    }
}

pub fn ontological_analysis(n: &NotationDefinition) -> AnomalyReport {
    let pairs: BTreeSet<(&str, &str)> = n.mapping.iter().map(|(k, c)| (k.as_str(), c.as_str())).collect();
    let mut per_construct: BTreeMap<&str, usize> = n.constructs.iter().map(|c| (c.id.as_str(), 0)).collect();
    let mut per_kind: BTreeMap<&str, usize> = n.kinds.iter().map(|k| (k.id.as_str(), 0)).collect();
    for (k, c) in pairs {
        if let Some(count) = per_construct.get_mut(c) {
            *count += 1;
        }
        if let Some(count) = per_kind.get_mut(k) {
            *count += 1;
        }
    }
    let pick = |m: &BTreeMap<&str, usize>, f: fn(usize) -> bool| -> Vec<String> {
        m.iter().filter(|(_, n)| f(**n)).map(|(id, _)| id.to_string()).collect()
    };
    AnomalyReport {
        deficits: pick(&per_construct, |n| n == 0),
        redundancies: pick(&per_construct, |n| n > 1),
        overloads: pick(&per_kind, |n| n > 1),
        excesses: pick(&per_kind, |n| n == 0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LintConfig {
    /// Minimum Euclidean RGB distance between two kinds' colors.
    pub color_distance: f64,
    /// Maximum number of kinds per layer.
    pub graphic_economy: usize,
}

impl Default for LintConfig {
    fn default() -> Self {
        LintConfig {
            color_distance: 60.0,
            graphic_economy: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "lint")]
pub enum Lint {
    LowDiscriminability { first: String, second: String, distance: f64 },
    GraphicEconomyExceeded { layer: u32, kinds: usize, threshold: usize },
    /// Visual variables that take the same value on every kind.
    VisualExpressiveness { unused: Vec<String> },
}

impl std::fmt::Display for Lint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lint::LowDiscriminability { first, second, distance } => {
                write!(f, "LowDiscriminability: '{first}' and '{second}' colors are {distance:.1} apart")
            }
            Lint::GraphicEconomyExceeded { layer, kinds, threshold } => {
                write!(f, "GraphicEconomyExceeded: layer {layer} has {kinds} kinds (threshold {threshold})")
            }
            Lint::VisualExpressiveness { unused } => {
                write!(f, "VisualExpressiveness: {} unused visual variable(s): {}", unused.len(), unused.join(", "))
            }
        }
    }
}

pub fn color_distance(a: [u8; 3], b: [u8; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn design_lints(n: &NotationDefinition) -> Vec<Lint> {
    design_lints_with(n, &LintConfig::default())
}

pub fn design_lints_with(n: &NotationDefinition, cfg: &LintConfig) -> Vec<Lint> {
    let mut out = Vec::new();
    for (i, a) in n.kinds.iter().enumerate() {
        for b in &n.kinds[i + 1..] {
            let distance = color_distance(a.color, b.color);
            if distance < cfg.color_distance {
                out.push(Lint::LowDiscriminability {
                    first: a.id.clone(),
                    second: b.id.clone(),
                    distance,
                });
            }
        }
    }
    let mut per_layer: BTreeMap<u32, usize> = BTreeMap::new();
    for k in &n.kinds {
        *per_layer.entry(k.layer).or_default() += 1;
    }
    for (layer, kinds) in per_layer {
        if kinds > cfg.graphic_economy {
            out.push(Lint::GraphicEconomyExceeded {
                layer,
                kinds,
                threshold: cfg.graphic_economy,
            });
        }
    }
    if n.kinds.len() > 1 {
        let constant = |f: &dyn Fn(&BlockKind) -> String| n.kinds.iter().map(f).collect::<BTreeSet<_>>().len() == 1;
        let mut unused = Vec::new();
        let vars: [(&str, &dyn Fn(&BlockKind) -> String); 5] = [
            ("color", &|k| format!("{:?}", k.color)),
            ("brightness", &|k| k.brightness.to_string()),
            ("texture", &|k| format!("{:?}", k.texture)),
            ("size", &|k| k.size_class.as_str().to_string()),
            ("orientation", &|k| k.orientation.to_string()),
        ];
        for (name, f) in vars {
            if constant(f) {
                unused.push(name.to_string());
            }
        }
        if !unused.is_empty() {
            out.push(Lint::VisualExpressiveness { unused });
        }
    }
    out
}

/// Construct ids of the bundled S-BPM notation.
pub mod sbpm {
    pub const SUBJECT: &str = "sbpm.subject";
    pub const MULTI_SUBJECT: &str = "sbpm.multi-subject";
    pub const EXTERNAL_SUBJECT: &str = "sbpm.external-subject";
    pub const CHANNEL: &str = "sbpm.channel";
    pub const SEND: &str = "sbpm.send";
    pub const RECEIVE: &str = "sbpm.receive";
    pub const ACTION: &str = "sbpm.action";
    pub const START_FLAG: &str = "sbpm.start-flag";
    pub const END_FLAG: &str = "sbpm.end-flag";
    pub const TRANSITION: &str = "sbpm.transition";
    pub const TIMEOUT_TRANSITION: &str = "sbpm.timeout-transition";

    pub const LAYER1_KINDS: [&str; 4] = ["subject", "multi-subject", "external-subject", "channel"];
    pub const LAYER2_KINDS: [&str; 7] = [
        "send",
        "receive",
        "action",
        "start-flag",
        "end-flag",
        "transition",
        "timeout-transition",
    ];
}

/// The two-layer S-BPM block notation: interaction view on layer 1,
/// subject behavior on layer 2.
pub fn sbpm_default_notation() -> NotationDefinition {
    struct K(&'static str, &'static str, [u8; 3], u8, Option<&'static str>, SizeClass, u16, u32, &'static str);
    let table = [
        K("subject", "Subject", [66, 133, 244], 60, Some("person"), SizeClass::L, 0, 1, "An actor with its own behavior"),
        K("multi-subject", "Multi-subject", [0, 40, 140], 40, Some("people"), SizeClass::L, 0, 1, "A subject instantiated several times in parallel"),
        K("external-subject", "External subject", [150, 150, 150], 60, Some("globe"), SizeClass::L, 0, 1, "A subject outside the process; its messages are injected"),
        K("channel", "Channel", [255, 193, 7], 80, Some("envelope"), SizeClass::M, 90, 1, "Messages one subject may send another"),
        K("send", "Send", [52, 168, 83], 60, Some("outbox"), SizeClass::M, 0, 2, "Send a message to a subject"),
        K("receive", "Receive", [234, 67, 53], 60, Some("inbox"), SizeClass::M, 0, 2, "Wait for one of several messages"),
        K("action", "Action", [255, 255, 255], 100, Some("gear"), SizeClass::M, 0, 2, "Do internal work and pick an outcome"),
        K("start-flag", "Start flag", [0, 0, 0], 0, Some("flag"), SizeClass::S, 0, 2, "Marks the start state"),
        K("end-flag", "End flag", [128, 0, 128], 30, Some("checkered-flag"), SizeClass::S, 0, 2, "Marks an end state"),
        K("transition", "Transition", [255, 140, 200], 70, None, SizeClass::S, 90, 2, "Moves from one state to the next"),
        K("timeout-transition", "Timeout transition", [140, 80, 20], 40, Some("clock"), SizeClass::S, 90, 2, "Leaves a receive state after waiting"),
    ];
    let mut kinds = Vec::new();
    let mut constructs = Vec::new();
    let mut mapping = Vec::new();
    for K(id, name, color, brightness, texture, size_class, orientation, layer, desc) in table {
        kinds.push(BlockKind {
            id: id.to_string(),
            name: name.to_string(),
            color,
            brightness,
            texture: texture.map(str::to_string),
            size_class,
            orientation,
            layer,
        });
        let construct = format!("sbpm.{id}");
        constructs.push(SemanticConstruct::new(construct.clone(), name, desc));
        mapping.push((id.to_string(), construct));
    }

    let mut rules = Vec::new();
    let connectors = ["transition", "timeout-transition"];
    let states = ["send", "receive", "action"];
    rules.push(GrammarRule::new("channel", "channel", Relation::Forbidden));
    for a in connectors {
        for b in connectors {
            rules.push(GrammarRule::new(a, b, Relation::Forbidden));
        }
    }
    for s in ["send", "action"] {
        rules.push(GrammarRule::new(s, "timeout-transition", Relation::Forbidden));
    }
    rules.push(GrammarRule::new("receive", "timeout-transition", Relation::MayFollow).capped(1));
    rules.push(GrammarRule::new("send", "transition", Relation::MayFollow).capped(1));
    for s in states {
        rules.push(GrammarRule::new("start-flag", s, Relation::MayFollow).capped(1));
        rules.push(GrammarRule::new(s, "start-flag", Relation::Forbidden));
        rules.push(GrammarRule::new("end-flag", s, Relation::Forbidden));
    }
    for c in connectors {
        rules.push(GrammarRule::new(c, "start-flag", Relation::Forbidden));
        rules.push(GrammarRule::new(c, "end-flag", Relation::Forbidden));
        rules.push(GrammarRule::new("start-flag", c, Relation::Forbidden));
        rules.push(GrammarRule::new("end-flag", c, Relation::Forbidden));
    }

    NotationDefinition {
        id: "sbpm".to_string(),
        kinds,
        rules,
        constructs,
        mapping,
    }
}
