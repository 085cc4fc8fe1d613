//! Block diagrams: rectangles on a stage, connected either by docking
//! (sharing an edge along the flow direction) or by explicit arrows.

mod dock;
mod route;
mod translate;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::violation::{canonical, Violation, ViolationCode};

pub use dock::{snap_dock, snap_dock_detailed, DockOutcome};
pub use route::route_arrow;
pub use translate::{to_semantic_model, to_semantic_model_with_id, TranslateError};

/// Tolerance for comparing coordinates that should coincide.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Size {
    pub width: f64,
    pub height: f64,
}

impl Size {
    pub fn new(width: f64, height: f64) -> Self {
        Size { width, height }
    }
}

/// Axis-aligned rectangle; `y` grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Self {
        Rect { x, y, width, height }
    }

    pub fn at(origin: Point, size: Size) -> Self {
        Rect::new(origin.x, origin.y, size.width, size.height)
    }

    pub fn right(&self) -> f64 {
        self.x + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.height
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.width / 2.0, self.y + self.height / 2.0)
    }

    pub fn origin(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// Length of the overlap of the horizontal extents (negative when apart).
    pub fn x_overlap(&self, other: &Rect) -> f64 {
        self.right().min(other.right()) - self.x.max(other.x)
    }

    pub fn y_overlap(&self, other: &Rect) -> f64 {
        self.bottom().min(other.bottom()) - self.y.max(other.y)
    }

    pub fn intersection_area(&self, other: &Rect) -> f64 {
        self.x_overlap(other).max(0.0) * self.y_overlap(other).max(0.0)
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.intersection_area(other) > 0.0
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }

    pub fn union(&self, other: &Rect) -> Rect {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        Rect::new(x, y, self.right().max(other.right()) - x, self.bottom().max(other.bottom()) - y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowAxis {
    TopDown,
    LeftRight,
}

impl FlowAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowAxis::TopDown => "top-down",
            FlowAxis::LeftRight => "left-right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "top-down" => Some(FlowAxis::TopDown),
            "left-right" => Some(FlowAxis::LeftRight),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConvention {
    pub axis: FlowAxis,
    /// Distance from a docking slot within which a drop snaps.
    pub snap_threshold: f64,
    /// Space left between docked blocks; 0 is flush.
    pub gap: f64,
}

impl Default for FlowConvention {
    fn default() -> Self {
        FlowConvention {
            axis: FlowAxis::TopDown,
            snap_threshold: 20.0,
            gap: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: String,
    pub kind_ref: String,
    pub position: Point,
    pub size: Size,
    pub label: String,
    pub properties: Vec<(String, String)>,
    /// Nested diagram one level down, e.g. a subject's behavior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<Box<BlockDiagram>>,
}

impl Block {
    pub fn new(id: impl Into<String>, kind: impl Into<String>, x: f64, y: f64, width: f64, height: f64) -> Self {
        let id = id.into();
        Block {
            label: id.clone(),
            id,
            kind_ref: kind.into(),
            position: Point::new(x, y),
            size: Size::new(width, height),
            properties: Vec::new(),
            inner: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_property(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.set_property(key, value);
        self
    }

    pub fn with_inner(mut self, inner: BlockDiagram) -> Self {
        self.inner = Some(Box::new(inner));
        self
    }

    pub fn rect(&self) -> Rect {
        Rect::at(self.position, self.size)
    }

    pub fn property(&self, key: &str) -> Option<&str> {
        self.properties.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Replaces the value of an existing key or appends a new pair.
    pub fn set_property(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.properties.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.properties.push((key, value)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrow {
    pub id: String,
    pub from_block: String,
    pub to_block: String,
    #[serde(default)]
    pub label: String,
    pub waypoints: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagram {
    pub blocks: Vec<Block>,
    pub arrows: Vec<Arrow>,
    pub flow: FlowConvention,
    pub stage: Rect,
}

pub const DEFAULT_STAGE: Rect = Rect {
    x: 0.0,
    y: 0.0,
    width: 1024.0,
    height: 768.0,
};

impl Default for BlockDiagram {
    fn default() -> Self {
        BlockDiagram::new(FlowConvention::default())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockError {
    #[error("unknown block '{0}'")]
    UnknownBlock(String),
    #[error("an arrow needs two distinct blocks, got '{0}' twice")]
    SameBlock(String),
    #[error("blocks '{0}' and '{1}' overlap")]
    OverlappingBlocks(String, String),
    #[error("block id '{0}' already exists")]
    DuplicateBlock(String),
}

impl BlockDiagram {
    pub fn new(flow: FlowConvention) -> Self {
        BlockDiagram {
            blocks: Vec::new(),
            arrows: Vec::new(),
            flow,
            stage: DEFAULT_STAGE,
        }
    }

    pub fn block(&self, id: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.id == id)
    }

    pub fn block_mut(&mut self, id: &str) -> Option<&mut Block> {
        self.blocks.iter_mut().find(|b| b.id == id)
    }

    /// Adds a block without any snapping; the caller is responsible for
    /// keeping the diagram overlap-free.
    pub fn with_block(mut self, block: Block) -> Self {
        self.blocks.push(block);
        self.grow_stage();
        self
    }

    /// Adds a labelled arrow routed between two existing blocks.
    pub fn with_arrow(self, from: &str, to: &str, label: &str) -> Result<Self, BlockError> {
        let mut arrow = route_arrow(&self, from, to)?;
        arrow.label = label.to_string();
        let mut id = arrow.id.clone();
        let mut n = 1;
        while self.arrows.iter().any(|a| a.id == id) {
            n += 1;
            id = format!("{}#{n}", arrow.id);
        }
        arrow.id = id;
        let mut next = self;
        next.arrows.push(arrow);
        Ok(next)
    }

    /// Drops a new block from the palette: inserts it and docks it at its
    /// position.
    pub fn place(&self, block: Block) -> Result<Self, BlockError> {
        if self.block(&block.id).is_some() {
            return Err(BlockError::DuplicateBlock(block.id));
        }
        let drop = block.position;
        let id = block.id.clone();
        let mut next = self.clone();
        // Park the block where it cannot collide until docking resolves it.
        let mut parked = block;
        parked.position = Point::new(f64::INFINITY, f64::INFINITY);
        next.blocks.push(parked);
        snap_dock(&next, &id, drop)
    }

    /// Re-routes every arrow, e.g. after blocks moved.
    pub fn reroute(&mut self) {
        let routed: Vec<Option<Arrow>> = self
            .arrows
            .iter()
            .map(|a| route_arrow(self, &a.from_block, &a.to_block).ok())
            .collect();
        for (a, r) in self.arrows.iter_mut().zip(routed) {
            if let Some(r) = r {
                a.waypoints = r.waypoints;
            }
        }
    }

    /// Bounding box of all blocks, if any.
    pub fn content_bounds(&self) -> Option<Rect> {
        self.blocks
            .iter()
            .map(Block::rect)
            .filter(|r| r.x.is_finite() && r.y.is_finite())
            .reduce(|a, b| a.union(&b))
    }

    /// Grows the stage to hold every block, leaving a margin of a tenth of
    /// the content extent. The stage never shrinks.
    pub fn grow_stage(&mut self) {
        let Some(content) = self.content_bounds() else { return };
        if self.stage.contains_rect(&content) {
            return;
        }
        let mx = content.width * 0.1;
        let my = content.height * 0.1;
        let padded = Rect::new(content.x - mx, content.y - my, content.width + 2.0 * mx, content.height + 2.0 * my);
        self.stage = self.stage.union(&padded);
    }

    /// Blocks and arrows sorted by id, recursively.
    pub fn canonicalized(&self) -> Self {
        let mut d = self.clone();
        d.blocks.sort_by(|a, b| a.id.cmp(&b.id));
        d.arrows.sort_by(|a, b| a.id.cmp(&b.id));
        for b in &mut d.blocks {
            if let Some(inner) = &b.inner {
                b.inner = Some(Box::new(inner.canonicalized()));
            }
        }
        d
    }

    /// Total pairwise overlap area; 0 for a committed diagram.
    pub fn overlap_area(&self) -> f64 {
        let mut total = 0.0;
        for (i, a) in self.blocks.iter().enumerate() {
            for b in &self.blocks[i + 1..] {
                total += a.rect().intersection_area(&b.rect());
            }
        }
        total
    }
}

/// Geometric invariants of a diagram and its nested diagrams.
pub fn diagram_violations(d: &BlockDiagram) -> Vec<Violation> {
    let mut out = Vec::new();
    collect_violations(d, None, &mut out);
    canonical(out)
}

fn collect_violations(d: &BlockDiagram, owner: Option<&str>, out: &mut Vec<Violation>) {
    let tag = |v: Violation| match owner {
        Some(o) => v.in_subject(o),
        None => v,
    };
    let mut seen = BTreeSet::new();
    for b in &d.blocks {
        if b.id.is_empty() {
            out.push(tag(Violation::error(ViolationCode::EmptyId, "block id is empty")));
        }
        if !seen.insert(b.id.as_str()) {
            out.push(tag(Violation::error(ViolationCode::DuplicateId, format!("block id '{}' is not unique", b.id)).at(b.id.clone())));
        }
        if !(b.size.width > 0.0 && b.size.height > 0.0) {
            out.push(tag(Violation::error(ViolationCode::BadProperty, "block size must be positive").at(b.id.clone())));
        }
        let mut keys = BTreeSet::new();
        for (k, _) in &b.properties {
            if !keys.insert(k.as_str()) {
                out.push(tag(Violation::error(ViolationCode::DuplicateId, format!("property '{k}' repeated")).at(b.id.clone())));
            }
        }
        if let Some(inner) = &b.inner {
            collect_violations(inner, Some(&b.id), out);
        }
    }
    for (i, a) in d.blocks.iter().enumerate() {
        for b in &d.blocks[i + 1..] {
            if a.rect().overlaps(&b.rect()) {
                out.push(tag(Violation::error(
                    ViolationCode::BadProperty,
                    format!("blocks '{}' and '{}' overlap", a.id, b.id),
                )
                .at(a.id.clone())));
            }
        }
    }
    for a in &d.arrows {
        for end in [&a.from_block, &a.to_block] {
            if d.block(end).is_none() {
                out.push(tag(Violation::error(
                    ViolationCode::DanglingReference,
                    format!("arrow '{}' references unknown block '{end}'", a.id),
                )
                .at(a.id.clone())));
            }
        }
    }
}

/// The side of the `from` block at which a docked neighbor sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Below,
    Right,
    Above,
    Left,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConnectionOrigin {
    Implicit(Side),
    Explicit(String),
}

/// A directed link between two blocks. Two connections mean the same thing
/// when their endpoints agree; see [`Connection::same_link`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Connection {
    pub from_block: String,
    pub to_block: String,
    pub origin: ConnectionOrigin,
}

impl Connection {
    pub fn same_link(&self, other: &Connection) -> bool {
        self.from_block == other.from_block && self.to_block == other.to_block
    }
}

/// Semantic content of a connection list: endpoint pairs, origin ignored.
pub fn links(connections: &[Connection]) -> BTreeSet<(String, String)> {
    connections
        .iter()
        .map(|c| (c.from_block.clone(), c.to_block.clone()))
        .collect()
}

/// Where `b` touches `a` along a shared edge of positive length, with the
/// facing edges at most `gap` apart.
pub fn touching_side(a: &Rect, b: &Rect, gap: f64) -> Option<Side> {
    let within = |d: f64| d >= -EPS && d <= gap + EPS;
    if a.x_overlap(b) > EPS {
        if within(b.y - a.bottom()) {
            return Some(Side::Below);
        }
        if within(a.y - b.bottom()) {
            return Some(Side::Above);
        }
    }
    if a.y_overlap(b) > EPS {
        if within(b.x - a.right()) {
            return Some(Side::Right);
        }
        if within(a.x - b.right()) {
            return Some(Side::Left);
        }
    }
    None
}

/// A pair of blocks touching across the flow axis. Such adjacency carries no
/// direction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CrossAdjacency {
    pub first: String,
    pub second: String,
}

fn adjacencies(d: &BlockDiagram) -> (Vec<Connection>, Vec<CrossAdjacency>) {
    let mut along = Vec::new();
    let mut across = Vec::new();
    for (i, a) in d.blocks.iter().enumerate() {
        for b in &d.blocks[i + 1..] {
            let Some(side) = touching_side(&a.rect(), &b.rect(), d.flow.gap) else { continue };
            let (upstream, downstream, side) = match (d.flow.axis, side) {
                (FlowAxis::TopDown, Side::Below) | (FlowAxis::LeftRight, Side::Right) => (a, b, side),
                (FlowAxis::TopDown, Side::Above) => (b, a, Side::Below),
                (FlowAxis::LeftRight, Side::Left) => (b, a, Side::Right),
                _ => {
                    let (first, second) = if a.id <= b.id { (a, b) } else { (b, a) };
                    across.push(CrossAdjacency {
                        first: first.id.clone(),
                        second: second.id.clone(),
                    });
                    continue;
                }
            };
            along.push(Connection {
                from_block: upstream.id.clone(),
                to_block: downstream.id.clone(),
                origin: ConnectionOrigin::Implicit(side),
            });
        }
    }
    across.sort();
    (along, across)
}

/// Implicit connections from docking along the flow axis plus one explicit
/// connection per arrow, sorted.
pub fn infer_connections(d: &BlockDiagram) -> Vec<Connection> {
    let (mut out, _) = adjacencies(d);
    out.extend(d.arrows.iter().map(|a| Connection {
        from_block: a.from_block.clone(),
        to_block: a.to_block.clone(),
        origin: ConnectionOrigin::Explicit(a.id.clone()),
    }));
    out.sort();
    out
}

/// Block pairs that touch across the flow axis.
pub fn cross_adjacencies(d: &BlockDiagram) -> Vec<CrossAdjacency> {
    adjacencies(d).1
}
