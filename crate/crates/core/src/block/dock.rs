//! Drop handling: a released block jumps to the nearest free docking slot.
//!
//! Every other block offers four slots (below, right, above, left), each
//! aligned with the neighbor's top or left edge and `gap` away from it. Side
//! slots are valid positions but never create a sequence connection under a
//! flow that runs the other way.

use super::{BlockDiagram, BlockError, FlowAxis, Point, Rect, Side, Size};

#[derive(Debug, Clone, PartialEq)]
pub enum DockOutcome {
    /// Nothing near: the block sits exactly at the drop position.
    Free,
    Docked { neighbor: String, side: Side },
    /// Every slot was taken; the block slid along the flow axis.
    Displaced,
}

/// Slot preference when two slots are equally near.
pub(crate) fn slot_order(axis: FlowAxis) -> [Side; 4] {
    match axis {
        FlowAxis::TopDown => [Side::Below, Side::Right, Side::Above, Side::Left],
        FlowAxis::LeftRight => [Side::Right, Side::Below, Side::Left, Side::Above],
    }
}

pub(crate) fn slot(neighbor: &Rect, side: Side, size: Size, gap: f64) -> Point {
    match side {
        Side::Below => Point::new(neighbor.x, neighbor.bottom() + gap),
        Side::Right => Point::new(neighbor.right() + gap, neighbor.y),
        Side::Above => Point::new(neighbor.x, neighbor.y - size.height - gap),
        Side::Left => Point::new(neighbor.x - size.width - gap, neighbor.y),
    }
}

/// Moves `moving` to `drop`, docking it if it overlaps another block or
/// lands within the snap threshold of a free slot.
pub fn snap_dock(d: &BlockDiagram, moving: &str, drop: Point) -> Result<BlockDiagram, BlockError> {
    snap_dock_detailed(d, moving, drop).map(|(d, _)| d)
}

pub fn snap_dock_detailed(d: &BlockDiagram, moving: &str, drop: Point) -> Result<(BlockDiagram, DockOutcome), BlockError> {
    let idx = d
        .blocks
        .iter()
        .position(|b| b.id == moving)
        .ok_or_else(|| BlockError::UnknownBlock(moving.to_string()))?;
    let size = d.blocks[idx].size;
    let others: Vec<(&str, Rect)> = d
        .blocks
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != idx)
        .map(|(_, b)| (b.id.as_str(), b.rect()))
        .collect();
    let free = |p: Point| {
        let r = Rect::at(p, size);
        others.iter().all(|(_, o)| !r.overlaps(o))
    };

    let overlapping = !free(drop);
    let order = slot_order(d.flow.axis);
    let mut best: Option<(f64, usize, &str, Side, Point)> = None;
    for (id, rect) in &others {
        for (rank, side) in order.iter().enumerate() {
            let p = slot(rect, *side, size, d.flow.gap);
            if !free(p) {
                continue;
            }
            let dist = p.distance(drop);
            let better = match &best {
                None => true,
                Some((bd, br, bid, _, _)) => (dist, rank, *id) < (*bd, *br, *bid),
            };
            if better {
                best = Some((dist, rank, id, *side, p));
            }
        }
    }

    let (position, outcome) = match best {
        Some((dist, _, id, side, p)) if overlapping || dist <= d.flow.snap_threshold => (
            p,
            DockOutcome::Docked {
                neighbor: id.to_string(),
                side,
            },
        ),
        _ if !overlapping => (drop, DockOutcome::Free),
        _ => (slide(drop, size, d.flow.axis, d.flow.gap, &others), DockOutcome::Displaced),
    };

    let mut next = d.clone();
    next.blocks[idx].position = position;
    next.grow_stage();
    Ok((next, outcome))
}

/// First overlap-free position at or after `drop` along the flow axis.
fn slide(drop: Point, size: Size, axis: FlowAxis, gap: f64, others: &[(&str, Rect)]) -> Point {
    let mut stops: Vec<f64> = others
        .iter()
        .map(|(_, r)| match axis {
            FlowAxis::TopDown => r.bottom() + gap,
            FlowAxis::LeftRight => r.right() + gap,
        })
        .collect();
    stops.sort_by(f64::total_cmp);
    let at = |v: f64| match axis {
        FlowAxis::TopDown => Point::new(drop.x, v),
        FlowAxis::LeftRight => Point::new(v, drop.y),
    };
    let start = match axis {
        FlowAxis::TopDown => drop.y,
        FlowAxis::LeftRight => drop.x,
    };
    stops
        .into_iter()
        .filter(|v| *v >= start)
        .map(at)
        .find(|p| {
            let r = Rect::at(*p, size);
            others.iter().all(|(_, o)| !r.overlaps(o))
        })
        // Past the last block edge nothing can overlap.
        .unwrap_or_else(|| at(start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::Block;

    fn with_b() -> BlockDiagram {
        BlockDiagram::default()
            .with_block(Block::new("B", "k", 0.0, 0.0, 80.0, 40.0))
            .with_block(Block::new("C", "k", 500.0, 500.0, 80.0, 40.0))
    }

    #[test]
    fn free_drop_stays_put() {
        let d = BlockDiagram::default().with_block(Block::new("C", "k", 0.0, 0.0, 80.0, 40.0));
        let (d, o) = snap_dock_detailed(&d, "C", Point::new(100.0, 100.0)).unwrap();
        assert_eq!(o, DockOutcome::Free);
        assert_eq!(d.block("C").unwrap().position, Point::new(100.0, 100.0));
    }

    #[test]
    fn overlapping_lower_half_docks_below() {
        let (d, o) = snap_dock_detailed(&with_b(), "C", Point::new(0.0, 20.0)).unwrap();
        assert_eq!(d.block("C").unwrap().position, Point::new(0.0, 40.0));
        assert_eq!(
            o,
            DockOutcome::Docked {
                neighbor: "B".into(),
                side: Side::Below
            }
        );
    }

    #[test]
    fn centered_drop_prefers_below() {
        let (d, _) = snap_dock_detailed(&with_b(), "C", Point::new(0.0, 0.0)).unwrap();
        // below and above are both 40 away; right and left 80.
        assert_eq!(d.block("C").unwrap().position, Point::new(0.0, 40.0));
        let mut lr = with_b();
        lr.flow.axis = FlowAxis::LeftRight;
        let (d, _) = snap_dock_detailed(&lr, "C", Point::new(0.0, 0.0)).unwrap();
        assert_eq!(d.block("C").unwrap().position, Point::new(0.0, 40.0));
    }

    #[test]
    fn occupied_slot_falls_back() {
        let d = with_b().with_block(Block::new("D", "k", 0.0, 40.0, 80.0, 40.0));
        let (d, _) = snap_dock_detailed(&d, "C", Point::new(0.0, 20.0)).unwrap();
        assert_eq!(d.overlap_area(), 0.0);
        assert_ne!(d.block("C").unwrap().position, Point::new(0.0, 40.0));
    }

    #[test]
    fn redrop_is_identity() {
        let (d, _) = snap_dock_detailed(&with_b(), "C", Point::new(0.0, 20.0)).unwrap();
        let pos = d.block("C").unwrap().position;
        let again = snap_dock(&d, "C", pos).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn unknown_block() {
        assert_eq!(
            snap_dock(&with_b(), "Z", Point::new(0.0, 0.0)),
            Err(BlockError::UnknownBlock("Z".into()))
        );
    }

    #[test]
    fn slide_when_everything_taken() {
        let others = [("a", Rect::new(0.0, 0.0, 10.0, 10.0)), ("b", Rect::new(0.0, 10.0, 10.0, 10.0))];
        let p = slide(Point::new(0.0, 5.0), Size::new(10.0, 10.0), FlowAxis::TopDown, 0.0, &others);
        assert_eq!(p, Point::new(0.0, 20.0));
    }
}
