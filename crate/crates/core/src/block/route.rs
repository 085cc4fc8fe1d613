//! Orthogonal arrow routing between two blocks.

use super::{Arrow, BlockDiagram, BlockError, FlowAxis, Point, Rect};

/// Routes an arrow from the boundary of `from` to the boundary of `to`.
///
/// Blocks whose projections overlap on one axis get a single straight
/// segment through the shared band. Otherwise the route is a Z with its
/// middle leg in the gap between the blocks, vertical-first under a
/// top-down flow and horizontal-first under left-right.
pub fn route_arrow(d: &BlockDiagram, from: &str, to: &str) -> Result<Arrow, BlockError> {
    if from == to {
        return Err(BlockError::SameBlock(from.to_string()));
    }
    let a = d.block(from).ok_or_else(|| BlockError::UnknownBlock(from.to_string()))?.rect();
    let b = d.block(to).ok_or_else(|| BlockError::UnknownBlock(to.to_string()))?.rect();
    let waypoints = route(&a, &b, d.flow.axis).ok_or_else(|| BlockError::OverlappingBlocks(from.to_string(), to.to_string()))?;
    Ok(Arrow {
        id: format!("{from}->{to}"),
        from_block: from.to_string(),
        to_block: to.to_string(),
        label: String::new(),
        waypoints,
    })
}

fn route(a: &Rect, b: &Rect, axis: FlowAxis) -> Option<Vec<Point>> {
    let ox = a.x_overlap(b);
    let oy = a.y_overlap(b);
    if ox > 0.0 && oy > 0.0 {
        return None;
    }
    // ox <= 0 means a horizontal gap exists, oy <= 0 a vertical one.
    if oy > 0.0 {
        let y = (a.y.max(b.y) + a.bottom().min(b.bottom())) / 2.0;
        let (sx, ex) = horizontal_ends(a, b);
        return Some(vec![Point::new(sx, y), Point::new(ex, y)]);
    }
    if ox > 0.0 {
        let x = (a.x.max(b.x) + a.right().min(b.right())) / 2.0;
        let (sy, ey) = vertical_ends(a, b);
        return Some(vec![Point::new(x, sy), Point::new(x, ey)]);
    }
    let (ca, cb) = (a.center(), b.center());
    Some(match axis {
        FlowAxis::TopDown => {
            let (sy, ey) = vertical_ends(a, b);
            let my = (sy + ey) / 2.0;
            vec![Point::new(ca.x, sy), Point::new(ca.x, my), Point::new(cb.x, my), Point::new(cb.x, ey)]
        }
        FlowAxis::LeftRight => {
            let (sx, ex) = horizontal_ends(a, b);
            let mx = (sx + ex) / 2.0;
            vec![Point::new(sx, ca.y), Point::new(mx, ca.y), Point::new(mx, cb.y), Point::new(ex, cb.y)]
        }
    })
}

/// Facing vertical edges of two horizontally separated rectangles.
fn horizontal_ends(a: &Rect, b: &Rect) -> (f64, f64) {
    if a.right() <= b.x {
        (a.right(), b.x)
    } else {
        (a.x, b.right())
    }
}

fn vertical_ends(a: &Rect, b: &Rect) -> (f64, f64) {
    if a.bottom() <= b.y {
        (a.bottom(), b.y)
    } else {
        (a.y, b.bottom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::Block;

    fn diagram(b: Block) -> BlockDiagram {
        BlockDiagram::default()
            .with_block(Block::new("a", "k", 0.0, 0.0, 80.0, 40.0))
            .with_block(b)
    }

    #[test]
    fn aligned_is_straight() {
        let d = diagram(Block::new("b", "k", 200.0, 0.0, 80.0, 40.0));
        let arrow = route_arrow(&d, "a", "b").unwrap();
        assert_eq!(arrow.waypoints, vec![Point::new(80.0, 20.0), Point::new(200.0, 20.0)]);
    }

    #[test]
    fn offset_is_z() {
        let d = diagram(Block::new("b", "k", 200.0, 100.0, 80.0, 40.0));
        let arrow = route_arrow(&d, "a", "b").unwrap();
        assert_eq!(arrow.waypoints.len(), 4);
        assert_eq!(arrow.waypoints[0], Point::new(40.0, 40.0));
        assert_eq!(arrow.waypoints[3], Point::new(240.0, 100.0));
    }

    #[test]
    fn same_block() {
        let d = diagram(Block::new("b", "k", 200.0, 100.0, 80.0, 40.0));
        assert_eq!(route_arrow(&d, "a", "a"), Err(BlockError::SameBlock("a".into())));
    }
}
