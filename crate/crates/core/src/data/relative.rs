use alloc::vec::Vec;

use super::Point;
use crate::error::{contract, Result};

/// Per-step displacements `p[t + 1] - p[t]`.
pub fn to_relative(positions: &[Point]) -> Result<Vec<Point>> {
    if positions.len() < 2 {
        return contract("to_relative needs at least two positions");
    }
    Ok(positions
        .windows(2)
        .map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]])
        .collect())
}

/// Cumulative sum of `displacements` starting at `anchor`; the anchor is the
/// first returned position.
pub fn from_relative(displacements: &[Point], anchor: Point) -> Vec<Point> {
    let mut out = Vec::with_capacity(displacements.len() + 1);
    out.push(anchor);
    let mut p = anchor;
    for d in displacements {
        p = [p[0] + d[0], p[1] + d[1]];
        out.push(p);
    }
    out
}
