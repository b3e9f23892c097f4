use alloc::format;
use alloc::vec::Vec;

use crate::data::{Point, PRED_LEN};
use crate::error::{contract, Result};
use crate::grad::{Array, Tape, Var};

/// Absolute positions from `[N, 12, 2]` displacements (flattened) and each
/// pedestrian's last observed position.
pub fn decode_trajectory(displacements: &[f64], last_observed: &[Point]) -> Result<Vec<Point>> {
    let n = last_observed.len();
    if displacements.len() != n * PRED_LEN * 2 {
        return contract(format!(
            "decode_trajectory: {} displacement values for {n} pedestrians",
            displacements.len()
        ));
    }
    let mut out = Vec::with_capacity(n * PRED_LEN);
    for (i, anchor) in last_observed.iter().enumerate() {
        let mut p = *anchor;
        for t in 0..PRED_LEN {
            let k = (i * PRED_LEN + t) * 2;
            p = [p[0] + displacements[k], p[1] + displacements[k + 1]];
            out.push(p);
        }
    }
    Ok(out)
}

/// Lower-triangular ones, `[12, 12]`: row `t` sums steps `0..=t`.
pub fn cumulative_matrix() -> Array {
    let mut m = Array::zeros(&[PRED_LEN, PRED_LEN]);
    for t in 0..PRED_LEN {
        for s in 0..=t {
            m.data_mut()[t * PRED_LEN + s] = 1.0;
        }
    }
    m
}

/// Differentiable [`decode_trajectory`]; returns `[N, 12, 2]` positions.
pub fn decode_on_tape(tape: &mut Tape, displacement: Var, last_observed: &[Point]) -> Result<Var> {
    let n = last_observed.len();
    if tape.shape(displacement) != [n, PRED_LEN, 2] {
        return contract(format!(
            "decode: displacement shape {:?} for {n} pedestrians",
            tape.shape(displacement)
        ));
    }
    let l = tape.constant(cumulative_matrix())?;
    let d = tape.permute(displacement, [1, 0, 2])?;
    let d = tape.reshape(d, &[PRED_LEN, n * 2])?;
    let c = tape.matmul(l, d)?;
    let c = tape.reshape(c, &[PRED_LEN, n, 2])?;
    let c = tape.permute(c, [1, 0, 2])?;
    let anchors: Vec<f64> = last_observed
        .iter()
        .flat_map(|a| (0..PRED_LEN).flat_map(move |_| [a[0], a[1]]))
        .collect();
    let a = tape.constant(Array::new(&[n, PRED_LEN, 2], anchors)?)?;
    tape.add(c, a)
}
