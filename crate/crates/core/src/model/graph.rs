use alloc::vec::Vec;

use crate::data::{Point, SceneWindow, OBS_LEN};
use crate::grad::Array;

/// Symmetric normalised adjacency `D^-1/2 (A + I) D^-1/2` with inverse
/// distance weights; coincident pedestrians get weight 0.
pub fn adjacency_from_positions(positions: &[Point]) -> Array {
    let n = positions.len();
    let mut a = Array::identity(n);
    {
        let d = a.data_mut();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let dist = libm::hypot(
                        positions[i][0] - positions[j][0],
                        positions[i][1] - positions[j][1],
                    );
                    if dist > 0.0 {
                        d[i * n + j] = 1.0 / dist;
                    }
                }
            }
        }
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / libm::sqrt(a.data()[i * n..(i + 1) * n].iter().sum::<f64>()))
        .collect();
    let d = a.data_mut();
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    a
}

/// Per-frame normalised adjacency over the observed frames of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    /// `[OBS_LEN, N, N]`
    pub adjacency: Array,
}

impl InteractionGraph {
    /// Always built from the factual observed positions.
    pub fn from_window(window: &SceneWindow) -> Self {
        let n = window.num_pedestrians();
        let mut data = Vec::with_capacity(OBS_LEN * n * n);
        for t in 0..OBS_LEN {
            let frame: Vec<Point> = (0..n).map(|i| window.observed_of(i)[t]).collect();
            data.extend_from_slice(adjacency_from_positions(&frame).data());
        }
        Self {
            adjacency: Array::new(&[OBS_LEN, n, n], data).expect("adjacency shape"),
        }
    }
}
