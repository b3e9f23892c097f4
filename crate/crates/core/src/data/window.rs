use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Point, RawObservation};
use crate::error::{contract, Error, Result};

/// Observed steps per window.
pub const OBS_LEN: usize = 8;
/// Predicted steps per window.
pub const PRED_LEN: usize = 12;
pub const WINDOW_LEN: usize = OBS_LEN + PRED_LEN;
pub const FRAME_STEP_SECONDS: f64 = 0.4;

/// One prediction instance: `N` pedestrians, each with 8 observed and 12
/// future positions. Positions are stored pedestrian-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneWindow {
    pub scene: String,
    pub start_frame: i64,
    pub pedestrian_ids: Vec<i64>,
    pub observed: Vec<Point>,
    pub future: Vec<Point>,
    pub frame_step: f64,
}

impl SceneWindow {
    pub fn new(
        scene: &str,
        start_frame: i64,
        pedestrian_ids: Vec<i64>,
        observed: Vec<Point>,
        future: Vec<Point>,
    ) -> Result<Self> {
        let w = Self {
            scene: scene.to_string(),
            start_frame,
            pedestrian_ids,
            observed,
            future,
            frame_step: FRAME_STEP_SECONDS,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.pedestrian_ids.len();
        if n == 0 {
            return contract("scene window without pedestrians");
        }
        if self.observed.len() != n * OBS_LEN || self.future.len() != n * PRED_LEN {
            return contract(format!(
                "scene window with {n} pedestrians has {} observed / {} future points",
                self.observed.len(),
                self.future.len()
            ));
        }
        if self
            .observed
            .iter()
            .chain(&self.future)
            .any(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return contract("scene window contains non-finite coordinates");
        }
        Ok(())
    }

    pub fn num_pedestrians(&self) -> usize {
        self.pedestrian_ids.len()
    }

    pub fn observed_of(&self, i: usize) -> &[Point] {
        &self.observed[i * OBS_LEN..(i + 1) * OBS_LEN]
    }

    pub fn future_of(&self, i: usize) -> &[Point] {
        &self.future[i * PRED_LEN..(i + 1) * PRED_LEN]
    }

    /// All 20 positions of pedestrian `i`.
    pub fn track_of(&self, i: usize) -> Vec<Point> {
        let mut t = self.observed_of(i).to_vec();
        t.extend_from_slice(self.future_of(i));
        t
    }

    pub fn last_observed(&self) -> Vec<Point> {
        (0..self.num_pedestrians())
            .map(|i| self.observed_of(i)[OBS_LEN - 1])
            .collect()
    }

    /// Reorders pedestrians: output pedestrian `k` is input pedestrian `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut w = self.clone();
        w.pedestrian_ids = perm.iter().map(|&p| self.pedestrian_ids[p]).collect();
        w.observed = perm
            .iter()
            .flat_map(|&p| self.observed_of(p).iter().copied())
            .collect();
        w.future = perm
            .iter()
            .flat_map(|&p| self.future_of(p).iter().copied())
            .collect();
        w
    }
}

/// Cuts a scene into windows of 20 consecutive frames.
///
/// Frame ids must lie on one arithmetic grid; gaps that skip whole grid
/// steps are allowed and simply produce no window across them. A window is
/// emitted at each `stride` offset where at least one pedestrian is present
/// in all 20 frames; pedestrians missing any frame are left out.
pub fn build_windows(
    scene: &str,
    observations: &[RawObservation],
    stride: usize,
) -> Result<Vec<SceneWindow>> {
    if stride == 0 {
        return contract("window stride must be at least 1");
    }
    let mut frames: BTreeMap<i64, BTreeMap<i64, Point>> = BTreeMap::new();
    for o in observations {
        frames
            .entry(o.frame_id)
            .or_default()
            .insert(o.pedestrian_id, [o.x, o.y]);
    }
    let ids: Vec<i64> = frames.keys().copied().collect();
    if ids.len() < WINDOW_LEN {
        return Ok(Vec::new());
    }
    let step = ids
        .windows(2)
        .map(|w| w[1] - w[0])
        .min()
        .expect("at least two frames");
    if let Some(bad) = ids.windows(2).find(|w| (w[1] - w[0]) % step != 0) {
        return Err(Error::Integrity(format!(
            "frame ids {} -> {} break the progression with step {step}",
            bad[0], bad[1]
        )));
    }
    let first = ids[0];
    let grid_len = ((ids[ids.len() - 1] - first) / step) as usize + 1;
    let mut grid: Vec<Option<&BTreeMap<i64, Point>>> = alloc::vec![None; grid_len];
    for (f, peds) in &frames {
        grid[((f - first) / step) as usize] = Some(peds);
    }

    let mut windows = Vec::new();
    let mut start = 0;
    while start + WINDOW_LEN <= grid_len {
        let span = &grid[start..start + WINDOW_LEN];
        if let Some(Some(head)) = span.first() {
            let present: Vec<i64> = head
                .keys()
                .copied()
                .filter(|p| span.iter().all(|f| f.is_some_and(|m| m.contains_key(p))))
                .collect();
            if !present.is_empty() {
                let mut observed = Vec::with_capacity(present.len() * OBS_LEN);
                let mut future = Vec::with_capacity(present.len() * PRED_LEN);
                for p in &present {
                    for (t, f) in span.iter().enumerate() {
                        let pos = f.expect("checked")[p];
                        if t < OBS_LEN {
                            observed.push(pos);
                        } else {
                            future.push(pos);
                        }
                    }
                }
                windows.push(SceneWindow::new(
                    scene,
                    first + start as i64 * step,
                    present,
                    observed,
                    future,
                )?);
            }
        }
        start += stride;
    }
    Ok(windows)
}
