use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{Point, SceneWindow};
use crate::error::{contract, Result};

/// Distance/angle thresholds for the interaction statistics (meters, degrees).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasThresholds {
    pub neighbor_radius: f64,
    pub parallel_heading_deg: f64,
    pub parallel_distance: f64,
    pub meet_far: f64,
    pub meet_near: f64,
    pub gather_distance: f64,
    /// Minimum co-observed frames for a parallel pair.
    pub parallel_min_frames: usize,
}

impl Default for BiasThresholds {
    fn default() -> Self {
        Self {
            neighbor_radius: 3.0,
            parallel_heading_deg: 15.0,
            parallel_distance: 2.0,
            meet_far: 4.0,
            meet_near: 1.0,
            gather_distance: 2.0,
            parallel_min_frames: 8,
        }
    }
}

impl BiasThresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.neighbor_radius,
            self.parallel_heading_deg,
            self.parallel_distance,
            self.meet_far,
            self.meet_near,
            self.gather_distance,
        ];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || self.parallel_min_frames == 0 {
            return contract("bias thresholds must be positive");
        }
        Ok(())
    }
}

/// Per-pedestrian averages of interaction counts in one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub environment: String,
    pub neighbors_avg: f64,
    pub parallel_avg: f64,
    pub meet_avg: f64,
    pub gather_avg: f64,
    pub thresholds: BiasThresholds,
    pub pedestrians: usize,
}

fn dist(a: Point, b: Point) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

fn heading_gap(a: &[Point], b: &[Point], t: usize) -> f64 {
    let ha = libm::atan2(a[t + 1][1] - a[t][1], a[t + 1][0] - a[t][0]);
    let hb = libm::atan2(b[t + 1][1] - b[t][1], b[t + 1][0] - b[t][0]);
    let mut d = libm::fabs(ha - hb) % (2.0 * PI);
    if d > PI {
        d = 2.0 * PI - d;
    }
    d
}

fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Default, Clone, Copy)]
struct PairFlags {
    neighbor: bool,
    parallel: bool,
    meet: bool,
    gather: bool,
}

fn pair_flags(a: &[Point], b: &[Point], th: &BiasThresholds) -> PairFlags {
    let frames = a.len().min(b.len());
    if frames == 0 {
        return PairFlags::default();
    }
    let sep: Vec<f64> = (0..frames).map(|t| dist(a[t], b[t])).collect();
    let neighbor = sep.iter().any(|d| *d <= th.neighbor_radius);

    let parallel = frames >= th.parallel_min_frames && frames >= 2 && {
        let mean_gap = (0..frames - 1).map(|t| heading_gap(a, b, t)).sum::<f64>()
            / (frames - 1) as f64;
        let mean_sep = sep.iter().sum::<f64>() / frames as f64;
        mean_gap < th.parallel_heading_deg.to_radians() && mean_sep < th.parallel_distance
    };

    let mut far_seen = false;
    let mut meet = false;
    for d in &sep {
        if far_seen && *d < th.meet_near {
            meet = true;
            break;
        }
        far_seen |= *d > th.meet_far;
    }

    let gather = frames >= 2 && slope(&sep) < 0.0 && sep[frames - 1] < th.gather_distance;
    PairFlags {
        neighbor,
        parallel,
        meet,
        gather,
    }
}

/// Interaction statistics over every pedestrian of every window.
pub fn bias_stats(
    environment: &str,
    windows: &[SceneWindow],
    thresholds: &BiasThresholds,
) -> Result<BiasReport> {
    thresholds.validate()?;
    let mut totals = [0usize; 4];
    let mut pedestrians = 0;
    for w in windows {
        let tracks: Vec<Vec<Point>> = (0..w.num_pedestrians()).map(|i| w.track_of(i)).collect();
        pedestrians += tracks.len();
        for i in 0..tracks.len() {
            for j in i + 1..tracks.len() {
                let f = pair_flags(&tracks[i], &tracks[j], thresholds);
                // each flag counts once for both members of the pair
                for (k, on) in [f.neighbor, f.parallel, f.meet, f.gather].into_iter().enumerate() {
                    if on {
                        totals[k] += 2;
                    }
                }
            }
        }
    }
    let avg = |k: usize| {
        if pedestrians == 0 {
            0.0
        } else {
            totals[k] as f64 / pedestrians as f64
        }
    };
    Ok(BiasReport {
        environment: environment.to_string(),
        neighbors_avg: avg(0),
        parallel_avg: avg(1),
        meet_avg: avg(2),
        gather_avg: avg(3),
        thresholds: *thresholds,
        pedestrians,
    })
}
