//! Trajectory ingestion, windowing, coordinate conversion, scene splits and
//! environment statistics.

mod bias;
mod observation;
mod relative;
mod split;
mod window;

pub use bias::{bias_stats, BiasReport, BiasThresholds};
pub use observation::{parse_observations, RawObservation};
pub use relative::{from_relative, to_relative};
pub use split::{leave_one_out, DatasetSplit, SceneData};
pub use window::{build_windows, SceneWindow, FRAME_STEP_SECONDS, OBS_LEN, PRED_LEN, WINDOW_LEN};

/// A 2-D world position or displacement in meters.
pub type Point = [f64; 2];
