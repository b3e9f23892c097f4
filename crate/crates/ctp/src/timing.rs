use std::time::Instant;

use ctp_core::causal::InterventionSpec;
use ctp_core::data::SceneWindow;
use ctp_core::harness::{sample_predictions, window_rng, Sampling};
use ctp_core::model::Model;

use crate::error::{CtpError, Result};

/// Wall-clock cost of predicting every window once at batch size 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    /// Seconds per window, one entry per repetition.
    pub per_repetition: Vec<f64>,
    /// Arithmetic mean of `per_repetition`.
    pub mean: f64,
}

/// Times the deterministic prediction of each window, `repetitions` times.
/// With `spec` present the causal dual pass is timed, otherwise the factual
/// single pass.
pub fn time_inference(
    model: &Model,
    spec: Option<&InterventionSpec>,
    windows: &[SceneWindow],
    repetitions: usize,
) -> Result<Timing> {
    if repetitions == 0 || windows.is_empty() {
        return Err(CtpError::Usage("timing needs at least one repetition and one window".into()));
    }
    let mut per_repetition = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        for (i, w) in windows.iter().enumerate() {
            let s = sample_predictions(model, spec, w, 1, &mut window_rng(0, i), Sampling::Mean)?;
            std::hint::black_box(s);
        }
        per_repetition.push(start.elapsed().as_secs_f64() / windows.len() as f64);
    }
    let mean = per_repetition.iter().sum::<f64>() / repetitions as f64;
    Ok(Timing { per_repetition, mean })
}
