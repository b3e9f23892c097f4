use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{ade_fde, best_of_samples, SampleChoice};
use crate::causal::{causal_predict_with, make_intervention, InterventionSpec, Phase};
use crate::data::{Point, SceneWindow, PRED_LEN};
use crate::error::{contract, Result};
use crate::grad::Tape;
use crate::model::{
    decode_trajectory, sample_bivariate, GaussianParams, Model, NoiseSample, OutputMode, Predictor,
};

/// Where the K samples come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Fresh latent noise (point heads) or Gaussian draws (Gaussian heads).
    Stochastic,
    /// Zero latent noise and the Gaussian mean; every sample is identical.
    Mean,
}

/// Decoded absolute predictions for `k` samples of one window.
///
/// With `spec` present the causal prediction is used (the intervention is switched
/// to the evaluation phase); otherwise the factual prediction.
pub fn sample_predictions(
    model: &Model,
    spec: Option<&InterventionSpec>,
    window: &SceneWindow,
    k: usize,
    rng: &mut ChaCha8Rng,
    sampling: Sampling,
) -> Result<Vec<Vec<Point>>> {
    if k == 0 {
        return contract("best-of-K needs K >= 1");
    }
    let last = window.last_observed();
    let mut tape = Tape::new();
    let binding = tape.bind(&model.params)?;
    let prepared = model.prepare(&mut tape, &binding, window)?;
    let replacement = match spec {
        Some(s) => {
            let mut s = s.clone();
            s.set_phase(Phase::Eval);
            let f = tape.value(prepared.feature).clone();
            Some(make_intervention(&mut s, &f)?)
        }
        None => None,
    };
    // displacement and optional Gaussian rows for one noise draw
    let pass = |tape: &mut Tape, noise: &NoiseSample| -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        match &replacement {
            Some(r) => {
                let f = tape.value(prepared.feature).clone();
                let b = causal_predict_with(model, tape, &binding, &prepared, f, r.clone(), noise)?;
                Ok((
                    tape.value(b.causal).data().to_vec(),
                    b.causal_gaussian.map(|g| tape.value(g).data().to_vec()),
                ))
            }
            None => {
                let out = model.predict_from(tape, &binding, &prepared, prepared.feature, noise)?;
                Ok((
                    tape.value(out.displacement).data().to_vec(),
                    out.gaussian.map(|g| tape.value(g).data().to_vec()),
                ))
            }
        }
    };
    let dim = model.noise_dim();
    let mut samples = Vec::with_capacity(k);
    match (model.output_mode(), sampling) {
        (_, Sampling::Mean) => {
            let (d, _) = pass(&mut tape, &NoiseSample::zeros(dim))?;
            let decoded = decode_trajectory(&d, &last)?;
            samples.resize(k, decoded);
        }
        (OutputMode::Point, Sampling::Stochastic) => {
            for _ in 0..k {
                let z = NoiseSample::draw(dim, rng);
                let (d, _) = pass(&mut tape, &z)?;
                samples.push(decode_trajectory(&d, &last)?);
            }
        }
        (OutputMode::Gaussian, Sampling::Stochastic) => {
            let (_, g) = pass(&mut tape, &NoiseSample::zeros(dim))?;
            let g = g.ok_or_else(|| crate::Error::Contract("Gaussian head without parameters".into()))?;
            for _ in 0..k {
                let d: Vec<f64> = g
                    .chunks(5)
                    .flat_map(|row| sample_bivariate(&GaussianParams::from_row(row), rng))
                    .collect();
                samples.push(decode_trajectory(&d, &last)?);
            }
        }
    }
    Ok(samples)
}

/// Best-of-K metrics for one window.
pub fn best_of_k(
    model: &Model,
    spec: Option<&InterventionSpec>,
    window: &SceneWindow,
    k: usize,
    rng: &mut ChaCha8Rng,
    sampling: Sampling,
) -> Result<SampleChoice> {
    let samples = sample_predictions(model, spec, window, k, rng, sampling)?;
    best_of_samples(&samples, &window.future)
}

/// Per-window random stream: same seed and index give the same draws
/// regardless of evaluation order.
pub fn window_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowMetrics {
    pub scene: String,
    pub start_frame: i64,
    pub ade: f64,
    pub fde: f64,
}

/// One aggregated evaluation row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub scene: String,
    pub split: String,
    pub k: usize,
    pub ade: f64,
    pub fde: f64,
    pub seed: u64,
    pub sec_per_window: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub windows: Vec<WindowMetrics>,
    /// Per-scene means of the window metrics, in scene-name order.
    pub records: Vec<MetricsRecord>,
}

impl Evaluation {
    /// Mean over all windows.
    pub fn mean_ade_fde(&self) -> (f64, f64) {
        let n = self.windows.len().max(1) as f64;
        (
            self.windows.iter().map(|w| w.ade).sum::<f64>() / n,
            self.windows.iter().map(|w| w.fde).sum::<f64>() / n,
        )
    }
}

/// Metrics of a single window evaluated with its derived random stream.
pub fn evaluate_window(
    model: &Model,
    spec: Option<&InterventionSpec>,
    window: &SceneWindow,
    index: usize,
    k: usize,
    seed: u64,
    sampling: Sampling,
) -> Result<WindowMetrics> {
    let mut rng = window_rng(seed, index);
    let c = best_of_k(model, spec, window, k, &mut rng, sampling)?;
    Ok(WindowMetrics {
        scene: window.scene.clone(),
        start_frame: window.start_frame,
        ade: c.ade,
        fde: c.fde,
    })
}

/// Aggregates window metrics into per-scene records.
pub fn aggregate(windows: Vec<WindowMetrics>, split: &str, k: usize, seed: u64) -> Evaluation {
    let mut by_scene: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for w in &windows {
        let e = by_scene.entry(w.scene.clone()).or_insert((0.0, 0.0, 0));
        e.0 += w.ade;
        e.1 += w.fde;
        e.2 += 1;
    }
    let records = by_scene
        .into_iter()
        .map(|(scene, (a, f, n))| MetricsRecord {
            scene,
            split: split.to_string(),
            k,
            ade: a / n as f64,
            fde: f / n as f64,
            seed,
            sec_per_window: 0.0,
        })
        .collect();
    Evaluation { windows, records }
}

/// Best-of-K over every window, aggregated by scene.
pub fn evaluate(
    model: &Model,
    spec: Option<&InterventionSpec>,
    windows: &[SceneWindow],
    split: &str,
    k: usize,
    seed: u64,
    sampling: Sampling,
) -> Result<Evaluation> {
    let per_window = windows
        .iter()
        .enumerate()
        .map(|(i, w)| evaluate_window(model, spec, w, i, k, seed, sampling))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(per_window, split, k, seed))
}

/// Plain ADE/FDE of the deterministic prediction (`Sampling::Mean`, K = 1).
pub fn point_metrics(model: &Model, spec: Option<&InterventionSpec>, window: &SceneWindow) -> Result<(f64, f64)> {
    let mut rng = window_rng(0, 0);
    let s = sample_predictions(model, spec, window, 1, &mut rng, Sampling::Mean)?;
    debug_assert_eq!(s[0].len(), window.num_pedestrians() * PRED_LEN);
    ade_fde(&s[0], &window.future)
}
