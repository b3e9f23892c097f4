use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Result};
use crate::grad::Array;

/// Default half-width of the uniform random intervention.
pub const RANDOM_HALF_WIDTH: f64 = 0.1;
/// Default decay of the running-mean intervention.
pub const MEAN_DECAY: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterventionMode {
    Zero,
    Mean,
    Random,
}

impl InterventionMode {
    pub fn name(self) -> &'static str {
        match self {
            InterventionMode::Zero => "zero",
            InterventionMode::Mean => "mean",
            InterventionMode::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zero" => Some(InterventionMode::Zero),
            "mean" => Some(InterventionMode::Mean),
            "random" => Some(InterventionMode::Random),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// How the counterfactual feature `x'` is produced.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionSpec {
    pub mode: InterventionMode,
    pub phase: Phase,
    pub half_width: f64,
    pub decay: f64,
    /// Exponential average of per-window feature means, one value per
    /// feature column.
    pub running_mean: Option<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl InterventionSpec {
    pub fn new(mode: InterventionMode, seed: u64) -> Self {
        Self {
            mode,
            phase: Phase::Train,
            half_width: RANDOM_HALF_WIDTH,
            decay: MEAN_DECAY,
            running_mean: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return contract(format!("intervention half-width must be > 0, got {}", self.half_width));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return contract(format!("intervention decay must lie in [0, 1), got {}", self.decay));
        }
        Ok(())
    }
}

/// Produces the replacement for `factual` (`[N, D]`).
///
/// In the training phase the mean mode first folds the current feature mean
/// into the running mean. The random mode at evaluation returns zeros.
pub fn make_intervention(spec: &mut InterventionSpec, factual: &Array) -> Result<Array> {
    spec.validate()?;
    let shape = factual.shape().to_vec();
    match (spec.mode, spec.phase) {
        (InterventionMode::Zero, _) | (InterventionMode::Random, Phase::Eval) => Ok(Array::zeros(&shape)),
        (InterventionMode::Random, Phase::Train) => {
            let h = spec.half_width;
            let data = (0..factual.len()).map(|_| spec.rng.random_range(-h..=h)).collect();
            Array::new(&shape, data)
        }
        (InterventionMode::Mean, phase) => {
            let d = factual.cols();
            if phase == Phase::Train {
                let rows = factual.len() / d.max(1);
                let mut batch = alloc::vec![0.0; d];
                for row in factual.data().chunks(d) {
                    for (b, v) in batch.iter_mut().zip(row) {
                        *b += v / rows as f64;
                    }
                }
                spec.running_mean = Some(match spec.running_mean.take() {
                    None => batch,
                    Some(m) if m.len() == d => m
                        .iter()
                        .zip(&batch)
                        .map(|(m, b)| spec.decay * m + (1.0 - spec.decay) * b)
                        .collect(),
                    Some(m) => {
                        return contract(format!(
                            "running mean has {} entries for a feature of width {d}",
                            m.len()
                        ))
                    }
                });
            }
            let Some(m) = &spec.running_mean else {
                return contract("mean intervention used before any training update");
            };
            if m.len() != d {
                return contract(format!("running mean has {} entries for a feature of width {d}", m.len()));
            }
            let data = (0..factual.len() / d.max(1)).flat_map(|_| m.iter().copied()).collect();
            Array::new(&shape, data)
        }
    }
}
