use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::causal::{InterventionMode, InterventionSpec};
use crate::error::{Error, Result};
use crate::grad::{Array, OptimizerState};
use crate::model::{Family, Model, ModelConfig};

/// Newest checkpoint layout this crate reads and writes.
pub const CHECKPOINT_VERSION: u16 = 1;

/// 64-bit FNV-1a.
pub fn digest(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// How predictions are formed from a trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    /// Train and evaluate on the causal prediction rather than the factual one.
    pub causal: bool,
    pub intervention: InterventionMode,
    pub half_width: f64,
    pub decay: f64,
}

impl RunSettings {
    /// The intervention spec used at evaluation, or `None` for a factual model.
    pub fn eval_spec(&self, running_mean: Option<&[f64]>) -> Option<InterventionSpec> {
        self.causal.then(|| {
            let mut s = InterventionSpec::new(self.intervention, 0).with_phase(crate::causal::Phase::Eval);
            s.half_width = self.half_width;
            s.decay = self.decay;
            s.running_mean = running_mean.map(|m| m.to_vec());
            s
        })
    }
}

/// A snapshot of a training run. Every array is rounded to 32-bit floats so
/// that the on-disk form reproduces it exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u16,
    pub family: Family,
    /// Canonical [`ModelConfig::to_text`] form.
    pub config_text: String,
    pub config_digest: u64,
    pub settings: RunSettings,
    pub params: Vec<(String, Array)>,
    pub adam_step: u64,
    pub first_moment: Vec<Array>,
    pub second_moment: Vec<Array>,
    pub running_mean: Option<Vec<f64>>,
    pub step: u64,
    pub epoch: u64,
}

pub fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

fn rounded(a: &Array) -> Array {
    let mut a = a.clone();
    a.data_mut().iter_mut().for_each(|v| *v = round_f32(*v));
    a
}

impl Checkpoint {
    pub fn capture(
        model: &Model,
        settings: RunSettings,
        optimizer: &OptimizerState,
        running_mean: Option<&[f64]>,
        step: u64,
        epoch: u64,
    ) -> Self {
        let config_text = model.config.to_text();
        Self {
            version: CHECKPOINT_VERSION,
            family: model.family(),
            config_digest: digest(&config_text),
            config_text,
            settings,
            params: model.params.iter().map(|p| (p.name.clone(), rounded(&p.value))).collect(),
            adam_step: optimizer.step,
            first_moment: optimizer.first_moment.iter().map(rounded).collect(),
            second_moment: optimizer.second_moment.iter().map(rounded).collect(),
            running_mean: running_mean.map(|m| m.iter().map(|v| round_f32(*v)).collect()),
            step,
            epoch,
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        if digest(&self.config_text) != self.config_digest {
            return Err(Error::Integrity(format!(
                "config digest {:016x} does not match the stored configuration `{}`",
                self.config_digest, self.config_text
            )));
        }
        let c = ModelConfig::from_text(&self.config_text)?;
        if c.family() != self.family {
            return Err(Error::Integrity("checkpoint family disagrees with its configuration".to_string()));
        }
        Ok(c)
    }

    /// Rebuilds the model, checking the stored digest and, when given, that
    /// it matches `expected`.
    pub fn restore(&self, expected: Option<&ModelConfig>) -> Result<Model> {
        let config = self.model_config()?;
        if let Some(e) = expected {
            let want = digest(&e.to_text());
            if want != self.config_digest {
                return Err(Error::Integrity(format!(
                    "config digest mismatch: checkpoint {:016x} (`{}`), requested {:016x} (`{}`)",
                    self.config_digest,
                    self.config_text,
                    want,
                    e.to_text()
                )));
            }
        }
        let mut model = Model::new(config, &mut ChaCha8Rng::seed_from_u64(0))?;
        if model.params.len() != self.params.len() {
            return Err(Error::Integrity(format!(
                "checkpoint holds {} parameters, the model has {}",
                self.params.len(),
                model.params.len()
            )));
        }
        for (name, value) in &self.params {
            let id = model
                .params
                .find(name)
                .ok_or_else(|| Error::Integrity(format!("unknown parameter `{name}`")))?;
            if model.params.get(id).shape() != value.shape() {
                return Err(Error::Integrity(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    value.shape(),
                    model.params.get(id).shape()
                )));
            }
            *model.params.get_mut(id) = value.clone();
        }
        Ok(model)
    }

    /// Evaluation-phase intervention for this run, if it is causal.
    pub fn eval_spec(&self) -> Option<InterventionSpec> {
        self.settings.eval_spec(self.running_mean.as_deref())
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|(_, a)| a.len()).sum()
    }
}
