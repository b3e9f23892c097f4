use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, RunSettings};
use super::eval::point_metrics;
use crate::causal::{
    causal_l2_loss, causal_nll_loss, causal_predict_with, gan_step_losses, make_intervention, relative_future,
    variety_loss, Discriminator, InterventionMode, InterventionSpec, Phase, MEAN_DECAY, RANDOM_HALF_WIDTH,
};
use crate::data::SceneWindow;
use crate::error::{contract, Error, Result};
use crate::grad::{adam_step, clip_global_norm, AdamConfig, Binding, OptimizerState, Tape, Var};
use crate::model::{future_displacements, Model, ModelConfig, NoiseSample, OutputMode, Predictor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Squared error of the decoded prediction.
    CausalL2,
    /// Minimum squared error over `variety_k` noise draws.
    Variety,
    /// Bivariate Gaussian negative log-likelihood (Gaussian heads only).
    CausalNll,
    /// Squared error plus a non-saturating adversarial term, with a
    /// discriminator trained alongside.
    CausalGan,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::CausalL2 => "causal_l2",
            Objective::Variety => "variety_k",
            Objective::CausalNll => "causal_nll",
            Objective::CausalGan => "causal_gan",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "causal_l2" => Some(Objective::CausalL2),
            "variety_k" => Some(Objective::Variety),
            "causal_nll" => Some(Objective::CausalNll),
            "causal_gan" => Some(Objective::CausalGan),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub settings: RunSettings,
    pub objective: Objective,
    pub variety_k: usize,
    pub gan_weight: f64,
    pub disc_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Validation windows scored per epoch; 0 means all.
    pub val_windows: usize,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        let objective = match model.output_mode() {
            OutputMode::Point => Objective::CausalL2,
            OutputMode::Gaussian => Objective::CausalNll,
        };
        Self {
            model,
            settings: RunSettings {
                causal: true,
                intervention: InterventionMode::Zero,
                half_width: RANDOM_HALF_WIDTH,
                decay: MEAN_DECAY,
            },
            objective,
            variety_k: 5,
            gan_weight: 0.1,
            disc_hidden: 32,
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            clip_norm: 10.0,
            seed: 0,
            val_windows: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.epochs < 1 || self.batch_size < 1 {
            return contract(format!("epochs and batch size must be >= 1 ({}, {})", self.epochs, self.batch_size));
        }
        if !(self.learning_rate > 0.0 && self.clip_norm > 0.0) {
            return contract("learning rate and clip norm must be > 0");
        }
        if self.objective == Objective::Variety && self.variety_k < 1 {
            return contract("variety_k must be >= 1");
        }
        if self.objective == Objective::CausalNll && self.model.output_mode() != OutputMode::Gaussian {
            return contract("causal_nll needs a Gaussian output head");
        }
        if self.objective == Objective::CausalGan && (self.disc_hidden < 1 || self.gan_weight < 0.0) {
            return contract("causal_gan needs disc_hidden >= 1 and gan_weight >= 0");
        }
        self.intervention_spec().validate()
    }

    pub fn intervention_spec(&self) -> InterventionSpec {
        let mut s = InterventionSpec::new(self.settings.intervention, self.seed ^ 0x5EED_1A7E);
        s.half_width = self.settings.half_width;
        s.decay = self.settings.decay;
        s
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ade: f64,
    pub val_fde: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub final_checkpoint: Checkpoint,
    pub best_checkpoint: Checkpoint,
    pub log: Vec<LogRecord>,
}

struct StepParts<'a> {
    config: &'a TrainConfig,
    model: &'a Model,
    disc: Option<&'a Discriminator>,
}

impl StepParts<'_> {
    /// Generator loss and, for the adversarial objective, the discriminator loss.
    fn window_loss(
        &self,
        tape: &mut Tape,
        gb: &Binding,
        db: Option<&Binding>,
        window: &SceneWindow,
        spec: &mut InterventionSpec,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Var, Option<Var>)> {
        let m = self.model;
        let c = self.config;
        let prepared = m.prepare(tape, gb, window)?;
        let replacement = if c.settings.causal {
            let f = tape.value(prepared.feature).clone();
            Some((f.clone(), make_intervention(spec, &f)?))
        } else {
            None
        };
        let predict = |tape: &mut Tape, noise: &NoiseSample| -> Result<(Var, Option<Var>)> {
            match &replacement {
                Some((f, r)) => {
                    let b = causal_predict_with(m, tape, gb, &prepared, f.clone(), r.clone(), noise)?;
                    Ok((b.causal, b.causal_gaussian))
                }
                None => {
                    let o = m.predict_from(tape, gb, &prepared, prepared.feature, noise)?;
                    Ok((o.displacement, o.gaussian))
                }
            }
        };
        let dim = m.noise_dim();
        let last = window.last_observed();
        match c.objective {
            Objective::CausalL2 => {
                let (d, _) = predict(tape, &NoiseSample::draw(dim, rng))?;
                Ok((causal_l2_loss(tape, d, &last, &window.future)?, None))
            }
            Objective::Variety => {
                let mut preds = Vec::with_capacity(c.variety_k);
                for _ in 0..c.variety_k {
                    preds.push(predict(tape, &NoiseSample::draw(dim, rng))?.0);
                }
                Ok((variety_loss(tape, &preds, &last, &window.future)?, None))
            }
            Objective::CausalNll => {
                let (_, g) = predict(tape, &NoiseSample::draw(dim, rng))?;
                let g = g.ok_or_else(|| Error::Contract("causal_nll needs a Gaussian output head".to_string()))?;
                Ok((causal_nll_loss(tape, g, &future_displacements(window)?)?, None))
            }
            Objective::CausalGan => {
                let (d, _) = predict(tape, &NoiseSample::draw(dim, rng))?;
                let l2 = causal_l2_loss(tape, d, &last, &window.future)?;
                let (disc, db) = (self.disc.expect("discriminator"), db.expect("discriminator binding"));
                let real = relative_future(window)?;
                let (gen, _) = gan_step_losses(tape, disc, db, &real, d)?;
                let detached_value = tape.value(d).clone();
                let detached = tape.constant(detached_value)?;
                let (_, dloss) = gan_step_losses(tape, disc, db, &real, detached)?;
                let gen = tape.scale(gen, c.gan_weight)?;
                Ok((tape.add(l2, gen)?, Some(dloss)))
            }
        }
    }
}

fn sum_scaled(tape: &mut Tape, parts: &[Var], scale: f64) -> Result<Var> {
    let mut acc = parts[0];
    for p in &parts[1..] {
        acc = tape.add(acc, *p)?;
    }
    tape.scale(acc, scale)
}

fn diverged(step: u64, e: Error) -> Error {
    match e {
        Error::NonFinite { .. } | Error::NumericDomain { .. } => Error::Diverged {
            step,
            detail: e.to_string(),
        },
        other => other,
    }
}

/// Mean point-prediction ADE/FDE over (a prefix of) `windows`.
pub fn validation_metrics(model: &Model, spec: Option<&InterventionSpec>, windows: &[SceneWindow]) -> Result<(f64, f64)> {
    let mut a = 0.0;
    let mut f = 0.0;
    for w in windows {
        let (wa, wf) = point_metrics(model, spec, w)?;
        a += wa;
        f += wf;
    }
    let n = windows.len().max(1) as f64;
    Ok((a / n, f / n))
}

/// Mini-batch training with Adam; see [`train_with`].
pub fn train(config: &TrainConfig, train_windows: &[SceneWindow], val_windows: &[SceneWindow]) -> Result<TrainOutcome> {
    train_with(config, train_windows, val_windows, &mut |_| {})
}

/// Trains on `train_windows`, scoring `val_windows` after every epoch and
/// keeping the checkpoint with the lowest validation ADE. `on_epoch` sees
/// each log record as soon as it exists.
pub fn train_with(
    config: &TrainConfig,
    train_windows: &[SceneWindow],
    val_windows: &[SceneWindow],
    on_epoch: &mut dyn FnMut(&LogRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_windows.is_empty() || val_windows.is_empty() {
        return contract("training needs at least one training and one validation window");
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::new(config.model, &mut init_rng)?;
    let mut disc = match config.objective {
        Objective::CausalGan => Some(Discriminator::new(config.disc_hidden, &mut init_rng)?),
        _ => None,
    };
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut opt = OptimizerState::new(&model.params, adam);
    let mut disc_opt = disc.as_ref().map(|d| OptimizerState::new(&d.params, adam));
    let mut spec = config.intervention_spec();
    let mut data_rng = ChaCha8Rng::seed_from_u64(config.seed);
    data_rng.set_stream(1);
    let val = if config.val_windows == 0 {
        val_windows
    } else {
        &val_windows[..config.val_windows.min(val_windows.len())]
    };

    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut step: u64 = 0;
    for epoch in 1..=config.epochs {
        spec.set_phase(Phase::Train);
        order.shuffle(&mut data_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            step += 1;
            let mut tape = Tape::new();
            let gb = tape.bind(&model.params)?;
            let db = match &disc {
                Some(d) => Some(tape.bind(&d.params)?),
                None => None,
            };
            let parts = StepParts {
                config,
                model: &model,
                disc: disc.as_ref(),
            };
            let mut gen_losses = Vec::with_capacity(batch.len());
            let mut disc_losses = Vec::new();
            for &i in batch {
                let (g, d) = parts
                    .window_loss(&mut tape, &gb, db.as_ref(), &train_windows[i], &mut spec, &mut data_rng)
                    .map_err(|e| diverged(step, e))?;
                gen_losses.push(g);
                disc_losses.extend(d);
            }
            let inv = 1.0 / batch.len() as f64;
            let loss = sum_scaled(&mut tape, &gen_losses, inv).map_err(|e| diverged(step, e))?;
            let loss_value = tape.value(loss).data()[0];
            let mut grads = tape.backward(loss)?.for_binding(&gb);
            let norm = clip_global_norm(&mut grads, config.clip_norm);
            if !norm.is_finite() {
                return Err(Error::Diverged {
                    step,
                    detail: format!("gradient norm {norm}"),
                });
            }
            if let (Some(d), Some(dopt), Some(db)) = (disc.as_mut(), disc_opt.as_mut(), db.as_ref()) {
                let dl = sum_scaled(&mut tape, &disc_losses, inv).map_err(|e| diverged(step, e))?;
                let mut dgrads = tape.backward(dl)?.for_binding(db);
                clip_global_norm(&mut dgrads, config.clip_norm);
                adam_step(&mut d.params, &dgrads, dopt)?;
            }
            adam_step(&mut model.params, &grads, &mut opt)?;
            loss_sum += loss_value;
            batches += 1;
        }
        let eval_spec = config.settings.causal.then(|| spec.clone().with_phase(Phase::Eval));
        let (val_ade, val_fde) = validation_metrics(&model, eval_spec.as_ref(), val).map_err(|e| diverged(step, e))?;
        let record = LogRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_ade,
            val_fde,
        };
        on_epoch(&record);
        log.push(record);
        let ck = Checkpoint::capture(
            &model,
            config.settings,
            &opt,
            spec.running_mean.as_deref(),
            step,
            epoch as u64,
        );
        if best.as_ref().is_none_or(|(b, _)| val_ade < *b) {
            best = Some((val_ade, ck));
        }
    }
    let final_checkpoint = Checkpoint::capture(
        &model,
        config.settings,
        &opt,
        spec.running_mean.as_deref(),
        step,
        config.epochs as u64,
    );
    Ok(TrainOutcome {
        model,
        final_checkpoint,
        best_checkpoint: best.expect("at least one epoch").1,
        log,
    })
}
