//! Interventions, dual factual/counterfactual passes, causal subtraction and
//! the objectives trained on the causal prediction.

mod gan;
mod intervention;
mod loss;

pub use gan::{gan_step_losses, relative_future, Discriminator};
pub use intervention::{make_intervention, InterventionMode, InterventionSpec, Phase, MEAN_DECAY, RANDOM_HALF_WIDTH};
pub use loss::{causal_l2_loss, causal_nll_loss, mean_squared_distance, variety_loss};

use crate::data::SceneWindow;
use crate::error::Result;
use crate::grad::{Array, Binding, Tape, Var};
use crate::model::{NoiseSample, PassOutput, Predictor};

/// Factual, counterfactual and causal predictions of one window, recorded on
/// a tape so that losses can be differentiated through both passes.
#[derive(Debug, Clone)]
pub struct PredictionBundle {
    pub factual: PassOutput,
    pub counterfactual: PassOutput,
    /// `[N, 12, 2]`: factual minus counterfactual displacements.
    pub causal: Var,
    /// `[N, 12, 5]`: causal mean with the factual scale and correlation.
    pub causal_gaussian: Option<Var>,
    /// The factual feature at the attachment point.
    pub feature: Array,
    /// The replacement `x'` fed to the counterfactual pass.
    pub replacement: Array,
}

/// Plain values of a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleValues {
    pub factual: Array,
    pub counterfactual: Array,
    pub causal: Array,
    pub causal_gaussian: Option<Array>,
}

impl PredictionBundle {
    pub fn values(&self, tape: &Tape) -> BundleValues {
        BundleValues {
            factual: tape.value(self.factual.displacement).clone(),
            counterfactual: tape.value(self.counterfactual.displacement).clone(),
            causal: tape.value(self.causal).clone(),
            causal_gaussian: self.causal_gaussian.map(|g| tape.value(g).clone()),
        }
    }
}

/// Runs the factual pass and the intervened pass with shared parameters and
/// the same `noise`, then subtracts.
pub fn causal_predict<P: Predictor>(
    model: &P,
    tape: &mut Tape,
    binding: &Binding,
    window: &SceneWindow,
    spec: &mut InterventionSpec,
    noise: &NoiseSample,
) -> Result<PredictionBundle> {
    let prepared = model.prepare(tape, binding, window)?;
    let feature = tape.value(prepared.feature).clone();
    let replacement = make_intervention(spec, &feature)?;
    causal_predict_with(model, tape, binding, &prepared, feature, replacement, noise)
}

/// [`causal_predict`] with an explicit replacement feature.
pub fn causal_predict_with<P: Predictor>(
    model: &P,
    tape: &mut Tape,
    binding: &Binding,
    prepared: &crate::model::Prepared<P::Context>,
    feature: Array,
    replacement: Array,
    noise: &NoiseSample,
) -> Result<PredictionBundle> {
    let factual = model.predict_from(tape, binding, prepared, prepared.feature, noise)?;
    let x_prime = tape.constant(replacement.clone())?;
    let counterfactual = model.predict_from(tape, binding, prepared, x_prime, noise)?;
    let causal = tape.sub(factual.displacement, counterfactual.displacement)?;
    let causal_gaussian = match factual.gaussian {
        Some(g) => {
            let spread = tape.slice(g, 2, 3)?;
            Some(tape.concat(&[causal, spread])?)
        }
        None => None,
    };
    Ok(PredictionBundle {
        factual,
        counterfactual,
        causal,
        causal_gaussian,
        feature,
        replacement,
    })
}

#[cfg(test)]
mod tests;
