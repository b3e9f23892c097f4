//! The two predictor families and their shared building blocks.

mod config;
mod decode;
mod gaussian;
mod graph;
mod layers;
mod stgat;
mod stgcnn;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub use config::{count_parameters, Family, ModelConfig, OutputMode, StgatConfig, StgcnnConfig};
pub use decode::{cumulative_matrix, decode_on_tape, decode_trajectory};
pub use gaussian::{bivariate_nll, sample_bivariate, GaussianParams, RHO_LIMIT};
pub use graph::{adjacency_from_positions, InteractionGraph};
pub use layers::{GatLayer, Linear, LstmCell, GAT_LEAKY_SLOPE};
pub use stgat::StgatNet;
pub use stgcnn::StgcnnNet;

use crate::data::{to_relative, SceneWindow, OBS_LEN, PRED_LEN};
use crate::error::{contract, Result};
use crate::grad::{Array, Binding, ParameterStore, Tape, Var};

/// Latent vector `Z` shared by every pass over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSample {
    pub values: Vec<f64>,
}

impl NoiseSample {
    pub fn zeros(dim: usize) -> Self {
        Self { values: vec![0.0; dim] }
    }

    pub fn draw<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Self {
            values: (0..dim).map(|_| StandardNormal.sample(rng)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Encoder state computed once per window and reused by every decoding pass.
#[derive(Debug, Clone)]
pub struct Prepared<C> {
    /// The feature the intervention replaces, shaped `[N, D]`.
    pub feature: Var,
    pub context: C,
}

/// Output of one decoding pass.
#[derive(Debug, Clone, Copy)]
pub struct PassOutput {
    /// `[N, 12, 2]` displacements (the Gaussian mean for Gaussian heads).
    pub displacement: Var,
    /// `[N, 12, 5]` as `(mu_x, mu_y, sigma_x, sigma_y, rho)`.
    pub gaussian: Option<Var>,
    /// `[8, N, N]` adjacency consumed by the pass, when the family uses one.
    pub adjacency: Option<Var>,
}

/// A trajectory predictor with a replaceable history feature.
pub trait Predictor {
    type Context;

    fn params(&self) -> &ParameterStore;

    fn noise_dim(&self) -> usize;

    fn output_mode(&self) -> OutputMode;

    /// Runs everything upstream of the intervention point.
    fn prepare(&self, tape: &mut Tape, p: &Binding, window: &SceneWindow) -> Result<Prepared<Self::Context>>;

    /// Runs everything downstream of the intervention point with `feature`
    /// standing in for the prepared one.
    fn predict_from(
        &self,
        tape: &mut Tape,
        p: &Binding,
        prepared: &Prepared<Self::Context>,
        feature: Var,
        noise: &NoiseSample,
    ) -> Result<PassOutput>;

    /// Full forward pass, optionally replacing the intervened feature.
    fn forward(
        &self,
        tape: &mut Tape,
        p: &Binding,
        window: &SceneWindow,
        noise: &NoiseSample,
        feature_override: Option<&Array>,
    ) -> Result<PassOutput> {
        let prepared = self.prepare(tape, p, window)?;
        let feature = match feature_override {
            None => prepared.feature,
            Some(o) => {
                if o.shape() != tape.shape(prepared.feature) {
                    return contract(format!(
                        "feature override of shape {:?} for a feature of shape {:?}",
                        o.shape(),
                        tape.shape(prepared.feature)
                    ));
                }
                tape.constant(o.clone())?
            }
        };
        self.predict_from(tape, p, &prepared, feature, noise)
    }
}

#[derive(Debug, Clone)]
pub enum Net {
    Stgat(StgatNet),
    Stgcnn(StgcnnNet),
}

/// Family-specific values produced by [`Predictor::prepare`].
#[derive(Debug, Clone, Copy)]
pub enum ModelContext {
    Stgat { interaction: Var },
    Stgcnn { adjacency: Var },
}

/// A configured predictor together with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterStore,
    pub net: Net,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParameterStore::new();
        let net = match config {
            ModelConfig::Stgat(c) => Net::Stgat(StgatNet::new(&mut params, c, rng)?),
            ModelConfig::Stgcnn(c) => Net::Stgcnn(StgcnnNet::new(&mut params, c, rng)?),
        };
        Ok(Self { config, params, net })
    }

    pub fn family(&self) -> Family {
        self.config.family()
    }
}

impl Predictor for Model {
    type Context = ModelContext;

    fn params(&self) -> &ParameterStore {
        &self.params
    }

    fn noise_dim(&self) -> usize {
        self.config.noise_dim()
    }

    fn output_mode(&self) -> OutputMode {
        self.config.output_mode()
    }

    fn prepare(&self, tape: &mut Tape, p: &Binding, window: &SceneWindow) -> Result<Prepared<ModelContext>> {
        window.validate()?;
        match &self.net {
            Net::Stgat(net) => net.prepare(tape, p, window),
            Net::Stgcnn(net) => net.prepare(tape, p, window),
        }
    }

    fn predict_from(
        &self,
        tape: &mut Tape,
        p: &Binding,
        prepared: &Prepared<ModelContext>,
        feature: Var,
        noise: &NoiseSample,
    ) -> Result<PassOutput> {
        if tape.shape(feature) != tape.shape(prepared.feature) {
            return contract(format!(
                "replacement feature {:?} does not match the attachment point {:?}",
                tape.shape(feature),
                tape.shape(prepared.feature)
            ));
        }
        match (&self.net, prepared.context) {
            (Net::Stgat(net), ModelContext::Stgat { interaction }) => {
                net.predict_from(tape, p, feature, interaction, noise)
            }
            (Net::Stgcnn(net), ModelContext::Stgcnn { adjacency }) => {
                net.predict_from(tape, p, feature, adjacency)
            }
            _ => contract("prepared context belongs to a different model family"),
        }
    }
}

/// Observed displacements per pedestrian, `[N, OBS_LEN * 2]`; the first step
/// (no predecessor inside the window) is zero.
pub fn observed_displacements(window: &SceneWindow) -> Result<Array> {
    let n = window.num_pedestrians();
    let mut data = Vec::with_capacity(n * OBS_LEN * 2);
    for i in 0..n {
        data.extend_from_slice(&[0.0, 0.0]);
        for d in to_relative(window.observed_of(i))? {
            data.extend_from_slice(&d);
        }
    }
    Array::new(&[n, OBS_LEN * 2], data)
}

/// Ground-truth future displacements, `[N, PRED_LEN, 2]`, starting from the
/// last observed position.
pub fn future_displacements(window: &SceneWindow) -> Result<Array> {
    let n = window.num_pedestrians();
    let mut data = Vec::with_capacity(n * PRED_LEN * 2);
    for i in 0..n {
        let mut prev = window.observed_of(i)[OBS_LEN - 1];
        for p in window.future_of(i) {
            data.push(p[0] - prev[0]);
            data.push(p[1] - prev[1]);
            prev = *p;
        }
    }
    Array::new(&[n, PRED_LEN, 2], data)
}
