use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::gaussian::RHO_LIMIT;
use super::layers::Linear;
use super::{observed_displacements, InteractionGraph, ModelContext, PassOutput, Prepared, StgcnnConfig};
use crate::data::{SceneWindow, OBS_LEN, PRED_LEN};
use crate::error::Result;
use crate::grad::{Binding, ParamId, ParameterStore, Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct Conv {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub pad: usize,
}

impl Conv {
    fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        c_out: usize,
        c_in: usize,
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            kernel: store.insert_glorot(&format!("{name}.kernel"), &[c_out, c_in, k], c_in * k, c_out * k, rng)?,
            bias: store.insert_zeros(&format!("{name}.bias"), &[c_out])?,
            pad: k / 2,
        })
    }

    fn forward(&self, tape: &mut Tape, p: &Binding, x: Var) -> Result<Var> {
        tape.temporal_conv_bias(x, p.var(self.kernel), p.var(self.bias), self.pad)
    }
}

/// Spatial graph convolution plus temporal convolution over the observed
/// steps, a convolutional extrapolator from 8 to 12 steps, and a bivariate
/// Gaussian head.
#[derive(Debug, Clone)]
pub struct StgcnnNet {
    pub config: StgcnnConfig,
    pub spatial: Linear,
    pub temporal: Conv,
    pub residual: Linear,
    pub txp_in: Conv,
    pub txp_hidden: Vec<Conv>,
    pub txp_out: Conv,
    pub head: Linear,
}

impl StgcnnNet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParameterStore, c: StgcnnConfig, rng: &mut R) -> Result<Self> {
        let f = c.hidden;
        let spatial = Linear::new(store, "st.spatial", 2, f, rng)?;
        let temporal = Conv::new(store, "st.temporal", f, f, c.st_kernel, rng)?;
        let residual = Linear::new(store, "st.residual", 2, f, rng)?;
        let txp_in = Conv::new(store, "txp.0", PRED_LEN, OBS_LEN, c.txp_kernel, rng)?;
        let txp_hidden = (1..c.txp_layers)
            .map(|i| Conv::new(store, &format!("txp.{i}"), PRED_LEN, PRED_LEN, c.txp_kernel, rng))
            .collect::<Result<Vec<_>>>()?;
        let txp_out = Conv::new(store, "txp.out", PRED_LEN, PRED_LEN, c.txp_kernel, rng)?;
        let head = Linear::new(store, "head", f, 5, rng)?;
        Ok(Self {
            config: c,
            spatial,
            temporal,
            residual,
            txp_in,
            txp_hidden,
            txp_out,
            head,
        })
    }

    pub(super) fn prepare(&self, tape: &mut Tape, _p: &Binding, window: &SceneWindow) -> Result<Prepared<ModelContext>> {
        let graph = InteractionGraph::from_window(window);
        let adjacency = tape.constant(graph.adjacency)?;
        let feature = tape.constant(observed_displacements(window)?)?;
        Ok(Prepared {
            feature,
            context: ModelContext::Stgcnn { adjacency },
        })
    }

    pub(super) fn predict_from(&self, tape: &mut Tape, p: &Binding, nodes: Var, adjacency: Var) -> Result<PassOutput> {
        let n = tape.shape(nodes)[0];
        let f = self.config.hidden;
        // nodes [N, 16] -> rows (t, i) of [8 * N, 2]
        let x = tape.reshape(nodes, &[n, OBS_LEN, 2])?;
        let x = tape.permute(x, [1, 0, 2])?;
        let rows = tape.reshape(x, &[OBS_LEN * n, 2])?;

        let s = self.spatial.forward(tape, p, rows)?;
        let s = tape.reshape(s, &[OBS_LEN, n, f])?;
        let s = tape.batch_matmul(adjacency, s)?; // [8, N, F]
        let s = tape.permute(s, [1, 2, 0])?; // [N, F, 8]
        let s = self.temporal.forward(tape, p, s)?;

        let r = self.residual.forward(tape, p, rows)?;
        let r = tape.reshape(r, &[OBS_LEN, n, f])?;
        let r = tape.permute(r, [1, 2, 0])?;
        let enc = tape.add(s, r)?;
        let enc = tape.tanh(enc)?;

        // time steps become channels: [N, 8, F] -> [N, 12, F]
        let v = tape.permute(enc, [0, 2, 1])?;
        let v = self.txp_in.forward(tape, p, v)?;
        let mut v = tape.tanh(v)?;
        for conv in &self.txp_hidden {
            let u = conv.forward(tape, p, v)?;
            let u = tape.tanh(u)?;
            v = tape.add(u, v)?;
        }
        let v = self.txp_out.forward(tape, p, v)?;

        let flat = tape.reshape(v, &[n * PRED_LEN, f])?;
        let raw = self.head.forward(tape, p, flat)?;
        let raw = tape.reshape(raw, &[n, PRED_LEN, 5])?;
        let mu = tape.slice(raw, 0, 2)?;
        let log_sigma = tape.slice(raw, 2, 2)?;
        let sigma = tape.exp(log_sigma)?;
        let rho = tape.slice(raw, 4, 1)?;
        let rho = tape.tanh(rho)?;
        let rho = tape.scale(rho, RHO_LIMIT)?;
        let gaussian = tape.concat(&[mu, sigma, rho])?;
        Ok(PassOutput {
            displacement: mu,
            gaussian: Some(gaussian),
            adjacency: Some(adjacency),
        })
    }
}
