use alloc::vec::Vec;

use rand::Rng;

use super::layers::{GatLayer, Linear, LstmCell};
use super::{observed_displacements, ModelContext, NoiseSample, PassOutput, Prepared, StgatConfig};
use crate::data::{SceneWindow, OBS_LEN, PRED_LEN};
use crate::error::{contract, Result};
use crate::grad::{Array, Binding, ParameterStore, Tape, Var};

/// Recurrent motion encoder, two graph-attention layers feeding a recurrent
/// interaction encoder, and a recurrent decoder.
#[derive(Debug, Clone)]
pub struct StgatNet {
    pub config: StgatConfig,
    pub motion: LstmCell,
    pub gat1: GatLayer,
    pub gat2: GatLayer,
    pub graph: LstmCell,
    pub embed: Linear,
    pub decoder: LstmCell,
    pub head: Linear,
}

impl StgatNet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParameterStore, c: StgatConfig, rng: &mut R) -> Result<Self> {
        let gat1 = GatLayer::new(store, "gat1", c.motion_hidden, c.gat_heads, c.gat_head_dim, rng)?;
        Ok(Self {
            config: c,
            motion: LstmCell::new(store, "motion_lstm", 2, c.motion_hidden, rng)?,
            gat2: GatLayer::new(store, "gat2", gat1.out_dim(), 1, c.gat_out, rng)?,
            gat1,
            graph: LstmCell::new(store, "graph_lstm", c.gat_out, c.graph_hidden, rng)?,
            embed: Linear::new(store, "decoder_embed", 2, c.decoder_embed, rng)?,
            decoder: LstmCell::new(store, "decoder_lstm", c.decoder_embed, c.decoder_hidden(), rng)?,
            head: Linear::new(store, "decoder_head", c.decoder_hidden(), 2, rng)?,
        })
    }

    pub(super) fn prepare(&self, tape: &mut Tape, p: &Binding, window: &SceneWindow) -> Result<Prepared<ModelContext>> {
        let n = window.num_pedestrians();
        let disp = observed_displacements(window)?;
        // [N, 16] -> [8, N, 2]
        let x = tape.constant(disp.reshaped(&[n, OBS_LEN, 2])?)?;
        let x = tape.permute(x, [1, 0, 2])?;
        let zero_m = Array::zeros(&[n, self.config.motion_hidden]);
        let zero_g = Array::zeros(&[n, self.config.graph_hidden]);
        let (mut h, mut c) = (tape.constant(zero_m.clone())?, tape.constant(zero_m)?);
        let (mut gh, mut gc) = (tape.constant(zero_g.clone())?, tape.constant(zero_g)?);
        for t in 0..OBS_LEN {
            let xt = tape.index(x, t)?;
            (h, c) = self.motion.step(tape, p, xt, h, c)?;
            let a = self.gat1.forward(tape, p, h)?;
            let a = self.gat2.forward(tape, p, a)?;
            (gh, gc) = self.graph.step(tape, p, a, gh, gc)?;
        }
        Ok(Prepared {
            feature: h,
            context: ModelContext::Stgat { interaction: gh },
        })
    }

    pub(super) fn predict_from(
        &self,
        tape: &mut Tape,
        p: &Binding,
        motion: Var,
        interaction: Var,
        noise: &NoiseSample,
    ) -> Result<PassOutput> {
        let n = tape.shape(motion)[0];
        if noise.dim() != self.config.noise_dim {
            return contract(alloc::format!(
                "noise of dimension {} for a model expecting {}",
                noise.dim(),
                self.config.noise_dim
            ));
        }
        let mut parts = Vec::with_capacity(3);
        parts.push(motion);
        parts.push(interaction);
        if self.config.noise_dim > 0 {
            let z: Vec<f64> = (0..n).flat_map(|_| noise.values.iter().copied()).collect();
            parts.push(tape.constant(Array::new(&[n, self.config.noise_dim], z)?)?);
        }
        let mut h = tape.concat(&parts)?;
        let mut c = tape.constant(Array::zeros(&[n, self.config.decoder_hidden()]))?;
        let mut prev = tape.constant(Array::zeros(&[n, 2]))?;
        let mut steps = Vec::with_capacity(PRED_LEN);
        for _ in 0..PRED_LEN {
            let e = self.embed.forward(tape, p, prev)?;
            let e = tape.tanh(e)?;
            (h, c) = self.decoder.step(tape, p, e, h, c)?;
            prev = self.head.forward(tape, p, h)?;
            steps.push(prev);
        }
        let stacked = tape.stack(&steps)?; // [12, N, 2]
        Ok(PassOutput {
            displacement: tape.permute(stacked, [1, 0, 2])?,
            gaussian: None,
            adjacency: None,
        })
    }
}
