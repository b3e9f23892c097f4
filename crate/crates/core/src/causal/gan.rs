use alloc::vec::Vec;

use rand::Rng;

use crate::data::{Point, SceneWindow, OBS_LEN, PRED_LEN};
use crate::error::Result;
use crate::grad::{Array, Binding, ParameterStore, Tape, Var};
use crate::model::{decode_on_tape, Linear};

/// Feed-forward scorer over a future trajectory expressed relative to the
/// last observed position, `[N, 24]` in, `[N, 1]` logits out.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub params: ParameterStore,
    pub hidden: Linear,
    pub out: Linear,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Result<Self> {
        let mut params = ParameterStore::new();
        let h = Linear::new(&mut params, "disc.hidden", PRED_LEN * 2, hidden, rng)?;
        let o = Linear::new(&mut params, "disc.out", hidden, 1, rng)?;
        Ok(Self { params, hidden: h, out: o })
    }

    pub fn logits(&self, tape: &mut Tape, p: &Binding, trajectory: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, p, trajectory)?;
        let h = tape.tanh(h)?;
        self.out.forward(tape, p, h)
    }

    /// `D(trajectory)` in `(0, 1)`.
    pub fn probability(&self, tape: &mut Tape, p: &Binding, trajectory: Var) -> Result<Var> {
        let l = self.logits(tape, p, trajectory)?;
        tape.sigmoid(l)
    }
}

/// Ground-truth future relative to the last observed position, `[N, 24]`.
pub fn relative_future(window: &SceneWindow) -> Result<Array> {
    let n = window.num_pedestrians();
    let mut data = Vec::with_capacity(n * PRED_LEN * 2);
    for i in 0..n {
        let a = window.observed_of(i)[OBS_LEN - 1];
        for p in window.future_of(i) {
            data.extend_from_slice(&[p[0] - a[0], p[1] - a[1]]);
        }
    }
    Array::new(&[n, PRED_LEN * 2], data)
}

/// Adversarial terms for one window.
///
/// `prediction` is a `[N, 12, 2]` displacement prediction. Returns the
/// non-saturating generator term `-log D(fake)` and the discriminator loss
/// `-[log D(real) + log(1 - D(fake))]`, both averaged over pedestrians.
/// The generator term should only update the predictor and the
/// discriminator loss only the discriminator.
pub fn gan_step_losses(
    tape: &mut Tape,
    disc: &Discriminator,
    disc_binding: &Binding,
    real: &Array,
    prediction: Var,
) -> Result<(Var, Var)> {
    let n = real.rows();
    let origin: Vec<Point> = alloc::vec![[0.0, 0.0]; n];
    let fake = decode_on_tape(tape, prediction, &origin)?;
    let fake = tape.reshape(fake, &[n, PRED_LEN * 2])?;
    let real = tape.constant(real.clone())?;

    let fake_logits = disc.logits(tape, disc_binding, fake)?;
    let gen = tape.map(fake_logits, crate::grad::Activation::LogSigmoid)?;
    let gen = tape.mean(gen)?;
    let gen = tape.scale(gen, -1.0)?;

    let real_logits = disc.logits(tape, disc_binding, real)?;
    let log_real = tape.map(real_logits, crate::grad::Activation::LogSigmoid)?;
    let neg_fake = tape.scale(fake_logits, -1.0)?;
    let log_not_fake = tape.map(neg_fake, crate::grad::Activation::LogSigmoid)?;
    let s = tape.add(log_real, log_not_fake)?;
    let d = tape.mean(s)?;
    let d = tape.scale(d, -1.0)?;
    Ok((gen, d))
}
