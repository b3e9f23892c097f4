use alloc::format;
use alloc::vec::Vec;

use crate::data::{Point, PRED_LEN};
use crate::error::{contract, Result};
use crate::grad::{Array, Tape, Var};
use crate::model::{bivariate_nll, decode_on_tape, GaussianParams};

/// Mean squared Euclidean distance between two point lists.
pub fn mean_squared_distance(pred: &[Point], gt: &[Point]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return contract(format!("{} predicted points for {} ground-truth points", pred.len(), gt.len()));
    }
    let s: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (p[0] - g[0]) * (p[0] - g[0]) + (p[1] - g[1]) * (p[1] - g[1]))
        .sum();
    Ok(s / pred.len() as f64)
}

/// Squared Euclidean error of the decoded prediction against `future`,
/// averaged over pedestrians and steps.
pub fn causal_l2_loss(tape: &mut Tape, prediction: Var, last_observed: &[Point], future: &[Point]) -> Result<Var> {
    let n = last_observed.len();
    if future.len() != n * PRED_LEN {
        return contract(format!("{} ground-truth points for {n} pedestrians", future.len()));
    }
    let positions = decode_on_tape(tape, prediction, last_observed)?;
    let gt: Vec<f64> = future.iter().flat_map(|p| [p[0], p[1]]).collect();
    let gt = tape.constant(Array::new(&[n, PRED_LEN, 2], gt)?)?;
    let diff = tape.sub(positions, gt)?;
    let sq = tape.mul(diff, diff)?;
    let m = tape.mean(sq)?;
    // mean over coordinates -> mean over points
    tape.scale(m, 2.0)
}

/// Mean negative log-density of the target displacements under the causal
/// Gaussian.
pub fn causal_nll_loss(tape: &mut Tape, causal_gaussian: Var, target: &Array) -> Result<Var> {
    let s = tape.shape(causal_gaussian).to_vec();
    if s.len() != 3 || s[2] != 5 || target.shape() != [s[0], s[1], 2] {
        return contract(format!("causal NLL: parameters {s:?} for target {:?}", target.shape()));
    }
    for row in tape.value(causal_gaussian).data().chunks(5) {
        GaussianParams::from_row(row).validate()?;
    }
    let y = tape.constant(target.clone())?;
    bivariate_nll(tape, causal_gaussian, y)
}

/// Best-of-k objective: the smallest [`causal_l2_loss`] over the predictions.
pub fn variety_loss(tape: &mut Tape, predictions: &[Var], last_observed: &[Point], future: &[Point]) -> Result<Var> {
    if predictions.is_empty() {
        return contract("variety loss needs at least one prediction");
    }
    let mut best: Option<(f64, Var)> = None;
    for p in predictions {
        let l = causal_l2_loss(tape, *p, last_observed, future)?;
        let v = tape.value(l).data()[0];
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, l));
        }
    }
    Ok(best.expect("non-empty").1)
}
