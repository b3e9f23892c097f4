use alloc::format;

use crate::data::{Point, PRED_LEN};
use crate::error::{contract, Result};

/// Average and final displacement error of `N * 12` predicted points,
/// both as mean Euclidean distances.
pub fn ade_fde(pred: &[Point], gt: &[Point]) -> Result<(f64, f64)> {
    if pred.len() != gt.len() || pred.is_empty() || pred.len() % PRED_LEN != 0 {
        return contract(format!(
            "ade_fde: {} predicted points for {} ground-truth points",
            pred.len(),
            gt.len()
        ));
    }
    let dist = |a: &Point, b: &Point| libm::hypot(a[0] - b[0], a[1] - b[1]);
    let n = pred.len() / PRED_LEN;
    let ade = pred.iter().zip(gt).map(|(a, b)| dist(a, b)).sum::<f64>() / pred.len() as f64;
    let fde = (0..n)
        .map(|i| {
            let k = i * PRED_LEN + PRED_LEN - 1;
            dist(&pred[k], &gt[k])
        })
        .sum::<f64>()
        / n as f64;
    Ok((ade, fde))
}

/// Squared-error variant of the average displacement error.
pub fn ade_squared(pred: &[Point], gt: &[Point]) -> Result<f64> {
    crate::causal::mean_squared_distance(pred, gt)
}

/// The chosen sample of a best-of-K draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleChoice {
    pub index: usize,
    pub ade: f64,
    /// FDE of the same sample (joint selection).
    pub fde: f64,
}

/// Picks the minimum-ADE sample; ties go to the earliest.
pub fn best_of_samples(samples: &[alloc::vec::Vec<Point>], gt: &[Point]) -> Result<SampleChoice> {
    if samples.is_empty() {
        return contract("best-of-K needs K >= 1");
    }
    let mut best: Option<SampleChoice> = None;
    for (index, s) in samples.iter().enumerate() {
        let (ade, fde) = ade_fde(s, gt)?;
        if best.is_none_or(|b| ade < b.ade) {
            best = Some(SampleChoice { index, ade, fde });
        }
    }
    Ok(best.expect("non-empty"))
}
