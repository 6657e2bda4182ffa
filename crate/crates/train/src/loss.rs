//! Multiscale endpoint-error loss.

use flownet_tensornet::{Graph, Scalar, Tensor, Var};

use crate::model::ModelOutput;
use crate::{Result, TrainError};

/// Per-head weights, coarse to fine.
pub const DEFAULT_LOSS_WEIGHTS: [f64; 5] = [0.32, 0.08, 0.02, 0.01, 0.005];

/// Ground truth and weights at downsampling `factor`: block means of the
/// valid vectors, divided by `factor` so they are in level pixels, and the
/// valid fraction of each block as its weight.
pub fn level_target<T: Scalar>(flow: &Tensor<T>, weight: &Tensor<T>, factor: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let [n, _, h, w] = flow.shape();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(TrainError::Architecture(format!("{w}x{h} is not divisible by {factor}")));
    }
    let (lh, lw) = (h / factor, w / factor);
    let mut target = Tensor::zeros([n, 2, lh, lw]);
    let mut lweight = Tensor::zeros([n, 1, lh, lw]);
    let area = T::from_f64_lossy((factor * factor) as f64);
    let f = T::from_f64_lossy(factor as f64);
    for b in 0..n {
        for y in 0..lh {
            for x in 0..lw {
                let (mut su, mut sv, mut sw) = (T::zero(), T::zero(), T::zero());
                for dy in 0..factor {
                    for dx in 0..factor {
                        let (yy, xx) = (y * factor + dy, x * factor + dx);
                        let wt = weight.at(b, 0, yy, xx);
                        su += wt * flow.at(b, 0, yy, xx);
                        sv += wt * flow.at(b, 1, yy, xx);
                        sw += wt;
                    }
                }
                if sw > T::zero() {
                    target.set(b, 0, y, x, su / sw / f);
                    target.set(b, 1, y, x, sv / sw / f);
                    lweight.set(b, 0, y, x, sw / area);
                }
            }
        }
    }
    Ok((target, lweight))
}

/// `Σ_ℓ weight_ℓ · EPE_ℓ` over the heads of `out`, with the full-resolution
/// ground truth `flow` `(n, 2, H, W)` and pixel weights `(n, 1, H, W)`.
pub fn multiscale_epe_loss<T: Scalar>(
    g: &mut Graph<T>,
    out: &ModelOutput,
    flow: &Tensor<T>,
    weight: &Tensor<T>,
    level_weights: &[f64],
) -> Result<Var> {
    if level_weights.len() != out.flows.len() {
        return Err(TrainError::Config(format!(
            "{} loss weights for {} flow heads",
            level_weights.len(),
            out.flows.len()
        )));
    }
    let mut terms = Vec::with_capacity(out.flows.len());
    for ((&pred, &factor), &lw) in out.flows.iter().zip(&out.factors).zip(level_weights) {
        let (target, w) = level_target(flow, weight, factor)?;
        let epe = g.epe_loss(pred, target, w)?;
        terms.push((epe, T::from_f64_lossy(lw)));
    }
    Ok(g.weighted_sum(&terms)?)
}
