//! Conversion of samples to padded NCHW tensors.

use flownet_core::image::Image;
use flownet_core::scenegen::Sample;
use flownet_tensornet::{Scalar, Tensor};

use crate::model::BOTTLENECK_FACTOR;
use crate::{Result, TrainError};

/// Smallest multiple of 64 that holds `n`.
pub fn padded_len(n: usize) -> usize {
    n.div_ceil(BOTTLENECK_FACTOR) * BOTTLENECK_FACTOR
}

/// Images are centered to [-0.5, 0.5] before entering the network.
const INPUT_OFFSET: f32 = 0.5;

/// Stacks images into `(n, 3, H, W)`, mirror-padded on the right and bottom.
pub fn image_tensor<T: Scalar>(images: &[&Image], out_w: usize, out_h: usize) -> Result<Tensor<T>> {
    let plane = out_w * out_h;
    let mut data = Vec::with_capacity(images.len() * 3 * plane);
    for img in images {
        let padded = if (img.width(), img.height()) == (out_w, out_h) {
            (*img).clone()
        } else {
            img.pad_reflect(out_w, out_h)
        };
        for c in 0..3 {
            data.extend(padded.data().chunks_exact(3).map(|p| T::from_f64_lossy((p[c] - INPUT_OFFSET) as f64)));
        }
    }
    Ok(Tensor::from_vec([images.len(), 3, out_h, out_w], data)?)
}

/// A training batch: padded images, ground truth in pixels and per-pixel
/// loss weights (zero on padding and invalid flow).
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub img1: Tensor<T>,
    pub img2: Tensor<T>,
    pub flow: Tensor<T>,
    pub weight: Tensor<T>,
}

pub fn make_batch<T: Scalar>(samples: &[&Sample]) -> Result<Batch<T>> {
    let first = samples.first().ok_or(TrainError::EmptyDataset)?;
    let (w, h) = (first.width(), first.height());
    if samples.iter().any(|s| (s.width(), s.height()) != (w, h)) {
        return Err(TrainError::Config("samples in a batch must share one size".into()));
    }
    let (pw, ph) = (padded_len(w), padded_len(h));
    let img1 = image_tensor(&samples.iter().map(|s| &s.img1).collect::<Vec<_>>(), pw, ph)?;
    let img2 = image_tensor(&samples.iter().map(|s| &s.img2).collect::<Vec<_>>(), pw, ph)?;
    let n = samples.len();
    let mut flow = Tensor::zeros([n, 2, ph, pw]);
    let mut weight = Tensor::zeros([n, 1, ph, pw]);
    for (b, s) in samples.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                if !s.flow.is_valid(x, y) {
                    continue;
                }
                let (u, v) = s.flow.get(x, y);
                flow.set(b, 0, y, x, T::from_f64_lossy(u));
                flow.set(b, 1, y, x, T::from_f64_lossy(v));
                weight.set(b, 0, y, x, T::one());
            }
        }
    }
    Ok(Batch { img1, img2, flow, weight })
}
