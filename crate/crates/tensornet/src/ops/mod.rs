//! Forward/backward kernels. The autodiff tape in [`crate::graph`] calls
//! into these; they are also usable directly on tensors.

pub mod conv;
pub mod resample;

pub use conv::{
    conv2d_backward, conv2d_forward, conv_out_dim, conv_transpose2d_backward, conv_transpose2d_forward,
};
pub use resample::{avg_downsample, avg_downsample_backward, resize_bilinear, resize_bilinear_backward};

use crate::{Scalar, Tensor, TensorError};

/// `max(x, 0) + slope * min(x, 0)`.
pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { slope * v })
}

pub fn leaky_relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>, slope: T) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { slope * g })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("shape preserved")
}

/// Concatenates along the channel axis.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>, TensorError> {
    let first = parts.first().ok_or(TensorError::Empty)?;
    let [n, _, h, w] = first.shape();
    let mut total = 0;
    for p in parts {
        let [pn, pc, ph, pw] = p.shape();
        if pn != n || ph != h || pw != w {
            return Err(TensorError::ShapeMismatch {
                op: "concat_channels",
                expected: [n, pc, h, w],
                got: p.shape(),
            });
        }
        total += pc;
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * total * plane);
    for b in 0..n {
        for p in parts {
            data.extend_from_slice(p.item(b));
        }
    }
    debug_assert_eq!(data.len(), n * total * plane);
    Tensor::from_vec([n, total, h, w], data)
}

/// Splits a channel-concatenated gradient back into per-input pieces.
pub fn split_channels<T: Scalar>(grad: &Tensor<T>, channels: &[usize]) -> Vec<Tensor<T>> {
    let mut start = 0;
    channels
        .iter()
        .map(|&c| {
            let part = grad.slice_channels(start, c).expect("split within bounds");
            start += c;
            part
        })
        .collect()
}
