//! Convolution and transposed convolution kernels (im2col + GEMM).

use crate::scalar::matmul;
use crate::{Scalar, Tensor, TensorError};

/// Output length of a strided, zero-padded convolution along one axis.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || input + 2 * padding < kernel {
        return None;
    }
    Some((input + 2 * padding - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col<T: Scalar>(img: &[T], g: &Geometry, cols: &mut [T]) {
    let ncols = g.cols();
    for c in 0..g.channels {
        let plane = &img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into the image.
fn col2im<T: Scalar>(cols: &[T], g: &Geometry, img: &mut [T]) {
    let ncols = g.cols();
    for c in 0..g.channels {
        let plane = &mut img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let line = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    for (ox, &v) in line.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

fn check_bias<T: Scalar>(bias: Option<&Tensor<T>>, channels: usize, op: &'static str) -> Result<(), TensorError> {
    if let Some(b) = bias {
        if b.shape() != [1, channels, 1, 1] {
            return Err(TensorError::ShapeMismatch {
                op,
                expected: [1, channels, 1, 1],
                got: b.shape(),
            });
        }
    }
    Ok(())
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (c, &b) in bias.iter().enumerate() {
        out[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad<T: Scalar>(gout: &[T], gb: &mut [T], plane: usize) {
    for (c, g) in gb.iter_mut().enumerate() {
        *g += gout[c * plane..(c + 1) * plane].iter().copied().sum::<T>();
    }
}

fn conv_geometry<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Geometry, TensorError> {
    let [_, c_in, h, w] = x.shape();
    let [c_out, wc_in, kh, kw] = weight.shape();
    if wc_in != c_in {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            expected: [c_out, c_in, kh, kw],
            got: weight.shape(),
        });
    }
    let out_h = conv_out_dim(h, kh, stride, pad);
    let out_w = conv_out_dim(w, kw, stride, pad);
    match (out_h, out_w) {
        (Some(out_h), Some(out_w)) => Ok(Geometry {
            channels: c_in,
            height: h,
            width: w,
            kh,
            kw,
            stride,
            pad,
            out_h,
            out_w,
        }),
        _ => Err(TensorError::InvalidGeometry {
            op: "conv2d",
            detail: format!("input {h}x{w}, kernel {kh}x{kw}, stride {stride}, padding {pad}"),
        }),
    }
}

/// Cross-correlation convolution. `weight` is `(c_out, c_in, kh, kw)`,
/// `bias` is `(1, c_out, 1, 1)`.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, TensorError> {
    let g = conv_geometry(x, weight, stride, pad)?;
    let c_out = weight.n();
    check_bias(bias, c_out, "conv2d")?;
    let n = x.n();
    let k = g.rows();
    let p = g.cols();
    let mut out = Tensor::zeros([n, c_out, g.out_h, g.out_w]);
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
    for b in 0..n {
        let cols_ref: &[T] = if g.is_pointwise() {
            x.item(b)
        } else {
            im2col(x.item(b), &g, &mut cols);
            &cols
        };
        let out_b = out.item_mut(b);
        matmul(c_out, k, p, weight.data(), false, cols_ref, false, out_b, false);
        if let Some(bias) = bias {
            add_bias(out_b, bias.data(), p);
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d_forward`] w.r.t. input (optional), weight and bias.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_input_grad: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>, Tensor<T>), TensorError> {
    let g = conv_geometry(x, weight, stride, pad)?;
    let c_out = weight.n();
    let expected = [x.n(), c_out, g.out_h, g.out_w];
    if grad_out.shape() != expected {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d_backward",
            expected,
            got: grad_out.shape(),
        });
    }
    let k = g.rows();
    let p = g.cols();
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = Tensor::zeros([1, c_out, 1, 1]);
    let mut gx = need_input_grad.then(|| Tensor::zeros(x.shape()));
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
    let mut gcols = vec![T::zero(); k * p];
    for b in 0..x.n() {
        let gout_b = grad_out.item(b);
        let cols_ref: &[T] = if g.is_pointwise() {
            x.item(b)
        } else {
            im2col(x.item(b), &g, &mut cols);
            &cols
        };
        matmul(c_out, p, k, gout_b, false, cols_ref, true, gw.data_mut(), true);
        bias_grad(gout_b, gb.data_mut(), p);
        if let Some(gx) = gx.as_mut() {
            if g.is_pointwise() {
                matmul(k, c_out, p, weight.data(), true, gout_b, false, gx.item_mut(b), false);
            } else {
                matmul(k, c_out, p, weight.data(), true, gout_b, false, &mut gcols, false);
                col2im(&gcols, &g, gx.item_mut(b));
            }
        }
    }
    Ok((gx, gw, gb))
}

fn transpose_geometry<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Geometry, TensorError> {
    let [_, c_in, h, w] = x.shape();
    let [wc_in, c_out, kh, kw] = weight.shape();
    if wc_in != c_in {
        return Err(TensorError::ShapeMismatch {
            op: "conv_transpose2d",
            expected: [c_in, c_out, kh, kw],
            got: weight.shape(),
        });
    }
    let full_h = (h.max(1) - 1) * stride + kh;
    let full_w = (w.max(1) - 1) * stride + kw;
    if stride == 0 || h == 0 || w == 0 || full_h <= 2 * pad || full_w <= 2 * pad {
        return Err(TensorError::InvalidGeometry {
            op: "conv_transpose2d",
            detail: format!("input {h}x{w}, kernel {kh}x{kw}, stride {stride}, padding {pad}"),
        });
    }
    // Described as the conv whose input is the transposed-conv output.
    Ok(Geometry {
        channels: c_out,
        height: full_h - 2 * pad,
        width: full_w - 2 * pad,
        kh,
        kw,
        stride,
        pad,
        out_h: h,
        out_w: w,
    })
}

/// Transposed convolution. `weight` is `(c_in, c_out, kh, kw)`; output
/// spatial size is `(h - 1) * stride - 2 * pad + kh`.
pub fn conv_transpose2d_forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, TensorError> {
    let g = transpose_geometry(x, weight, stride, pad)?;
    let c_in = x.c();
    check_bias(bias, g.channels, "conv_transpose2d")?;
    let kc = g.rows();
    let p_in = g.cols();
    let mut out = Tensor::zeros([x.n(), g.channels, g.height, g.width]);
    let mut cols = vec![T::zero(); kc * p_in];
    for b in 0..x.n() {
        matmul(kc, c_in, p_in, weight.data(), true, x.item(b), false, &mut cols, false);
        let out_b = out.item_mut(b);
        col2im(&cols, &g, out_b);
        if let Some(bias) = bias {
            add_bias(out_b, bias.data(), g.height * g.width);
        }
    }
    Ok(out)
}

/// Gradients of [`conv_transpose2d_forward`].
pub fn conv_transpose2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_input_grad: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>, Tensor<T>), TensorError> {
    let g = transpose_geometry(x, weight, stride, pad)?;
    let expected = [x.n(), g.channels, g.height, g.width];
    if grad_out.shape() != expected {
        return Err(TensorError::ShapeMismatch {
            op: "conv_transpose2d_backward",
            expected,
            got: grad_out.shape(),
        });
    }
    let c_in = x.c();
    let kc = g.rows();
    let p_in = g.cols();
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = Tensor::zeros([1, g.channels, 1, 1]);
    let mut gx = need_input_grad.then(|| Tensor::zeros(x.shape()));
    let mut gcols = vec![T::zero(); kc * p_in];
    for b in 0..x.n() {
        let gout_b = grad_out.item(b);
        im2col(gout_b, &g, &mut gcols);
        matmul(c_in, p_in, kc, x.item(b), false, &gcols, true, gw.data_mut(), true);
        bias_grad(gout_b, gb.data_mut(), g.height * g.width);
        if let Some(gx) = gx.as_mut() {
            matmul(c_in, kc, p_in, weight.data(), false, &gcols, false, gx.item_mut(b), false);
        }
    }
    Ok((gx, gw, gb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct six-loop convolution used as a reference.
    fn conv_reference(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let [n, c_in, h, wd] = x.shape();
        let [c_out, _, kh, kw] = w.shape();
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        let mut out = Tensor::zeros([n, c_out, oh, ow]);
        for b in 0..n {
            for co in 0..c_out {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = 0.0;
                        for ci in 0..c_in {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        s += x.at(b, ci, iy as usize, ix as usize) * w.at(co, ci, ky, kx);
                                    }
                                }
                            }
                        }
                        out.set(b, co, oy, ox, s);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(k, s, p) in &[(3, 1, 1), (3, 2, 1), (5, 2, 2), (1, 1, 0), (7, 2, 3)] {
            let x = Tensor::<f64>::randn([2, 3, 9, 8], 1.0, &mut rng);
            let w = Tensor::<f64>::randn([4, 3, k, k], 1.0, &mut rng);
            let got = conv2d_forward(&x, &w, None, s, p).unwrap();
            let want = conv_reference(&x, &w, s, p);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12, "k={k} s={s} p={p}");
            }
        }
    }

    #[test]
    fn identity_pointwise_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::<f64>::randn([1, 3, 5, 5], 1.0, &mut rng);
        let mut w = Tensor::<f64>::zeros([3, 3, 1, 1]);
        for c in 0..3 {
            w.set(c, c, 0, 0, 1.0);
        }
        assert_eq!(conv2d_forward(&x, &w, None, 1, 0).unwrap(), x);
    }

    #[test]
    fn stride_two_same_padding_halves() {
        let x = Tensor::<f32>::zeros([1, 1, 8, 8]);
        let w = Tensor::<f32>::zeros([5, 1, 3, 3]);
        assert_eq!(conv2d_forward(&x, &w, None, 2, 1).unwrap().shape(), [1, 5, 4, 4]);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let x = Tensor::<f32>::zeros([1, 2, 8, 8]);
        let w = Tensor::<f32>::zeros([5, 3, 3, 3]);
        assert!(matches!(
            conv2d_forward(&x, &w, None, 1, 1),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn transpose_conv_doubles() {
        let x = Tensor::<f32>::zeros([1, 3, 4, 4]);
        let w = Tensor::<f32>::zeros([3, 6, 4, 4]);
        assert_eq!(
            conv_transpose2d_forward(&x, &w, None, 2, 1).unwrap().shape(),
            [1, 6, 8, 8]
        );
    }

    /// Zero-insertion unpooling followed by an ordinary convolution with the
    /// flipped, channel-transposed kernel.
    fn unpool_then_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let [n, c_in, h, wd] = x.shape();
        let [_, c_out, kh, kw] = w.shape();
        let uh = (h - 1) * stride + 1;
        let uw = (wd - 1) * stride + 1;
        let mut up = Tensor::zeros([n, c_in, uh, uw]);
        for b in 0..n {
            for c in 0..c_in {
                for y in 0..h {
                    for xx in 0..wd {
                        up.set(b, c, y * stride, xx * stride, x.at(b, c, y, xx));
                    }
                }
            }
        }
        let mut flipped = Tensor::zeros([c_out, c_in, kh, kw]);
        for ci in 0..c_in {
            for co in 0..c_out {
                for ky in 0..kh {
                    for kx in 0..kw {
                        flipped.set(co, ci, kh - 1 - ky, kw - 1 - kx, w.at(ci, co, ky, kx));
                    }
                }
            }
        }
        conv_reference(&up, &flipped, 1, kh - 1 - pad)
    }

    #[test]
    fn transpose_conv_equals_unpool_then_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let x = Tensor::<f64>::randn([2, 3, 4, 5], 1.0, &mut rng);
            let w = Tensor::<f64>::randn([3, 2, 4, 4], 1.0, &mut rng);
            let got = conv_transpose2d_forward(&x, &w, None, 2, 1).unwrap();
            let want = unpool_then_conv(&x, &w, 2, 1);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_hot_input_stamps_kernel() {
        let mut x = Tensor::<f64>::zeros([1, 1, 4, 4]);
        x.set(0, 0, 1, 2, 1.0);
        let w = Tensor::<f64>::from_vec([1, 1, 4, 4], (1..=16).map(|v| v as f64).collect()).unwrap();
        let out = conv_transpose2d_forward(&x, &w, None, 2, 1).unwrap();
        // Input (1, 2) lands at output origin (1*2 - 1, 2*2 - 1) = (1, 3).
        for y in 0..8 {
            for xx in 0..8 {
                let ky = y as isize - 1;
                let kx = xx as isize - 3;
                let expect = if (0..4).contains(&ky) && (0..4).contains(&kx) {
                    w.at(0, 0, ky as usize, kx as usize)
                } else {
                    0.0
                };
                assert_eq!(out.at(0, 0, y, xx), expect);
            }
        }
    }
}
