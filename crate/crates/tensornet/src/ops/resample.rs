//! Bilinear resizing and block-average downsampling.

use crate::{Scalar, Tensor, TensorError};

/// Source taps for one output coordinate: `(i0, i1, frac)` with the value
/// `(1 - frac) * in[i0] + frac * in[i1]`.
#[derive(Clone, Copy, Debug)]
struct Tap {
    i0: usize,
    i1: usize,
    frac: f64,
}

/// Half-pixel-centre mapping (`align_corners = false`), clamped at borders.
fn taps(input: usize, output: usize) -> Vec<Tap> {
    let ratio = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            Tap {
                i0,
                i1,
                frac: src - i0 as f64,
            }
        })
        .collect()
}

fn check_dims(op: &'static str, h: usize, w: usize, out_h: usize, out_w: usize) -> Result<(), TensorError> {
    if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
        return Err(TensorError::InvalidGeometry {
            op,
            detail: format!("{h}x{w} -> {out_h}x{out_w}"),
        });
    }
    Ok(())
}

/// Bilinear resize of every channel plane to `out_h × out_w`.
pub fn resize_bilinear<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>, TensorError> {
    let [n, c, h, w] = x.shape();
    check_dims("resize_bilinear", h, w, out_h, out_w)?;
    let ty = taps(h, out_h);
    let tx = taps(w, out_w);
    let mut out = Tensor::zeros([n, c, out_h, out_w]);
    let src = x.data();
    let dst = out.data_mut();
    for plane in 0..n * c {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        let d = &mut dst[plane * out_h * out_w..(plane + 1) * out_h * out_w];
        for (oy, a) in ty.iter().enumerate() {
            let fy = T::from_f64_lossy(a.frac);
            let r0 = &s[a.i0 * w..(a.i0 + 1) * w];
            let r1 = &s[a.i1 * w..(a.i1 + 1) * w];
            for (ox, b) in tx.iter().enumerate() {
                let fx = T::from_f64_lossy(b.frac);
                let top = r0[b.i0] + fx * (r0[b.i1] - r0[b.i0]);
                let bottom = r1[b.i0] + fx * (r1[b.i1] - r1[b.i0]);
                d[oy * out_w + ox] = top + fy * (bottom - top);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`resize_bilinear`] applied to `grad_out`.
pub fn resize_bilinear_backward<T: Scalar>(
    input_shape: [usize; 4],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, TensorError> {
    let [n, c, h, w] = input_shape;
    let [gn, gc, out_h, out_w] = grad_out.shape();
    if gn != n || gc != c {
        return Err(TensorError::ShapeMismatch {
            op: "resize_bilinear_backward",
            expected: [n, c, out_h, out_w],
            got: grad_out.shape(),
        });
    }
    check_dims("resize_bilinear_backward", h, w, out_h, out_w)?;
    let ty = taps(h, out_h);
    let tx = taps(w, out_w);
    let mut gx = Tensor::zeros(input_shape);
    let g = grad_out.data();
    let d = gx.data_mut();
    for plane in 0..n * c {
        let gp = &g[plane * out_h * out_w..(plane + 1) * out_h * out_w];
        let dp = &mut d[plane * h * w..(plane + 1) * h * w];
        for (oy, a) in ty.iter().enumerate() {
            let fy = T::from_f64_lossy(a.frac);
            for (ox, b) in tx.iter().enumerate() {
                let fx = T::from_f64_lossy(b.frac);
                let v = gp[oy * out_w + ox];
                let top = v * (T::one() - fy);
                let bottom = v * fy;
                dp[a.i0 * w + b.i0] += top * (T::one() - fx);
                dp[a.i0 * w + b.i1] += top * fx;
                dp[a.i1 * w + b.i0] += bottom * (T::one() - fx);
                dp[a.i1 * w + b.i1] += bottom * fx;
            }
        }
    }
    Ok(gx)
}

/// Mean over non-overlapping `factor × factor` blocks.
pub fn avg_downsample<T: Scalar>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>, TensorError> {
    let [n, c, h, w] = x.shape();
    if factor == 0 {
        return Err(TensorError::InvalidFactor { op: "avg_downsample", factor });
    }
    if h % factor != 0 || w % factor != 0 {
        return Err(TensorError::InvalidGeometry {
            op: "avg_downsample",
            detail: format!("{h}x{w} not divisible by {factor}"),
        });
    }
    let (oh, ow) = (h / factor, w / factor);
    let norm = T::one() / T::from_f64_lossy((factor * factor) as f64);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let src = x.data();
    let dst = out.data_mut();
    for plane in 0..n * c {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        let d = &mut dst[plane * oh * ow..(plane + 1) * oh * ow];
        for y in 0..h {
            let row = &s[y * w..(y + 1) * w];
            let drow = &mut d[(y / factor) * ow..(y / factor + 1) * ow];
            for (xx, &v) in row.iter().enumerate() {
                drow[xx / factor] += v;
            }
        }
        d.iter_mut().for_each(|v| *v *= norm);
    }
    Ok(out)
}

pub fn avg_downsample_backward<T: Scalar>(
    input_shape: [usize; 4],
    grad_out: &Tensor<T>,
    factor: usize,
) -> Tensor<T> {
    let [n, c, h, w] = input_shape;
    let (oh, ow) = (h / factor, w / factor);
    let norm = T::one() / T::from_f64_lossy((factor * factor) as f64);
    let mut gx = Tensor::zeros(input_shape);
    let g = grad_out.data();
    let d = gx.data_mut();
    for plane in 0..n * c {
        let gp = &g[plane * oh * ow..(plane + 1) * oh * ow];
        let dp = &mut d[plane * h * w..(plane + 1) * h * w];
        for y in 0..h {
            for xx in 0..w {
                dp[y * w + xx] = gp[(y / factor) * ow + xx / factor] * norm;
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn upsample_then_downsample_preserves_constants() {
        let x = Tensor::<f64>::full([1, 2, 3, 5], 0.7);
        let up = resize_bilinear(&x, 6, 10).unwrap();
        assert!(up.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        let down = avg_downsample(&up, 2).unwrap();
        assert_eq!(down.shape(), x.shape());
        for (a, b) in down.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn resize_same_size_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f64>::randn([1, 1, 4, 6], 1.0, &mut rng);
        assert_eq!(resize_bilinear(&x, 4, 6).unwrap(), x);
    }

    #[test]
    fn resize_backward_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::<f64>::randn([2, 2, 3, 4], 1.0, &mut rng);
        let g = Tensor::<f64>::randn([2, 2, 7, 5], 1.0, &mut rng);
        let lhs = resize_bilinear(&x, 7, 5).unwrap().dot(&g);
        let rhs = x.dot(&resize_bilinear_backward(x.shape(), &g).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn downsample_rejects_bad_factor() {
        let x = Tensor::<f32>::zeros([1, 1, 6, 6]);
        assert!(avg_downsample(&x, 0).is_err());
        assert!(avg_downsample(&x, 4).is_err());
        assert_eq!(avg_downsample(&x, 3).unwrap().shape(), [1, 1, 2, 2]);
    }
}
