//! Correlation layer: patchwise inner products between two feature maps over
//! a bounded, strided displacement neighbourhood.
//!
//! For a position `x1` on the `stride1` grid and a displacement `δ` on the
//! `stride2` grid with `‖δ‖∞ ≤ max_displacement`, the output is
//!
//! ```text
//! out[index(δ)](x1) = Σ_{o ∈ [-k, k]²} ⟨f1(x1 + o), f2(x1 + δ + o)⟩
//! ```
//!
//! Reads outside either map contribute zero. Displacement channels are
//! ordered row-major over `(δy, δx)` from `(-d, -d)` to `(+d, +d)`. The layer
//! has no parameters and is bilinear in `(f1, f2)`.

use crate::{Scalar, Tensor, TensorError};

/// Hyper-parameters of the correlation layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorrParams {
    /// Patch half-width `k`; patch size is `2k + 1`.
    pub kernel_radius: usize,
    /// Maximum displacement `d` (in feature-map pixels).
    pub max_displacement: usize,
    /// Stride over first-map positions.
    pub stride1: usize,
    /// Stride over displacements inside the neighbourhood.
    pub stride2: usize,
    /// Divide by `channels · (2k+1)²`. Off by default: the raw sum is used.
    pub normalize: bool,
}

impl Default for CorrParams {
    fn default() -> Self {
        Self {
            kernel_radius: 0,
            max_displacement: 20,
            stride1: 1,
            stride2: 2,
            normalize: false,
        }
    }
}

impl CorrParams {
    pub fn validate(&self) -> Result<(), TensorError> {
        if self.stride1 == 0 || self.stride2 == 0 {
            return Err(TensorError::InvalidGeometry {
                op: "correlation",
                detail: format!("strides must be >= 1 (s1={}, s2={})", self.stride1, self.stride2),
            });
        }
        Ok(())
    }

    /// Number of displacement steps on each side of zero.
    pub fn grid_radius(&self) -> usize {
        self.max_displacement / self.stride2
    }

    /// Side length of the strided displacement grid.
    pub fn grid_side(&self) -> usize {
        2 * self.grid_radius() + 1
    }

    /// Number of output channels, `(2·⌊d/s2⌋ + 1)²`.
    pub fn output_channels(&self) -> usize {
        self.grid_side() * self.grid_side()
    }

    /// Output spatial size for an `h × w` input.
    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride1), w.div_ceil(self.stride1))
    }

    /// Displacement `(δy, δx)` of output channel `index`.
    pub fn displacement(&self, index: usize) -> (isize, isize) {
        let side = self.grid_side();
        let r = self.grid_radius() as isize;
        let s2 = self.stride2 as isize;
        let iy = (index / side) as isize - r;
        let ix = (index % side) as isize - r;
        (iy * s2, ix * s2)
    }

    /// Channel index of the zero displacement.
    pub fn center_channel(&self) -> usize {
        self.output_channels() / 2
    }

    fn scale<T: Scalar>(&self, channels: usize) -> T {
        if self.normalize {
            let k = 2 * self.kernel_radius + 1;
            T::one() / T::from_f64_lossy((channels * k * k) as f64)
        } else {
            T::one()
        }
    }
}

/// Index range `[lo, hi)` of positions `p` with both `p` and `p + delta`
/// inside `[0, len)`.
fn overlap(len: usize, delta: isize) -> (usize, usize) {
    let lo = (-delta).max(0) as usize;
    let hi = (len as isize - delta.max(0)).max(0) as usize;
    (lo.min(len), hi.max(lo.min(len)))
}

fn check_pair<T: Scalar>(f1: &Tensor<T>, f2: &Tensor<T>) -> Result<(), TensorError> {
    if f1.shape() != f2.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "correlation",
            expected: f1.shape(),
            got: f2.shape(),
        });
    }
    Ok(())
}

/// Channel-summed products `Σ_c f1(p)·f2(p+δ)` for every in-bounds `p`.
fn product_map<T: Scalar>(f1: &[T], f2: &[T], c: usize, h: usize, w: usize, dy: isize, dx: isize, prod: &mut [T]) -> bool {
    prod.iter_mut().for_each(|v| *v = T::zero());
    let (y0, y1) = overlap(h, dy);
    let (x0, x1) = overlap(w, dx);
    if y0 >= y1 || x0 >= x1 {
        return false;
    }
    for ch in 0..c {
        let a = &f1[ch * h * w..(ch + 1) * h * w];
        let b = &f2[ch * h * w..(ch + 1) * h * w];
        for y in y0..y1 {
            let ya = y * w;
            let yb = (y as isize + dy) as usize * w;
            let pa = &a[ya + x0..ya + x1];
            let pb = &b[yb + (x0 as isize + dx) as usize..yb + (x1 as isize + dx) as usize];
            let out = &mut prod[ya + x0..ya + x1];
            for ((o, &va), &vb) in out.iter_mut().zip(pa).zip(pb) {
                *o += va * vb;
            }
        }
    }
    true
}

/// Forward pass. Inputs are `(n, c, h, w)`; output is
/// `(n, output_channels, ⌈h/s1⌉, ⌈w/s1⌉)`.
pub fn correlate_forward<T: Scalar>(f1: &Tensor<T>, f2: &Tensor<T>, params: &CorrParams) -> Result<Tensor<T>, TensorError> {
    params.validate()?;
    check_pair(f1, f2)?;
    let [n, c, h, w] = f1.shape();
    let (oh, ow) = params.output_dims(h, w);
    let channels = params.output_channels();
    let k = params.kernel_radius as isize;
    let s1 = params.stride1;
    let scale: T = params.scale(c);
    let mut out = Tensor::zeros([n, channels, oh, ow]);
    let mut prod = vec![T::zero(); h * w];
    for b in 0..n {
        let a = f1.item(b);
        let bb = f2.item(b);
        let out_b = out.item_mut(b);
        for ch in 0..channels {
            let (dy, dx) = params.displacement(ch);
            if !product_map(a, bb, c, h, w, dy, dx, &mut prod) {
                continue;
            }
            let dst = &mut out_b[ch * oh * ow..(ch + 1) * oh * ow];
            if k == 0 && s1 == 1 {
                dst.copy_from_slice(&prod);
            } else {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let (y1, x1) = ((oy * s1) as isize, (ox * s1) as isize);
                        let mut acc = T::zero();
                        for py in (y1 - k).max(0)..(y1 + k + 1).min(h as isize) {
                            for px in (x1 - k).max(0)..(x1 + k + 1).min(w as isize) {
                                acc += prod[py as usize * w + px as usize];
                            }
                        }
                        dst[oy * ow + ox] = acc;
                    }
                }
            }
            if params.normalize {
                dst.iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
    Ok(out)
}

/// Backward pass: the exact adjoint of the bilinear forward map.
pub fn correlate_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    f1: &Tensor<T>,
    f2: &Tensor<T>,
    params: &CorrParams,
) -> Result<(Tensor<T>, Tensor<T>), TensorError> {
    params.validate()?;
    check_pair(f1, f2)?;
    let [n, c, h, w] = f1.shape();
    let (oh, ow) = params.output_dims(h, w);
    let channels = params.output_channels();
    let expected = [n, channels, oh, ow];
    if grad_out.shape() != expected {
        return Err(TensorError::ShapeMismatch {
            op: "correlation_backward",
            expected,
            got: grad_out.shape(),
        });
    }
    let k = params.kernel_radius as isize;
    let s1 = params.stride1;
    let scale: T = params.scale(c);
    let mut g1 = Tensor::zeros(f1.shape());
    let mut g2 = Tensor::zeros(f2.shape());
    let mut gprod = vec![T::zero(); h * w];
    for b in 0..n {
        let a = f1.item(b);
        let bb = f2.item(b);
        let gout_b = grad_out.item(b);
        for ch in 0..channels {
            let (dy, dx) = params.displacement(ch);
            let (y0, y1) = overlap(h, dy);
            let (x0, x1) = overlap(w, dx);
            if y0 >= y1 || x0 >= x1 {
                continue;
            }
            let src = &gout_b[ch * oh * ow..(ch + 1) * oh * ow];
            if k == 0 && s1 == 1 {
                gprod.copy_from_slice(src);
            } else {
                gprod.iter_mut().for_each(|v| *v = T::zero());
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = src[oy * ow + ox];
                        let (cy, cx) = ((oy * s1) as isize, (ox * s1) as isize);
                        for py in (cy - k).max(0)..(cy + k + 1).min(h as isize) {
                            for px in (cx - k).max(0)..(cx + k + 1).min(w as isize) {
                                gprod[py as usize * w + px as usize] += g;
                            }
                        }
                    }
                }
            }
            if params.normalize {
                gprod.iter_mut().for_each(|v| *v *= scale);
            }
            let xs = (x0 as isize + dx) as usize;
            let xe = (x1 as isize + dx) as usize;
            let g1_b = g1.item_mut(b);
            for chan in 0..c {
                let base = chan * h * w;
                for y in y0..y1 {
                    let ya = base + y * w;
                    let yb = base + (y as isize + dy) as usize * w;
                    let gp = &gprod[y * w + x0..y * w + x1];
                    let src = &bb[yb + xs..yb + xe];
                    for ((o, &g), &v) in g1_b[ya + x0..ya + x1].iter_mut().zip(gp).zip(src) {
                        *o += g * v;
                    }
                }
            }
            let g2_b = g2.item_mut(b);
            for chan in 0..c {
                let base = chan * h * w;
                for y in y0..y1 {
                    let ya = base + y * w;
                    let yb = base + (y as isize + dy) as usize * w;
                    let gp = &gprod[y * w + x0..y * w + x1];
                    let src = &a[ya + x0..ya + x1];
                    for ((o, &g), &v) in g2_b[yb + xs..yb + xe].iter_mut().zip(gp).zip(src) {
                        *o += g * v;
                    }
                }
            }
        }
    }
    Ok((g1, g2))
}
