//! Adam optimizer with bias correction.

use crate::{Scalar, Tensor, TensorError};

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Step counter: number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. `grads[i]` belongs to `params[i]`; `None` is treated
    /// as a zero gradient (the moments still decay).
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Option<&Tensor<T>>], lr: f64) -> Result<(), TensorError> {
        if grads.len() != params.len() {
            return Err(TensorError::InvalidGeometry {
                op: "adam",
                detail: format!("{} parameters but {} gradients", params.len(), grads.len()),
            });
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.v = self.m.clone();
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if self.m[i].shape() != p.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam",
                    expected: self.m[i].shape(),
                    got: p.shape(),
                });
            }
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(TensorError::ShapeMismatch {
                        op: "adam",
                        expected: p.shape(),
                        got: g.shape(),
                    });
                }
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::from_f64_lossy(self.beta1), T::from_f64_lossy(self.beta2));
        let (one_b1, one_b2) = (T::from_f64_lossy(1.0 - self.beta1), T::from_f64_lossy(1.0 - self.beta2));
        let step = T::from_f64_lossy(lr / c1);
        let c2_sqrt = T::from_f64_lossy(c2.sqrt());
        let eps = T::from_f64_lossy(self.eps);
        for (i, p) in params.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let pd = p.data_mut();
            match grads[i] {
                Some(g) => {
                    for (((pj, mj), vj), &gj) in pd.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
                        *mj = b1 * *mj + one_b1 * gj;
                        *vj = b2 * *vj + one_b2 * gj * gj;
                        *pj -= step * *mj / (vj.sqrt() / c2_sqrt + eps);
                    }
                }
                None => {
                    for ((pj, mj), vj) in pd.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mj = b1 * *mj;
                        *vj = b2 * *vj;
                        *pj -= step * *mj / (vj.sqrt() / c2_sqrt + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Default for Adam<T> {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}
