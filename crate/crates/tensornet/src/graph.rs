//! Reverse-mode autodiff tape.
//!
//! A [`Graph`] records every operation as a node holding its output value.
//! Nodes are appended after their inputs, so the tape order is already a
//! topological order and backward is a single reverse sweep.

use crate::corr::{correlate_backward, correlate_forward, CorrParams};
use crate::ops;
use crate::{Scalar, Tensor, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { stride: usize, pad: usize },
    ConvTranspose2d { stride: usize, pad: usize },
    LeakyRelu { slope: T },
    Concat { channels: Vec<usize> },
    Resize,
    AvgDownsample { factor: usize },
    Scale { factor: T },
    Correlation { params: CorrParams },
    EpeLoss { target: Tensor<T>, weight: Tensor<T>, total: T },
    WeightedSum { weights: Vec<T> },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "upconv2d",
            Op::LeakyRelu { .. } => "relu",
            Op::Concat { .. } => "concat",
            Op::Resize => "resize",
            Op::AvgDownsample { .. } => "avg_downsample",
            Op::Scale { .. } => "scale",
            Op::Correlation { .. } => "correlation",
            Op::EpeLoss { .. } => "epe_loss",
            Op::WeightedSum { .. } => "weighted_sum",
        }
    }
}

/// One recorded operation: op id, input refs, output value and a lazily
/// allocated gradient of the same shape.
#[derive(Debug)]
struct TapeNode<T> {
    op: Op<T>,
    inputs: Vec<Var>,
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
}

/// Tape of recorded operations.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<TapeNode<T>>,
    check_finite: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            check_finite: false,
        }
    }

    /// When enabled, every op fails with [`TensorError::NonFinite`] as soon as
    /// its output (or, during backward, any gradient) contains NaN or ±∞.
    pub fn with_finite_check(mut self, enabled: bool) -> Self {
        self.check_finite = enabled;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, v: Var) -> Result<&TapeNode<T>, TensorError> {
        self.nodes.get(v.0).ok_or(TensorError::UnknownVar(v.0))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    fn push(&mut self, op: Op<T>, inputs: Vec<Var>, value: Tensor<T>) -> Result<Var, TensorError> {
        let id = self.nodes.len();
        if self.check_finite && !value.is_finite() {
            return Err(TensorError::NonFinite { op: op.name(), node: id });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(TapeNode {
            op,
            inputs,
            value,
            grad: None,
            requires_grad,
        });
        Ok(Var(id))
    }

    /// Constant leaf: no gradient is propagated into it.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(TapeNode {
            op: Op::Leaf,
            inputs: Vec::new(),
            value,
            grad: None,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        let v = self.input(value);
        self.nodes[v.0].requires_grad = true;
        v
    }

    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var, TensorError> {
        let out = ops::conv2d_forward(
            &self.node(x)?.value,
            &self.node(weight)?.value,
            bias.map(|b| &self.nodes[b.0].value),
            stride,
            pad,
        )?;
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        self.push(Op::Conv2d { stride, pad }, inputs, out)
    }

    /// Transposed convolution with explicit stride and padding.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var, TensorError> {
        let out = ops::conv_transpose2d_forward(
            &self.node(x)?.value,
            &self.node(weight)?.value,
            bias.map(|b| &self.nodes[b.0].value),
            stride,
            pad,
        )?;
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        self.push(Op::ConvTranspose2d { stride, pad }, inputs, out)
    }

    /// Resolution-doubling "upconvolution": stride-2 transposed convolution
    /// with padding `(k - 2) / 2`, which gives exactly `2h × 2w` for even `k`.
    pub fn upconv2d(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var, TensorError> {
        let k = self.node(weight)?.value.h();
        if k < 2 || k % 2 != 0 || self.value(weight).w() != k {
            return Err(TensorError::InvalidGeometry {
                op: "upconv2d",
                detail: format!("kernel must be square with even size >= 2, got {:?}", self.value(weight).shape()),
            });
        }
        self.conv_transpose2d(x, weight, bias, 2, (k - 2) / 2)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var, TensorError> {
        let out = ops::leaky_relu(&self.node(x)?.value, slope);
        self.push(Op::LeakyRelu { slope }, vec![x], out)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.leaky_relu(x, T::zero())
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|&v| &self.nodes[v.0].value).collect();
        let out = ops::concat_channels(&tensors)?;
        let channels = tensors.iter().map(|t| t.c()).collect();
        self.push(Op::Concat { channels }, parts.to_vec(), out)
    }

    /// Bilinear resize to an explicit size.
    pub fn resize(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var, TensorError> {
        let out = ops::resize_bilinear(&self.node(x)?.value, out_h, out_w)?;
        self.push(Op::Resize, vec![x], out)
    }

    /// Bilinear upsampling by an integer factor.
    pub fn upsample(&mut self, x: Var, factor: usize) -> Result<Var, TensorError> {
        if factor == 0 {
            return Err(TensorError::InvalidFactor { op: "upsample", factor });
        }
        let [_, _, h, w] = self.node(x)?.value.shape();
        self.resize(x, h * factor, w * factor)
    }

    pub fn avg_downsample(&mut self, x: Var, factor: usize) -> Result<Var, TensorError> {
        let out = ops::avg_downsample(&self.node(x)?.value, factor)?;
        self.push(Op::AvgDownsample { factor }, vec![x], out)
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var, TensorError> {
        let out = self.node(x)?.value.map(|v| v * factor);
        self.push(Op::Scale { factor }, vec![x], out)
    }

    pub fn correlation(&mut self, f1: Var, f2: Var, params: CorrParams) -> Result<Var, TensorError> {
        let out = correlate_forward(&self.node(f1)?.value, &self.node(f2)?.value, &params)?;
        self.push(Op::Correlation { params }, vec![f1, f2], out)
    }

    /// Weighted mean endpoint error between a predicted `(n, 2, h, w)` flow
    /// and a constant target, with per-pixel weights `(n, 1, h, w)`:
    /// `Σ w·‖pred − target‖ / Σ w`. A zero total weight yields zero loss.
    pub fn epe_loss(&mut self, pred: Var, target: Tensor<T>, weight: Tensor<T>) -> Result<Var, TensorError> {
        let p = &self.node(pred)?.value;
        let [n, c, h, w] = p.shape();
        if c != 2 || target.shape() != p.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "epe_loss",
                expected: [n, 2, h, w],
                got: target.shape(),
            });
        }
        if weight.shape() != [n, 1, h, w] {
            return Err(TensorError::ShapeMismatch {
                op: "epe_loss",
                expected: [n, 1, h, w],
                got: weight.shape(),
            });
        }
        let total = weight.sum();
        let mut acc = T::zero();
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let wt = weight.at(b, 0, y, x);
                    if wt == T::zero() {
                        continue;
                    }
                    let du = p.at(b, 0, y, x) - target.at(b, 0, y, x);
                    let dv = p.at(b, 1, y, x) - target.at(b, 1, y, x);
                    acc += wt * (du * du + dv * dv).sqrt();
                }
            }
        }
        let loss = if total > T::zero() { acc / total } else { T::zero() };
        self.push(Op::EpeLoss { target, weight, total }, vec![pred], Tensor::scalar(loss))
    }

    /// `Σ wᵢ·xᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var, TensorError> {
        let mut acc = T::zero();
        for &(v, w) in terms {
            let t = &self.node(v)?.value;
            if t.numel() != 1 {
                return Err(TensorError::NonScalarLoss(t.shape()));
            }
            acc += w * t.data()[0];
        }
        let (inputs, weights) = terms.iter().copied().unzip();
        self.push(Op::WeightedSum { weights }, inputs, Tensor::scalar(acc))
    }

    /// Backpropagates from a scalar node with seed 1.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let shape = self.node(loss)?.value.shape();
        if shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarLoss(shape));
        }
        self.backward_with(loss, Tensor::full(shape, T::one()))
    }

    /// Backpropagates an arbitrary seed gradient (a vector-Jacobian product).
    /// Gradients from earlier calls are cleared first.
    pub fn backward_with(&mut self, root: Var, seed: Tensor<T>) -> Result<(), TensorError> {
        let root_shape = self.node(root)?.value.shape();
        if seed.shape() != root_shape {
            return Err(TensorError::ShapeMismatch {
                op: "backward",
                expected: root_shape,
                got: seed.shape(),
            });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[root.0].grad = Some(seed);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(grad) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.input_grads(i, &grad)?;
            self.nodes[i].grad = Some(grad);
            for (var, g) in contributions {
                if self.check_finite && !g.is_finite() {
                    return Err(TensorError::NonFinite {
                        op: self.nodes[i].op.name(),
                        node: i,
                    });
                }
                let slot = &mut self.nodes[var.0].grad;
                match slot {
                    Some(existing) => existing.add_assign(&g),
                    None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn input_grads(&self, i: usize, grad: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>, TensorError> {
        let node = &self.nodes[i];
        let inputs = &node.inputs;
        let val = |v: Var| &self.nodes[v.0].value;
        let mut out = Vec::with_capacity(inputs.len());
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { stride, pad } | Op::ConvTranspose2d { stride, pad } => {
                let (x, w) = (inputs[0], inputs[1]);
                let need_x = self.wants(x);
                let (gx, gw, gb) = if matches!(node.op, Op::Conv2d { .. }) {
                    ops::conv2d_backward(val(x), val(w), grad, *stride, *pad, need_x)?
                } else {
                    ops::conv_transpose2d_backward(val(x), val(w), grad, *stride, *pad, need_x)?
                };
                if let Some(gx) = gx {
                    out.push((x, gx));
                }
                if self.wants(w) {
                    out.push((w, gw));
                }
                if let Some(&b) = inputs.get(2) {
                    if self.wants(b) {
                        out.push((b, gb));
                    }
                }
            }
            Op::LeakyRelu { slope } => {
                out.push((inputs[0], ops::leaky_relu_backward(val(inputs[0]), grad, *slope)));
            }
            Op::Concat { channels } => {
                for (&v, g) in inputs.iter().zip(ops::split_channels(grad, channels)) {
                    if self.wants(v) {
                        out.push((v, g));
                    }
                }
            }
            Op::Resize => {
                out.push((inputs[0], ops::resize_bilinear_backward(val(inputs[0]).shape(), grad)?));
            }
            Op::AvgDownsample { factor } => {
                out.push((inputs[0], ops::avg_downsample_backward(val(inputs[0]).shape(), grad, *factor)));
            }
            Op::Scale { factor } => {
                out.push((inputs[0], grad.map(|g| g * *factor)));
            }
            Op::Correlation { params } => {
                let (a, b) = (inputs[0], inputs[1]);
                let (ga, gb) = correlate_backward(grad, val(a), val(b), params)?;
                if self.wants(a) {
                    out.push((a, ga));
                }
                if self.wants(b) {
                    out.push((b, gb));
                }
            }
            Op::EpeLoss { target, weight, total } => {
                let pred = val(inputs[0]);
                let [n, _, h, w] = pred.shape();
                let mut g = Tensor::zeros(pred.shape());
                if *total > T::zero() {
                    let s = grad.data()[0] / *total;
                    for b in 0..n {
                        for y in 0..h {
                            for x in 0..w {
                                let wt = weight.at(b, 0, y, x);
                                let du = pred.at(b, 0, y, x) - target.at(b, 0, y, x);
                                let dv = pred.at(b, 1, y, x) - target.at(b, 1, y, x);
                                let norm = (du * du + dv * dv).sqrt();
                                if wt == T::zero() || norm == T::zero() {
                                    continue;
                                }
                                let k = s * wt / norm;
                                g.set(b, 0, y, x, k * du);
                                g.set(b, 1, y, x, k * dv);
                            }
                        }
                    }
                }
                out.push((inputs[0], g));
            }
            Op::WeightedSum { weights } => {
                let s = grad.data()[0];
                for (&v, &w) in inputs.iter().zip(weights) {
                    if self.wants(v) {
                        out.push((v, Tensor::scalar(s * w)));
                    }
                }
            }
        }
        Ok(out)
    }

    /// First node (in tape order) whose value is not finite.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
            .map(|(i, n)| (i, n.op.name()))
    }
}
