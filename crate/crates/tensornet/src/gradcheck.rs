//! Central finite-difference gradient checks for every tape op.
//!
//! Each check builds `y = f(x₁, …, xₙ)`, projects it onto a fixed random
//! tensor `r` to get the scalar `L = ⟨r, y⟩`, backpropagates `r`, and compares
//! every analytic partial `∂L/∂xᵢⱼ` with `(L(x + εe) − L(x − εe)) / 2ε`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corr::CorrParams;
use crate::graph::{Graph, Var};
use crate::{Tensor, TensorError};

#[derive(Clone, Copy, Debug)]
pub struct GradcheckOptions {
    /// Finite-difference step.
    pub eps: f64,
    /// Lower bound on the relative-error denominator, so entries whose true
    /// derivative is zero are compared on an absolute scale.
    pub floor: f64,
    /// Entries probed per input tensor; larger tensors are subsampled.
    pub max_probes: usize,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            floor: 1e-6,
            max_probes: 400,
        }
    }
}

/// Outcome of one op on one input configuration.
#[derive(Clone, Debug)]
pub struct GradcheckCase {
    pub op: &'static str,
    pub config: String,
    pub probes: usize,
    pub max_rel_error: f64,
}

/// Relative discrepancy `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Gradient check of `f` at `inputs`. Returns `(probes, max relative error)`.
pub fn check<F>(inputs: &[Tensor<f64>], f: F, opts: &GradcheckOptions, seed: u64) -> Result<(usize, f64), TensorError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let y = f(&mut g, &vars)?;
    let r = Tensor::randn(g.value(y).shape(), 1.0, &mut rng);
    g.backward_with(y, r.clone())?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let objective = |xs: &[Tensor<f64>]| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.input(t.clone())).collect();
        let y = f(&mut g, &vars)?;
        Ok(g.value(y).dot(&r))
    };

    let mut worst = 0.0f64;
    let mut probes = 0;
    let mut xs = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        let n = xs[i].numel();
        let idx: Vec<usize> = if n <= opts.max_probes {
            (0..n).collect()
        } else {
            sample(&mut rng, n, opts.max_probes).into_vec()
        };
        for j in idx {
            let orig = xs[i].data()[j];
            xs[i].data_mut()[j] = orig + opts.eps;
            let plus = objective(&xs)?;
            xs[i].data_mut()[j] = orig - opts.eps;
            let minus = objective(&xs)?;
            xs[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            worst = worst.max(relative_error(grad.data()[j], numeric, opts.floor));
            probes += 1;
        }
    }
    Ok((probes, worst))
}

/// Normal entries pushed at least `margin` away from zero, for ops with a
/// kink at the origin.
fn randn_away_from_zero(shape: [usize; 4], margin: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::<f64>::randn(shape, 1.0, rng).map(|v| if v >= 0.0 { v + margin } else { v - margin })
}

/// Runs the full suite: every differentiable op on at least five random
/// configurations, double precision.
pub fn run_suite(seed: u64, opts: &GradcheckOptions) -> Result<Vec<GradcheckCase>, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    let mut push = |op: &'static str, config: String, result: (usize, f64)| {
        cases.push(GradcheckCase {
            op,
            config,
            probes: result.0,
            max_rel_error: result.1,
        });
    };

    // (n, c_in, h, w, c_out, k, stride, pad)
    let convs = [
        (1, 2, 6, 6, 3, 3, 1, 1),
        (1, 2, 8, 8, 2, 3, 2, 1),
        (2, 3, 7, 5, 2, 5, 2, 2),
        (1, 1, 9, 9, 4, 7, 2, 3),
        (1, 4, 4, 6, 3, 1, 1, 0),
    ];
    for &(n, ci, h, w, co, k, s, p) in &convs {
        let x = Tensor::randn([n, ci, h, w], 1.0, &mut rng);
        let wt = Tensor::randn([co, ci, k, k], 0.5, &mut rng);
        let b = Tensor::randn([1, co, 1, 1], 0.5, &mut rng);
        let r = check(&[x, wt, b], |g, v| g.conv2d(v[0], v[1], Some(v[2]), s, p), opts, rng.gen())?;
        push("conv2d", format!("x={:?} k={k} s={s} p={p} c_out={co}", [n, ci, h, w]), r);
    }

    let upconvs = [(1, 2, 3, 3, 2), (1, 3, 4, 2, 1), (2, 1, 2, 3, 3), (1, 4, 2, 2, 2), (1, 2, 5, 4, 2)];
    for &(n, ci, h, w, co) in &upconvs {
        let x = Tensor::randn([n, ci, h, w], 1.0, &mut rng);
        let wt = Tensor::randn([ci, co, 4, 4], 0.5, &mut rng);
        let b = Tensor::randn([1, co, 1, 1], 0.5, &mut rng);
        let r = check(&[x, wt, b], |g, v| g.upconv2d(v[0], v[1], Some(v[2])), opts, rng.gen())?;
        push("upconv2d", format!("x={:?} k=4 c_out={co}", [n, ci, h, w]), r);
    }

    let plain = [[1, 1, 4, 4], [1, 3, 5, 7], [2, 2, 3, 3], [1, 8, 2, 2], [3, 1, 6, 1]];
    for &shape in &plain {
        let x = randn_away_from_zero(shape, 0.05, &mut rng);
        let r = check(&[x], |g, v| g.relu(v[0]), opts, rng.gen())?;
        push("relu", format!("x={shape:?}"), r);
    }
    for &shape in &plain {
        let x = randn_away_from_zero(shape, 0.05, &mut rng);
        let r = check(&[x], |g, v| g.leaky_relu(v[0], 0.1), opts, rng.gen())?;
        push("leaky_relu", format!("x={shape:?} slope=0.1"), r);
    }

    let concats: [(&[usize], usize, usize); 5] = [
        (&[1, 2], 3, 3),
        (&[3, 5], 2, 4),
        (&[1, 1, 1], 4, 4),
        (&[2, 4], 5, 3),
        (&[6, 2], 2, 2),
    ];
    for &(chans, h, w) in &concats {
        let parts: Vec<Tensor<f64>> = chans.iter().map(|&c| Tensor::randn([1, c, h, w], 1.0, &mut rng)).collect();
        let r = check(&parts, |g, v| g.concat(v), opts, rng.gen())?;
        push("concat", format!("channels={chans:?} {h}x{w}"), r);
    }

    let resizes = [([1, 2, 3, 3], 6, 6), ([1, 1, 4, 5], 8, 10), ([2, 2, 4, 4], 16, 16), ([1, 3, 5, 3], 7, 4), ([1, 1, 6, 6], 3, 3)];
    for &(shape, oh, ow) in &resizes {
        let x = Tensor::randn(shape, 1.0, &mut rng);
        let r = check(&[x], |g, v| g.resize(v[0], oh, ow), opts, rng.gen())?;
        push("resize", format!("x={shape:?} -> {oh}x{ow}"), r);
    }

    let downs = [([1, 2, 4, 4], 2), ([1, 1, 8, 8], 4), ([2, 3, 6, 6], 3), ([1, 2, 4, 6], 2), ([1, 1, 3, 3], 1)];
    for &(shape, f) in &downs {
        let x = Tensor::randn(shape, 1.0, &mut rng);
        let r = check(&[x], |g, v| g.avg_downsample(v[0], f), opts, rng.gen())?;
        push("avg_downsample", format!("x={shape:?} factor={f}"), r);
    }

    // (c, h, w, k, d, s1, s2, normalize)
    let corrs = [
        (1, 5, 5, 0, 2, 1, 1, false),
        (2, 5, 5, 1, 1, 1, 1, false),
        (3, 6, 6, 0, 3, 2, 1, false),
        (2, 7, 6, 1, 2, 1, 2, true),
        (2, 8, 8, 2, 3, 2, 2, false),
    ];
    for &(c, h, w, k, d, s1, s2, normalize) in &corrs {
        let params = CorrParams {
            kernel_radius: k,
            max_displacement: d,
            stride1: s1,
            stride2: s2,
            normalize,
        };
        let a = Tensor::randn([1, c, h, w], 1.0, &mut rng);
        let b = Tensor::randn([1, c, h, w], 1.0, &mut rng);
        let r = check(&[a, b], |g, v| g.correlation(v[0], v[1], params), opts, rng.gen())?;
        push(
            "correlation",
            format!("f={:?} k={k} d={d} s1={s1} s2={s2} norm={normalize}", [1, c, h, w]),
            r,
        );
    }

    let epes = [[1, 2, 3, 3], [2, 2, 4, 4], [1, 2, 5, 2], [1, 2, 1, 7], [3, 2, 2, 2]];
    for &shape in &epes {
        let pred = Tensor::randn(shape, 1.0, &mut rng);
        let target = Tensor::randn(shape, 1.0, &mut rng);
        let weight = Tensor::rand_uniform([shape[0], 1, shape[2], shape[3]], 0.2, 1.0, &mut rng);
        let r = check(&[pred], |g, v| g.epe_loss(v[0], target.clone(), weight.clone()), opts, rng.gen())?;
        push("epe_loss", format!("pred={shape:?}"), r);
    }

    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1e-6), 0.0);
        assert!((relative_error(2.0, 1.0, 1e-6) - 0.5).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-9, 1e-6) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn relu_kink_is_flagged() {
        // At exactly zero the one-sided analytic slope disagrees with the
        // symmetric difference quotient (1/2), which the check must expose.
        let x = Tensor::<f64>::zeros([1, 1, 1, 1]);
        let (_, err) = check(&[x], |g, v| g.relu(v[0]), &GradcheckOptions::default(), 1).unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn full_suite_passes() {
        let cases = run_suite(7, &GradcheckOptions::default()).unwrap();
        for c in &cases {
            assert!(c.max_rel_error < 1e-4, "{} {} -> {}", c.op, c.config, c.max_rel_error);
        }
        for op in ["conv2d", "upconv2d", "relu", "concat", "resize", "correlation"] {
            assert!(cases.iter().filter(|c| c.op == op).count() >= 5, "{op}");
        }
    }
}
