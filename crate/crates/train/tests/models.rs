use flownet_core::image::Image;
use flownet_core::scenegen::value_noise_texture;
use flownet_tensornet::ops::resize_bilinear;
use flownet_tensornet::{Graph, ParamSet, Tensor};
use flownet_train::batch::image_tensor;
use flownet_train::loss::{level_target, multiscale_epe_loss, DEFAULT_LOSS_WEIGHTS};
use flownet_train::{predict, predict_pair, Model, ModelConfig, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(variant: Variant, scale: usize) -> Model {
    Model::new(ModelConfig::desk(variant, scale, 64, 64)).unwrap()
}

fn random_images(n: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
    Tensor::rand_uniform([n, 3, h, w], -0.5, 0.5, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn forward_shapes(variant: Variant) -> Vec<[usize; 4]> {
    let m = model(variant, 8);
    let p = m.init_params(1).cast::<f64>();
    let mut g = Graph::new();
    let a = g.input(random_images(1, 64, 64, 2));
    let b = g.input(random_images(1, 64, 64, 3));
    let out = m.forward(&mut g, &p, a, b).unwrap();
    out.flows.iter().map(|&f| g.value(f).shape()).collect()
}

#[test]
fn finest_head_is_quarter_resolution_and_heads_double() {
    for v in [Variant::Simple, Variant::Corr] {
        let shapes = forward_shapes(v);
        assert_eq!(shapes.len(), 5);
        assert_eq!(*shapes.last().unwrap(), [1, 2, 16, 16]);
        for w in shapes.windows(2) {
            assert_eq!(w[0][1], 2);
            assert_eq!((w[1][2], w[1][3]), (2 * w[0][2], 2 * w[0][3]));
        }
    }
}

#[test]
fn activation_choice_does_not_change_parameter_count() {
    let relu = Model::new(ModelConfig::default()).unwrap();
    let leaky = Model::new(ModelConfig {
        leaky_slope: 0.1,
        ..ModelConfig::default()
    })
    .unwrap();
    assert_eq!(relu.num_params(), leaky.num_params());
    assert_eq!(relu.num_params(), relu.init_params(0).num_scalars());
}

#[test]
fn forward_backward_on_random_data_is_finite() {
    for v in [Variant::Simple, Variant::Corr] {
        let m = model(v, 8);
        let p = m.init_params(4).cast::<f64>();
        let mut g = Graph::new().with_finite_check(true);
        let a = g.input(random_images(2, 64, 64, 5));
        let b = g.input(random_images(2, 64, 64, 6));
        let out = m.forward(&mut g, &p, a, b).unwrap();
        let gt = Tensor::randn([2, 2, 64, 64], 3.0, &mut ChaCha8Rng::seed_from_u64(7));
        let loss = multiscale_epe_loss(&mut g, &out, &gt, &Tensor::full([2, 1, 64, 64], 1.0), &DEFAULT_LOSS_WEIGHTS).unwrap();
        g.backward(loss).unwrap();
        for &v in &out.params {
            assert!(g.grad(v).map_or(true, |t| t.is_finite()));
        }
    }
}

#[test]
fn self_correlation_is_bounded_by_zero_displacement() {
    let m = model(Variant::Corr, 8);
    let p = m.init_params(8).cast::<f64>();
    let mut g = Graph::new();
    let img = random_images(1, 128, 128, 9);
    let a = g.input(img.clone());
    let b = g.input(img);
    let out = m.forward(&mut g, &p, a, b).unwrap();
    let corr = g.value(out.correlation.unwrap());
    let cp = m.config().corr;
    let center = cp.center_channel();
    assert_eq!(corr.c(), 441);
    let (h, w) = (corr.h() as isize, corr.w() as isize);
    let mut hits = 0;
    for y in 0..h {
        for x in 0..w {
            let c0 = corr.at(0, center, y as usize, x as usize);
            let mut is_max = true;
            for c in 0..corr.c() {
                let (dy, dx) = cp.displacement(c);
                let (ty, tx) = (y + dy, x + dx);
                let v = corr.at(0, c, y as usize, x as usize);
                if ty < 0 || tx < 0 || ty >= h || tx >= w {
                    assert_eq!(v, 0.0);
                    continue;
                }
                let ct = corr.at(0, center, ty as usize, tx as usize);
                assert!(v * v <= c0 * ct * (1.0 + 1e-12) + 1e-300, "({x},{y}) channel {c}");
                is_max &= v <= c0;
            }
            hits += usize::from(is_max);
        }
    }
    // Neighbours with larger feature norms may exceed the center, but it
    // still wins at a sizeable share of positions.
    assert!(hits * 4 >= (h * w) as usize, "{hits}");
}

#[test]
fn swapping_inputs_swaps_stream_activations() {
    let m = model(Variant::Corr, 8);
    let p = m.init_params(10).cast::<f64>();
    let (i1, i2) = (random_images(1, 64, 64, 11), random_images(1, 64, 64, 12));
    let streams = |x: &Tensor<f64>, y: &Tensor<f64>| {
        let mut g = Graph::new();
        let a = g.input(x.clone());
        let b = g.input(y.clone());
        let (s1, s2) = m.forward(&mut g, &p, a, b).unwrap().streams.unwrap();
        (g.value(s1).clone(), g.value(s2).clone())
    };
    let (a1, a2) = streams(&i1, &i2);
    let (b1, b2) = streams(&i2, &i1);
    assert_eq!(a1.data(), b2.data());
    assert_eq!(a2.data(), b1.data());
    let (c1, c2) = streams(&i1, &i1);
    assert_eq!(c1.data(), c2.data());
}

#[test]
fn zero_skip_features_still_forward() {
    let m = model(Variant::Simple, 8);
    let mut p = m.init_params(13);
    for name in ["conv1.w", "conv2.w", "conv3_1.w", "conv4_1.w", "conv5_1.w"] {
        p.get_mut(name).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let mut g = Graph::<f32>::new().with_finite_check(true);
    let a = g.input(random_images(1, 64, 64, 14).cast());
    let b = g.input(random_images(1, 64, 64, 15).cast());
    let out = m.forward(&mut g, &p, a, b).unwrap();
    assert_eq!(g.value(out.finest()).shape(), [1, 2, 16, 16]);
}

#[test]
fn finest_loss_reaches_coarsest_head() {
    let m = model(Variant::Simple, 8);
    let p = m.init_params(16).cast::<f64>();
    let mut g = Graph::new();
    let a = g.input(random_images(1, 64, 64, 17));
    let b = g.input(random_images(1, 64, 64, 18));
    let out = m.forward(&mut g, &p, a, b).unwrap();
    let gt = Tensor::full([1, 2, 64, 64], 5.0);
    let loss = multiscale_epe_loss(&mut g, &out, &gt, &Tensor::full([1, 1, 64, 64], 1.0), &[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    g.backward(loss).unwrap();
    let i = p.position("flow6.w").unwrap();
    let grad = g.grad(out.params[i]).unwrap();
    assert!(grad.dot(grad) > 0.0);
}

/// Multiscale loss of the given per-level predictions.
fn loss_of(preds: &[Tensor<f64>], gt: &Tensor<f64>, weights: &[f64]) -> f64 {
    let m = model(Variant::Simple, 64);
    let p = m.init_params(0).cast::<f64>();
    let mut g = Graph::new();
    let a = g.input(Tensor::zeros([gt.n(), 3, 64, 64]));
    let b = g.input(Tensor::zeros([gt.n(), 3, 64, 64]));
    let mut out = m.forward(&mut g, &p, a, b).unwrap();
    out.flows = preds.iter().map(|t| g.input(t.clone())).collect();
    let w = Tensor::full([gt.n(), 1, 64, 64], 1.0);
    let l = multiscale_epe_loss(&mut g, &out, gt, &w, weights).unwrap();
    g.value(l).data()[0]
}

#[test]
fn loss_vanishes_on_downsampled_ground_truth() {
    let gt = Tensor::randn([2, 2, 64, 64], 4.0, &mut ChaCha8Rng::seed_from_u64(19));
    let ones = Tensor::full([2, 1, 64, 64], 1.0);
    let preds: Vec<_> = [64, 32, 16, 8, 4].iter().map(|&f| level_target(&gt, &ones, f).unwrap().0).collect();
    assert!(loss_of(&preds, &gt, &DEFAULT_LOSS_WEIGHTS).abs() < 1e-12);
}

#[test]
fn single_level_offset_contributes_weight_times_five() {
    let gt = Tensor::zeros([1, 2, 64, 64]);
    let mut preds: Vec<_> = [64, 32, 16, 8, 4].iter().map(|&f| Tensor::zeros([1, 2, 64 / f, 64 / f])).collect();
    let finest = preds.last_mut().unwrap();
    for y in 0..16 {
        for x in 0..16 {
            finest.set(0, 0, y, x, 3.0);
            finest.set(0, 1, y, x, 4.0);
        }
    }
    assert!((loss_of(&preds, &gt, &DEFAULT_LOSS_WEIGHTS) - 0.005 * 5.0).abs() < 1e-12);
}

#[test]
fn default_weights_match_hand_computed_sum() {
    // Ground truth u = 8 everywhere; level l predicts zero, so its EPE is
    // 8 / factor.
    let gt = Tensor::from_vec([1, 2, 64, 64], [vec![8.0; 4096], vec![0.0; 4096]].concat()).unwrap();
    let preds: Vec<_> = [64, 32, 16, 8, 4].iter().map(|&f| Tensor::zeros([1, 2, 64 / f, 64 / f])).collect();
    let expected = 0.32 * 8.0 / 64.0 + 0.08 * 8.0 / 32.0 + 0.02 * 8.0 / 16.0 + 0.01 * 8.0 / 8.0 + 0.005 * 8.0 / 4.0;
    assert!((loss_of(&preds, &gt, &DEFAULT_LOSS_WEIGHTS) - expected).abs() < 1e-12);
    assert!(multiscale_epe_loss(&mut Graph::<f64>::new(), &dummy_output(), &gt, &Tensor::full([1, 1, 64, 64], 1.0), &[1.0]).is_err());
}

fn dummy_output() -> flownet_train::ModelOutput {
    let m = model(Variant::Simple, 64);
    let mut g = Graph::<f64>::new();
    let a = g.input(Tensor::zeros([1, 3, 64, 64]));
    let b = g.input(Tensor::zeros([1, 3, 64, 64]));
    m.forward(&mut g, &m.init_params(0).cast(), a, b).unwrap()
}

fn texture_pair(w: usize, h: usize, seed: u64) -> (Image, Image) {
    let tex = value_noise_texture(seed, 0, 64);
    let a = Image::from_fn(w, h, |x, y| tex.get(x % 64, y % 64));
    let b = Image::from_fn(w, h, |x, y| tex.get((x + 2) % 64, (y + 1) % 64));
    (a, b)
}

#[test]
fn unit_test_scale_equals_plain_forward_and_upsampling() {
    let m = model(Variant::Simple, 8);
    let p = m.init_params(20);
    let (a, b) = texture_pair(64, 48, 1);
    let flow = predict(&m, &p, &a, &b, 1.0).unwrap();
    let mut g = Graph::<f32>::new();
    let i1 = g.input(image_tensor(&[&a], 64, 64).unwrap());
    let i2 = g.input(image_tensor(&[&b], 64, 64).unwrap());
    let out = m.forward(&mut g, &p, i1, i2).unwrap();
    let up = resize_bilinear(g.value(out.finest()), 64, 64).unwrap();
    for y in 0..48 {
        for x in 0..64 {
            let (u, v) = flow.get(x, y);
            assert_eq!(u, up.at(0, 0, y, x) as f64 * 4.0);
            assert_eq!(v, up.at(0, 1, y, x) as f64 * 4.0);
        }
    }
}

/// Parameters whose only nonzero entries are the finest head's bias, so the
/// network predicts the constant `(u, v)` level pixels.
fn constant_head(m: &Model, u: f32, v: f32) -> ParamSet<f32> {
    let mut p = m.init_params(0);
    for t in p.tensors_mut() {
        t.data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    let b = p.get_mut("flow2.b").unwrap();
    b.data_mut().copy_from_slice(&[u, v]);
    p
}

#[test]
fn test_scale_divides_predicted_vectors() {
    let m = model(Variant::Corr, 8);
    let p = constant_head(&m, 1.5, -0.5);
    let (a, b) = texture_pair(64, 48, 2);
    for s in [1.0, 1.25, 2.0] {
        let pred = predict_pair(&m, &p, &a, &b, s).unwrap();
        for &(u, v) in [pred.full.get(0, 0), pred.full.get(63, 47), pred.full.get(30, 20)].iter() {
            assert!((u - 6.0 / s).abs() < 1e-6 && (v + 2.0 / s).abs() < 1e-6, "scale {s}: {u} {v}");
        }
        assert_eq!((pred.coarse.width(), pred.coarse.height()), (16, 12));
        let (cu, _) = pred.coarse.get(5, 5);
        assert!((cu - 1.5 / s).abs() < 1e-6);
    }
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let m = model(Variant::Simple, 16);
    let p = m.init_params(21).cast::<f64>();
    let imgs = (random_images(1, 64, 64, 22), random_images(1, 64, 64, 23));
    let gt = Tensor::randn([1, 2, 64, 64], 2.0, &mut ChaCha8Rng::seed_from_u64(24));
    let w = Tensor::full([1, 1, 64, 64], 1.0);
    let loss = |p: &ParamSet<f64>, grads: bool| {
        let mut g = Graph::new();
        let a = g.input(imgs.0.clone());
        let b = g.input(imgs.1.clone());
        let out = m.forward(&mut g, p, a, b).unwrap();
        let l = multiscale_epe_loss(&mut g, &out, &gt, &w, &DEFAULT_LOSS_WEIGHTS).unwrap();
        let value = g.value(l).data()[0];
        let gr = grads.then(|| {
            g.backward(l).unwrap();
            out.params.iter().map(|&v| g.grad(v).cloned()).collect::<Vec<_>>()
        });
        (value, gr)
    };
    let (_, grads) = loss(&p, true);
    let grads = grads.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let t = rng.gen_range(0..p.len());
        let k = rng.gen_range(0..p.tensors()[t].numel());
        let analytic = grads[t].as_ref().map_or(0.0, |g| g.data()[k]);
        let mut plus = p.clone();
        plus.tensors_mut()[t].data_mut()[k] += eps;
        let mut minus = p.clone();
        minus.tensors_mut()[t].data_mut()[k] -= eps;
        let numeric = (loss(&plus, false).0 - loss(&minus, false).0) / (2.0 * eps);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn prediction_is_roughly_translation_equivariant() {
    let m = model(Variant::Simple, 8);
    let p = m.init_params(26);
    let (w, h) = (192, 128);
    let tex = value_noise_texture(3, 0, 64);
    let img = |dx: usize, dy: usize| Image::from_fn(w, h, |x, y| tex.get((x + 64 - dx) % 64, (y + dy) % 64));
    let f0 = predict(&m, &p, &img(0, 0), &img(0, 1), 1.0).unwrap();
    let f1 = predict(&m, &p, &img(8, 0), &img(8, 1), 1.0).unwrap();
    let (mut diff, mut norm) = (0.0, 0.0);
    for y in 32..h - 32 {
        for x in 32..w - 40 {
            let (u0, v0) = f0.get(x, y);
            let (u1, v1) = f1.get(x + 8, y);
            diff += (u0 - u1).powi(2) + (v0 - v1).powi(2);
            norm += u0 * u0 + v0 * v0;
        }
    }
    // Shifts below the 64-pixel total stride alias in the coarse layers.
    let rel = (diff / norm).sqrt();
    assert!(rel < 0.25, "{rel}");
}
