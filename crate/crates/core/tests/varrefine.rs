use flownet_core::flow::compute_metrics;
use flownet_core::image::Image;
use flownet_core::geometry::AffineTransform;
use flownet_core::scenegen::{quarter, render_layers, sample_scene, GeneratorConfig, Sample, SceneSpec};
use flownet_core::varrefine::{detect_boundaries, refine, refine_unmodulated, refine_with_trace, VarParams};
use flownet_core::FlowField;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// A 64x48 quadrant of a background-only scene.
fn smooth_sample(seed: u64) -> Sample {
    let cfg = GeneratorConfig {
        sprite_count_min: 0,
        sprite_count_max: 0,
        ..GeneratorConfig::desk(64, 48)
    };
    let spec = sample_scene(&cfg, seed, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let full = render_layers(&spec, &cfg.assets()).unwrap().sample;
    quarter(&full, false).unwrap()[(seed % 4) as usize].clone()
}

/// A quadrant of a scene whose background only translates.
fn translated_sample(background: u64, tx: f64, ty: f64) -> Sample {
    let cfg = GeneratorConfig::desk(64, 48);
    let spec = SceneSpec {
        seed: 0,
        width: 128,
        height: 96,
        size_scale: 0.125,
        background,
        bg_transform: AffineTransform {
            tx,
            ty,
            ..AffineTransform::identity(63.5, 47.5)
        },
        sprites: vec![],
        sprite_rel_transforms: vec![],
    };
    quarter(&render_layers(&spec, &cfg.assets()).unwrap().sample, false).unwrap()[3].clone()
}

/// Block-averaged quarter-resolution flow in quarter-resolution pixels.
fn quarter_res(f: &FlowField) -> FlowField {
    let (w, h) = (f.width() / 4, f.height() / 4);
    FlowField::from_fn(w, h, |x, y| {
        let (mut u, mut v) = (0.0, 0.0);
        for dy in 0..4 {
            for dx in 0..4 {
                let (a, b) = f.get(4 * x + dx, 4 * y + dy);
                u += a;
                v += b;
            }
        }
        (u / 64.0, v / 64.0)
    })
}

fn upsampled(init: &FlowField, w: usize, h: usize) -> FlowField {
    let p = VarParams {
        coarse_iters: 0,
        fullres_iters: 0,
        ..VarParams::default()
    };
    let blank = Image::new(w, h);
    refine_unmodulated(init, &blank, &blank, &p).unwrap()
}

#[test]
fn zero_motion_is_a_fixed_point() {
    let s = smooth_sample(1);
    let out = refine(&FlowField::zeros(16, 12), &s.img1, &s.img1, &VarParams::default()).unwrap();
    assert!(out.max_magnitude() < 1e-3);
    assert_eq!(out.valid_count(), 64 * 48);
}

#[test]
fn ground_truth_init_stays_put() {
    for (bg, tx, ty) in [(0, 2.3, -1.2), (5, -0.7, 3.4), (9, 1.6, 0.4)] {
        let s = translated_sample(bg, tx, ty);
        let init = quarter_res(&s.flow);
        let after = compute_metrics(&refine(&init, &s.img1, &s.img2, &VarParams::default()).unwrap(), &s.flow)
            .unwrap()
            .epe;
        assert!(after < 0.05, "background {bg}: {after}");
    }
}

#[test]
fn noisy_init_is_denoised_with_monotone_energy() {
    let noise = Normal::new(0.0, 0.25).unwrap();
    for seed in 0..4 {
        let s = smooth_sample(10 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clean = quarter_res(&s.flow);
        let init = FlowField::from_fn(16, 12, |x, y| {
            let (u, v) = clean.get(x, y);
            (u + noise.sample(&mut rng), v + noise.sample(&mut rng))
        });
        let before = compute_metrics(&upsampled(&init, 64, 48), &s.flow).unwrap().epe;
        let b = detect_boundaries(&s.img1);
        let (out, traces) = refine_with_trace(&init, &s.img1, &s.img2, &VarParams::default(), Some(&b)).unwrap();
        let after = compute_metrics(&out, &s.flow).unwrap().epe;
        assert!(after < before, "seed {seed}: {before} -> {after}");
        for t in &traces {
            assert!(t.is_non_increasing(1e-8), "{t:?}");
        }
    }
}

#[test]
fn boundaries_ignore_affine_intensity_changes() {
    let s = smooth_sample(2);
    let changed = Image::from_vec(
        64,
        48,
        s.img1.data().iter().map(|&p| 0.5 * p + 0.2).collect(),
    )
    .unwrap();
    let a = detect_boundaries(&s.img1);
    let b = detect_boundaries(&changed);
    let worst = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn dimension_mismatch_is_rejected() {
    let s = smooth_sample(0);
    assert!(refine(&FlowField::zeros(10, 12), &s.img1, &s.img2, &VarParams::default()).is_err());
    assert!(refine(&FlowField::zeros(16, 12), &s.img1, &Image::new(60, 48), &VarParams::default()).is_err());
}

