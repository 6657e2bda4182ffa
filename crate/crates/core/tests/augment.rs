use flownet_core::augment::{
    apply_augmentation, apply_geometric, sample_augmentation, warp_sample, AugmentRanges, AugmentSpec,
};
use flownet_core::geometry::Affine2;
use flownet_core::scenegen::{render_layers, sample_scene, GeneratorConfig, Sample, SceneSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn background_only(seed: u64) -> (SceneSpec, Sample) {
    let cfg = GeneratorConfig {
        sprite_count_min: 0,
        sprite_count_max: 0,
        quarter: false,
        ..GeneratorConfig::desk(64, 48)
    };
    let spec = sample_scene(&cfg, seed, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let s = render_layers(&spec, &cfg.assets()).unwrap().sample;
    (spec, s)
}

#[test]
fn affine_flow_adapts_in_closed_form() {
    let ranges = AugmentRanges::default();
    for seed in 0..10u64 {
        let (spec, s) = background_only(seed);
        let aug = sample_augmentation(&mut ChaCha8Rng::seed_from_u64(100 + seed), &ranges, 64, 48);
        let out = apply_augmentation(&s, &aug).unwrap();
        let closed = aug.a2_matrix().compose(&spec.background_motion()).compose(&aug.a1_matrix().inverse().unwrap());
        let mut checked = 0;
        for y in 0..48 {
            for x in 0..64 {
                if !out.flow.is_valid(x, y) {
                    continue;
                }
                let (px, py) = closed.apply(x as f64, y as f64);
                let (u, v) = out.flow.get(x, y);
                assert!((u - (px - x as f64)).abs() < 1e-6 && (v - (py - y as f64)).abs() < 1e-6);
                checked += 1;
            }
        }
        assert!(checked > 0, "seed {seed}: no valid pixels");
    }
}

#[test]
fn sampled_parameters_respect_ranges() {
    let ranges = AugmentRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut rot, mut zoom) = ((f64::MAX, f64::MIN), (f64::MAX, f64::MIN));
    for _ in 0..100_000 {
        let a = sample_augmentation(&mut rng, &ranges, 64, 48);
        assert!(a.within(&ranges, 64));
        assert!((-17.0..=17.0).contains(&a.a1.rotation) && (0.9..=2.0).contains(&a.a1.zoom));
        rot = (rot.0.min(a.a1.rotation), rot.1.max(a.a1.rotation));
        zoom = (zoom.0.min(a.a1.zoom), zoom.1.max(a.a1.zoom));
    }
    // The draws also cover the ranges.
    assert!(rot.0 < -16.9 && rot.1 > 16.9 && zoom.0 < 0.91 && zoom.1 > 1.99);
}

#[test]
fn brightness_sigma_matches() {
    let ranges = AugmentRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let b = sample_augmentation(&mut rng, &ranges, 8, 8).photometric.brightness;
        s += b;
        s2 += b * b;
    }
    let mean = s / n as f64;
    let sd = (s2 / n as f64 - mean * mean).sqrt();
    assert!((sd - 0.2).abs() < 0.002, "{sd}");
}

#[test]
fn geometric_augmentation_preserves_warp_consistency() {
    let cfg = GeneratorConfig {
        quarter: false,
        ..GeneratorConfig::desk(96, 72)
    };
    let ranges = AugmentRanges::default();
    for seed in 0..5u64 {
        let spec = sample_scene(&cfg, seed, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let s = render_layers(&spec, &cfg.assets()).unwrap().sample;
        let aug = sample_augmentation(&mut ChaCha8Rng::seed_from_u64(50 + seed), &ranges, 96, 72);
        let out = apply_geometric(&s, &aug).unwrap();
        let (mut sum, mut n) = (0.0, 0usize);
        for y in 0..72 {
            for x in 0..96 {
                let i = y * 96 + x;
                if !out.flow.valid()[i] || out.occlusion[i] {
                    continue;
                }
                let (u, v) = out.flow.get(x, y);
                // Only targets that were rendered from inside the source frame.
                let (sx, sy) = aug.a2_matrix().inverse().unwrap().apply(x as f64 + u, y as f64 + v);
                if !(sx >= 0.0 && sy >= 0.0 && sx <= 95.0 && sy <= 71.0) {
                    continue;
                }
                if let Some(p2) = out.img2.sample(x as f64 + u, y as f64 + v) {
                    let p1 = out.img1.get(x, y);
                    sum += (0..3).map(|c| (p1[c] - p2[c]).abs() as f64).sum::<f64>() / 3.0;
                    n += 1;
                }
            }
        }
        let err = sum / n as f64;
        assert!(n > 500 && err < 0.03, "seed {seed}: {err} over {n}");
    }
}

#[test]
fn composing_augmentations_equals_composed_transforms() {
    let (_, s) = background_only(3);
    let ranges = AugmentRanges {
        scale_max: 1.2,
        ..AugmentRanges::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = sample_augmentation(&mut rng, &ranges, 64, 48);
    let b = sample_augmentation(&mut rng, &ranges, 64, 48);
    let twice = apply_geometric(&apply_geometric(&s, &a).unwrap(), &b).unwrap();
    let once = warp_sample(
        &s,
        &b.a1_matrix().compose(&a.a1_matrix()),
        &b.a2_matrix().compose(&a.a2_matrix()),
    )
    .unwrap();
    let mut compared = 0;
    for y in 4..44 {
        for x in 4..60 {
            let i = y * 64 + x;
            if twice.flow.valid()[i] && once.flow.valid()[i] {
                assert!((twice.flow.u()[i] - once.flow.u()[i]).abs() < 1e-5);
                assert!((twice.flow.v()[i] - once.flow.v()[i]).abs() < 1e-5);
                compared += 1;
            }
        }
    }
    assert!(compared > 100, "{compared}");
}

#[test]
fn shared_translation_with_identity_relative_keeps_zero_flow() {
    let (_, mut s) = background_only(0);
    s.flow = flownet_core::FlowField::zeros(64, 48);
    s.img2 = s.img1.clone();
    let mut spec = AugmentSpec::identity(64, 48);
    spec.a1.tx = 7.0;
    spec.a1.ty = 2.0;
    let out = apply_augmentation(&s, &spec).unwrap();
    assert!(out.flow.u().iter().chain(out.flow.v()).all(|&f| f.abs() < 1e-12));
    assert_eq!(spec.a2_matrix(), spec.a1_matrix().compose(&Affine2::IDENTITY));
}
