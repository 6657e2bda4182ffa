use flownet_core::geometry::AffineTransform;
use flownet_core::scenegen::{
    displacement_histogram, generate_dataset, photometric_error, quarter, render_layers, sample_param, sample_scene,
    sample_sprite_size, stitch, Assets, ClampedPowerGaussian, Dataset, GeneratorConfig, Sample, SceneSpec,
    SpritePlacement, SpriteRaster, SpriteSource,
};
use flownet_core::{flow::read_flo_file, FlowField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Abramowitz–Stegun 7.1.26, absolute error below 1.5e-7.
fn normal_cdf(z: f64) -> f64 {
    let x = z.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x).exp();
    0.5 * (1.0 + if z >= 0.0 { erf } else { -erf })
}

#[test]
fn rotation_bg_zero_frequency_and_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = ClampedPowerGaussian::ROTATION_BG;
    let draws: Vec<f64> = (0..100_000).map(|_| sample_param(&d, &mut rng)).collect();
    let zeros = draws.iter().filter(|&&x| x == 0.0).count() as f64 / 1e5;
    assert!((zeros - 0.70).abs() <= 0.02, "{zeros}");
    assert!(draws.iter().all(|x| (-10.0..=10.0).contains(x)));
}

#[test]
fn translation_bg_matches_transformed_gaussian_oracle() {
    let d = ClampedPowerGaussian::TRANSLATION_BG;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ours: Vec<f64> = (0..1_000_000).map(|_| sample_param(&d, &mut rng)).collect();
    let mut orng = ChaCha8Rng::seed_from_u64(99);
    let normal = Normal::new(0.0, 1.3).unwrap();
    let oracle: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let g: f64 = normal.sample(&mut orng);
            (g.signum() * g.abs().powi(4)).clamp(-40.0, 40.0)
        })
        .collect();
    let ks = ks_two_sample(ours, oracle);
    assert!(ks < 0.005, "KS {ks}");
}

#[test]
fn unclamped_linear_case_is_normal() {
    let d = ClampedPowerGaussian::new(1.0, 0.5, 2.0, f64::NEG_INFINITY, f64::INFINITY, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut z: Vec<f64> = (0..200_000).map(|_| (sample_param(&d, &mut rng) - 0.5) / 2.0).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let ks = z
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = normal_cdf(x);
            (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.005, "KS {ks}");
}

#[test]
fn sprite_counts_are_uniform() {
    let cfg = GeneratorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut counts = [0f64; 9];
    for _ in 0..10_000 {
        counts[sample_scene(&cfg, 0, &mut rng).unwrap().sprites.len() - 16] += 1.0;
    }
    let expected = 10_000.0 / 9.0;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    // 99th percentile of chi-square with 8 degrees of freedom.
    assert!(chi2 < 20.09, "chi2 {chi2} {counts:?}");
}

#[test]
fn sprite_sizes_are_clamped_with_expected_mean() {
    let cfg = GeneratorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sizes: Vec<f64> = (0..100_000).map(|_| sample_sprite_size(&cfg, &mut rng)).collect();
    assert!(sizes.iter().all(|s| (50.0..=640.0).contains(s)));
    let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
    // Monte-Carlo mean of clamp(N(200, 200), 50, 640) is about 225.3.
    assert!((180.0..=260.0).contains(&mean) && (mean - 225.26).abs() < 2.0, "{mean}");
}

#[test]
fn same_seed_same_scene() {
    let cfg = GeneratorConfig::desk(64, 48);
    let a = sample_scene(&cfg, 11, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let b = sample_scene(&cfg, 11, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    assert_eq!(a.to_text().as_bytes(), b.to_text().as_bytes());
}

/// Explicit 2x3 matrix of zoom/rotate about a pivot plus translation.
fn oracle_matrix(t: &AffineTransform) -> [[f64; 3]; 2] {
    let th = t.rotation * std::f64::consts::PI / 180.0;
    let (a, b, c, d) = (t.zoom * th.cos(), -t.zoom * th.sin(), t.zoom * th.sin(), t.zoom * th.cos());
    [
        [a, b, t.cx + t.tx - a * t.cx - b * t.cy],
        [c, d, t.cy + t.ty - c * t.cx - d * t.cy],
    ]
}

fn mul(m: &[[f64; 3]; 2], n: &[[f64; 3]; 2]) -> [[f64; 3]; 2] {
    let mut o = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            o[r][c] = m[r][0] * n[0][c] + m[r][1] * n[1][c] + if c == 2 { m[r][2] } else { 0.0 };
        }
    }
    o
}

#[test]
fn flow_matches_per_layer_affine_oracle() {
    let cfg = GeneratorConfig {
        sprite_resolution: 32,
        ..GeneratorConfig::desk(64, 48)
    };
    let assets = cfg.assets();
    for seed in 0..5u64 {
        let spec = sample_scene(&cfg, seed, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let r = render_layers(&spec, &assets).unwrap();
        let (w, h) = (spec.width, spec.height);
        let bg = oracle_matrix(&spec.bg_transform);
        for k in 0..10 {
            let (x, y) = ((k * 37 + 5) % w, (k * 53 + 11) % h);
            let layer = r.owner[y * w + x];
            let m = if layer == 0 { bg } else { mul(&oracle_matrix(&spec.sprite_rel_transforms[layer - 1]), &bg) };
            let (xf, yf) = (x as f64, y as f64);
            let eu = m[0][0] * xf + m[0][1] * yf + m[0][2] - xf;
            let ev = m[1][0] * xf + m[1][1] * yf + m[1][2] - yf;
            let (u, v) = r.sample.flow.get(x, y);
            assert!((u - eu).abs() < 1e-9 && (v - ev).abs() < 1e-9, "seed {seed} probe {k}");
        }
    }
}

#[test]
fn generated_frames_are_photometrically_consistent() {
    let cfg = GeneratorConfig::desk(64, 48);
    let assets = cfg.assets();
    for seed in 0..6u64 {
        let spec = sample_scene(&cfg, seed, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let s = render_layers(&spec, &assets).unwrap().sample;
        let err = photometric_error(&s).unwrap();
        assert!(err < 0.02, "seed {seed}: {err}");
    }
}

#[test]
fn single_opaque_sprite_occlusion_matches_visibility_oracle() {
    let (w, h) = (96usize, 64usize);
    let assets = Assets {
        sprites: SpriteSource::Rasters(vec![vec![SpriteRaster::opaque(16, [0.9, 0.1, 0.1])]]),
        ..Assets::procedural(0, 16, 64)
    };
    let (cx, cy, side) = (40.0, 30.0, 24.0);
    let bg = AffineTransform {
        zoom: 1.02,
        rotation: 2.0,
        tx: -3.0,
        ty: 1.5,
        ..AffineTransform::identity(47.5, 31.5)
    };
    let bgm = bg.matrix();
    let pivot = bgm.apply(cx, cy);
    let rel = AffineTransform {
        zoom: 1.1,
        rotation: -8.0,
        tx: 9.0,
        ty: -4.0,
        cx: pivot.0,
        cy: pivot.1,
    };
    let spec = SceneSpec {
        seed: 0,
        width: w,
        height: h,
        size_scale: 1.0,
        background: 0,
        bg_transform: bg,
        sprites: vec![SpritePlacement {
            shape: 0,
            view: 0,
            size: side,
            x: cx,
            y: cy,
        }],
        sprite_rel_transforms: vec![rel],
    };
    let r = render_layers(&spec, &assets).unwrap();
    let sm = spec.sprite_motion(0);
    let sm_inv = sm.inverse().unwrap();
    // Signed distance to the square, in first-frame coordinates.
    let dist = |x: f64, y: f64| ((x - cx).abs() - side / 2.0).max((y - cy).abs() - side / 2.0);
    let (mut agree, mut total) = (0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let on_sprite = dist(xf, yf) <= 0.0;
            let q = if on_sprite { sm.apply(xf, yf) } else { bgm.apply(xf, yf) };
            let back = sm_inv.apply(q.0, q.1);
            // Skip pixels within 1.5 px of the sprite outline in either frame.
            if dist(xf, yf).abs() < 1.5 || dist(back.0, back.1).abs() < 1.5 {
                continue;
            }
            let out = q.0 < 0.0 || q.1 < 0.0 || q.0 > (w - 1) as f64 || q.1 > (h - 1) as f64;
            let covered = !on_sprite && dist(back.0, back.1) <= 0.0;
            let expected = out || covered;
            total += 1;
            agree += usize::from(r.sample.occlusion[y * w + x] == expected);
        }
    }
    let frac = agree as f64 / total as f64;
    assert!(frac >= 0.995, "{agree}/{total}");
}

#[test]
fn paper_frame_quarters_to_512_by_384() {
    let s = Sample {
        img1: flownet_core::image::Image::new(1024, 768),
        img2: flownet_core::image::Image::new(1024, 768),
        flow: FlowField::zeros(1024, 768),
        occlusion: vec![false; 1024 * 768],
    };
    for q in quarter(&s, false).unwrap() {
        assert_eq!((q.width(), q.height()), (512, 384));
        assert!(q.flow.u().iter().all(|&u| u == 0.0) && q.occlusion.iter().all(|&o| !o));
    }
}

#[test]
fn generated_quarters_stitch_back() {
    let cfg = GeneratorConfig::desk(32, 24);
    let spec = sample_scene(&cfg, 3, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let full = render_layers(&spec, &cfg.assets()).unwrap().sample;
    assert_eq!(stitch(&quarter(&full, false).unwrap()).unwrap(), full);
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn dataset_generation_is_deterministic() {
    let cfg = GeneratorConfig::desk(32, 24);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_dataset(&cfg, &cfg.assets(), 42, 8, a.path()).unwrap();
    generate_dataset(&cfg, &cfg.assets(), 42, 8, b.path()).unwrap();
    let (da, db) = (dir_bytes(a.path()), dir_bytes(b.path()));
    assert_eq!(da.len(), 8 * 5 + 2);
    assert_eq!(da, db);
}

#[test]
fn hundred_sample_dataset_validates() {
    let cfg = GeneratorConfig::desk(128, 96);
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(&cfg, &cfg.assets(), 5, 100, dir.path()).unwrap();
    assert_eq!(m.entries.len(), 100);
    let ds = Dataset::open(dir.path()).unwrap();
    assert_eq!(ds.len(), 100);
    for i in 0..ds.len() {
        let id = &ds.ids()[i];
        let flow = read_flo_file(dir.path().join(format!("{id}-flow.flo"))).unwrap();
        assert!(flow.is_well_formed());
        let s = ds.load(i).unwrap();
        s.check_dimensions().unwrap();
        assert_eq!((s.width(), s.height()), (128, 96));
        // 8-bit PNG quantization adds at most half a level per image.
        let err = photometric_error(&s).unwrap();
        assert!(err < 0.02, "{id}: {err}");
    }
}

#[test]
fn desk_displacement_histogram_is_unimodal_with_heavy_tail() {
    let cfg = GeneratorConfig::desk(64, 48);
    let assets = cfg.assets();
    let mut flows = Vec::new();
    for scene in 0..250u64 {
        let spec = sample_scene(&cfg, scene, &mut flownet_core::rng::substream(17, &[scene])).unwrap();
        let full = render_layers(&spec, &assets).unwrap().sample;
        flows.extend(quarter(&full, false).unwrap().into_iter().map(|s| s.flow));
    }
    assert_eq!(flows.len(), 1000);
    // Same 150-px cut-off relative to width as at paper scale.
    let max = 150.0 * cfg.pixel_scale();
    let hist = displacement_histogram(&flows, max / 50.0, max).unwrap();
    assert!((hist.bins.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let mode = hist.mode();
    assert!(mode < 5, "mode bin {mode}");
    let tail: f64 = hist.bins[10..].iter().sum();
    assert!(tail > 0.05, "tail mass {tail}");
    // Mass decreases on the whole past the mode.
    let after = |a: usize, b: usize| hist.bins[a..b].iter().sum::<f64>();
    assert!(after(mode, mode + 10) > after(mode + 10, mode + 20) && after(mode + 10, mode + 20) > after(mode + 30, 50));
}
