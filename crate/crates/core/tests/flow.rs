use flownet_core::flow::{
    compute_metrics, flow_to_color, read_flo, write_flo, MetricsReport, UNKNOWN_FLOW_THRESHOLD,
};
use flownet_core::FlowField;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FlowField {
    FlowField::from_fn(w, h, |_, _| {
        // f32-representable values so the round trip can be bit-exact.
        (rng.gen_range(-300.0f32..300.0) as f64, rng.gen_range(-300.0f32..300.0) as f64)
    })
}

#[test]
fn hundred_random_fields_round_trip_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let mut f = random_field(&mut rng, w, h);
        for _ in 0..rng.gen_range(0..4) {
            f.invalidate(rng.gen_range(0..w), rng.gen_range(0..h));
        }
        let mut bytes = Vec::new();
        write_flo(&mut bytes, &f).unwrap();
        assert_eq!(bytes.len(), 12 + 8 * w * h);
        let g = read_flo(bytes.as_slice()).unwrap();
        assert_eq!(g, f);
        let bits = |f: &FlowField| f.u().iter().chain(f.v()).map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&g), bits(&f));
    }
}

#[test]
fn hand_written_fixture() {
    // 2x2 field: (1.5, -2), (0, 0.25) / (1e10, 7), (-0.5, 3)
    let mut bytes = b"PIEH".to_vec();
    bytes.extend(2i32.to_le_bytes());
    bytes.extend(2i32.to_le_bytes());
    for v in [1.5f32, -2.0, 0.0, 0.25, 1e10, 7.0, -0.5, 3.0] {
        bytes.extend(v.to_le_bytes());
    }
    let f = read_flo(bytes.as_slice()).unwrap();
    assert_eq!((f.width(), f.height()), (2, 2));
    assert_eq!(f.get(0, 0), (1.5, -2.0));
    assert_eq!(f.get(1, 0), (0.0, 0.25));
    assert_eq!(f.get(1, 1), (-0.5, 3.0));
    assert!(!f.is_valid(0, 1));
    assert_eq!(f.valid_count(), 3);
    assert!(1e10 > UNKNOWN_FLOW_THRESHOLD);
}

fn loop_oracle(p: &FlowField, g: &FlowField) -> (f64, f64, Option<f64>) {
    let (mut epe, mut aae, mut n) = (0.0, 0.0, 0.0);
    let (mut s40, mut n40) = (0.0, 0.0);
    for y in 0..g.height() {
        for x in 0..g.width() {
            if !g.is_valid(x, y) {
                continue;
            }
            let (pu, pv) = p.get(x, y);
            let (gu, gv) = g.get(x, y);
            let e = ((pu - gu).powi(2) + (pv - gv).powi(2)).sqrt();
            let dot = (pu * gu + pv * gv + 1.0) / ((pu * pu + pv * pv + 1.0).sqrt() * (gu * gu + gv * gv + 1.0).sqrt());
            epe += e;
            aae += dot.clamp(-1.0, 1.0).acos().to_degrees();
            n += 1.0;
            if (gu * gu + gv * gv).sqrt() >= 40.0 {
                s40 += e;
                n40 += 1.0;
            }
        }
    }
    (epe / n, aae / n, (n40 > 0.0).then(|| s40 / n40))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn metrics_match_scalar_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let p = random_field(&mut rng, 8, 8);
        let mut g = random_field(&mut rng, 8, 8).scaled(0.2);
        g.invalidate(3, 3);
        let MetricsReport {
            epe,
            aae,
            epe_s40plus,
            n_evaluated,
        } = compute_metrics(&p, &g).unwrap();
        let (oe, oa, o40) = loop_oracle(&p, &g);
        assert_eq!(n_evaluated, 63);
        assert!(rel(epe, oe) < 1e-12 && rel(aae, oa) < 1e-12);
        match (epe_s40plus, o40) {
            (Some(a), Some(b)) => assert!(rel(a, b) < 1e-12),
            (None, None) => {}
            other => panic!("s40 mismatch {other:?}"),
        }
        assert!((0.0..=180.0).contains(&aae));
    }
}

#[test]
fn zero_valid_pixels_is_an_error() {
    let mut g = FlowField::zeros(2, 1);
    g.invalidate(0, 0);
    g.invalidate(1, 0);
    assert!(compute_metrics(&FlowField::zeros(2, 1), &g).is_err());
}

#[test]
fn white_means_no_motion() {
    let img = flow_to_color(&FlowField::zeros(5, 4), None);
    assert!(img.pixels().all(|p| p.0 == [255, 255, 255]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn auto_normalized_color_ignores_uniform_scale(seed in any::<u64>(), s in 0.01f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(&mut rng, 6, 5);
        // Power-of-two scales commute exactly with the normalization.
        let k = 2f64.powi(s.log2().round() as i32);
        prop_assert_eq!(flow_to_color(&f, None), flow_to_color(&f.scaled(k), None));
    }

    #[test]
    fn metrics_are_permutation_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_field(&mut rng, 7, 3);
        let g = random_field(&mut rng, 7, 3);
        let perm = |f: &FlowField| FlowField::from_fn(7, 3, |x, y| f.get(6 - x, 2 - y));
        let a = compute_metrics(&p, &g).unwrap();
        let b = compute_metrics(&perm(&p), &perm(&g)).unwrap();
        prop_assert!(rel(a.epe, b.epe) < 1e-12 && rel(a.aae, b.aae) < 1e-12);
    }

    #[test]
    fn epe_zero_iff_equal(seed in any::<u64>(), bump in 1e-6f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_field(&mut rng, 4, 4);
        prop_assert_eq!(compute_metrics(&g, &g).unwrap().epe, 0.0);
        let mut p = g.clone();
        let (u, v) = p.get(2, 1);
        p.set(2, 1, u + bump, v);
        prop_assert!(compute_metrics(&p, &g).unwrap().epe > 0.0);
    }
}
