//! Training-time augmentation of image pairs.
//!
//! Both images receive a shared affine map `A1`; the second additionally
//! receives a small relative map `R`, so `A2 = A1 ∘ R`. The flow is adapted
//! exactly: a point `x` of the source first frame moving to `x + f(x)` ends
//! up at `A1(x)` and `A2(x + f(x))` in the augmented frames. Photometric
//! changes follow the geometric ones and never touch the flow.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::flow::FlowField;
use crate::geometry::{Affine2, AffineTransform};
use crate::image::Image;
use crate::rng::substream;
use crate::scenegen::Sample;
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentRanges {
    /// Translation bound as a fraction of the image width (both axes).
    pub translate: f64,
    /// Rotation bound in degrees.
    pub rotate: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Width of each relative range as a fraction of the strong range's
    /// width, centered on the neutral value.
    pub relative_fraction: f64,
    pub noise_max: f64,
    pub contrast_min: f64,
    pub contrast_max: f64,
    pub color_min: f64,
    pub color_max: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub brightness_sigma: f64,
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            translate: 0.2,
            rotate: 17.0,
            scale_min: 0.9,
            scale_max: 2.0,
            relative_fraction: 0.25,
            noise_max: 0.04,
            contrast_min: -0.8,
            contrast_max: 0.4,
            color_min: 0.5,
            color_max: 2.0,
            gamma_min: 0.7,
            gamma_max: 1.5,
            brightness_sigma: 0.2,
        }
    }
}

crate::kv_fields!(AugmentRanges {
    "translate" => translate,
    "rotate" => rotate,
    "scale_min" => scale_min,
    "scale_max" => scale_max,
    "relative_fraction" => relative_fraction,
    "noise_max" => noise_max,
    "contrast_min" => contrast_min,
    "contrast_max" => contrast_max,
    "color_min" => color_min,
    "color_max" => color_max,
    "gamma_min" => gamma_min,
    "gamma_max" => gamma_max,
    "brightness_sigma" => brightness_sigma,
});

impl AugmentRanges {
    /// Every range collapsed to its neutral value.
    pub fn none() -> Self {
        Self {
            translate: 0.0,
            rotate: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            relative_fraction: 0.0,
            noise_max: 0.0,
            contrast_min: 0.0,
            contrast_max: 0.0,
            color_min: 1.0,
            color_max: 1.0,
            gamma_min: 1.0,
            gamma_max: 1.0,
            brightness_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.translate >= 0.0
            && self.rotate >= 0.0
            && 0.0 < self.scale_min
            && self.scale_min <= 1.0
            && 1.0 <= self.scale_max
            && (0.0..=1.0).contains(&self.relative_fraction)
            && self.relative_scale().0 > 0.0
            && self.noise_max >= 0.0
            && -1.0 < self.contrast_min
            && self.contrast_min <= 0.0
            && 0.0 <= self.contrast_max
            && 0.0 < self.color_min
            && self.color_min <= 1.0
            && 1.0 <= self.color_max
            && 0.0 < self.gamma_min
            && self.gamma_min <= 1.0
            && 1.0 <= self.gamma_max
            && self.brightness_sigma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::CoreError::Config(
                "augmentation ranges must be nonnegative and contain the neutral value".into(),
            ))
        }
    }

    /// Scale range of the relative transform.
    /// Relative zoom bounds, symmetric about 1 so the relative transform
    /// adds no mean expansion.
    pub fn relative_scale(&self) -> (f64, f64) {
        let half = self.relative_fraction * (self.scale_max - self.scale_min) / 2.0;
        (1.0 - half, 1.0 + half)
    }
}

/// Color changes shared by both frames plus independent per-frame noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Photometric {
    pub color: [f64; 3],
    pub gamma: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub noise_sigma: [f64; 2],
    pub noise_seed: u64,
}

impl Photometric {
    pub fn identity() -> Self {
        Self {
            color: [1.0; 3],
            gamma: 1.0,
            brightness: 0.0,
            contrast: 0.0,
            noise_sigma: [0.0; 2],
            noise_seed: 0,
        }
    }

    /// Applies color multipliers, gamma, brightness, contrast about the
    /// image mean and Gaussian noise, in that order, then clamps to `[0, 1]`.
    pub fn apply(&self, img: &Image, frame: usize) -> Image {
        let mut data: Vec<f64> = img
            .data()
            .chunks_exact(3)
            .flat_map(|p| {
                (0..3).map(move |c| (p[c] as f64 * self.color[c]).max(0.0).powf(self.gamma) + self.brightness)
            })
            .collect();
        if self.contrast != 0.0 && !data.is_empty() {
            let mean = data.iter().sum::<f64>() / data.len() as f64;
            for p in &mut data {
                *p = (*p - mean) * (1.0 + self.contrast) + mean;
            }
        }
        let sigma = self.noise_sigma[frame];
        if sigma > 0.0 {
            let mut rng = substream(self.noise_seed, &[frame as u64]);
            for p in &mut data {
                *p += sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let out = data.iter().map(|&p| p.clamp(0.0, 1.0) as f32).collect();
        Image::from_vec(img.width(), img.height(), out).expect("same size")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentSpec {
    pub a1: AffineTransform,
    pub rel: AffineTransform,
    pub photometric: Photometric,
}

impl AugmentSpec {
    pub fn identity(width: usize, height: usize) -> Self {
        let (cx, cy) = center(width, height);
        Self {
            a1: AffineTransform::identity(cx, cy),
            rel: AffineTransform::identity(cx, cy),
            photometric: Photometric::identity(),
        }
    }

    pub fn a1_matrix(&self) -> Affine2 {
        self.a1.matrix()
    }

    /// `A1 ∘ R`.
    pub fn a2_matrix(&self) -> Affine2 {
        self.a1.matrix().compose(&self.rel.matrix())
    }

    /// Whether every sampled parameter lies in `ranges` for an image of the
    /// given width.
    pub fn within(&self, ranges: &AugmentRanges, width: usize) -> bool {
        let t = ranges.translate * width as f64;
        let f = ranges.relative_fraction;
        let (rs0, rs1) = ranges.relative_scale();
        let p = &self.photometric;
        let inr = |v: f64, lo: f64, hi: f64| lo <= v && v <= hi;
        inr(self.a1.tx, -t, t)
            && inr(self.a1.ty, -t, t)
            && inr(self.a1.rotation, -ranges.rotate, ranges.rotate)
            && inr(self.a1.zoom, ranges.scale_min, ranges.scale_max)
            && inr(self.rel.tx, -f * t, f * t)
            && inr(self.rel.ty, -f * t, f * t)
            && inr(self.rel.rotation, -f * ranges.rotate, f * ranges.rotate)
            && inr(self.rel.zoom, rs0, rs1)
            && p.color.iter().all(|&c| inr(c, ranges.color_min, ranges.color_max))
            && inr(p.gamma, ranges.gamma_min, ranges.gamma_max)
            && inr(p.contrast, ranges.contrast_min, ranges.contrast_max)
            && p.noise_sigma.iter().all(|&s| inr(s, 0.0, ranges.noise_max))
    }
}

fn center(width: usize, height: usize) -> (f64, f64) {
    ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Draws one augmentation for a `width × height` pair.
pub fn sample_augmentation<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &AugmentRanges,
    width: usize,
    height: usize,
) -> AugmentSpec {
    let (cx, cy) = center(width, height);
    let t = ranges.translate * width as f64;
    let f = ranges.relative_fraction;
    let a1 = AffineTransform {
        zoom: uniform(rng, ranges.scale_min, ranges.scale_max),
        rotation: uniform(rng, -ranges.rotate, ranges.rotate),
        tx: uniform(rng, -t, t),
        ty: uniform(rng, -t, t),
        cx,
        cy,
    };
    let (rs0, rs1) = ranges.relative_scale();
    let rel = AffineTransform {
        zoom: uniform(rng, rs0, rs1),
        rotation: uniform(rng, -f * ranges.rotate, f * ranges.rotate),
        tx: uniform(rng, -f * t, f * t),
        ty: uniform(rng, -f * t, f * t),
        cx,
        cy,
    };
    let color = [
        uniform(rng, ranges.color_min, ranges.color_max),
        uniform(rng, ranges.color_min, ranges.color_max),
        uniform(rng, ranges.color_min, ranges.color_max),
    ];
    let gamma = uniform(rng, ranges.gamma_min, ranges.gamma_max);
    let brightness = ranges.brightness_sigma * rng.sample::<f64, _>(StandardNormal);
    let contrast = uniform(rng, ranges.contrast_min, ranges.contrast_max);
    let noise_sigma = [uniform(rng, 0.0, ranges.noise_max), uniform(rng, 0.0, ranges.noise_max)];
    AugmentSpec {
        a1,
        rel,
        photometric: Photometric {
            color,
            gamma,
            brightness,
            contrast,
            noise_sigma,
            noise_seed: rng.gen(),
        },
    }
}

/// Warps images, flow and occlusion; photometric changes are not applied.
/// Output pixels whose first-frame preimage leaves the source frame, or
/// whose flow cannot be interpolated, are invalid in the flow mask.
pub fn apply_geometric(sample: &Sample, spec: &AugmentSpec) -> Result<Sample> {
    warp_sample(sample, &spec.a1_matrix(), &spec.a2_matrix())
}

/// [`apply_geometric`] for arbitrary invertible maps of the two frames.
pub fn warp_sample(sample: &Sample, a1: &Affine2, a2: &Affine2) -> Result<Sample> {
    sample.check_dimensions()?;
    let (w, h) = (sample.width(), sample.height());
    let inv1 = a1.inverse()?;
    let inv2 = a2.inverse()?;
    let warp = |img: &Image, inv: &Affine2| {
        Image::from_fn(w, h, |x, y| {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            img.sample(sx, sy).unwrap_or([0.0; 3])
        })
    };
    let img1 = warp(&sample.img1, &inv1);
    let img2 = warp(&sample.img2, &inv2);
    let mut flow = FlowField::zeros(w, h);
    let mut occlusion = vec![true; w * h];
    for y in 0..h {
        for x in 0..w {
            let (yx, yy) = (x as f64, y as f64);
            let (sx, sy) = inv1.apply(yx, yy);
            match sample.flow.sample(sx, sy) {
                Some((u, v)) => {
                    let (qx, qy) = a2.apply(sx + u, sy + v);
                    flow.set(x, y, qx - yx, qy - yy);
                    let (nx, ny) = (sx.round() as usize, sy.round() as usize);
                    occlusion[y * w + x] = sample.occlusion[ny * w + nx];
                }
                None => flow.invalidate(x, y),
            }
        }
    }
    Ok(Sample {
        img1,
        img2,
        flow,
        occlusion,
    })
}

/// Geometric warp followed by photometric changes.
pub fn apply_augmentation(sample: &Sample, spec: &AugmentSpec) -> Result<Sample> {
    let mut out = apply_geometric(sample, spec)?;
    if spec.photometric != Photometric::identity() {
        out.img1 = spec.photometric.apply(&out.img1, 0);
        out.img2 = spec.photometric.apply(&out.img2, 1);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize) -> Sample {
        let img = Image::from_fn(w, h, |x, y| {
            let (xf, yf) = (x as f32, y as f32);
            [(xf * 0.3).sin() * 0.5 + 0.5, (yf * 0.2).cos() * 0.5 + 0.5, ((xf + yf) * 0.1).sin() * 0.5 + 0.5]
        });
        Sample {
            img1: img.clone(),
            img2: img,
            flow: FlowField::zeros(w, h),
            occlusion: vec![false; w * h],
        }
    }

    #[test]
    fn identity_spec_changes_nothing() {
        let s = textured(20, 14);
        let out = apply_augmentation(&s, &AugmentSpec::identity(20, 14)).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn shared_translation_keeps_zero_flow() {
        let s = textured(20, 14);
        let mut spec = AugmentSpec::identity(20, 14);
        spec.a1.tx = 3.0;
        spec.a1.ty = -1.0;
        let out = apply_geometric(&s, &spec).unwrap();
        for i in 0..out.flow.len() {
            if out.flow.valid()[i] {
                assert!(out.flow.u()[i].abs() < 1e-12 && out.flow.v()[i].abs() < 1e-12);
            }
        }
        // Columns shifted in from outside the source are invalid.
        assert!(!out.flow.is_valid(0, 5) && out.flow.is_valid(10, 5));
    }

    #[test]
    fn collapsed_ranges_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = sample_augmentation(&mut rng, &AugmentRanges::none(), 16, 12);
        let id = AugmentSpec::identity(16, 12);
        assert_eq!(spec.a1, id.a1);
        assert_eq!(spec.rel, id.rel);
        assert_eq!(Photometric { noise_seed: 0, ..spec.photometric }, id.photometric);
    }

    #[test]
    fn relative_scale_is_centered_on_one() {
        let (lo, hi) = AugmentRanges::default().relative_scale();
        assert!((lo - 0.8625).abs() < 1e-12 && (hi - 1.1375).abs() < 1e-12);
    }

    #[test]
    fn contrast_pivots_on_the_mean() {
        let img = Image::from_vec(2, 1, vec![0.2, 0.2, 0.2, 0.6, 0.6, 0.6]).unwrap();
        let p = Photometric {
            contrast: -0.5,
            ..Photometric::identity()
        };
        let out = p.apply(&img, 0);
        assert!((out.get(0, 0)[0] - 0.3).abs() < 1e-6 && (out.get(1, 0)[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn photometric_leaves_flow_untouched() {
        let mut s = textured(16, 12);
        s.flow = FlowField::from_fn(16, 12, |x, y| (x as f64 * 0.1, -(y as f64) * 0.2));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut spec = sample_augmentation(&mut rng, &AugmentRanges::default(), 16, 12);
        let geo = apply_geometric(&s, &spec).unwrap();
        let full = apply_augmentation(&s, &spec).unwrap();
        assert_eq!(geo.flow, full.flow);
        assert_ne!(geo.img1, full.img1);
        spec.photometric.noise_seed ^= 1;
        assert_eq!(apply_augmentation(&s, &spec).unwrap().flow, geo.flow);
    }
}
