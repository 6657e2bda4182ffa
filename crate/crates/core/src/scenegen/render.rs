//! Two-frame rendering with exact flow and occlusion.

use super::assets::{Assets, SpriteRaster};
use super::spec::SceneSpec;
use crate::flow::FlowField;
use crate::geometry::Affine2;
use crate::image::Image;
use crate::{CoreError, Result};

/// Alpha at which a sprite takes ownership of a pixel.
const OWNERSHIP_ALPHA: f32 = 0.5;

/// An image pair with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub img1: Image,
    pub img2: Image,
    /// Flow from `img1` to `img2`.
    pub flow: FlowField,
    /// True where a pixel of `img1` is not visible in `img2`.
    pub occlusion: Vec<bool>,
}

impl Sample {
    pub fn width(&self) -> usize {
        self.img1.width()
    }

    pub fn height(&self) -> usize {
        self.img1.height()
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let (w, h) = (self.width(), self.height());
        for (ow, oh) in [
            (self.img2.width(), self.img2.height()),
            (self.flow.width(), self.flow.height()),
        ] {
            if (ow, oh) != (w, h) {
                return Err(CoreError::DimensionMismatch(w, h, ow, oh));
            }
        }
        if self.occlusion.len() != w * h {
            return Err(CoreError::Length {
                expected: w * h,
                got: self.occlusion.len(),
            });
        }
        Ok(())
    }
}

/// A rendered sample plus the layer index owning each first-frame pixel
/// (0 = background, `i + 1` = sprite `i`).
#[derive(Clone, Debug)]
pub struct RenderedScene {
    pub sample: Sample,
    pub owner: Vec<usize>,
}

struct SpriteLayer {
    raster: SpriteRaster,
    cx: f64,
    cy: f64,
    side: f64,
    motion: Affine2,
    inverse: Affine2,
    /// Pixel bounding boxes `(x0, y0, x1, y1)` in frame 1 and frame 2.
    bbox: [(f64, f64, f64, f64); 2],
}

impl SpriteLayer {
    /// Premultiplied RGBA at a frame position, given the first-frame
    /// position it maps back to.
    fn at_source(&self, p: (f64, f64)) -> [f32; 4] {
        let r = self.raster.size() as f64;
        let u = ((p.0 - self.cx) / self.side + 0.5) * r - 0.5;
        let v = ((p.1 - self.cy) / self.side + 0.5) * r - 0.5;
        self.raster.sample(u, v)
    }

    fn at(&self, frame: usize, x: f64, y: f64) -> [f32; 4] {
        let (x0, y0, x1, y1) = self.bbox[frame];
        if x < x0 || x > x1 || y < y0 || y > y1 {
            return [0.0; 4];
        }
        if frame == 0 {
            self.at_source((x, y))
        } else {
            self.at_source(self.inverse.apply(x, y))
        }
    }
}

struct Scene {
    width: usize,
    height: usize,
    texture: Image,
    texture_scale: f64,
    bg_motion: Affine2,
    bg_inverse: Affine2,
    sprites: Vec<SpriteLayer>,
}

impl Scene {
    fn build(spec: &SceneSpec, assets: &Assets) -> Result<Self> {
        let texture = assets.background(spec.background)?;
        let bg_motion = spec.background_motion();
        let mut sprites = Vec::with_capacity(spec.sprites.len());
        for (i, p) in spec.sprites.iter().enumerate() {
            let raster = assets.sprite(p.shape, p.view)?;
            let side = p.size * spec.size_scale;
            let motion = spec.sprite_motion(i);
            let h = side / 2.0 + 1.0;
            let corners = [(p.x - h, p.y - h), (p.x + h, p.y - h), (p.x - h, p.y + h), (p.x + h, p.y + h)];
            let moved = corners.map(|(x, y)| motion.apply(x, y));
            let bounds = |pts: &[(f64, f64)]| {
                pts.iter().fold((f64::MAX, f64::MAX, f64::MIN, f64::MIN), |b, &(x, y)| {
                    (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y))
                })
            };
            sprites.push(SpriteLayer {
                raster,
                cx: p.x,
                cy: p.y,
                side,
                motion,
                inverse: motion.inverse()?,
                bbox: [bounds(&corners), bounds(&moved)],
            });
        }
        Ok(Self {
            width: spec.width,
            height: spec.height,
            texture_scale: texture.width() as f64 / spec.width as f64,
            texture,
            bg_inverse: bg_motion.inverse()?,
            bg_motion,
            sprites,
        })
    }

    fn background(&self, frame: usize, x: f64, y: f64) -> [f32; 3] {
        let (sx, sy) = if frame == 0 { (x, y) } else { self.bg_inverse.apply(x, y) };
        self.texture.sample_wrapped(sx * self.texture_scale, sy * self.texture_scale)
    }

    fn color(&self, frame: usize, x: f64, y: f64) -> [f32; 3] {
        let mut c = self.background(frame, x, y);
        for s in &self.sprites {
            let px = s.at(frame, x, y);
            if px[3] > 0.0 {
                for ch in 0..3 {
                    c[ch] = px[ch] + (1.0 - px[3]) * c[ch];
                }
            }
        }
        c
    }

    fn owner(&self, frame: usize, x: f64, y: f64) -> usize {
        self.sprites
            .iter()
            .rposition(|s| s.at(frame, x, y)[3] >= OWNERSHIP_ALPHA)
            .map_or(0, |i| i + 1)
    }

    fn motion(&self, layer: usize) -> &Affine2 {
        if layer == 0 {
            &self.bg_motion
        } else {
            &self.sprites[layer - 1].motion
        }
    }
}

/// Renders both frames, flow, occlusion and the first-frame owner map.
pub fn render_layers(spec: &SceneSpec, assets: &Assets) -> Result<RenderedScene> {
    let scene = Scene::build(spec, assets)?;
    let (w, h) = (scene.width, scene.height);
    let img1 = Image::from_fn(w, h, |x, y| scene.color(0, x as f64, y as f64));
    let img2 = Image::from_fn(w, h, |x, y| scene.color(1, x as f64, y as f64));
    let mut owner = Vec::with_capacity(w * h);
    let mut occlusion = Vec::with_capacity(w * h);
    let flow = FlowField::from_fn(w, h, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let layer = scene.owner(0, xf, yf);
        let (qx, qy) = scene.motion(layer).apply(xf, yf);
        let inside = qx >= 0.0 && qy >= 0.0 && qx <= (w - 1) as f64 && qy <= (h - 1) as f64;
        occlusion.push(!inside || scene.owner(1, qx, qy) != layer);
        owner.push(layer);
        (qx - xf, qy - yf)
    });
    Ok(RenderedScene {
        sample: Sample {
            img1,
            img2,
            flow,
            occlusion,
        },
        owner,
    })
}

pub fn render_sample(spec: &SceneSpec, assets: &Assets) -> Result<Sample> {
    Ok(render_layers(spec, assets)?.sample)
}

/// Mean absolute difference between `img1(x)` and bilinear `img2(x + flow(x))`
/// over non-occluded, valid pixels whose target lies inside `img2`.
/// `None` if no pixel qualifies.
pub fn photometric_error(sample: &Sample) -> Option<f64> {
    let (w, h) = (sample.width(), sample.height());
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if sample.occlusion[i] || !sample.flow.valid()[i] {
                continue;
            }
            let (u, v) = sample.flow.get(x, y);
            if let Some(p2) = sample.img2.sample(x as f64 + u, y as f64 + v) {
                let p1 = sample.img1.get(x, y);
                sum += (0..3).map(|c| (p1[c] - p2[c]).abs() as f64).sum::<f64>() / 3.0;
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}
