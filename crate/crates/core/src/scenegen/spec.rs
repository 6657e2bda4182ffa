//! Scene parameters and their sampling.

use rand::Rng;
use rand_distr::StandardNormal;

use super::dist::sample_param;
use super::GeneratorConfig;
use crate::geometry::{Affine2, AffineTransform};
use crate::{CoreError, Result};

/// One foreground sprite in the first frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpritePlacement {
    pub shape: u32,
    pub view: u32,
    /// Side length in reference pixels (at `reference_width`); the rendered
    /// side is `size · SceneSpec::size_scale`.
    pub size: f64,
    /// Center in image pixels.
    pub x: f64,
    pub y: f64,
}

/// Everything needed to render one sample. Sprites are listed bottom to top.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Rendered pixels per reference pixel for sprite sizes.
    pub size_scale: f64,
    pub background: u64,
    pub bg_transform: AffineTransform,
    pub sprites: Vec<SpritePlacement>,
    /// Motion of each sprite relative to the background, pivoting at the
    /// sprite center after background motion.
    pub sprite_rel_transforms: Vec<AffineTransform>,
}

impl SceneSpec {
    /// Motion of the background.
    pub fn background_motion(&self) -> Affine2 {
        self.bg_transform.matrix()
    }

    /// Motion of sprite `i`: `T_rel ∘ T_bg`.
    pub fn sprite_motion(&self, i: usize) -> Affine2 {
        self.sprite_rel_transforms[i].matrix().compose(&self.background_motion())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "seed={}\nwidth={}\nheight={}\nsize_scale={}\nbackground={}\nbg_transform={}\nsprite_count={}\n",
            self.seed,
            self.width,
            self.height,
            self.size_scale,
            self.background,
            self.bg_transform.to_text(),
            self.sprites.len()
        );
        for (i, (p, r)) in self.sprites.iter().zip(&self.sprite_rel_transforms).enumerate() {
            s.push_str(&format!("sprite.{i}={} {} {} {} {}\n", p.shape, p.view, p.size, p.x, p.y));
            s.push_str(&format!("rel.{i}={}\n", r.to_text()));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = crate::kvconfig::KvConfig::parse(text)?;
        let get = |k: &str| kv.get(k).ok_or_else(|| CoreError::Format(format!("scene spec missing {k}")));
        let num = |k: &str| -> Result<f64> { crate::kvconfig::parse_value(k, get(k)?) };
        let count: usize = crate::kvconfig::parse_value("sprite_count", get("sprite_count")?)?;
        let mut sprites = Vec::with_capacity(count);
        let mut rel = Vec::with_capacity(count);
        for i in 0..count {
            let key = format!("sprite.{i}");
            let parts: Vec<&str> = get(&key)?.split_whitespace().collect();
            let [shape, view, size, x, y] = parts[..] else {
                return Err(CoreError::Format(format!("{key}: expected 5 values")));
            };
            sprites.push(SpritePlacement {
                shape: crate::kvconfig::parse_value(&key, shape)?,
                view: crate::kvconfig::parse_value(&key, view)?,
                size: crate::kvconfig::parse_value(&key, size)?,
                x: crate::kvconfig::parse_value(&key, x)?,
                y: crate::kvconfig::parse_value(&key, y)?,
            });
            rel.push(AffineTransform::from_text(get(&format!("rel.{i}"))?)?);
        }
        Ok(Self {
            seed: crate::kvconfig::parse_value("seed", get("seed")?)?,
            width: crate::kvconfig::parse_value("width", get("width")?)?,
            height: crate::kvconfig::parse_value("height", get("height")?)?,
            size_scale: num("size_scale")?,
            background: crate::kvconfig::parse_value("background", get("background")?)?,
            bg_transform: AffineTransform::from_text(get("bg_transform")?)?,
            sprites,
            sprite_rel_transforms: rel,
        })
    }
}

/// Sprite side length in reference pixels: `N(mean, std)` clamped.
pub fn sample_sprite_size<R: Rng + ?Sized>(config: &GeneratorConfig, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (config.size_mean + config.size_std * z).clamp(config.size_min, config.size_max)
}

/// Draws a complete scene. All randomness comes from `rng`; `seed` is only
/// recorded in the spec.
pub fn sample_scene<R: Rng + ?Sized>(config: &GeneratorConfig, seed: u64, rng: &mut R) -> Result<SceneSpec> {
    config.validate()?;
    let (w, h) = config.frame_size();
    let scale = config.pixel_scale();
    let count = rng.gen_range(config.sprite_count_min..=config.sprite_count_max);
    let sprites: Vec<SpritePlacement> = (0..count)
        .map(|_| SpritePlacement {
            shape: rng.gen_range(0..config.shapes),
            view: rng.gen_range(0..config.views),
            size: sample_sprite_size(config, rng),
            x: rng.gen::<f64>() * w as f64,
            y: rng.gen::<f64>() * h as f64,
        })
        .collect();
    let background = rng.gen_range(0..config.backgrounds);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let bg_transform = AffineTransform {
        zoom: sample_param(&config.zoom_bg, rng),
        rotation: sample_param(&config.rotation_bg, rng),
        tx: sample_param(&config.translation_bg, rng) * scale,
        ty: sample_param(&config.translation_bg, rng) * scale,
        cx,
        cy,
    };
    let bg = bg_transform.matrix();
    let sprite_rel_transforms = sprites
        .iter()
        .map(|s| {
            let (px, py) = bg.apply(s.x, s.y);
            AffineTransform {
                zoom: sample_param(&config.zoom_ch, rng),
                rotation: sample_param(&config.rotation_ch, rng),
                tx: sample_param(&config.translation_ch, rng) * scale,
                ty: sample_param(&config.translation_ch, rng) * scale,
                cx: px,
                cy: py,
            }
        })
        .collect();
    Ok(SceneSpec {
        seed,
        width: w,
        height: h,
        size_scale: scale,
        background: background as u64,
        bg_transform,
        sprites,
        sprite_rel_transforms,
    })
}
