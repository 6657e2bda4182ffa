//! Procedural synthesis of image pairs with exact ground-truth flow.
//!
//! A scene is a periodic background plus a stack of sprites. Both frames
//! are rendered from the same [`SceneSpec`]: the background moves by one
//! affine map and every sprite by its own map composed on top of it.
//! Scenes are rendered at twice the sample size and cut into quadrants when
//! [`GeneratorConfig::quarter`] is set.

mod assets;
mod dataset;
mod dist;
mod histogram;
mod quarter;
mod render;
mod spec;

pub use assets::{chair_sprite, value_noise_texture, Assets, BackgroundSource, SpriteRaster, SpriteSource};
pub use dataset::{generate_dataset, generate_samples, Dataset, DatasetManifest, REFERENCE_COUNT, REFERENCE_SPLIT};
pub use dist::{sample_param, ClampedPowerGaussian};
pub use histogram::{displacement_histogram, Histogram};
pub use quarter::{quarter, stitch};
pub use render::{photometric_error, render_layers, render_sample, RenderedScene, Sample};
pub use spec::{sample_scene, sample_sprite_size, SceneSpec, SpritePlacement};

use crate::{CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    /// Size of each stored sample.
    pub width: usize,
    pub height: usize,
    /// Render at `2·width × 2·height` and keep all four quadrants.
    pub quarter: bool,
    /// Mark quadrant pixels whose flow target leaves the quadrant as
    /// occluded (otherwise only leaving the full frame counts).
    pub strict_quadrant_occlusion: bool,
    /// Rendered frame width at which sizes and translation ranges are given.
    pub reference_width: f64,
    pub sprite_count_min: usize,
    pub sprite_count_max: usize,
    pub size_mean: f64,
    pub size_std: f64,
    pub size_min: f64,
    pub size_max: f64,
    pub shapes: u32,
    pub views: u32,
    pub backgrounds: u32,
    pub sprite_resolution: usize,
    pub texture_size: usize,
    pub asset_seed: u64,
    pub translation_bg: ClampedPowerGaussian,
    pub rotation_bg: ClampedPowerGaussian,
    pub zoom_bg: ClampedPowerGaussian,
    pub translation_ch: ClampedPowerGaussian,
    pub rotation_ch: ClampedPowerGaussian,
    pub zoom_ch: ClampedPowerGaussian,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            width: 512,
            height: 384,
            quarter: true,
            strict_quadrant_occlusion: false,
            reference_width: 1024.0,
            sprite_count_min: 16,
            sprite_count_max: 24,
            size_mean: 200.0,
            size_std: 200.0,
            size_min: 50.0,
            size_max: 640.0,
            shapes: 809,
            views: 62,
            backgrounds: 964,
            sprite_resolution: 64,
            texture_size: 256,
            asset_seed: 0,
            translation_bg: ClampedPowerGaussian::TRANSLATION_BG,
            rotation_bg: ClampedPowerGaussian::ROTATION_BG,
            zoom_bg: ClampedPowerGaussian::ZOOM_BG,
            translation_ch: ClampedPowerGaussian::TRANSLATION_CH,
            rotation_ch: ClampedPowerGaussian::ROTATION_CH,
            zoom_ch: ClampedPowerGaussian::ZOOM_CH,
        }
    }
}

crate::kv_fields!(GeneratorConfig {
    "width" => width,
    "height" => height,
    "quarter" => quarter,
    "strict_quadrant_occlusion" => strict_quadrant_occlusion,
    "reference_width" => reference_width,
    "sprite_count_min" => sprite_count_min,
    "sprite_count_max" => sprite_count_max,
    "size_mean" => size_mean,
    "size_std" => size_std,
    "size_min" => size_min,
    "size_max" => size_max,
    "shapes" => shapes,
    "views" => views,
    "backgrounds" => backgrounds,
    "sprite_resolution" => sprite_resolution,
    "texture_size" => texture_size,
    "asset_seed" => asset_seed,
    "translation_bg.k" => translation_bg.k,
    "translation_bg.mu" => translation_bg.mu,
    "translation_bg.sigma" => translation_bg.sigma,
    "translation_bg.a" => translation_bg.a,
    "translation_bg.b" => translation_bg.b,
    "translation_bg.p" => translation_bg.p,
    "rotation_bg.k" => rotation_bg.k,
    "rotation_bg.mu" => rotation_bg.mu,
    "rotation_bg.sigma" => rotation_bg.sigma,
    "rotation_bg.a" => rotation_bg.a,
    "rotation_bg.b" => rotation_bg.b,
    "rotation_bg.p" => rotation_bg.p,
    "zoom_bg.k" => zoom_bg.k,
    "zoom_bg.mu" => zoom_bg.mu,
    "zoom_bg.sigma" => zoom_bg.sigma,
    "zoom_bg.a" => zoom_bg.a,
    "zoom_bg.b" => zoom_bg.b,
    "zoom_bg.p" => zoom_bg.p,
    "translation_ch.k" => translation_ch.k,
    "translation_ch.mu" => translation_ch.mu,
    "translation_ch.sigma" => translation_ch.sigma,
    "translation_ch.a" => translation_ch.a,
    "translation_ch.b" => translation_ch.b,
    "translation_ch.p" => translation_ch.p,
    "rotation_ch.k" => rotation_ch.k,
    "rotation_ch.mu" => rotation_ch.mu,
    "rotation_ch.sigma" => rotation_ch.sigma,
    "rotation_ch.a" => rotation_ch.a,
    "rotation_ch.b" => rotation_ch.b,
    "rotation_ch.p" => rotation_ch.p,
    "zoom_ch.k" => zoom_ch.k,
    "zoom_ch.mu" => zoom_ch.mu,
    "zoom_ch.sigma" => zoom_ch.sigma,
    "zoom_ch.a" => zoom_ch.a,
    "zoom_ch.b" => zoom_ch.b,
    "zoom_ch.p" => zoom_ch.p,
});

impl GeneratorConfig {
    /// Paper-default statistics at a different sample size.
    pub fn desk(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }

    /// Dimensions of the rendered frame before quartering.
    pub fn frame_size(&self) -> (usize, usize) {
        if self.quarter {
            (2 * self.width, 2 * self.height)
        } else {
            (self.width, self.height)
        }
    }

    /// Rendered pixels per reference pixel.
    pub fn pixel_scale(&self) -> f64 {
        self.frame_size().0 as f64 / self.reference_width
    }

    pub fn samples_per_scene(&self) -> usize {
        if self.quarter {
            4
        } else {
            1
        }
    }

    pub fn assets(&self) -> Assets {
        Assets::procedural(self.asset_seed, self.sprite_resolution, self.texture_size)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::Config(msg));
        if self.width < 2 || self.height < 2 {
            return bad(format!("sample size {}x{} too small", self.width, self.height));
        }
        if !(self.reference_width > 0.0) {
            return bad("reference_width must be positive".into());
        }
        if self.sprite_count_min > self.sprite_count_max {
            return bad("sprite_count_min exceeds sprite_count_max".into());
        }
        if !(self.size_min > 0.0 && self.size_min <= self.size_max && self.size_std >= 0.0) {
            return bad("sprite size range invalid".into());
        }
        if self.shapes == 0 || self.views == 0 || self.backgrounds == 0 {
            return bad("asset catalog must be nonempty".into());
        }
        if self.sprite_resolution < 4 || self.texture_size < 16 {
            return bad("sprite_resolution must be >= 4 and texture_size >= 16".into());
        }
        for (name, d) in [
            ("translation_bg", &self.translation_bg),
            ("rotation_bg", &self.rotation_bg),
            ("zoom_bg", &self.zoom_bg),
            ("translation_ch", &self.translation_ch),
            ("rotation_ch", &self.rotation_ch),
            ("zoom_ch", &self.zoom_ch),
        ] {
            if !d.is_valid() {
                return bad(format!("{name}: need a <= mu <= b, sigma >= 0, k >= 1, p in [0,1]"));
            }
        }
        if !(self.zoom_bg.a > 0.0 && self.zoom_ch.a > 0.0) {
            return bad("zoom lower clamps must be positive".into());
        }
        Ok(())
    }
}
