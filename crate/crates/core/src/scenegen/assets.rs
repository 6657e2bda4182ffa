//! Sprite and background sources.
//!
//! The default catalog is procedural: each sprite is a small chair-like
//! assembly of boxes (seat, legs, back, optional arm rests) seen from one of
//! `views` viewpoints (azimuth × two elevations) and rasterized with
//! supersampled coverage; each background is a periodic multi-octave value
//! noise tile. Both are pure functions of `(asset_seed, id)`. A directory
//! loader accepts real images instead.

use std::path::Path;

use rand::Rng;

use crate::image::Image;
use crate::rng::substream;
use crate::{CoreError, Result};

/// Square premultiplied-RGBA raster.
#[derive(Clone, Debug, PartialEq)]
pub struct SpriteRaster {
    size: usize,
    rgba: Vec<[f32; 4]>,
}

impl SpriteRaster {
    pub fn new(size: usize, rgba: Vec<[f32; 4]>) -> Result<Self> {
        if rgba.len() != size * size || size == 0 {
            return Err(CoreError::Invalid(format!("sprite raster of {} texels for side {size}", rgba.len())));
        }
        Ok(Self { size, rgba })
    }

    /// Fully opaque square of one color.
    pub fn opaque(size: usize, color: [f32; 3]) -> Self {
        Self {
            size,
            rgba: vec![[color[0], color[1], color[2], 1.0]; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn texel(&self, x: usize, y: usize) -> [f32; 4] {
        self.rgba[y * self.size + x]
    }

    /// Bilinear sample in texel coordinates; texels outside the raster are
    /// transparent black.
    pub fn sample(&self, x: f64, y: f64) -> [f32; 4] {
        let n = self.size as isize;
        let (fx0, fy0) = (x.floor(), y.floor());
        if fx0 < -1.0 || fy0 < -1.0 || fx0 > n as f64 || fy0 > n as f64 {
            return [0.0; 4];
        }
        let (x0, y0) = (fx0 as isize, fy0 as isize);
        let (fx, fy) = ((x - fx0) as f32, (y - fy0) as f32);
        let get = |xx: isize, yy: isize| {
            if xx < 0 || yy < 0 || xx >= n || yy >= n {
                [0.0; 4]
            } else {
                self.rgba[(yy * n + xx) as usize]
            }
        };
        let (a, b, c, d) = (get(x0, y0), get(x0 + 1, y0), get(x0, y0 + 1), get(x0 + 1, y0 + 1));
        let mut out = [0.0; 4];
        for ch in 0..4 {
            let top = a[ch] + fx * (b[ch] - a[ch]);
            let bottom = c[ch] + fx * (d[ch] - c[ch]);
            out[ch] = top + fy * (bottom - top);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub enum SpriteSource {
    Procedural { seed: u64, resolution: usize },
    /// Explicit rasters indexed `[shape][view]`.
    Rasters(Vec<Vec<SpriteRaster>>),
}

#[derive(Clone, Debug)]
pub enum BackgroundSource {
    Procedural { seed: u64, tile: usize },
    Images(Vec<Image>),
}

#[derive(Clone, Debug)]
pub struct Assets {
    pub sprites: SpriteSource,
    pub backgrounds: BackgroundSource,
}

impl Assets {
    pub fn procedural(seed: u64, sprite_resolution: usize, texture_size: usize) -> Self {
        Self {
            sprites: SpriteSource::Procedural {
                seed,
                resolution: sprite_resolution,
            },
            backgrounds: BackgroundSource::Procedural {
                seed,
                tile: texture_size,
            },
        }
    }

    /// Loads `dir/sprites/*.png` (RGBA, one view per file, square) and
    /// `dir/backgrounds/*.png`, each sorted by file name. A missing
    /// subdirectory falls back to the procedural source.
    pub fn load_dir(dir: impl AsRef<Path>, fallback: &Assets) -> Result<Self> {
        let dir = dir.as_ref();
        let list = |sub: &str| -> Result<Vec<std::path::PathBuf>> {
            let p = dir.join(sub);
            if !p.is_dir() {
                return Ok(Vec::new());
            }
            let mut v: Vec<_> = std::fs::read_dir(&p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
                .collect();
            v.sort();
            Ok(v)
        };
        let sprite_files = list("sprites")?;
        let sprites = if sprite_files.is_empty() {
            fallback.sprites.clone()
        } else {
            let mut rasters = Vec::new();
            for f in sprite_files {
                let img = image::open(&f)?.to_rgba8();
                if img.width() != img.height() {
                    return Err(CoreError::Invalid(format!("{}: sprite must be square", f.display())));
                }
                let rgba = img
                    .pixels()
                    .map(|p| {
                        let a = p.0[3] as f32 / 255.0;
                        [p.0[0] as f32 / 255.0 * a, p.0[1] as f32 / 255.0 * a, p.0[2] as f32 / 255.0 * a, a]
                    })
                    .collect();
                rasters.push(vec![SpriteRaster::new(img.width() as usize, rgba)?]);
            }
            SpriteSource::Rasters(rasters)
        };
        let bg_files = list("backgrounds")?;
        let backgrounds = if bg_files.is_empty() {
            fallback.backgrounds.clone()
        } else {
            BackgroundSource::Images(bg_files.iter().map(Image::load).collect::<Result<_>>()?)
        };
        Ok(Self { sprites, backgrounds })
    }

    pub fn sprite(&self, shape: u32, view: u32) -> Result<SpriteRaster> {
        match &self.sprites {
            SpriteSource::Procedural { seed, resolution } => Ok(chair_sprite(*seed, shape, view, *resolution)),
            SpriteSource::Rasters(r) => r
                .get(shape as usize % r.len().max(1))
                .and_then(|views| views.get(view as usize % views.len().max(1)))
                .cloned()
                .ok_or_else(|| CoreError::MissingAsset(format!("sprite {shape}/{view}"))),
        }
    }

    pub fn background(&self, id: u64) -> Result<Image> {
        match &self.backgrounds {
            BackgroundSource::Procedural { seed, tile } => Ok(value_noise_texture(*seed, id, *tile)),
            BackgroundSource::Images(v) => v
                .get((id % v.len().max(1) as u64) as usize)
                .cloned()
                .ok_or_else(|| CoreError::MissingAsset(format!("background {id}"))),
        }
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// One periodic value-noise plane: random lattice values every `period`
/// texels, interpolated with a cubic fade.
fn noise_plane(rng: &mut impl Rng, tile: usize, period: usize) -> Vec<f64> {
    let period = period.max(2);
    let cells = tile.div_ceil(period);
    let lattice: Vec<f64> = (0..cells * cells).map(|_| rng.gen::<f64>()).collect();
    let mut plane = vec![0.0; tile * tile];
    for y in 0..tile {
        let gy = y as f64 / period as f64;
        let (cy0, ty) = (gy.floor() as usize % cells, smoothstep(gy.fract()));
        let cy1 = (cy0 + 1) % cells;
        for x in 0..tile {
            let gx = x as f64 / period as f64;
            let (cx0, tx) = (gx.floor() as usize % cells, smoothstep(gx.fract()));
            let cx1 = (cx0 + 1) % cells;
            let top = lattice[cy0 * cells + cx0] * (1.0 - tx) + lattice[cy0 * cells + cx1] * tx;
            let bottom = lattice[cy1 * cells + cx0] * (1.0 - tx) + lattice[cy1 * cells + cx1] * tx;
            plane[y * tile + x] = top * (1.0 - ty) + bottom * ty;
        }
    }
    plane
}

/// Periodic value noise summed over three octaves.
pub fn value_noise_texture(seed: u64, id: u64, tile: usize) -> Image {
    let mut rng = substream(seed, &[0xb6, id]);
    let octaves: [(usize, f64); 3] = [(tile / 4, 1.0), (tile / 8, 0.5), (tile / 16, 0.3)];
    let mut planes = vec![vec![0.0f64; tile * tile]; 3];
    let mut total = 0.0;
    for (period, amp) in octaves {
        total += amp;
        for plane in planes.iter_mut() {
            for (acc, v) in plane.iter_mut().zip(noise_plane(&mut rng, tile, period)) {
                *acc += amp * v;
            }
        }
    }
    // Random per-texture contrast and tint so backgrounds differ in palette.
    let gain: [f64; 3] = [rng.gen_range(0.6..1.0), rng.gen_range(0.6..1.0), rng.gen_range(0.6..1.0)];
    let offset: [f64; 3] = [rng.gen_range(0.0..0.2), rng.gen_range(0.0..0.2), rng.gen_range(0.0..0.2)];
    Image::from_fn(tile, tile, |x, y| {
        let mut px = [0.0f32; 3];
        for ch in 0..3 {
            px[ch] = (offset[ch] + gain[ch] * planes[ch][y * tile + x] / total).clamp(0.0, 1.0) as f32;
        }
        px
    })
}

/// Axis-aligned box in chair space (`x` right, `y` up, `z` toward the back).
#[derive(Clone, Copy, Debug)]
struct Part {
    lo: [f64; 3],
    hi: [f64; 3],
    shade: f64,
}

fn chair_parts(rng: &mut impl Rng) -> Vec<Part> {
    let w = rng.gen_range(0.7..1.0);
    let d = rng.gen_range(0.6..0.9);
    let seat_h = rng.gen_range(0.35..0.55);
    let seat_t = rng.gen_range(0.08..0.14);
    let leg = rng.gen_range(0.09..0.15);
    let back_h = rng.gen_range(0.4..0.8);
    let back_t = rng.gen_range(0.07..0.12);
    let mut parts = vec![Part {
        lo: [-w / 2.0, seat_h, -d / 2.0],
        hi: [w / 2.0, seat_h + seat_t, d / 2.0],
        shade: 1.0,
    }];
    for (sx, sz) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let cx = sx * (w / 2.0 - leg / 2.0);
        let cz = sz * (d / 2.0 - leg / 2.0);
        parts.push(Part {
            lo: [cx - leg / 2.0, 0.0, cz - leg / 2.0],
            hi: [cx + leg / 2.0, seat_h, cz + leg / 2.0],
            shade: 0.65,
        });
    }
    parts.push(Part {
        lo: [-w / 2.0, seat_h + seat_t, d / 2.0 - back_t],
        hi: [w / 2.0, seat_h + seat_t + back_h, d / 2.0],
        shade: 0.85,
    });
    if rng.gen_bool(0.3) {
        let arm_h = seat_h + seat_t + rng.gen_range(0.15..0.3);
        for sx in [-1.0, 1.0] {
            let x0 = sx * w / 2.0;
            parts.push(Part {
                lo: [x0.min(x0 - sx * 0.08), arm_h - 0.06, -d / 2.0],
                hi: [x0.max(x0 - sx * 0.08), arm_h, d / 2.0],
                shade: 0.75,
            });
        }
    }
    parts
}

/// Andrew's monotone chain; returns the hull counter-clockwise.
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn inside_convex(hull: &[(f64, f64)], p: (f64, f64)) -> bool {
    let n = hull.len();
    n >= 3
        && (0..n).all(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0
        })
}

/// Procedural chair for `(shape, view)`: views `0..31` are azimuth steps at
/// a low elevation, `31..62` the same azimuths at a higher one.
pub fn chair_sprite(seed: u64, shape: u32, view: u32, resolution: usize) -> SpriteRaster {
    let mut rng = substream(seed, &[0xc4, shape as u64]);
    let parts = chair_parts(&mut rng);
    let base: [f64; 3] = {
        let hue = rng.gen::<f64>() * 6.0;
        let sat = rng.gen_range(0.4..0.9);
        let val = rng.gen_range(0.45..0.95);
        let c = val * sat;
        let x = c * (1.0 - ((hue % 2.0) - 1.0).abs());
        let (r, g, b) = match hue as u32 {
            0 => (c, x, 0.0),
            1 => (x, c, 0.0),
            2 => (0.0, c, x),
            3 => (0.0, x, c),
            4 => (x, 0.0, c),
            _ => (c, 0.0, x),
        };
        let m = val - c;
        [r + m, g + m, b + m]
    };
    let az = std::f64::consts::TAU * (view % 31) as f64 / 31.0;
    let el = if (view / 31) % 2 == 0 { 15f64 } else { 35f64 }.to_radians();
    let (sa, ca) = az.sin_cos();
    let (se, ce) = el.sin_cos();
    // Rotate about the vertical axis, tilt toward the viewer, drop depth.
    let project = |p: [f64; 3]| -> (f64, f64, f64) {
        let x = ca * p[0] + sa * p[2];
        let z = -sa * p[0] + ca * p[2];
        let y = p[1] - 0.5;
        let y2 = ce * y - se * z;
        let z2 = se * y + ce * z;
        (x, -y2, z2)
    };
    let mut polys: Vec<(Vec<(f64, f64)>, f64, f64)> = parts
        .iter()
        .map(|part| {
            let mut pts = Vec::with_capacity(8);
            let mut depth = 0.0;
            for i in 0..8 {
                let c = [
                    if i & 1 == 0 { part.lo[0] } else { part.hi[0] },
                    if i & 2 == 0 { part.lo[1] } else { part.hi[1] },
                    if i & 4 == 0 { part.lo[2] } else { part.hi[2] },
                ];
                let (x, y, z) = project(c);
                pts.push((x, y));
                depth += z / 8.0;
            }
            (convex_hull(pts), depth, part.shade)
        })
        .collect();
    // Painter's order: far parts first, so later (nearer) parts win.
    polys.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite depth"));
    let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for (hull, _, _) in &polys {
        for &(x, y) in hull {
            lo_x = lo_x.min(x);
            lo_y = lo_y.min(y);
            hi_x = hi_x.max(x);
            hi_y = hi_y.max(y);
        }
    }
    let extent = (hi_x - lo_x).max(hi_y - lo_y);
    let fit = 0.88 * resolution as f64 / extent;
    let (mx, my) = ((lo_x + hi_x) / 2.0, (lo_y + hi_y) / 2.0);
    let ss = 4;
    let mut rgba = vec![[0.0f32; 4]; resolution * resolution];
    for ty in 0..resolution {
        for tx in 0..resolution {
            let mut acc = [0.0f64; 4];
            for sy in 0..ss {
                for sx in 0..ss {
                    let px = tx as f64 + (sx as f64 + 0.5) / ss as f64 - resolution as f64 / 2.0;
                    let py = ty as f64 + (sy as f64 + 0.5) / ss as f64 - resolution as f64 / 2.0;
                    let p = (px / fit + mx, py / fit + my);
                    if let Some((_, _, shade)) = polys.iter().rev().find(|(h, _, _)| inside_convex(h, p)) {
                        let grad = 0.8 + 0.2 * (ty as f64 / resolution as f64);
                        for ch in 0..3 {
                            acc[ch] += (base[ch] * shade * grad).min(1.0);
                        }
                        acc[3] += 1.0;
                    }
                }
            }
            let n = (ss * ss) as f64;
            rgba[ty * resolution + tx] = [
                (acc[0] / n) as f32,
                (acc[1] / n) as f32,
                (acc[2] / n) as f32,
                (acc[3] / n) as f32,
            ];
        }
    }
    SpriteRaster { size: resolution, rgba }
}
