//! Floating-point RGB rasters with bilinear sampling and PNG I/O.

use std::path::Path;

use crate::{CoreError, Result};

/// Interleaved RGB image with intensities nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(CoreError::Invalid(format!("{} values for a {width}x{height} RGB image", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, px: [f32; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&px);
    }

    /// Bilinear sample at a continuous position (pixel centers at integer
    /// coordinates); `None` outside `[0, w−1] × [0, h−1]`.
    pub fn sample(&self, x: f64, y: f64) -> Option<[f32; 3]> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64) {
            return None;
        }
        Some(self.sample_clamped(x, y))
    }

    /// Bilinear sample with edge clamping.
    pub fn sample_clamped(&self, x: f64, y: f64) -> [f32; 3] {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        let mut out = [0.0; 3];
        for ch in 0..3 {
            let top = a[ch] + fx * (b[ch] - a[ch]);
            let bottom = c[ch] + fx * (d[ch] - c[ch]);
            out[ch] = top + fy * (bottom - top);
        }
        out
    }

    /// Bilinear sample with periodic (wrap-around) addressing.
    pub fn sample_wrapped(&self, x: f64, y: f64) -> [f32; 3] {
        let (w, h) = (self.width as f64, self.height as f64);
        let x = x.rem_euclid(w);
        let y = y.rem_euclid(h);
        let x0 = (x.floor() as usize) % self.width;
        let y0 = (y.floor() as usize) % self.height;
        let x1 = (x0 + 1) % self.width;
        let y1 = (y0 + 1) % self.height;
        let fx = (x - x.floor()) as f32;
        let fy = (y - y.floor()) as f32;
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        let mut out = [0.0; 3];
        for ch in 0..3 {
            let top = a[ch] + fx * (b[ch] - a[ch]);
            let bottom = c[ch] + fx * (d[ch] - c[ch]);
            out[ch] = top + fy * (bottom - top);
        }
        out
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(CoreError::DimensionMismatch(self.width, self.height, x0 + w, y0 + h));
        }
        let mut out = Self::new(w, h);
        for y in 0..h {
            let src = 3 * ((y0 + y) * self.width + x0);
            out.data[3 * y * w..3 * (y + 1) * w].copy_from_slice(&self.data[src..src + 3 * w]);
        }
        Ok(out)
    }

    pub fn paste(&mut self, other: &Self, x0: usize, y0: usize) -> Result<()> {
        if x0 + other.width > self.width || y0 + other.height > self.height {
            return Err(CoreError::DimensionMismatch(self.width, self.height, x0 + other.width, y0 + other.height));
        }
        let w = other.width;
        for y in 0..other.height {
            let dst = 3 * ((y0 + y) * self.width + x0);
            self.data[dst..dst + 3 * w].copy_from_slice(&other.data[3 * y * w..3 * (y + 1) * w]);
        }
        Ok(())
    }

    /// Luminance `(r + g + b) / 3` as a row-major plane.
    pub fn to_gray(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0)
            .collect()
    }

    /// Bilinear resize (half-pixel-center mapping).
    pub fn resize(&self, out_w: usize, out_h: usize) -> Self {
        let sx = self.width as f64 / out_w as f64;
        let sy = self.height as f64 / out_h as f64;
        Self::from_fn(out_w, out_h, |x, y| {
            self.sample_clamped((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
        })
    }

    /// Mirror-pads on the right and bottom to `out_w × out_h`.
    pub fn pad_reflect(&self, out_w: usize, out_h: usize) -> Self {
        let reflect = |i: usize, n: usize| {
            if n == 1 {
                return 0;
            }
            let period = 2 * (n - 1);
            let m = i % period;
            if m < n {
                m
            } else {
                period - m
            }
        };
        Self::from_fn(out_w, out_h, |x, y| self.get(reflect(x, self.width), reflect(y, self.height)))
    }

    /// Quantizes to 8 bits per channel (round to nearest, clamped).
    pub fn to_rgb8(&self) -> image::RgbImage {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for (dst, src) in img.as_mut().iter_mut().zip(&self.data) {
            *dst = (src.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        img
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8().save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_rgb8(&image::open(path)?.to_rgb8()))
    }
}

/// Saves a boolean mask as an 8-bit grayscale PNG (255 = true).
pub fn save_mask_png(path: impl AsRef<Path>, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let buf: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    let img = image::GrayImage::from_raw(width as u32, height as u32, buf)
        .ok_or_else(|| CoreError::Invalid("mask length does not match dimensions".into()))?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Loads a mask PNG; pixels ≥ 128 are true.
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<bool>)> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((w, h, img.as_raw().iter().map(|&v| v >= 128).collect()))
}
