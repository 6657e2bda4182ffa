//! Normalized gradient-magnitude boundary strength.

use crate::image::Image;

/// Row-major scalar image.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "plane size");
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn gray(img: &Image) -> Self {
        Self::new(img.width(), img.height(), img.to_gray())
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Value with coordinates clamped into the plane.
    pub fn at_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.at(x, y)
    }

    /// Bilinear sample with edge clamping.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bottom = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Bilinear resize with half-pixel-center alignment.
    pub fn resize_bilinear(&self, ow: usize, oh: usize) -> Self {
        let sx = self.width as f64 / ow as f64;
        let sy = self.height as f64 / oh as f64;
        Self::from_fn(ow, oh, |x, y| self.sample((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5))
    }

    /// Area-averaging downsample (each output pixel averages its footprint);
    /// falls back to bilinear when enlarging.
    pub fn resize_area(&self, ow: usize, oh: usize) -> Self {
        if ow >= self.width || oh >= self.height {
            return self.resize_bilinear(ow, oh);
        }
        let rows = area_weights(self.height, oh);
        let cols = area_weights(self.width, ow);
        let mut tmp = vec![0.0; ow * self.height];
        for y in 0..self.height {
            for (ox, taps) in cols.iter().enumerate() {
                tmp[y * ow + ox] = taps.iter().map(|&(i, w)| w * self.at(i, y)).sum();
            }
        }
        Self::from_fn(ow, oh, |x, y| rows[y].iter().map(|&(i, w)| w * tmp[i * ow + x]).sum())
    }

    /// Central differences with clamped borders.
    pub fn gradient(&self) -> (Self, Self) {
        let gx = Self::from_fn(self.width, self.height, |x, y| {
            let (x, y) = (x as isize, y as isize);
            0.5 * (self.at_clamped(x + 1, y) - self.at_clamped(x - 1, y))
        });
        let gy = Self::from_fn(self.width, self.height, |x, y| {
            let (x, y) = (x as isize, y as isize);
            0.5 * (self.at_clamped(x, y + 1) - self.at_clamped(x, y - 1))
        });
        (gx, gy)
    }
}

fn area_weights(n: usize, out: usize) -> Vec<Vec<(usize, f64)>> {
    let s = n as f64 / out as f64;
    (0..out)
        .map(|o| {
            let (lo, hi) = (o as f64 * s, (o + 1) as f64 * s);
            let mut taps = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < n {
                let w = (hi.min(i as f64 + 1.0) - lo.max(i as f64)) / s;
                if w > 0.0 {
                    taps.push((i, w));
                }
                i += 1;
            }
            taps
        })
        .collect()
}

fn gaussian_blur(p: &Plane, sigma: f64) -> Plane {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = k.iter().sum();
    let k: Vec<f64> = k.iter().map(|v| v / norm).collect();
    let h = Plane::from_fn(p.width, p.height, |x, y| {
        (-r..=r).map(|i| k[(i + r) as usize] * p.at_clamped(x as isize + i, y as isize)).sum()
    });
    Plane::from_fn(p.width, p.height, |x, y| {
        (-r..=r).map(|i| k[(i + r) as usize] * h.at_clamped(x as isize, y as isize + i)).sum()
    })
}

/// Boundary strength in `[0, 1]`: Gaussian-smoothed (σ = 1) Sobel gradient
/// magnitude divided by its 99th percentile and clamped.
pub fn detect_boundaries(img: &Image) -> Plane {
    boundaries_of(&Plane::gray(img))
}

pub fn boundaries_of(gray: &Plane) -> Plane {
    let s = gaussian_blur(gray, 1.0);
    let mag = Plane::from_fn(s.width, s.height, |x, y| {
        let (x, y) = (x as isize, y as isize);
        let a = |dx: isize, dy: isize| s.at_clamped(x + dx, y + dy);
        let gx = (a(1, -1) + 2.0 * a(1, 0) + a(1, 1)) - (a(-1, -1) + 2.0 * a(-1, 0) + a(-1, 1));
        let gy = (a(-1, 1) + 2.0 * a(0, 1) + a(1, 1)) - (a(-1, -1) + 2.0 * a(0, -1) + a(1, -1));
        gx.hypot(gy)
    });
    let mut sorted = mag.data.clone();
    sorted.sort_by(f64::total_cmp);
    let rank = ((0.99 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    let mut norm = sorted[rank];
    if norm <= 0.0 {
        norm = *sorted.last().expect("nonempty image");
    }
    if norm <= 0.0 {
        return Plane::new(mag.width, mag.height, vec![0.0; mag.data.len()]);
    }
    Plane::new(mag.width, mag.height, mag.data.iter().map(|m| (m / norm).min(1.0)).collect())
}
