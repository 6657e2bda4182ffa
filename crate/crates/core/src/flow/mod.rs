//! Dense optical-flow fields with a validity mask, plus `.flo` I/O, metrics
//! and color coding.

mod color;
mod flo;
mod metrics;

pub use color::{flow_to_color, wheel_color, COLOR_WHEEL_SEGMENTS};
pub use flo::{read_flo, read_flo_file, write_flo, write_flo_file, FLO_MAGIC, UNKNOWN_FLOW, UNKNOWN_FLOW_THRESHOLD};
pub use metrics::{angular_error_deg, compute_metrics, endpoint_error, MetricsAccumulator, MetricsReport};

use crate::{CoreError, Result};

/// Per-pixel displacement from a first image to a second one.
///
/// `u` is horizontal (+x rightward), `v` vertical (+y downward), both in
/// pixels, stored row-major. `valid[i]` is false where ground truth is
/// undefined; `u`/`v` hold 0 there.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
    }

    pub fn constant(width: usize, height: usize, u: f64, v: f64) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![u; n],
            v: vec![v; n],
            valid: vec![true; n],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x, y);
                out.set(x, y, u, v);
            }
        }
        out
    }

    /// Builds a field from parts; all three vectors must hold `width·height`
    /// entries and every valid entry must be finite.
    pub fn from_parts(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if u.len() != n || v.len() != n || valid.len() != n {
            return Err(CoreError::Invalid(format!(
                "flow parts of length {}/{}/{} for {width}x{height}",
                u.len(),
                v.len(),
                valid.len()
            )));
        }
        let mut field = Self {
            width,
            height,
            u,
            v,
            valid,
        };
        if !field.is_well_formed() {
            return Err(CoreError::Invalid("non-finite flow on a valid pixel".into()));
        }
        for i in 0..n {
            if !field.valid[i] {
                field.u[i] = 0.0;
                field.v[i] = 0.0;
            }
        }
        Ok(field)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = self.index(x, y);
        (self.u[i], self.v[i])
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[self.index(x, y)]
    }

    /// Sets a vector and marks the pixel valid.
    pub fn set(&mut self, x: usize, y: usize, u: f64, v: f64) {
        let i = self.index(x, y);
        self.u[i] = u;
        self.v[i] = v;
        self.valid[i] = true;
    }

    /// Marks a pixel invalid and zeroes its vector.
    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = self.index(x, y);
        self.u[i] = 0.0;
        self.v[i] = 0.0;
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn is_well_formed(&self) -> bool {
        let n = self.len();
        self.u.len() == n
            && self.v.len() == n
            && self.valid.len() == n
            && (0..n).all(|i| !self.valid[i] || (self.u[i].is_finite() && self.v[i].is_finite()))
    }

    /// Largest vector magnitude over valid pixels (0 if none).
    pub fn max_magnitude(&self) -> f64 {
        (0..self.len())
            .filter(|&i| self.valid[i])
            .map(|i| self.u[i].hypot(self.v[i]))
            .fold(0.0, f64::max)
    }

    /// Multiplies every vector by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.u.iter_mut().for_each(|u| *u *= s);
        out.v.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Copies the `w × h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(CoreError::DimensionMismatch(self.width, self.height, x0 + w, y0 + h));
        }
        let mut out = Self::zeros(w, h);
        for y in 0..h {
            let src = self.index(x0, y0 + y);
            let dst = y * w;
            out.u[dst..dst + w].copy_from_slice(&self.u[src..src + w]);
            out.v[dst..dst + w].copy_from_slice(&self.v[src..src + w]);
            out.valid[dst..dst + w].copy_from_slice(&self.valid[src..src + w]);
        }
        Ok(out)
    }

    /// Writes `other` into this field at `(x0, y0)`.
    pub fn paste(&mut self, other: &Self, x0: usize, y0: usize) -> Result<()> {
        if x0 + other.width > self.width || y0 + other.height > self.height {
            return Err(CoreError::DimensionMismatch(self.width, self.height, x0 + other.width, y0 + other.height));
        }
        for y in 0..other.height {
            let src = y * other.width;
            let dst = self.index(x0, y0 + y);
            let w = other.width;
            self.u[dst..dst + w].copy_from_slice(&other.u[src..src + w]);
            self.v[dst..dst + w].copy_from_slice(&other.v[src..src + w]);
            self.valid[dst..dst + w].copy_from_slice(&other.valid[src..src + w]);
        }
        Ok(())
    }

    /// Bilinearly interpolated vector at a continuous position; `None` when
    /// any contributing tap lies outside the field or is invalid.
    pub fn sample(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let taps = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ];
        let (mut u, mut v) = (0.0, 0.0);
        for (tx, ty, wt) in taps {
            if wt == 0.0 {
                continue;
            }
            let i = self.index(tx, ty);
            if !self.valid[i] {
                return None;
            }
            u += wt * self.u[i];
            v += wt * self.v[i];
        }
        Some((u, v))
    }
}
