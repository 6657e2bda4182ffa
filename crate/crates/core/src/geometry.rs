//! 2-d affine maps and the zoom/rotation/translation parameterization.

use crate::{CoreError, Result};

/// Row-major 2×3 matrix acting on `(x, y, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine2 {
    pub m: [[f64; 3]; 2],
}

impl Affine2 {
    pub const IDENTITY: Self = Self {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty]],
        }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let [r0, r1] = self.m;
        (r0[0] * x + r0[1] * y + r0[2], r1[0] * x + r1[1] * y + r1[2])
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let [a0, a1] = self.m;
        let [b0, b1] = other.m;
        Self {
            m: [
                [
                    a0[0] * b0[0] + a0[1] * b1[0],
                    a0[0] * b0[1] + a0[1] * b1[1],
                    a0[0] * b0[2] + a0[1] * b1[2] + a0[2],
                ],
                [
                    a1[0] * b0[0] + a1[1] * b1[0],
                    a1[0] * b0[1] + a1[1] * b1[1],
                    a1[0] * b0[2] + a1[1] * b1[2] + a1[2],
                ],
            ],
        }
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(CoreError::NonInvertible);
        }
        let [[a, b, c], [d, e, f]] = self.m;
        let (ia, ib, id, ie) = (e / det, -b / det, -d / det, a / det);
        Ok(Self {
            m: [[ia, ib, -(ia * c + ib * f)], [id, ie, -(id * c + ie * f)]],
        })
    }
}

/// Zoom and rotation about a pivot, followed by a translation:
/// `x ↦ c + zoom · R(rotation) · (x − c) + t`.
///
/// Rotation is in degrees, applied in image coordinates (`y` down), so a
/// positive angle turns clockwise on screen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineTransform {
    pub zoom: f64,
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
    pub cx: f64,
    pub cy: f64,
}

impl AffineTransform {
    pub fn identity(cx: f64, cy: f64) -> Self {
        Self {
            zoom: 1.0,
            rotation: 0.0,
            tx: 0.0,
            ty: 0.0,
            cx,
            cy,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.zoom == 1.0 && self.rotation == 0.0 && self.tx == 0.0 && self.ty == 0.0
    }

    pub fn with_center(self, cx: f64, cy: f64) -> Self {
        Self { cx, cy, ..self }
    }

    pub fn matrix(&self) -> Affine2 {
        let (s, c) = self.rotation.to_radians().sin_cos();
        let (a, b, d, e) = (self.zoom * c, -self.zoom * s, self.zoom * s, self.zoom * c);
        Affine2 {
            m: [
                [a, b, self.cx + self.tx - a * self.cx - b * self.cy],
                [d, e, self.cy + self.ty - d * self.cx - e * self.cy],
            ],
        }
    }

    /// Six space-separated numbers `zoom rotation tx ty cx cy`.
    pub fn to_text(&self) -> String {
        format!("{} {} {} {} {} {}", self.zoom, self.rotation, self.tx, self.ty, self.cx, self.cy)
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| CoreError::Format(format!("transform value {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        let [zoom, rotation, tx, ty, cx, cy] = v[..] else {
            return Err(CoreError::Format(format!("expected 6 transform values, got {}", v.len())));
        };
        if !(zoom > 0.0) {
            return Err(CoreError::NonInvertible);
        }
        Ok(Self {
            zoom,
            rotation,
            tx,
            ty,
            cx,
            cy,
        })
    }
}
