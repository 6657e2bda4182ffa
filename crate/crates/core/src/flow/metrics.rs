//! Endpoint error, angular error and large-displacement EPE.

use super::FlowField;
use crate::{CoreError, Result};

/// Ground-truth magnitude threshold (pixels) for the large-displacement EPE.
pub const S40_THRESHOLD: f64 = 40.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// Mean endpoint error in pixels.
    pub epe: f64,
    /// Mean angular error in degrees.
    pub aae: f64,
    /// EPE over pixels whose ground-truth magnitude is at least 40 px.
    pub epe_s40plus: Option<f64>,
    pub n_evaluated: usize,
}

pub fn endpoint_error(up: f64, vp: f64, ug: f64, vg: f64) -> f64 {
    (up - ug).hypot(vp - vg)
}

/// Angle in degrees between `(up, vp, 1)` and `(ug, vg, 1)`.
///
/// This is the Middlebury convention; the unit third component keeps the
/// angle defined for zero vectors.
pub fn angular_error_deg(up: f64, vp: f64, ug: f64, vg: f64) -> f64 {
    let num = up * ug + vp * vg + 1.0;
    let den = (up * up + vp * vp + 1.0).sqrt() * (ug * ug + vg * vg + 1.0).sqrt();
    (num / den).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Running sums for pooling metrics over many fields.
#[derive(Clone, Debug, Default)]
pub struct MetricsAccumulator {
    sum_epe: f64,
    sum_aae: f64,
    n: usize,
    sum_s40: f64,
    n_s40: usize,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds every pixel valid in `gt`.
    pub fn add(&mut self, pred: &FlowField, gt: &FlowField) -> Result<()> {
        if pred.width() != gt.width() || pred.height() != gt.height() {
            return Err(CoreError::DimensionMismatch(pred.width(), pred.height(), gt.width(), gt.height()));
        }
        let (pu, pv) = (pred.u(), pred.v());
        let (gu, gv) = (gt.u(), gt.v());
        for i in 0..gt.len() {
            if !gt.valid()[i] {
                continue;
            }
            let e = endpoint_error(pu[i], pv[i], gu[i], gv[i]);
            self.sum_epe += e;
            self.sum_aae += angular_error_deg(pu[i], pv[i], gu[i], gv[i]);
            self.n += 1;
            if gu[i].hypot(gv[i]) >= S40_THRESHOLD {
                self.sum_s40 += e;
                self.n_s40 += 1;
            }
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn report(&self) -> Result<MetricsReport> {
        if self.n == 0 {
            return Err(CoreError::EmptyReport);
        }
        Ok(MetricsReport {
            epe: self.sum_epe / self.n as f64,
            aae: self.sum_aae / self.n as f64,
            epe_s40plus: (self.n_s40 > 0).then(|| self.sum_s40 / self.n_s40 as f64),
            n_evaluated: self.n,
        })
    }
}

/// Metrics of `pred` against `gt`, averaged over `gt`'s valid pixels.
pub fn compute_metrics(pred: &FlowField, gt: &FlowField) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::new();
    acc.add(pred, gt)?;
    acc.report()
}
