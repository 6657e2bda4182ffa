//! Distribution of flow magnitudes over a set of fields.

use crate::flow::FlowField;
use crate::{CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    /// Normalized mass per bin; the last bin also holds every magnitude at
    /// or above `bin_width · (bins.len() − 1)`.
    pub bins: Vec<f64>,
}

impl Histogram {
    pub fn mode(&self) -> usize {
        self.bins
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, &m)| if m > best.1 { (i, m) } else { best })
            .0
    }

    /// Tab-separated `lower_edge mass` lines.
    pub fn to_text(&self) -> String {
        self.bins
            .iter()
            .enumerate()
            .map(|(i, m)| format!("{}\t{m}\n", i as f64 * self.bin_width))
            .collect()
    }
}

/// Histogram of per-pixel flow magnitudes over valid pixels, with bins of
/// `bin_width` up to `max_disp` and one overflow bin.
pub fn displacement_histogram(flows: &[FlowField], bin_width: f64, max_disp: f64) -> Result<Histogram> {
    if !(bin_width > 0.0 && max_disp > 0.0) {
        return Err(CoreError::Invalid("bin_width and max_disp must be positive".into()));
    }
    let regular = (max_disp / bin_width).ceil() as usize;
    let mut counts = vec![0u64; regular + 1];
    let mut total = 0u64;
    for f in flows {
        for i in 0..f.len() {
            if !f.valid()[i] {
                continue;
            }
            let m = f.u()[i].hypot(f.v()[i]);
            let bin = if m >= max_disp { regular } else { ((m / bin_width) as usize).min(regular - 1) };
            counts[bin] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(CoreError::Empty);
    }
    Ok(Histogram {
        bin_width,
        bins: counts.iter().map(|&c| c as f64 / total as f64).collect(),
    })
}
