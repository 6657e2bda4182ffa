//! Cutting a sample into four quadrants and stitching them back.

use super::render::Sample;
use crate::flow::FlowField;
use crate::image::Image;
use crate::{CoreError, Result};

/// Quadrant origins in output order: top-left, top-right, bottom-left,
/// bottom-right.
fn origins(w: usize, h: usize) -> [(usize, usize); 4] {
    [(0, 0), (w, 0), (0, h), (w, h)]
}

/// Splits a sample into four half-size samples. Flow values are kept as is.
/// With `strict`, pixels whose flow target leaves their quadrant are also
/// marked occluded; otherwise occlusion is inherited from the full frame.
pub fn quarter(sample: &Sample, strict: bool) -> Result<[Sample; 4]> {
    sample.check_dimensions()?;
    let (w, h) = (sample.width(), sample.height());
    if w % 2 != 0 || h % 2 != 0 {
        return Err(CoreError::OddDimensions(w, h));
    }
    let (qw, qh) = (w / 2, h / 2);
    let cut = |x0: usize, y0: usize| -> Result<Sample> {
        let flow = sample.flow.crop(x0, y0, qw, qh)?;
        let mut occlusion = Vec::with_capacity(qw * qh);
        for y in 0..qh {
            for x in 0..qw {
                let mut occ = sample.occlusion[(y0 + y) * w + x0 + x];
                if strict {
                    let (u, v) = flow.get(x, y);
                    let (tx, ty) = (x as f64 + u, y as f64 + v);
                    occ |= !(tx >= 0.0 && ty >= 0.0 && tx <= (qw - 1) as f64 && ty <= (qh - 1) as f64);
                }
                occlusion.push(occ);
            }
        }
        Ok(Sample {
            img1: sample.img1.crop(x0, y0, qw, qh)?,
            img2: sample.img2.crop(x0, y0, qw, qh)?,
            flow,
            occlusion,
        })
    };
    let [a, b, c, d] = origins(qw, qh);
    Ok([cut(a.0, a.1)?, cut(b.0, b.1)?, cut(c.0, c.1)?, cut(d.0, d.1)?])
}

/// Inverse of [`quarter`] for images, flow and (non-strict) occlusion.
pub fn stitch(parts: &[Sample; 4]) -> Result<Sample> {
    for p in parts {
        p.check_dimensions()?;
    }
    let (qw, qh) = (parts[0].width(), parts[0].height());
    if parts.iter().any(|p| (p.width(), p.height()) != (qw, qh)) {
        return Err(CoreError::Invalid("quadrants differ in size".into()));
    }
    let (w, h) = (2 * qw, 2 * qh);
    let mut img1 = Image::new(w, h);
    let mut img2 = Image::new(w, h);
    let mut flow = FlowField::zeros(w, h);
    let mut occlusion = vec![false; w * h];
    for (p, (x0, y0)) in parts.iter().zip(origins(qw, qh)) {
        img1.paste(&p.img1, x0, y0)?;
        img2.paste(&p.img2, x0, y0)?;
        flow.paste(&p.flow, x0, y0)?;
        for y in 0..qh {
            occlusion[(y0 + y) * w + x0..(y0 + y) * w + x0 + qw].copy_from_slice(&p.occlusion[y * qw..(y + 1) * qw]);
        }
    }
    Ok(Sample {
        img1,
        img2,
        flow,
        occlusion,
    })
}
