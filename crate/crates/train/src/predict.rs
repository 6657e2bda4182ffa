//! Inference on one image pair.

use flownet_core::image::Image;
use flownet_core::FlowField;
use flownet_tensornet::ops::resize_bilinear;
use flownet_tensornet::{Graph, ParamSet, Tensor};

use crate::batch::{image_tensor, padded_len};
use crate::model::Model;
use crate::{Result, TrainError};

/// Network output for one pair, in pixels of the original images.
#[derive(Clone, Debug)]
pub struct Prediction {
    /// Full-resolution flow.
    pub full: FlowField,
    /// Finest head output at `1/finest_factor` of the original size, in
    /// pixels of that resolution.
    pub coarse: FlowField,
}

/// Flow field from channels 0/1 of item 0 of `t` in the window
/// `(x0, y0, w, h)`, with vectors scaled by `(sx, sy)`.
fn window_to_flow(t: &Tensor<f32>, w: usize, h: usize, sx: f64, sy: f64) -> FlowField {
    FlowField::from_fn(w, h, |x, y| (t.at(0, 0, y, x) as f64 * sx, t.at(0, 1, y, x) as f64 * sy))
}

/// Bilinear resize of a `(1, 2, h, w)` flow crop to `out_w × out_h`.
fn resized(t: &Tensor<f32>, crop_w: usize, crop_h: usize, out_w: usize, out_h: usize) -> Result<Tensor<f32>> {
    let mut c = Tensor::zeros([1, 2, crop_h, crop_w]);
    for ch in 0..2 {
        for y in 0..crop_h {
            for x in 0..crop_w {
                c.set(0, ch, y, x, t.at(0, ch, y, x));
            }
        }
    }
    if (crop_w, crop_h) == (out_w, out_h) {
        return Ok(c);
    }
    Ok(resize_bilinear(&c, out_h, out_w)?)
}

/// Runs the network on a pair. Inputs are bilinearly upscaled by
/// `test_scale`, mirror-padded to a multiple of 64, and the flow is mapped
/// back to the original resolution with vectors divided by `test_scale`.
pub fn predict_pair(model: &Model, params: &ParamSet<f32>, img1: &Image, img2: &Image, test_scale: f64) -> Result<Prediction> {
    let (w, h) = (img1.width(), img1.height());
    if (img2.width(), img2.height()) != (w, h) {
        return Err(TrainError::Architecture(format!(
            "image sizes differ: {w}x{h} vs {}x{}",
            img2.width(),
            img2.height()
        )));
    }
    if !(test_scale.is_finite() && test_scale > 0.0) {
        return Err(TrainError::Config(format!("test scale {test_scale} must be positive")));
    }
    let (sw, sh) = ((w as f64 * test_scale).round() as usize, (h as f64 * test_scale).round() as usize);
    let (a, b) = if (sw, sh) == (w, h) {
        (img1.clone(), img2.clone())
    } else {
        (img1.resize(sw, sh), img2.resize(sw, sh))
    };
    let (pw, ph) = (padded_len(sw), padded_len(sh));
    let mut g = Graph::<f32>::new();
    let i1 = g.input(image_tensor(&[&a], pw, ph)?);
    let i2 = g.input(image_tensor(&[&b], pw, ph)?);
    let out = model.forward(&mut g, params, i1, i2)?;
    let f = model.config().finest_factor();
    let finest = g.value(out.finest());

    // Full resolution: bilinear upsampling of the finest head, whose vectors
    // are in level pixels.
    let up = resize_bilinear(finest, ph, pw)?;
    let full = resized(&up, sw, sh, w, h)?;
    let k = f as f64 / test_scale;
    let full = window_to_flow(&full, w, h, k, k);

    let (cw, ch) = (sw.div_ceil(f), sh.div_ceil(f));
    let (qw, qh) = (w.div_ceil(f), h.div_ceil(f));
    let coarse = resized(finest, cw, ch, qw, qh)?;
    let (kx, ky) = (k * qw as f64 / w as f64, k * qh as f64 / h as f64);
    let coarse = window_to_flow(&coarse, qw, qh, kx, ky);
    Ok(Prediction { full, coarse })
}

pub fn predict(model: &Model, params: &ParamSet<f32>, img1: &Image, img2: &Image, test_scale: f64) -> Result<FlowField> {
    Ok(predict_pair(model, params, img1, img2, test_scale)?.full)
}
