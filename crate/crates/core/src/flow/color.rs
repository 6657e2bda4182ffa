//! Middlebury color coding: hue encodes direction, saturation encodes
//! magnitude, white means no motion.

use image::{Rgb, RgbImage};

use super::FlowField;

/// Segment lengths of the color wheel: red→yellow, yellow→green,
/// green→cyan, cyan→blue, blue→magenta, magenta→red.
pub const COLOR_WHEEL_SEGMENTS: [usize; 6] = [15, 6, 4, 11, 13, 6];

fn color_wheel() -> Vec<[f64; 3]> {
    let [ry, yg, gc, cb, bm, mr] = COLOR_WHEEL_SEGMENTS;
    let ramp = |i: usize, n: usize| (255 * i / n) as f64;
    let mut wheel = Vec::with_capacity(55);
    wheel.extend((0..ry).map(|i| [255.0, ramp(i, ry), 0.0]));
    wheel.extend((0..yg).map(|i| [255.0 - ramp(i, yg), 255.0, 0.0]));
    wheel.extend((0..gc).map(|i| [0.0, 255.0, ramp(i, gc)]));
    wheel.extend((0..cb).map(|i| [0.0, 255.0 - ramp(i, cb), 255.0]));
    wheel.extend((0..bm).map(|i| [ramp(i, bm), 0.0, 255.0]));
    wheel.extend((0..mr).map(|i| [255.0, 0.0, 255.0 - ramp(i, mr)]));
    wheel
}

/// Wheel entry `index` (0..55) as RGB.
pub fn wheel_color(index: usize) -> [u8; 3] {
    let c = color_wheel()[index];
    [c[0] as u8, c[1] as u8, c[2] as u8]
}

fn encode(wheel: &[[f64; 3]], u: f64, v: f64) -> [u8; 3] {
    let n = wheel.len();
    let rad = u.hypot(v).min(1.0);
    let a = (-v).atan2(-u) / std::f64::consts::PI;
    let fk = (a + 1.0) / 2.0 * (n - 1) as f64;
    let k0 = fk.floor() as usize;
    let k1 = (k0 + 1) % n;
    let f = fk - k0 as f64;
    let mut out = [0u8; 3];
    for (ch, o) in out.iter_mut().enumerate() {
        let col = ((1.0 - f) * wheel[k0][ch] + f * wheel[k1][ch]) / 255.0;
        *o = (255.0 * (1.0 - rad * (1.0 - col))) as u8;
    }
    out
}

/// Renders `flow` as an RGB image. Magnitudes are divided by `max_magnitude`
/// (or, if `None`, by the largest valid magnitude in the field) and clamped
/// to 1. Invalid pixels are black.
pub fn flow_to_color(flow: &FlowField, max_magnitude: Option<f64>) -> RgbImage {
    let wheel = color_wheel();
    let norm = max_magnitude.unwrap_or_else(|| flow.max_magnitude());
    let mut img = RgbImage::new(flow.width() as u32, flow.height() as u32);
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            let px = if !flow.is_valid(x, y) {
                [0, 0, 0]
            } else {
                let (u, v) = flow.get(x, y);
                if norm > 0.0 {
                    encode(&wheel, u / norm, v / norm)
                } else {
                    [255, 255, 255]
                }
            };
            img.put_pixel(x as u32, y as u32, Rgb(px));
        }
    }
    img
}
