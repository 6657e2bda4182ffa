//! Variational post-processing of a network flow estimate.
//!
//! The energy combines robust brightness and gradient constancy with a
//! robust total-variation-like smoothness term whose weight
//! `α = alpha_base · exp(−λ·b^κ)` drops on image boundaries `b`. It is
//! minimized coarse to fine, starting from the quarter-resolution estimate,
//! with warping, lagged nonlinearity and SOR inner sweeps. Each warp step
//! is accepted only if it does not increase the energy (halving the step
//! otherwise), so the energy at a level never goes up.

mod boundary;

pub use boundary::{boundaries_of, detect_boundaries, Plane};

use crate::flow::FlowField;
use crate::image::Image;
use crate::{CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct VarParams {
    /// Warp iterations shared by the levels from 1/4 up to 1/2 resolution.
    pub coarse_iters: usize,
    /// Warp iterations at full resolution.
    pub fullres_iters: usize,
    pub alpha_base: f64,
    pub lambda: f64,
    pub kappa: f64,
    /// Resolution ratio between consecutive coarse levels.
    pub pyramid_factor: f64,
    /// SOR sweeps per warp iteration.
    pub solver: usize,
    /// The robust weights are recomputed every this many sweeps.
    pub lag: usize,
    pub omega: f64,
    pub epsilon: f64,
    /// Weight of gradient constancy relative to brightness constancy.
    pub gamma: f64,
    pub max_backtracks: usize,
}

impl Default for VarParams {
    fn default() -> Self {
        Self {
            coarse_iters: 20,
            fullres_iters: 5,
            alpha_base: 0.1,
            lambda: 5.0,
            kappa: 0.5,
            pyramid_factor: 0.5,
            solver: 30,
            lag: 10,
            omega: 1.9,
            epsilon: 1e-3,
            gamma: 1.0,
            max_backtracks: 8,
        }
    }
}

crate::kv_fields!(VarParams {
    "coarse_iters" => coarse_iters,
    "fullres_iters" => fullres_iters,
    "alpha_base" => alpha_base,
    "lambda" => lambda,
    "kappa" => kappa,
    "pyramid_factor" => pyramid_factor,
    "solver" => solver,
    "lag" => lag,
    "omega" => omega,
    "epsilon" => epsilon,
    "gamma" => gamma,
    "max_backtracks" => max_backtracks,
});

impl VarParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_base > 0.0
            && self.lambda >= 0.0
            && self.kappa > 0.0
            && self.pyramid_factor > 0.0
            && self.pyramid_factor < 1.0
            && self.lag > 0
            && self.omega > 0.0
            && self.omega < 2.0
            && self.epsilon > 0.0
            && self.gamma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(CoreError::Config("variational parameters out of range".into()))
        }
    }
}

/// Energies at one pyramid level: the value before the first warp and after
/// each warp iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelTrace {
    pub width: usize,
    pub height: usize,
    pub energies: Vec<f64>,
}

impl LevelTrace {
    /// Whether no step raised the energy by more than `rel_tol` relative.
    pub fn is_non_increasing(&self, rel_tol: f64) -> bool {
        self.energies.windows(2).all(|w| w[1] <= w[0] + rel_tol * w[0].abs())
    }
}

/// Smoothness weight map at one level.
fn alpha_map(boundary: Option<&Plane>, w: usize, h: usize, p: &VarParams) -> Plane {
    match boundary {
        None => Plane::new(w, h, vec![p.alpha_base; w * h]),
        Some(b) => {
            let b = if (b.width, b.height) == (w, h) { b.clone() } else { b.resize_bilinear(w, h) };
            Plane::new(w, h, b.data.iter().map(|&v| p.alpha_base * (-p.lambda * v.powf(p.kappa)).exp()).collect())
        }
    }
}

fn resize_flow(u: &Plane, v: &Plane, w: usize, h: usize) -> (Plane, Plane) {
    let (sx, sy) = (w as f64 / u.width as f64, h as f64 / u.height as f64);
    let mut u2 = u.resize_bilinear(w, h);
    let mut v2 = v.resize_bilinear(w, h);
    u2.data.iter_mut().for_each(|x| *x *= sx);
    v2.data.iter_mut().for_each(|x| *x *= sy);
    (u2, v2)
}

/// Images and derivatives at one level.
struct Level {
    w: usize,
    h: usize,
    i1: Plane,
    i1x: Plane,
    i1y: Plane,
    i2: Plane,
    i2x: Plane,
    i2y: Plane,
    i2xx: Plane,
    i2xy: Plane,
    i2yy: Plane,
    alpha: Plane,
}

/// Per-pixel linearization of the data terms around the current flow.
struct Linearized {
    inside: Vec<bool>,
    ix: Vec<f64>,
    iy: Vec<f64>,
    iz: Vec<f64>,
    ixx: Vec<f64>,
    ixy: Vec<f64>,
    iyy: Vec<f64>,
    ixz: Vec<f64>,
    iyz: Vec<f64>,
}

impl Level {
    fn new(g1: &Plane, g2: &Plane, alpha: Plane) -> Self {
        let (i1x, i1y) = g1.gradient();
        let (i2x, i2y) = g2.gradient();
        let (i2xx, i2xy) = i2x.gradient();
        let (_, i2yy) = i2y.gradient();
        Self {
            w: g1.width,
            h: g1.height,
            i1: g1.clone(),
            i1x,
            i1y,
            i2: g2.clone(),
            i2x,
            i2y,
            i2xx,
            i2xy,
            i2yy,
            alpha,
        }
    }

    /// Data terms only count where the warped position lies in the frame.
    fn inside(&self, qx: f64, qy: f64) -> bool {
        qx >= 0.0 && qy >= 0.0 && qx <= (self.w - 1) as f64 && qy <= (self.h - 1) as f64
    }

    fn psi(s2: f64, eps: f64) -> f64 {
        (s2 + eps * eps).sqrt()
    }

    fn psi_prime(s2: f64, eps: f64) -> f64 {
        0.5 / (s2 + eps * eps).sqrt()
    }

    fn energy(&self, u: &Plane, v: &Plane, p: &VarParams) -> f64 {
        let (w, h) = (self.w, self.h);
        let mut e = 0.0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (qx, qy) = (x as f64 + u.data[i], y as f64 + v.data[i]);
                if self.inside(qx, qy) {
                    let dz = self.i2.sample(qx, qy) - self.i1.data[i];
                    let dx = self.i2x.sample(qx, qy) - self.i1x.data[i];
                    let dy = self.i2y.sample(qx, qy) - self.i1y.data[i];
                    e += Self::psi(dz * dz, p.epsilon) + p.gamma * Self::psi(dx * dx + dy * dy, p.epsilon);
                }
                e += self.alpha.data[i] * Self::psi(smooth_norm2(u, v, x, y), p.epsilon);
            }
        }
        e
    }

    fn linearize(&self, u: &Plane, v: &Plane) -> Linearized {
        let n = self.w * self.h;
        let mut l = Linearized {
            inside: Vec::with_capacity(n),
            ix: Vec::with_capacity(n),
            iy: Vec::with_capacity(n),
            iz: Vec::with_capacity(n),
            ixx: Vec::with_capacity(n),
            ixy: Vec::with_capacity(n),
            iyy: Vec::with_capacity(n),
            ixz: Vec::with_capacity(n),
            iyz: Vec::with_capacity(n),
        };
        for y in 0..self.h {
            for x in 0..self.w {
                let i = y * self.w + x;
                let (qx, qy) = (x as f64 + u.data[i], y as f64 + v.data[i]);
                l.inside.push(self.inside(qx, qy));
                l.ix.push(self.i2x.sample(qx, qy));
                l.iy.push(self.i2y.sample(qx, qy));
                l.iz.push(self.i2.sample(qx, qy) - self.i1.data[i]);
                l.ixx.push(self.i2xx.sample(qx, qy));
                l.ixy.push(self.i2xy.sample(qx, qy));
                l.iyy.push(self.i2yy.sample(qx, qy));
                l.ixz.push(self.i2x.sample(qx, qy) - self.i1x.data[i]);
                l.iyz.push(self.i2y.sample(qx, qy) - self.i1y.data[i]);
            }
        }
        l
    }

    /// Solves for an increment `(du, dv)` of the linearized energy.
    fn solve_increment(&self, u: &Plane, v: &Plane, p: &VarParams) -> (Vec<f64>, Vec<f64>) {
        let (w, h) = (self.w, self.h);
        let n = w * h;
        let l = self.linearize(u, v);
        let mut du = vec![0.0; n];
        let mut dv = vec![0.0; n];
        let mut psi_d = vec![0.0; n];
        let mut psi_g = vec![0.0; n];
        let mut psi_s = vec![0.0; n];
        for sweep in 0..p.solver {
            if sweep % p.lag == 0 {
                for y in 0..h {
                    for x in 0..w {
                        let i = y * w + x;
                        let s2 = smooth_norm2_incr(u, v, &du, &dv, x, y);
                        psi_s[i] = self.alpha.data[i] * Self::psi_prime(s2, p.epsilon);
                        if !l.inside[i] {
                            (psi_d[i], psi_g[i]) = (0.0, 0.0);
                            continue;
                        }
                        let d = l.iz[i] + l.ix[i] * du[i] + l.iy[i] * dv[i];
                        psi_d[i] = Self::psi_prime(d * d, p.epsilon);
                        let gx = l.ixz[i] + l.ixx[i] * du[i] + l.ixy[i] * dv[i];
                        let gy = l.iyz[i] + l.ixy[i] * du[i] + l.iyy[i] * dv[i];
                        psi_g[i] = p.gamma * Self::psi_prime(gx * gx + gy * gy, p.epsilon);
                    }
                }
            }
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let a11 = psi_d[i] * l.ix[i] * l.ix[i] + psi_g[i] * (l.ixx[i] * l.ixx[i] + l.ixy[i] * l.ixy[i]);
                    let a12 = psi_d[i] * l.ix[i] * l.iy[i] + psi_g[i] * (l.ixx[i] * l.ixy[i] + l.ixy[i] * l.iyy[i]);
                    let a22 = psi_d[i] * l.iy[i] * l.iy[i] + psi_g[i] * (l.ixy[i] * l.ixy[i] + l.iyy[i] * l.iyy[i]);
                    let b1 = -(psi_d[i] * l.ix[i] * l.iz[i] + psi_g[i] * (l.ixx[i] * l.ixz[i] + l.ixy[i] * l.iyz[i]));
                    let b2 = -(psi_d[i] * l.iy[i] * l.iz[i] + psi_g[i] * (l.ixy[i] * l.ixz[i] + l.iyy[i] * l.iyz[i]));
                    let (mut wsum, mut su, mut sv) = (0.0, 0.0, 0.0);
                    let mut edge = |j: usize, wt: f64| {
                        wsum += wt;
                        su += wt * (u.data[j] + du[j] - u.data[i]);
                        sv += wt * (v.data[j] + dv[j] - v.data[i]);
                    };
                    if x + 1 < w {
                        edge(i + 1, psi_s[i]);
                    }
                    if x > 0 {
                        edge(i - 1, psi_s[i - 1]);
                    }
                    if y + 1 < h {
                        edge(i + w, psi_s[i]);
                    }
                    if y > 0 {
                        edge(i - w, psi_s[i - w]);
                    }
                    let du_new = (b1 - a12 * dv[i] + su) / (a11 + wsum);
                    du[i] += p.omega * (du_new - du[i]);
                    let dv_new = (b2 - a12 * du[i] + sv) / (a22 + wsum);
                    dv[i] += p.omega * (dv_new - dv[i]);
                }
            }
        }
        (du, dv)
    }

    /// Runs `iters` warp iterations in place and returns the energy trace.
    fn run(&self, u: &mut Plane, v: &mut Plane, iters: usize, p: &VarParams) -> LevelTrace {
        let mut e = self.energy(u, v, p);
        let mut energies = vec![e];
        for _ in 0..iters {
            let (du, dv) = self.solve_increment(u, v, p);
            let mut t = 1.0;
            for _ in 0..=p.max_backtracks {
                let cu = Plane::new(self.w, self.h, u.data.iter().zip(&du).map(|(a, d)| a + t * d).collect());
                let cv = Plane::new(self.w, self.h, v.data.iter().zip(&dv).map(|(a, d)| a + t * d).collect());
                let ce = self.energy(&cu, &cv, p);
                if ce <= e {
                    *u = cu;
                    *v = cv;
                    e = ce;
                    break;
                }
                t *= 0.5;
            }
            energies.push(e);
        }
        LevelTrace {
            width: self.w,
            height: self.h,
            energies,
        }
    }
}

/// `|∇u|² + |∇v|²` with forward differences, zero past the last row/column.
fn smooth_norm2(u: &Plane, v: &Plane, x: usize, y: usize) -> f64 {
    let w = u.width;
    let i = y * w + x;
    let mut s = 0.0;
    if x + 1 < w {
        s += (u.data[i + 1] - u.data[i]).powi(2) + (v.data[i + 1] - v.data[i]).powi(2);
    }
    if y + 1 < u.height {
        s += (u.data[i + w] - u.data[i]).powi(2) + (v.data[i + w] - v.data[i]).powi(2);
    }
    s
}

fn smooth_norm2_incr(u: &Plane, v: &Plane, du: &[f64], dv: &[f64], x: usize, y: usize) -> f64 {
    let w = u.width;
    let i = y * w + x;
    let uu = |j: usize| u.data[j] + du[j];
    let vv = |j: usize| v.data[j] + dv[j];
    let mut s = 0.0;
    if x + 1 < w {
        s += (uu(i + 1) - uu(i)).powi(2) + (vv(i + 1) - vv(i)).powi(2);
    }
    if y + 1 < u.height {
        s += (uu(i + w) - uu(i)).powi(2) + (vv(i + w) - vv(i)).powi(2);
    }
    s
}

/// Level sizes from the initial estimate up to full resolution, with the
/// warp iterations spent at each.
fn schedule(init: (usize, usize), full: (usize, usize), p: &VarParams) -> Vec<(usize, usize, usize)> {
    let (fw, fh) = (full.0 as f64, full.1 as f64);
    let mut sizes = vec![init];
    let mut s = init.0 as f64 / fw;
    loop {
        s /= p.pyramid_factor;
        let size = if s >= 0.5 {
            ((fw * 0.5).round() as usize, (fh * 0.5).round() as usize)
        } else {
            ((fw * s).round() as usize, (fh * s).round() as usize)
        };
        if size.0 > sizes.last().unwrap().0 {
            sizes.push(size);
        }
        if s >= 0.5 {
            break;
        }
    }
    let n = sizes.len();
    let (base, extra) = (p.coarse_iters / n, p.coarse_iters % n);
    let mut out: Vec<_> = sizes
        .into_iter()
        .enumerate()
        .map(|(k, (w, h))| (w, h, base + usize::from(k >= n - extra)))
        .collect();
    out.push((full.0, full.1, p.fullres_iters));
    out
}

/// Refines a quarter-resolution flow against the full-resolution pair and
/// returns the full-resolution result with the per-level energy traces.
pub fn refine_with_trace(
    flow_init: &FlowField,
    img1: &Image,
    img2: &Image,
    params: &VarParams,
    boundary: Option<&Plane>,
) -> Result<(FlowField, Vec<LevelTrace>)> {
    params.validate()?;
    let (w, h) = (img1.width(), img1.height());
    if (img2.width(), img2.height()) != (w, h) {
        return Err(CoreError::DimensionMismatch(w, h, img2.width(), img2.height()));
    }
    let (iw, ih) = (flow_init.width(), flow_init.height());
    if iw == 0 || ih == 0 || iw.abs_diff(w / 4) > 1 || ih.abs_diff(h / 4) > 1 {
        return Err(CoreError::DimensionMismatch(w / 4, h / 4, iw, ih));
    }
    let g1 = Plane::gray(img1);
    let g2 = Plane::gray(img2);
    let mut u = Plane::new(iw, ih, flow_init.u().to_vec());
    let mut v = Plane::new(iw, ih, flow_init.v().to_vec());
    let mut traces = Vec::new();
    for (lw, lh, iters) in schedule((iw, ih), (w, h), params) {
        if (u.width, u.height) != (lw, lh) {
            (u, v) = resize_flow(&u, &v, lw, lh);
        }
        let level = Level::new(&g1.resize_area(lw, lh), &g2.resize_area(lw, lh), alpha_map(boundary, lw, lh, params));
        traces.push(level.run(&mut u, &mut v, iters, params));
    }
    let flow = FlowField::from_parts(w, h, u.data, v.data, vec![true; w * h])?;
    Ok((flow, traces))
}

/// Boundary-modulated refinement of a quarter-resolution flow.
pub fn refine(flow_init: &FlowField, img1: &Image, img2: &Image, params: &VarParams) -> Result<FlowField> {
    let b = detect_boundaries(img1);
    Ok(refine_with_trace(flow_init, img1, img2, params, Some(&b))?.0)
}

/// The same solver with a spatially constant smoothness weight.
pub fn refine_unmodulated(flow_init: &FlowField, img1: &Image, img2: &Image, params: &VarParams) -> Result<FlowField> {
    Ok(refine_with_trace(flow_init, img1, img2, params, None)?.0)
}
