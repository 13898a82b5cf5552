//! RMSE and SSIM as reported in the metric tables.

use crate::error::{Error, Result};
use crate::numerics::{ComplexGrid2D, Grid2D, Unit};
use crate::pair::Image;

/// CT display window, HU.
pub const LIVER_WINDOW_HU: (f64, f64) = (-160.0, 240.0);

/// `√(mean((a − b)²))`, in HU when the grids are in HU/1000.
pub fn rmse(a: &Grid2D, b: &Grid2D) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Shape("rmse of grids with different shape".into()));
    }
    let raw = rmse_slices(a.data(), b.data())?;
    Ok(match a.unit() {
        Unit::HuPerThousand => raw * 1000.0,
        _ => raw,
    })
}

/// Plain root-mean-square difference.
pub fn rmse_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("rmse over {} and {} samples", a.len(), b.len())));
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((s / a.len() as f64).sqrt())
}

/// Window and stabilizing constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl SsimConfig {
    pub fn describe(&self) -> String {
        format!(
            "gaussian window {w}x{w}, sigma {s}, K1 {k1}, K2 {k2}, valid region mean",
            w = self.window,
            s = self.sigma,
            k1 = self.k1,
            k2 = self.k2
        )
    }

    fn kernel(&self) -> Vec<f64> {
        let half = (self.window as f64 - 1.0) / 2.0;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }
}

/// Separable valid-mode filtering with a 1-D kernel on both axes.
fn filter_valid(data: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            let src = &data[r * w + c..r * w + c + n];
            rows[r * ow + c] = src.iter().zip(k).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..n).map(|i| rows[(r + i) * ow + c] * k[i]).sum();
        }
    }
    out
}

/// Mean local SSIM over the valid region with dynamic range `l`, ×100.
pub fn ssim(a: &Grid2D, b: &Grid2D, cfg: &SsimConfig, l: f64) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Shape("ssim of grids with different shape".into()));
    }
    let (h, w) = (a.height(), a.width());
    if cfg.window > h || cfg.window > w || cfg.window == 0 {
        return Err(Error::InvalidArgument(format!(
            "ssim window {} larger than {h}x{w} image",
            cfg.window
        )));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidArgument(format!("ssim dynamic range {l}")));
    }
    let k = cfg.kernel();
    let (x, y) = (a.data(), b.data());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let mx = filter_valid(x, h, w, &k);
    let my = filter_valid(y, h, w, &k);
    let mxx = filter_valid(&xx, h, w, &k);
    let myy = filter_valid(&yy, h, w, &k);
    let mxy = filter_valid(&xy, h, w, &k);
    let c1 = (cfg.k1 * l).powi(2);
    let c2 = (cfg.k2 * l).powi(2);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = mxx[i] - ux * ux;
        let vy = myy[i] - uy * uy;
        let cxy = mxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(100.0 * total / mx.len() as f64)
}

/// Clips HU/1000 images to the liver window and shifts them to [0, 400].
pub fn to_liver_window(g: &Grid2D) -> Grid2D {
    let (lo, hi) = LIVER_WINDOW_HU;
    g.map(|v| (v * 1000.0).clamp(lo, hi) - lo).with_unit(Unit::Dimensionless)
}

/// CT SSIM inside the liver window, range 400.
pub fn ssim_ct(a: &Grid2D, reference: &Grid2D, cfg: &SsimConfig) -> Result<f64> {
    let (lo, hi) = LIVER_WINDOW_HU;
    ssim(&to_liver_window(a), &to_liver_window(reference), cfg, hi - lo)
}

/// MR SSIM on magnitudes, range = peak magnitude of the reference.
pub fn ssim_mr(a: &ComplexGrid2D, reference: &ComplexGrid2D, cfg: &SsimConfig) -> Result<f64> {
    let ma = a.magnitude();
    let mr = reference.magnitude();
    let peak = mr.data().iter().cloned().fold(0.0, f64::max);
    ssim(&ma, &mr, cfg, peak)
}

/// Reported RMSE: HU for CT, ×10⁻³ units over both channels for MR.
pub fn report_rmse(a: &Image, reference: &Image) -> Result<f64> {
    match (a, reference) {
        (Image::Real(x), Image::Real(y)) => rmse(x, y),
        (Image::Complex(x), Image::Complex(y)) => Ok(1000.0 * rmse_slices(&x.to_planes(), &y.to_planes())?),
        _ => Err(Error::Shape("rmse between real and complex images".into())),
    }
}

/// Reported SSIM (percent) under the modality's range convention.
pub fn report_ssim(a: &Image, reference: &Image, cfg: &SsimConfig) -> Result<f64> {
    match (a, reference) {
        (Image::Real(x), Image::Real(y)) => ssim_ct(x, y, cfg),
        (Image::Complex(x), Image::Complex(y)) => ssim_mr(x, y, cfg),
        _ => Err(Error::Shape("ssim between real and complex images".into())),
    }
}
