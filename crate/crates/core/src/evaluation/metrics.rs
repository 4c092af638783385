use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::mri::ComplexImage;
use crate::real::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsnrMode {
    /// `20 log10(max|gt| / RMSE)`.
    #[default]
    Normalized,
    /// `20 log10(max(gt) / ||rec - gt||_2)`, without the `1/sqrt(N)`.
    Literal,
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    ensure!(a.len() == b.len(), Dimension, "images hold {} and {} pixels", a.len(), b.len());
    ensure!(!a.is_empty(), Contract, "empty image");
    Ok(())
}

/// PSNR in dB of real images (typically magnitudes). Identical inputs give `f64::INFINITY`.
pub fn psnr(x_rec: &[f64], x_gt: &[f64], mode: PsnrMode) -> Result<f64> {
    same_len(x_rec, x_gt)?;
    ensure!(x_gt.iter().any(|&v| v != 0.0), Contract, "ground truth is identically zero");
    let sq: f64 = x_rec.iter().zip(x_gt).map(|(a, b)| (a - b) * (a - b)).sum();
    if sq == 0.0 {
        return Ok(f64::INFINITY);
    }
    let (peak, err) = match mode {
        PsnrMode::Normalized => (x_gt.iter().fold(0.0f64, |m, v| m.max(v.abs())), (sq / x_gt.len() as f64).sqrt()),
        PsnrMode::Literal => (x_gt.iter().copied().fold(f64::NEG_INFINITY, f64::max), sq.sqrt()),
    };
    Ok(20.0 * (peak / err).log10())
}

/// [`psnr`] on the magnitudes of two complex images.
pub fn psnr_images<T: Real>(x_rec: &ComplexImage<T>, x_gt: &ComplexImage<T>, mode: PsnrMode) -> Result<f64> {
    psnr(&x_rec.magnitude(), &x_gt.magnitude(), mode)
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut t = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in t.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = t.iter().sum();
    t.iter_mut().for_each(|v| *v /= s);
    t
}

/// Valid-mode separable filtering of a `h x w` image.
fn filter(img: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().enumerate().map(|(k, t)| t * img[r * w + c + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().enumerate().map(|(k, t)| t * rows[(r + k) * ow + c]).sum();
        }
    }
    out
}

/// Mean local SSIM with dynamic range `max|x_gt|`.
pub fn ssim(x_rec: &[f64], x_gt: &[f64], height: usize, width: usize) -> Result<f64> {
    let range = x_gt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ssim_with_range(x_rec, x_gt, height, width, range)
}

/// Mean over every fully-contained 11x11 Gaussian window (no padding).
pub fn ssim_with_range(x: &[f64], y: &[f64], height: usize, width: usize, range: f64) -> Result<f64> {
    same_len(x, y)?;
    ensure!(x.len() == height * width, Dimension, "{} pixels for a {height}x{width} image", x.len());
    ensure!(
        height >= SSIM_WINDOW && width >= SSIM_WINDOW,
        Contract,
        "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {height}x{width}"
    );
    ensure!(range > 0.0 && range.is_finite(), Contract, "SSIM dynamic range must be positive, got {range}");
    let taps = gaussian_taps();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mx = filter(x, height, width, &taps);
    let my = filter(y, height, width, &taps);
    let mxx = filter(&prod(x, x), height, width, &taps);
    let myy = filter(&prod(y, y), height, width, &taps);
    let mxy = filter(&prod(x, y), height, width, &taps);
    let c1 = (K1 * range).powi(2);
    let c2 = (K2 * range).powi(2);
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// [`ssim`] on the magnitudes of two complex images.
pub fn ssim_images<T: Real>(x_rec: &ComplexImage<T>, x_gt: &ComplexImage<T>) -> Result<f64> {
    ensure!(
        x_rec.height() == x_gt.height() && x_rec.width() == x_gt.width(),
        Dimension,
        "image sizes differ"
    );
    ssim(&x_rec.magnitude(), &x_gt.magnitude(), x_gt.height(), x_gt.width())
}
