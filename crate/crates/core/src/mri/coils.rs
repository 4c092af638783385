use num_complex::Complex;

use super::ComplexImage;
use crate::error::{ensure, Error, Result};
use crate::real::Real;

/// Coil sensitivity maps normalised so that `sum_c |s_c|^2 == 1` at every pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilMaps<T: Real> {
    height: usize,
    width: usize,
    maps: Vec<ComplexImage<T>>,
}

impl<T: Real> CoilMaps<T> {
    /// Wraps maps without renormalising them; they must already satisfy the normalisation.
    pub fn from_maps(maps: Vec<ComplexImage<T>>) -> Result<Self> {
        ensure!(!maps.is_empty(), Contract, "at least one coil is required");
        let (h, w) = (maps[0].height(), maps[0].width());
        ensure!(
            maps.iter().all(|m| m.height() == h && m.width() == w),
            Dimension,
            "coil maps must share one size"
        );
        let out = Self { height: h, width: w, maps };
        let dev = out.normalization_error();
        if dev > 1e-4 {
            return Err(Error::Contract(format!("coil maps deviate from unit sum-of-squares by {dev:e}")));
        }
        Ok(out)
    }

    pub fn num_coils(&self) -> usize {
        self.maps.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn maps(&self) -> &[ComplexImage<T>] {
        &self.maps
    }

    /// Largest per-pixel deviation of `sum_c |s_c|^2` from one.
    pub fn normalization_error(&self) -> f64 {
        (0..self.height * self.width)
            .map(|i| {
                let s: f64 = self.maps.iter().map(|m| m.data()[i].norm_sqr().as_f64()).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn cast<U: Real>(&self) -> CoilMaps<U> {
        CoilMaps {
            height: self.height,
            width: self.width,
            maps: self.maps.iter().map(|m| m.cast()).collect(),
        }
    }
}

/// Smooth simulated coil profiles: Gaussian magnitudes centred on a ring around
/// the field of view, each with its own linear phase ramp.
pub fn make_coils<T: Real>(num_coils: usize, height: usize, width: usize) -> Result<CoilMaps<T>> {
    ensure!(num_coils >= 1, Contract, "num_coils must be at least 1");
    ensure!(height >= 1 && width >= 1, Contract, "empty coil grid");
    let n = height * width;
    let mut raw = vec![vec![Complex::new(0.0f64, 0.0); n]; num_coils];
    for (c, map) in raw.iter_mut().enumerate() {
        let t = c as f64 / num_coils as f64 * std::f64::consts::TAU + 0.3;
        let (cx, cy) = (1.1 * t.cos(), 1.1 * t.sin());
        let sigma = 0.9;
        let (kx, ky) = (0.6 * (t * 2.0).cos(), 0.6 * (t * 3.0).sin());
        for (i, v) in map.iter_mut().enumerate() {
            let u = ((i % width) as f64 + 0.5) / width as f64 * 2.0 - 1.0;
            let w = ((i / width) as f64 + 0.5) / height as f64 * 2.0 - 1.0;
            let d2 = (u - cx).powi(2) + (w - cy).powi(2);
            *v = Complex::from_polar((-d2 / (2.0 * sigma * sigma)).exp(), kx * u + ky * w + c as f64);
        }
    }
    for i in 0..n {
        let rss: f64 = raw.iter().map(|m| m[i].norm_sqr()).sum::<f64>().sqrt();
        raw.iter_mut().for_each(|m| m[i] /= rss);
    }
    let maps = raw
        .into_iter()
        .map(|m| {
            let data = m.into_iter().map(|z| Complex::new(T::lit(z.re), T::lit(z.im))).collect();
            ComplexImage::new_unchecked(height, width, data)
        })
        .collect();
    Ok(CoilMaps { height, width, maps })
}
