//! Orthonormal 2-D DFT with cached plans.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::real::Real;

/// Unitary 2-D DFT on row-major `h x w` grids (`1/sqrt(hw)` in both directions).
#[derive(Clone)]
pub struct Fft2<T: Real> {
    h: usize,
    w: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.h, self.w)
    }
}

impl<T: Real> Fft2<T> {
    pub fn new(h: usize, w: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            h,
            w,
            row_fwd: planner.plan_fft_forward(w),
            row_inv: planner.plan_fft_inverse(w),
            col_fwd: planner.plan_fft_forward(h),
            col_inv: planner.plan_fft_inverse(h),
        }
    }

    fn scale_all(buf: &mut [Complex<T>], n: usize) {
        let s = T::one() / T::lit(n as f64).sqrt();
        buf.iter_mut().for_each(|v| *v = *v * s);
    }

    /// Unitary 1-D transform of every row (the phase-encode axis).
    pub fn rows(&self, buf: &mut [Complex<T>], inverse: bool) {
        let plan = if inverse { &self.row_inv } else { &self.row_fwd };
        plan.process(buf);
        Self::scale_all(buf, self.w);
    }

    fn cols(&self, buf: &mut [Complex<T>], inverse: bool) {
        let (h, w) = (self.h, self.w);
        let mut t = vec![Complex::new(T::zero(), T::zero()); h * w];
        for y in 0..h {
            for x in 0..w {
                t[x * h + y] = buf[y * w + x];
            }
        }
        let plan = if inverse { &self.col_inv } else { &self.col_fwd };
        plan.process(&mut t);
        let s = T::one() / T::lit(h as f64).sqrt();
        for y in 0..h {
            for x in 0..w {
                buf[y * w + x] = t[x * h + y] * s;
            }
        }
    }

    pub fn forward(&self, buf: &mut [Complex<T>]) {
        self.rows(buf, false);
        self.cols(buf, false);
    }

    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        self.cols(buf, true);
        self.rows(buf, true);
    }
}

/// Maps a DFT frequency index to its position in the centred layout.
pub fn centered_index(i: usize, n: usize) -> usize {
    (i + n / 2) % n
}

/// Inverse of [`centered_index`].
pub fn uncentered_index(c: usize, n: usize) -> usize {
    (c + n - n / 2) % n
}
