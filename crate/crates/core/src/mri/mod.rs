//! Synthetic data and the parallel-imaging measurement model `b = A x + n`.

mod coils;
pub mod fft;
mod mask;
mod operator;
mod phantom;

use num_complex::Complex;

use crate::error::{ensure, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub use coils::{make_coils, CoilMaps};
pub use mask::{make_mask, MaskKind, MaskParams, SamplingMask};
pub use operator::{MriOperator, NoiseTable};
pub use phantom::{make_phantom, tissue_map, Contrast, FieldStrength, PhantomSpec, Tissue};

/// Row-major complex image.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage<T: Real> {
    height: usize,
    width: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexImage<T> {
    pub fn new(height: usize, width: usize, data: Vec<Complex<T>>) -> Result<Self> {
        ensure!(height >= 8 && width >= 8, Contract, "image must be at least 8x8, got {height}x{width}");
        ensure!(
            data.len() == height * width,
            Dimension,
            "{}x{} image needs {} values, got {}",
            height,
            width,
            height * width,
            data.len()
        );
        ensure!(
            data.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            Numeric,
            "image contains non-finite values"
        );
        Ok(Self { height, width, data })
    }

    pub(crate) fn new_unchecked(height: usize, width: usize, data: Vec<Complex<T>>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::new_unchecked(height, width, vec![Complex::new(T::zero(), T::zero()); height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm().as_f64()).collect()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    /// `Re <self, other>` (conjugate-linear in `self`).
    pub fn re_dot(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.re * b.re + a.im * b.im).as_f64())
            .sum()
    }

    /// Full complex inner product `<self, other> = sum conj(self) * other`.
    pub fn inner(&self, other: &Self) -> Complex<f64> {
        self.data.iter().zip(&other.data).fold(Complex::new(0.0, 0.0), |acc, (a, b)| {
            let p = a.conj() * *b;
            acc + Complex::new(p.re.as_f64(), p.im.as_f64())
        })
    }

    pub fn norm(&self) -> f64 {
        self.re_dot(self).sqrt()
    }

    /// Two-channel real tensor `[2, H, W]` (real plane then imaginary plane).
    pub fn to_tensor(&self) -> Tensor<T> {
        let n = self.data.len();
        let mut d = Vec::with_capacity(2 * n);
        d.extend(self.data.iter().map(|z| z.re));
        d.extend(self.data.iter().map(|z| z.im));
        Tensor::new(vec![2, self.height, self.width], d).expect("consistent shape")
    }

    /// Inverse of [`ComplexImage::to_tensor`]; accepts `[2,H,W]` or `[1,2,H,W]`.
    pub fn from_tensor(t: &Tensor<T>) -> Result<Self> {
        let s = t.shape();
        let (h, w) = match s {
            [2, h, w] | [1, 2, h, w] => (*h, *w),
            _ => {
                return Err(crate::Error::Dimension(format!(
                    "expected a [2,H,W] tensor, got {s:?}"
                )))
            }
        };
        let n = h * w;
        let (re, im) = t.data().split_at(n);
        Self::new(h, w, re.iter().zip(im).map(|(&a, &b)| Complex::new(a, b)).collect())
    }

    pub fn cast<U: Real>(&self) -> ComplexImage<U> {
        ComplexImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|z| Complex::new(U::lit(z.re.as_f64()), U::lit(z.im.as_f64()))).collect(),
        }
    }
}

/// Multi-coil centred k-space; entries outside the mask are exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpace<T: Real> {
    num_coils: usize,
    height: usize,
    width: usize,
    data: Vec<Complex<T>>,
    mask: SamplingMask,
}

impl<T: Real> KSpace<T> {
    /// Builds k-space from raw coil grids, zeroing every unsampled entry.
    pub fn new(num_coils: usize, height: usize, width: usize, mut data: Vec<Complex<T>>, mask: SamplingMask) -> Result<Self> {
        ensure!(
            data.len() == num_coils * height * width,
            Dimension,
            "k-space needs {} values, got {}",
            num_coils * height * width,
            data.len()
        );
        ensure!(
            mask.height() == height && mask.width() == width,
            Dimension,
            "mask {}x{} does not match k-space {}x{}",
            mask.height(),
            mask.width(),
            height,
            width
        );
        for (i, v) in data.iter_mut().enumerate() {
            if !mask.is_kept(i % width) {
                *v = Complex::new(T::zero(), T::zero());
            }
        }
        Ok(Self { num_coils, height, width, data, mask })
    }

    pub fn num_coils(&self) -> usize {
        self.num_coils
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn coil(&self, c: usize) -> &[Complex<T>] {
        &self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }

    pub(crate) fn coil_mut(&mut self, c: usize) -> &mut [Complex<T>] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// `Re <self, other>` over all coils.
    pub fn re_dot(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.re * b.re + a.im * b.im).as_f64())
            .sum()
    }

    pub fn inner(&self, other: &Self) -> Complex<f64> {
        self.data.iter().zip(&other.data).fold(Complex::new(0.0, 0.0), |acc, (a, b)| {
            let p = a.conj() * *b;
            acc + Complex::new(p.re.as_f64(), p.im.as_f64())
        })
    }

    pub fn norm(&self) -> f64 {
        self.re_dot(self).sqrt()
    }

    /// Scales every entry; used for linearity checks.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            data: self.data.iter().map(|v| *v * factor).collect(),
            ..self.clone()
        }
    }

    pub fn cast<U: Real>(&self) -> KSpace<U> {
        KSpace {
            num_coils: self.num_coils,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|z| Complex::new(U::lit(z.re.as_f64()), U::lit(z.im.as_f64()))).collect(),
            mask: self.mask.clone(),
        }
    }
}
