//! The multi-coil Cartesian measurement operator and its adjoint.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::fft::{centered_index, Fft2};
use super::{CoilMaps, ComplexImage, KSpace, SamplingMask};
use crate::error::{ensure, Result};
use crate::mri::FieldStrength;
use crate::real::Real;

/// Coil maps plus sampling mask; realises `A x = M F (s_c x)` for every coil `c`.
#[derive(Clone, Debug)]
pub struct MriOperator<T: Real> {
    coils: CoilMaps<T>,
    mask: SamplingMask,
    /// Mask indexed by unshifted DFT column.
    raw_kept: Vec<bool>,
    fft: Fft2<T>,
}

impl<T: Real> MriOperator<T> {
    pub fn new(coils: CoilMaps<T>, mask: SamplingMask) -> Result<Self> {
        ensure!(
            coils.height() == mask.height() && coils.width() == mask.width(),
            Dimension,
            "coils are {}x{} but mask is {}x{}",
            coils.height(),
            coils.width(),
            mask.height(),
            mask.width()
        );
        let w = mask.width();
        let raw_kept = (0..w).map(|j| mask.is_kept(centered_index(j, w))).collect();
        let fft = Fft2::new(coils.height(), w);
        Ok(Self { coils, mask, raw_kept, fft })
    }

    pub fn coils(&self) -> &CoilMaps<T> {
        &self.coils
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn height(&self) -> usize {
        self.coils.height()
    }

    pub fn width(&self) -> usize {
        self.coils.width()
    }

    fn check_image(&self, x: &ComplexImage<T>) -> Result<()> {
        ensure!(
            x.height() == self.height() && x.width() == self.width(),
            Dimension,
            "image is {}x{}, operator expects {}x{}",
            x.height(),
            x.width(),
            self.height(),
            self.width()
        );
        Ok(())
    }

    /// `A x`: coil weighting, unitary 2-D DFT (stored centred), then masking.
    pub fn forward(&self, x: &ComplexImage<T>) -> Result<KSpace<T>> {
        self.check_image(x)?;
        let (h, w) = (self.height(), self.width());
        let zero = Complex::new(T::zero(), T::zero());
        let mut out = vec![zero; self.coils.num_coils() * h * w];
        let mut buf = vec![zero; h * w];
        for (c, s) in self.coils.maps().iter().enumerate() {
            buf.iter_mut()
                .zip(s.data().iter().zip(x.data()))
                .for_each(|(b, (&sv, &xv))| *b = sv * xv);
            self.fft.forward(&mut buf);
            let grid = &mut out[c * h * w..(c + 1) * h * w];
            for ky in 0..h {
                let cy = centered_index(ky, h);
                for kx in 0..w {
                    let cx = centered_index(kx, w);
                    grid[cy * w + cx] = if self.mask.is_kept(cx) { buf[ky * w + kx] } else { zero };
                }
            }
        }
        KSpace::new(self.coils.num_coils(), h, w, out, self.mask.clone())
    }

    /// `A^H b`: masking, inverse unitary DFT, conjugate coil weighting, coil sum.
    pub fn adjoint(&self, b: &KSpace<T>) -> Result<ComplexImage<T>> {
        ensure!(
            b.num_coils() == self.coils.num_coils() && b.height() == self.height() && b.width() == self.width(),
            Dimension,
            "k-space {}x{}x{} incompatible with operator {}x{}x{}",
            b.num_coils(),
            b.height(),
            b.width(),
            self.coils.num_coils(),
            self.height(),
            self.width()
        );
        let (h, w) = (self.height(), self.width());
        let zero = Complex::new(T::zero(), T::zero());
        let mut acc = vec![zero; h * w];
        let mut buf = vec![zero; h * w];
        for (c, s) in self.coils.maps().iter().enumerate() {
            let grid = b.coil(c);
            for ky in 0..h {
                let cy = centered_index(ky, h);
                for kx in 0..w {
                    let cx = centered_index(kx, w);
                    buf[ky * w + kx] = if self.mask.is_kept(cx) { grid[cy * w + cx] } else { zero };
                }
            }
            self.fft.inverse(&mut buf);
            acc.iter_mut()
                .zip(s.data().iter().zip(&buf))
                .for_each(|(a, (&sv, &bv))| *a = *a + sv.conj() * bv);
        }
        Ok(ComplexImage::new_unchecked(h, w, acc))
    }

    /// `A^H A x`. The mask acts on whole phase-encode columns, so the column
    /// transforms cancel and only row transforms are needed.
    pub fn normal(&self, x: &[Complex<T>], out: &mut [Complex<T>]) {
        let (h, w) = (self.height(), self.width());
        debug_assert!(x.len() == h * w && out.len() == h * w);
        let zero = Complex::new(T::zero(), T::zero());
        out.fill(zero);
        let mut buf = vec![zero; h * w];
        for s in self.coils.maps() {
            buf.iter_mut()
                .zip(s.data().iter().zip(x))
                .for_each(|(b, (&sv, &xv))| *b = sv * xv);
            self.fft.rows(&mut buf, false);
            for row in buf.chunks_mut(w) {
                row.iter_mut().zip(&self.raw_kept).for_each(|(v, &k)| {
                    if !k {
                        *v = zero;
                    }
                });
            }
            self.fft.rows(&mut buf, true);
            out.iter_mut()
                .zip(s.data().iter().zip(&buf))
                .for_each(|(o, (&sv, &bv))| *o = *o + sv.conj() * bv);
        }
    }

    /// Measurements of `x` plus i.i.d. complex Gaussian noise on sampled entries only.
    pub fn simulate(&self, x: &ComplexImage<T>, noise_sigma: f64, seed: u64) -> Result<KSpace<T>> {
        ensure!(noise_sigma >= 0.0 && noise_sigma.is_finite(), Contract, "noise_sigma must be >= 0");
        let mut k = self.forward(x)?;
        if noise_sigma == 0.0 {
            return Ok(k);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
        let (h, w) = (self.height(), self.width());
        for c in 0..k.num_coils() {
            let grid = k.coil_mut(c);
            for y in 0..h {
                for x in 0..w {
                    if self.mask.is_kept(x) {
                        let v = &mut grid[y * w + x];
                        v.re = v.re + T::lit(normal.sample(&mut rng));
                        v.im = v.im + T::lit(normal.sample(&mut rng));
                    }
                }
            }
        }
        Ok(k)
    }

    pub fn cast<U: Real>(&self) -> MriOperator<U> {
        MriOperator::new(self.coils.cast(), self.mask.clone()).expect("shapes already validated")
    }
}

/// Maps field strength to measurement noise level: `sigma_base` at 3T, scaled at 1.5T.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseTable {
    pub sigma_base: f64,
    pub low_field_factor: f64,
}

impl Default for NoiseTable {
    fn default() -> Self {
        Self {
            sigma_base: 0.01,
            low_field_factor: 2.0,
        }
    }
}

impl NoiseTable {
    pub fn sigma(&self, field: FieldStrength) -> f64 {
        match field {
            FieldStrength::T3 => self.sigma_base,
            FieldStrength::T1_5 => self.sigma_base * self.low_field_factor,
        }
    }
}
