//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64 as C;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use modl::autodiff::{Graph, Var};
use modl::dc::{DataConsistency, NormalNode};
use modl::mri::{CoilMaps, ComplexImage, MriOperator};
use modl::Result;

pub fn rand_c(r: &mut ChaCha8Rng) -> C {
    C::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

pub fn rand_image(r: &mut ChaCha8Rng, h: usize, w: usize) -> ComplexImage<f64> {
    ComplexImage::new(h, w, (0..h * w).map(|_| rand_c(r)).collect()).unwrap()
}

/// Single coil of unit magnitude and random phase (satisfies the sum-of-squares normalisation).
pub fn phase_coil(r: &mut ChaCha8Rng, h: usize, w: usize) -> CoilMaps<f64> {
    let map = (0..h * w).map(|_| C::from_polar(1.0, r.random_range(0.0..TAU))).collect();
    CoilMaps::from_maps(vec![ComplexImage::new(h, w, map).unwrap()]).unwrap()
}

/// Rows of `A` for one coil, built from an explicit DFT sum rather than an FFT.
/// Row index is the stored (centred) k-space position; unsampled columns give zero rows.
pub fn dense_forward(coil: &[C], kept: &[bool], h: usize, w: usize) -> Vec<Vec<C>> {
    let n = h * w;
    let mut a = vec![vec![C::new(0.0, 0.0); n]; n];
    let norm = 1.0 / (n as f64).sqrt();
    for cy in 0..h {
        // Centred position cy holds frequency (cy - h/2) mod h.
        let ky = (cy + h - h / 2) % h;
        for cx in 0..w {
            if !kept[cx] {
                continue;
            }
            let kx = (cx + w - w / 2) % w;
            for y in 0..h {
                for x in 0..w {
                    let phase = -TAU * ((ky * y) as f64 / h as f64 + (kx * x) as f64 / w as f64);
                    a[cy * w + cx][y * w + x] = C::from_polar(norm, phase) * coil[y * w + x];
                }
            }
        }
    }
    a
}

/// `A^H A + lambda I` from dense rows.
pub fn dense_system(a: &[Vec<C>], lambda: f64) -> Vec<Vec<C>> {
    let n = a[0].len();
    let mut m = vec![vec![C::new(0.0, 0.0); n]; n];
    for row in a {
        for i in 0..n {
            let ci = row[i].conj();
            if ci == C::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                m[i][j] += ci * row[j];
            }
        }
    }
    for (i, r) in m.iter_mut().enumerate() {
        r[i] += lambda;
    }
    m
}

pub fn mat_vec_h(a: &[Vec<C>], v: &[C]) -> Vec<C> {
    let n = a[0].len();
    let mut out = vec![C::new(0.0, 0.0); n];
    for (row, vi) in a.iter().zip(v) {
        for j in 0..n {
            out[j] += row[j].conj() * vi;
        }
    }
    out
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut m: Vec<Vec<C>>, mut b: Vec<C>) -> Vec<C> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].norm().total_cmp(&m[j][k].norm())).unwrap();
        m.swap(k, p);
        b.swap(k, p);
        let d = m[k][k];
        for i in k + 1..n {
            let f = m[i][k] / d;
            if f == C::new(0.0, 0.0) {
                continue;
            }
            let pivot_row = m[k].clone();
            for (dst, &src) in m[i][k..].iter_mut().zip(&pivot_row[k..]) {
                *dst -= f * src;
            }
            let t = b[k];
            b[i] -= f * t;
        }
    }
    let mut x = vec![C::new(0.0, 0.0); n];
    for k in (0..n).rev() {
        let s: C = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / m[k][k];
    }
    x
}

pub fn rel_err(a: &[C], b: &[C]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Conjugate gradients for `(A^H A + lambda I) x = A^H b + lambda z`, written out step by step
/// on the tape so reverse mode differentiates every iteration. `z` is `[2,H,W]`, `lambda` a scalar.
/// Stops early only once the residual is numerically zero.
pub fn unrolled_cg(
    g: &mut Graph<f64>,
    problem: &Arc<DataConsistency<f64>>,
    z: Var,
    lambda: Var,
    iterations: usize,
) -> Result<(Var, usize)> {
    let op: MriOperator<f64> = problem.operator().clone();
    let system = |g: &mut Graph<f64>, v: Var| -> Result<Var> {
        let n = g.custom(&[v], Box::new(NormalNode { op: op.clone() }))?;
        let l = g.mul_scalar(v, lambda)?;
        g.add(n, l)
    };
    let atb = g.constant(problem.atb().to_tensor().reshape(g.value(z).shape())?);
    let lz = g.mul_scalar(z, lambda)?;
    let rhs = g.add(atb, lz)?;
    let mut x = z;
    let ax = system(g, x)?;
    let mut r = g.sub(rhs, ax)?;
    let mut p = r;
    let mut rs = g.dot(r, r)?;
    let mut done = 0;
    for _ in 0..iterations {
        if g.value(rs).item() < 1e-28 {
            break;
        }
        let ap = system(g, p)?;
        let pap = g.dot(p, ap)?;
        let alpha = g.div_scalar(rs, pap)?;
        let step = g.mul_scalar(p, alpha)?;
        x = g.add(x, step)?;
        let dr = g.mul_scalar(ap, alpha)?;
        r = g.sub(r, dr)?;
        let rs_new = g.dot(r, r)?;
        let beta = g.div_scalar(rs_new, rs)?;
        let bp = g.mul_scalar(p, beta)?;
        p = g.add(r, bp)?;
        rs = rs_new;
        done += 1;
    }
    Ok((x, done))
}

/// Direct per-pixel SSIM over valid 11x11 Gaussian windows (sigma 1.5), constants from `range`.
pub fn reference_ssim(a: &[f64], b: &[f64], h: usize, w: usize, range: f64) -> f64 {
    let (k, sigma) = (11usize, 1.5f64);
    let half = (k / 2) as f64;
    let mut win = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let (di, dj) = (i as f64 - half, j as f64 - half);
            win[i * k + j] = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = win.iter().sum();
    win.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
    let mut acc = 0.0;
    let mut count = 0;
    for y in 0..=h - k {
        for x in 0..=w - k {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let wt = win[i * k + j];
                    let (pa, pb) = (a[(y + i) * w + x + j], b[(y + i) * w + x + j]);
                    ma += wt * pa;
                    mb += wt * pb;
                    saa += wt * pa * pa;
                    sbb += wt * pb * pb;
                    sab += wt * pa * pb;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}
