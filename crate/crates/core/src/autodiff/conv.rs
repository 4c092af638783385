//! 3x3, stride 1, zero-padding 1 convolution kernels via im2col + GEMM.

use crate::real::Real;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.cin * 9
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }
}

/// Unfolds one `[cin, h, w]` image into a `[cin*9, h*w]` patch matrix.
pub(crate) fn im2col<T: Real>(img: &[T], g: &ConvGeom, col: &mut [T]) {
    let (h, w, hw) = (g.h, g.w, g.hw());
    for ci in 0..g.cin {
        let plane = &img[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image gradient.
pub(crate) fn col2im_add<T: Real>(col: &[T], g: &ConvGeom, img: &mut [T]) {
    let (h, w, hw) = (g.h, g.w, g.hw());
    for ci in 0..g.cin {
        let plane = &mut img[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1]
                            .iter_mut()
                            .zip(&src[1..])
                            .for_each(|(d, &s)| *d = *d + s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s),
                        _ => dst[1..]
                            .iter_mut()
                            .zip(&src[..w - 1])
                            .for_each(|(d, &s)| *d = *d + s),
                    }
                }
            }
        }
    }
}

/// Forward pass. Returns the output and the saved patch matrices for every batch element.
pub(crate) fn forward<T: Real>(input: &[T], kernel: &[T], bias: &[T], g: &ConvGeom) -> (Vec<T>, Vec<T>) {
    let (rows, hw) = (g.col_rows(), g.hw());
    let mut cols = vec![T::zero(); g.n * rows * hw];
    let mut out = vec![T::zero(); g.n * g.cout * hw];
    for s in 0..g.n {
        let col = &mut cols[s * rows * hw..(s + 1) * rows * hw];
        im2col(&input[s * g.cin * hw..(s + 1) * g.cin * hw], g, col);
        let o = &mut out[s * g.cout * hw..(s + 1) * g.cout * hw];
        for (co, chunk) in o.chunks_mut(hw).enumerate() {
            chunk.fill(bias[co]);
        }
        T::gemm(
            g.cout,
            rows,
            hw,
            T::one(),
            kernel,
            rows as isize,
            1,
            col,
            hw as isize,
            1,
            T::one(),
            o,
            hw as isize,
            1,
        );
    }
    (out, cols)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub kernel: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

pub(crate) fn backward<T: Real>(
    grad_out: &[T],
    kernel: &[T],
    cols: &[T],
    g: &ConvGeom,
    need: [bool; 3],
) -> ConvGrads<T> {
    let (rows, hw) = (g.col_rows(), g.hw());
    let mut gin = need[0].then(|| vec![T::zero(); g.n * g.cin * hw]);
    let mut gk = need[1].then(|| vec![T::zero(); g.cout * rows]);
    let mut gb = need[2].then(|| vec![T::zero(); g.cout]);
    let mut dcol = if need[0] { vec![T::zero(); rows * hw] } else { Vec::new() };
    for s in 0..g.n {
        let go = &grad_out[s * g.cout * hw..(s + 1) * g.cout * hw];
        let col = &cols[s * rows * hw..(s + 1) * rows * hw];
        if let Some(gk) = gk.as_mut() {
            // dK += dOut * col^T
            T::gemm(
                g.cout,
                hw,
                rows,
                T::one(),
                go,
                hw as isize,
                1,
                col,
                1,
                hw as isize,
                T::one(),
                gk,
                rows as isize,
                1,
            );
        }
        if let Some(gb) = gb.as_mut() {
            for (co, chunk) in go.chunks(hw).enumerate() {
                gb[co] = chunk.iter().fold(gb[co], |a, &b| a + b);
            }
        }
        if let Some(gin) = gin.as_mut() {
            // dCol = K^T * dOut
            T::gemm(
                rows,
                g.cout,
                hw,
                T::one(),
                kernel,
                1,
                rows as isize,
                go,
                hw as isize,
                1,
                T::zero(),
                &mut dcol,
                hw as isize,
                1,
            );
            col2im_add(&dcol, g, &mut gin[s * g.cin * hw..(s + 1) * g.cin * hw]);
        }
    }
    ConvGrads {
        input: gin,
        kernel: gk,
        bias: gb,
    }
}
