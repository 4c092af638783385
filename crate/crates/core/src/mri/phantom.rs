//! Synthetic brain-like phantoms with contrast-dependent tissue intensities.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ComplexImage;
use crate::error::{ensure, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Contrast {
    T1,
    T2,
    #[serde(rename = "FLAIR")]
    Flair,
}

impl Contrast {
    pub const ALL: [Contrast; 3] = [Contrast::T1, Contrast::T2, Contrast::Flair];

    pub fn label(self) -> &'static str {
        match self {
            Contrast::T1 => "T1",
            Contrast::T2 => "T2",
            Contrast::Flair => "FLAIR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label().eq_ignore_ascii_case(s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FieldStrength {
    #[serde(rename = "1.5T")]
    T1_5,
    #[serde(rename = "3T")]
    T3,
}

impl FieldStrength {
    pub const ALL: [FieldStrength; 2] = [FieldStrength::T1_5, FieldStrength::T3];

    pub fn tesla(self) -> f64 {
        match self {
            FieldStrength::T1_5 => 1.5,
            FieldStrength::T3 => 3.0,
        }
    }

    pub fn from_tesla(t: f64) -> Option<Self> {
        if (t - 1.5).abs() < 1e-9 {
            Some(FieldStrength::T1_5)
        } else if (t - 3.0).abs() < 1e-9 {
            Some(FieldStrength::T3)
        } else {
            None
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FieldStrength::T1_5 => "1.5T",
            FieldStrength::T3 => "3T",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim_end_matches(['T', 't']);
        s.parse::<f64>().ok().and_then(Self::from_tesla)
    }
}

/// Tissue classes painted by the phantom.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tissue {
    Background,
    Scalp,
    Skull,
    Csf,
    GreyMatter,
    WhiteMatter,
    Lesion,
}

impl Tissue {
    /// Magnitude of each tissue before the smooth bias field and peak normalisation.
    pub fn intensity(self, contrast: Contrast) -> f64 {
        use Tissue::*;
        match (contrast, self) {
            (_, Background) => 0.0,
            (_, Skull) => 0.05,
            (Contrast::T1, Scalp) => 0.9,
            (Contrast::T1, Csf) => 0.15,
            (Contrast::T1, GreyMatter) => 0.55,
            (Contrast::T1, WhiteMatter) => 0.8,
            (Contrast::T1, Lesion) => 0.35,
            (Contrast::T2, Scalp) => 0.5,
            (Contrast::T2, Csf) => 1.0,
            (Contrast::T2, GreyMatter) => 0.65,
            (Contrast::T2, WhiteMatter) => 0.42,
            (Contrast::T2, Lesion) => 0.85,
            (Contrast::Flair, Scalp) => 0.6,
            (Contrast::Flair, Csf) => 0.08,
            (Contrast::Flair, GreyMatter) => 0.7,
            (Contrast::Flair, WhiteMatter) => 0.5,
            (Contrast::Flair, Lesion) => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub contrast: Contrast,
    pub field: FieldStrength,
    pub subject_seed: u64,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    angle: f64,
    tissue: Tissue,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * c + dy * s) / self.a;
        let v = (-dx * s + dy * c) / self.b;
        u * u + v * v <= 1.0
    }
}

/// Ellipse layout for one subject; independent of contrast and field.
fn layout(seed: u64) -> (Vec<Ellipse>, [f64; 6]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_b4a1);
    let mut j = |s: f64| rng.random_range(-s..s);
    let scale = 1.0 + j(0.05);
    let rot = j(0.12);
    let e = |cx: f64, cy: f64, a: f64, b: f64, angle: f64, tissue| Ellipse { cx, cy, a, b, angle, tissue };
    use Tissue::*;
    let mut base = vec![
        e(0.0, 0.0, 0.86, 0.94, 0.0, Scalp),
        e(0.0, 0.0, 0.80, 0.88, 0.0, Skull),
        e(0.0, 0.0, 0.76, 0.84, 0.0, Csf),
        e(0.0, 0.0, 0.72, 0.80, 0.0, GreyMatter),
        e(0.0, 0.02, 0.58, 0.66, 0.0, WhiteMatter),
    ];
    for el in base.iter_mut().skip(4) {
        el.a *= 1.0 + j(0.05);
        el.b *= 1.0 + j(0.05);
    }
    // Cortical folds: grey matter fingers reaching into white matter.
    let folds = 10;
    for k in 0..folds {
        let t = k as f64 / folds as f64 * std::f64::consts::TAU + j(0.2);
        let r = 0.52 + j(0.04);
        base.push(e(r * t.cos() * 0.9, r * t.sin(), 0.13 + j(0.03), 0.035 + j(0.01), t, GreyMatter));
    }
    // Ventricles and deep grey nuclei.
    base.push(e(-0.1 + j(0.02), -0.08 + j(0.03), 0.07 + j(0.015), 0.24 + j(0.03), 0.25 + j(0.08), Csf));
    base.push(e(0.1 + j(0.02), -0.08 + j(0.03), 0.07 + j(0.015), 0.24 + j(0.03), -0.25 + j(0.08), Csf));
    base.push(e(-0.24 + j(0.03), 0.2 + j(0.03), 0.08, 0.1, j(0.5), GreyMatter));
    base.push(e(0.24 + j(0.03), 0.2 + j(0.03), 0.08, 0.1, j(0.5), GreyMatter));
    base.push(e(0.0, 0.62 + j(0.03), 0.04, 0.03, 0.0, Csf));
    let lesions = 2 + (seed % 3) as usize;
    for _ in 0..lesions {
        let (r, t) = (0.2 + j(0.15).abs() + 0.05, j(std::f64::consts::PI));
        base.push(e(r * t.cos(), r * t.sin(), 0.035 + j(0.015), 0.035 + j(0.015), j(1.0), Lesion));
    }
    let (sr, cr) = rot.sin_cos();
    let cx0 = j(0.03);
    let cy0 = j(0.03);
    let els = base
        .into_iter()
        .map(|mut el| {
            let (x, y) = (el.cx * scale, el.cy * scale);
            el.cx = x * cr - y * sr + cx0;
            el.cy = x * sr + y * cr + cy0;
            el.a *= scale;
            el.b *= scale;
            el.angle += rot;
            el
        })
        .collect();
    let smooth = [j(0.1), j(0.1), j(1.0), j(1.0), j(0.3), j(0.3)];
    (els, smooth)
}

/// Deterministic piecewise-smooth phantom; peak magnitude is exactly 1.
pub fn make_phantom<T: Real>(spec: &PhantomSpec) -> Result<ComplexImage<T>> {
    ensure!(
        spec.height >= 8 && spec.width >= 8,
        Contract,
        "phantom size {}x{} is below the 8x8 minimum",
        spec.height,
        spec.width
    );
    let (ellipses, smooth) = layout(spec.subject_seed);
    let (h, w) = (spec.height, spec.width);
    let sub = 3;
    let mut mag = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for sy in 0..sub {
                for sx in 0..sub {
                    let u = ((x as f64 + (sx as f64 + 0.5) / sub as f64) / w as f64) * 2.0 - 1.0;
                    let v = ((y as f64 + (sy as f64 + 0.5) / sub as f64) / h as f64) * 2.0 - 1.0;
                    let tissue = ellipses
                        .iter()
                        .rev()
                        .find(|e| e.contains(u, v))
                        .map_or(Tissue::Background, |e| e.tissue);
                    acc += tissue.intensity(spec.contrast);
                }
            }
            let u = (x as f64 + 0.5) / w as f64 * 2.0 - 1.0;
            let v = (y as f64 + 0.5) / h as f64 * 2.0 - 1.0;
            let bias = 1.0 + smooth[0] * (1.7 * u + smooth[2]).sin() + smooth[1] * (1.3 * v + smooth[3]).cos();
            mag[y * w + x] = acc / (sub * sub) as f64 * bias;
        }
    }
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    ensure!(peak > 0.0, Contract, "phantom is empty");
    let data = mag
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let u = (i % w) as f64 / w as f64 * 2.0 - 1.0;
            let v = (i / w) as f64 / h as f64 * 2.0 - 1.0;
            let phase = std::f64::consts::PI * (smooth[4] * u + smooth[5] * v + 0.1 * (u * u + v * v));
            let z = Complex::from_polar(m / peak, phase);
            Complex::new(T::lit(z.re), T::lit(z.im))
        })
        .collect();
    let mut img = ComplexImage::new(h, w, data)?;
    // Renormalise after rounding to T so the stored peak is 1.
    let peak = img.max_abs();
    img.data_mut().iter_mut().for_each(|v| *v = *v / peak);
    Ok(img)
}

/// Tissue label map for the given subject; used to compare region statistics across contrasts.
pub fn tissue_map(spec: &PhantomSpec) -> Vec<Tissue> {
    let (ellipses, _) = layout(spec.subject_seed);
    let (h, w) = (spec.height, spec.width);
    (0..h * w)
        .map(|i| {
            let u = ((i % w) as f64 + 0.5) / w as f64 * 2.0 - 1.0;
            let v = ((i / w) as f64 + 0.5) / h as f64 * 2.0 - 1.0;
            ellipses
                .iter()
                .rev()
                .find(|e| e.contains(u, v))
                .map_or(Tissue::Background, |e| e.tissue)
        })
        .collect()
}
