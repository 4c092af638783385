//! One-dimensional phase-encode undersampling masks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    PoissonDisc1d,
    UniformRandom1d,
}

/// Parameters of the line-selection rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskParams {
    /// Fully sampled lines around the k-space centre.
    pub acs_lines: usize,
    pub kind: MaskKind,
    /// Growth of the exclusion radius from centre (0) to edge (`alpha`).
    pub density_alpha: f64,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            acs_lines: 8,
            kind: MaskKind::PoissonDisc1d,
            density_alpha: 2.0,
        }
    }
}

/// Column mask in centred k-space coordinates; every row shares it.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    kept: Vec<bool>,
    kind: MaskKind,
    acceleration: f64,
}

impl SamplingMask {
    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            kept: vec![true; width],
            kind: MaskKind::UniformRandom1d,
            acceleration: 1.0,
        }
    }

    pub fn from_columns(height: usize, width: usize, kept: Vec<bool>, kind: MaskKind, acceleration: f64) -> Result<Self> {
        ensure!(kept.len() == width, Dimension, "mask has {} columns, expected {width}", kept.len());
        ensure!(kept.iter().any(|&k| k), Contract, "mask keeps no lines");
        Ok(Self { height, width, kept, kind, acceleration })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    /// Requested acceleration.
    pub fn acceleration(&self) -> f64 {
        self.acceleration
    }

    pub fn realized_acceleration(&self) -> f64 {
        self.width as f64 / self.kept_count() as f64
    }

    /// Whether centred column `c` is sampled.
    pub fn is_kept(&self, c: usize) -> bool {
        self.kept[c]
    }

    pub fn columns(&self) -> &[bool] {
        &self.kept
    }

    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    pub fn kept_lines(&self) -> Vec<usize> {
        (0..self.width).filter(|&c| self.kept[c]).collect()
    }

    /// Dense `height x width` 0/1 grid.
    pub fn to_grid(&self) -> Vec<f32> {
        (0..self.height * self.width)
            .map(|i| if self.kept[i % self.width] { 1.0 } else { 0.0 })
            .collect()
    }
}

fn acs_range(width: usize, acs: usize) -> std::ops::Range<usize> {
    let acs = acs.min(width);
    let start = width / 2 - acs / 2;
    start..start + acs
}

/// Dart throwing over line indices with a centre-to-edge growing exclusion radius.
fn poisson_lines(order: &[usize], fixed: &[bool], width: usize, r0: f64, alpha: f64) -> Vec<bool> {
    let centre = (width / 2) as f64;
    let half = (width as f64 / 2.0).max(1.0);
    let mut kept = fixed.to_vec();
    let mut accepted: Vec<usize> = (0..width).filter(|&c| fixed[c]).collect();
    for &c in order {
        let r = r0 * (1.0 + alpha * (c as f64 - centre).abs() / half);
        if accepted.iter().all(|&k| ((c as f64) - (k as f64)).abs() >= r) {
            kept[c] = true;
            accepted.push(c);
        }
    }
    kept
}

/// Draws a mask keeping `round(width / acceleration)` lines, the centre band included.
pub fn make_mask(height: usize, width: usize, acceleration: f64, params: &MaskParams, seed: u64) -> Result<SamplingMask> {
    ensure!(width >= 1 && height >= 1, Contract, "empty mask");
    let acs = params.acs_lines.min(width).max(1);
    ensure!(
        acceleration.is_finite() && acceleration >= 1.0 && acceleration <= width as f64 / acs as f64 + 1e-9,
        Contract,
        "acceleration {acceleration} infeasible for width {width} with {acs} centre lines"
    );
    let target = ((width as f64 / acceleration).round() as usize).clamp(acs, width);
    let mut fixed = vec![false; width];
    acs_range(width, acs).for_each(|c| fixed[c] = true);
    if target == width {
        return SamplingMask::from_columns(height, width, vec![true; width], params.kind, acceleration);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..width).filter(|&c| !fixed[c]).collect();
    order.shuffle(&mut rng);
    let count = |k: &[bool]| k.iter().filter(|&&v| v).count();

    let mut kept = match params.kind {
        MaskKind::UniformRandom1d => {
            let mut k = fixed.clone();
            order.iter().take(target - acs).for_each(|&c| k[c] = true);
            k
        }
        MaskKind::PoissonDisc1d => {
            // Bisect the base radius; larger radii keep fewer lines.
            let (mut lo, mut hi) = (0.0, width as f64);
            let mut best = poisson_lines(&order, &fixed, width, lo, params.density_alpha);
            for _ in 0..48 {
                let mid = 0.5 * (lo + hi);
                let cand = poisson_lines(&order, &fixed, width, mid, params.density_alpha);
                let n = count(&cand);
                if n.abs_diff(target) < count(&best).abs_diff(target) {
                    best = cand;
                }
                if n > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if n == target {
                    break;
                }
            }
            best
        }
    };
    // Settle the exact count: add the missing lines nearest the centre, drop the outermost extras.
    let centre = width as f64 / 2.0;
    let mut by_distance: Vec<usize> = (0..width).collect();
    by_distance.sort_by(|&a, &b| {
        (a as f64 - centre)
            .abs()
            .partial_cmp(&(b as f64 - centre).abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut n = count(&kept);
    for &c in &by_distance {
        if n >= target {
            break;
        }
        if !kept[c] {
            kept[c] = true;
            n += 1;
        }
    }
    for &c in by_distance.iter().rev() {
        if n <= target {
            break;
        }
        if kept[c] && !fixed[c] {
            kept[c] = false;
            n -= 1;
        }
    }
    SamplingMask::from_columns(height, width, kept, params.kind, acceleration)
}
