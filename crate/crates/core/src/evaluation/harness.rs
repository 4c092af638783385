use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{psnr_images, ssim_images, PsnrMode};
use crate::conditioning::Setting;
use crate::data::Sample;
use crate::error::{ensure, Error, Result};
use crate::real::Real;
use crate::unrolled::ReconModel;

/// What produces the image for a grid cell.
#[derive(Clone, Copy)]
pub enum Reconstructor<'a, T: Real> {
    /// `A^H b`.
    ZeroFilled,
    Model(&'a ReconModel<T>),
}

impl<T: Real> Reconstructor<'_, T> {
    fn conditional(&self) -> bool {
        matches!(self, Reconstructor::Model(m) if m.mode().is_ada())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub settings: Vec<Setting>,
    pub accelerations: Vec<f64>,
    /// Also feed every other setting's condition to conditional models.
    pub cross_domain: bool,
    pub psnr_mode: PsnrMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub model: String,
    pub true_setting: String,
    pub fed_setting: String,
    pub acceleration: f64,
    pub subject: u64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub ssim_x1000: i64,
}

impl ImageRecord {
    fn cell_key(&self) -> (&str, &str, &str, f64) {
        (&self.model, &self.true_setting, &self.fed_setting, self.acceleration)
    }

    fn order(&self, other: &Self) -> Ordering {
        let (a, b) = (self.cell_key(), other.cell_key());
        (a.0, a.1, a.2)
            .cmp(&(b.0, b.1, b.2))
            .then(a.3.total_cmp(&b.3))
            .then(self.subject.cmp(&other.subject))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub model: String,
    pub true_setting: String,
    pub fed_setting: String,
    pub acceleration: f64,
    pub n: usize,
    /// Mean and sample standard deviation over the finite PSNR values.
    pub psnr_mean: f64,
    pub psnr_std: f64,
    /// Images reconstructed exactly (PSNR = +inf), excluded from the PSNR statistics.
    pub psnr_infinite: usize,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub ssim_x1000_mean: f64,
    pub ssim_x1000_std: f64,
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_mode: PsnrMode,
    pub images: Vec<ImageRecord>,
    pub cells: Vec<CellSummary>,
}

impl MetricReport {
    /// Sorts the per-image records and derives every cell aggregate from them.
    pub fn from_images(psnr_mode: PsnrMode, mut images: Vec<ImageRecord>) -> Self {
        images.sort_by(|a, b| a.order(b));
        let mut cells = Vec::new();
        let mut i = 0;
        while i < images.len() {
            let key = images[i].cell_key();
            let j = i + images[i..].iter().take_while(|r| r.cell_key() == key).count();
            let group = &images[i..j];
            let finite: Vec<f64> = group.iter().map(|r| r.psnr_db).filter(|p| p.is_finite()).collect();
            let (pm, ps) = mean_std(&finite);
            let (sm, ss) = mean_std(&group.iter().map(|r| r.ssim).collect::<Vec<_>>());
            let (km, ks) = mean_std(&group.iter().map(|r| r.ssim_x1000 as f64).collect::<Vec<_>>());
            cells.push(CellSummary {
                model: key.0.to_string(),
                true_setting: key.1.to_string(),
                fed_setting: key.2.to_string(),
                acceleration: key.3,
                n: group.len(),
                psnr_mean: pm,
                psnr_std: ps,
                psnr_infinite: group.len() - finite.len(),
                ssim_mean: sm,
                ssim_std: ss,
                ssim_x1000_mean: km,
                ssim_x1000_std: ks,
            });
            i = j;
        }
        Self { psnr_mode, images, cells }
    }

    pub fn cell(&self, model: &str, true_setting: &str, fed_setting: &str, acceleration: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| {
            c.model == model && c.true_setting == true_setting && c.fed_setting == fed_setting && c.acceleration == acceleration
        })
    }

    pub fn models(&self) -> Vec<String> {
        let mut m: Vec<String> = self.cells.iter().map(|c| c.model.clone()).collect();
        m.dedup();
        m
    }

    /// Per-image CSV, one row per reconstructed image.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        for r in &self.images {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Inverse of [`MetricReport::write_csv`].
    pub fn read_csv(psnr_mode: PsnrMode, path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let images = r
            .deserialize()
            .collect::<std::result::Result<Vec<ImageRecord>, _>>()
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Ok(Self::from_images(psnr_mode, images))
    }

    /// Aggregates as JSON (the mode is named in the document).
    pub fn write_json(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            psnr_mode: PsnrMode,
            cells: &'a [CellSummary],
        }
        let mut bytes = serde_json::to_vec_pretty(&Doc { psnr_mode: self.psnr_mode, cells: &self.cells })?;
        bytes.push(b'\n');
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// PSNR values of two models on the same images (matched by setting, fed setting, acceleration, subject).
    /// Pairs where either value is infinite are dropped.
    pub fn paired_psnr(&self, a: &str, b: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        let key = |r: &ImageRecord| (r.true_setting.clone(), r.fed_setting.clone(), r.acceleration.to_bits(), r.subject);
        let bmap: BTreeMap<_, f64> = self.images.iter().filter(|r| r.model == b).map(|r| (key(r), r.psnr_db)).collect();
        let (mut xa, mut xb) = (Vec::new(), Vec::new());
        for r in self.images.iter().filter(|r| r.model == a) {
            if let Some(&v) = bmap.get(&key(r)).filter(|v| v.is_finite() && r.psnr_db.is_finite()) {
                xa.push(r.psnr_db);
                xb.push(v);
            }
        }
        ensure!(!xa.is_empty(), Compatibility, "models '{a}' and '{b}' share no evaluated images");
        Ok((xa, xb))
    }
}

/// Reconstructs one sample, feeding condition `fed` to conditional models.
pub fn evaluate_sample<T: Real>(
    method: &Reconstructor<'_, T>,
    sample: &Sample<T>,
    fed: Setting,
    psnr_mode: PsnrMode,
) -> Result<(f64, f64)> {
    let gt = sample.ground_truth()?;
    let rec = match method {
        Reconstructor::ZeroFilled => sample.problem.atb().clone(),
        Reconstructor::Model(m) => {
            let cond = fed.condition(sample.condition.acceleration)?;
            m.reconstruct(&sample.problem, Some(&cond))?
        }
    };
    Ok((psnr_images(&rec, &gt, psnr_mode)?, ssim_images(&rec, &gt)?))
}

/// Every (model, setting, acceleration) cell; with `cross_domain`, conditional models are also
/// evaluated with each other setting's condition vector.
pub fn run_grid<T: Real>(models: &[(String, Reconstructor<'_, T>)], samples: &[Sample<T>], spec: &GridSpec) -> Result<MetricReport> {
    ensure!(!models.is_empty(), Contract, "no models to evaluate");
    let mut images = Vec::new();
    for &true_setting in &spec.settings {
        for &r in &spec.accelerations {
            let cell: Vec<&Sample<T>> = samples
                .iter()
                .filter(|s| s.condition.setting() == true_setting && (s.condition.acceleration - r).abs() < 1e-9)
                .collect();
            ensure!(
                !cell.is_empty(),
                Compatibility,
                "test data has no samples for {} at R={r}",
                true_setting.label()
            );
            for (name, method) in models {
                let fed_list: Vec<Setting> = if spec.cross_domain && method.conditional() {
                    spec.settings.clone()
                } else {
                    vec![true_setting]
                };
                for fed in fed_list {
                    for s in &cell {
                        let (p, q) = evaluate_sample(method, s, fed, spec.psnr_mode)?;
                        images.push(ImageRecord {
                            model: name.clone(),
                            true_setting: true_setting.label(),
                            fed_setting: fed.label(),
                            acceleration: r,
                            subject: s.subject,
                            psnr_db: p,
                            ssim: q,
                            ssim_x1000: (q * 1000.0).round() as i64,
                        });
                    }
                }
            }
        }
    }
    Ok(MetricReport::from_images(spec.psnr_mode, images))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub setting: String,
    pub acceleration: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaCurve {
    pub points: Vec<LambdaPoint>,
}

impl LambdaCurve {
    pub fn for_setting(&self, setting: &str) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.setting == setting)
            .map(|p| (p.acceleration, p.lambda))
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        for p in &self.points {
            w.serialize(p).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// `start, start + step, ...` up to and including `stop`.
pub fn acceleration_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    ensure!(step > 0.0 && start <= stop && start >= 1.0, Contract, "invalid acceleration range {start}:{step}:{stop}");
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect())
}

/// `lambda(m)` for every setting and acceleration; plain models give their constant value.
pub fn lambda_curve<T: Real>(model: &ReconModel<T>, settings: &[Setting], accelerations: &[f64]) -> Result<LambdaCurve> {
    ensure!(
        accelerations.windows(2).all(|w| w[0] < w[1]),
        Contract,
        "accelerations must be strictly increasing"
    );
    let mut points = Vec::new();
    for s in settings {
        for &r in accelerations {
            let cond = s.condition(r)?;
            points.push(LambdaPoint {
                setting: s.label(),
                acceleration: r,
                lambda: model.lambda_for(Some(&cond))?.as_f64(),
            });
        }
    }
    Ok(LambdaCurve { points })
}
