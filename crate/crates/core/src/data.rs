//! Synthetic multi-setting datasets: generation, on-disk layout and conversion to training samples.
//!
//! Layout: `<root>/manifest.json`, and one directory per (contrast, field, subject) holding
//! `image.bin`, `coils.bin`, `mask_<R>.bin`, `kspace_<R>.bin` and `meta.json`. Every `.bin`
//! file is little-endian `f32` interleaved `(re, im)`; shapes live in `meta.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::conditioning::ConditionVector;
use crate::dc::DataConsistency;
use crate::error::{ensure, Error, Result};
use crate::mri::{
    make_coils, make_mask, make_phantom, CoilMaps, ComplexImage, Contrast, FieldStrength, KSpace, MaskParams, MriOperator,
    NoiseTable, PhantomSpec, SamplingMask,
};
use crate::real::Real;
use crate::tensor::Tensor;

pub const DATASET_VERSION: u32 = 1;
const ARRAY_DTYPE: &str = "complex64-le";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub height: usize,
    pub width: usize,
    pub num_coils: usize,
    pub contrasts: Vec<Contrast>,
    pub fields: Vec<FieldStrength>,
    pub accelerations: Vec<f64>,
    pub train_subjects: usize,
    pub test_subjects: usize,
    pub seed: u64,
    #[serde(default)]
    pub mask: MaskParams,
    #[serde(default)]
    pub noise: NoiseTable,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            height: 48,
            width: 48,
            num_coils: 4,
            contrasts: vec![Contrast::T1, Contrast::T2],
            fields: vec![FieldStrength::T1_5, FieldStrength::T3],
            accelerations: vec![2.5, 4.0],
            train_subjects: 4,
            test_subjects: 2,
            seed: 1,
            mask: MaskParams { acs_lines: 6, ..Default::default() },
            noise: NoiseTable::default(),
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.height >= 8 && self.width >= 8, Contract, "images must be at least 8x8");
        ensure!(self.num_coils >= 1, Contract, "at least one coil is required");
        ensure!(
            !self.contrasts.is_empty() && !self.fields.is_empty() && !self.accelerations.is_empty(),
            Contract,
            "contrasts, fields and accelerations must be non-empty"
        );
        ensure!(self.train_subjects + self.test_subjects >= 1, Contract, "no subjects requested");
        for &r in &self.accelerations {
            ensure!(r.is_finite() && r >= 1.0, Contract, "acceleration {r} must be >= 1");
        }
        ensure!(
            self.noise.sigma_base >= 0.0 && self.noise.low_field_factor >= 0.0,
            Contract,
            "noise levels must be non-negative"
        );
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One accelerated acquisition of a subject.
#[derive(Clone, Debug, PartialEq)]
pub struct Acquisition {
    pub acceleration: f64,
    pub kspace: KSpace<f32>,
    pub mask_seed: u64,
    pub noise_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectData {
    pub contrast: Contrast,
    pub field: FieldStrength,
    pub subject: u64,
    pub split: Split,
    pub phantom_seed: u64,
    pub sigma: f64,
    pub image: ComplexImage<f32>,
    pub coils: CoilMaps<f32>,
    pub acquisitions: Vec<Acquisition>,
}

/// Training or evaluation slice: measurement problem, ground truth and its true condition.
#[derive(Clone)]
pub struct Sample<T: Real> {
    pub subject: u64,
    pub condition: ConditionVector,
    pub problem: Arc<DataConsistency<T>>,
    pub target: Tensor<T>,
}

impl<T: Real> Sample<T> {
    pub fn new(subject: u64, condition: ConditionVector, problem: Arc<DataConsistency<T>>, target: &ComplexImage<T>) -> Result<Self> {
        ensure!(
            target.height() == problem.operator().height() && target.width() == problem.operator().width(),
            Dimension,
            "target {}x{} does not match the operator",
            target.height(),
            target.width()
        );
        Ok(Self { subject, condition, problem, target: target.to_tensor() })
    }

    pub fn ground_truth(&self) -> Result<ComplexImage<T>> {
        ComplexImage::from_tensor(&self.target)
    }
}

impl SubjectData {
    pub fn dir_name(&self) -> String {
        format!("{}_{}_s{:03}", self.contrast.label(), self.field.label(), self.subject)
    }

    /// One sample per acquisition, cast to `T`.
    pub fn samples<T: Real>(&self) -> Result<Vec<Sample<T>>> {
        let coils = self.coils.cast::<T>();
        let gt = self.image.cast::<T>();
        self.acquisitions
            .iter()
            .map(|a| {
                let op = MriOperator::new(coils.clone(), a.kspace.mask().clone())?;
                let problem = Arc::new(DataConsistency::new(op, &a.kspace.cast::<T>())?);
                let cond = ConditionVector::new(self.contrast, self.field, a.acceleration)?;
                Sample::new(self.subject, cond, problem, &gt)
            })
            .collect()
    }
}

/// SplitMix64 over a sequence of words; used to derive independent per-item seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243F_6A88_85A3_08D3;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

fn contrast_code(c: Contrast) -> u64 {
    Contrast::ALL.iter().position(|&x| x == c).unwrap_or(0) as u64
}

fn field_code(f: FieldStrength) -> u64 {
    FieldStrength::ALL.iter().position(|&x| x == f).unwrap_or(0) as u64
}

/// File-name form of an acceleration factor, e.g. `2.50`.
pub fn acceleration_tag(r: f64) -> String {
    format!("{r:.2}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: DataConfig,
    pub subjects: Vec<SubjectData>,
}

impl Dataset {
    /// Deterministic in `cfg`. A subject shares its anatomy across contrasts and fields.
    pub fn generate(cfg: &DataConfig) -> Result<Self> {
        cfg.validate()?;
        let (h, w) = (cfg.height, cfg.width);
        let coils64 = make_coils::<f64>(cfg.num_coils, h, w)?;
        let coils = coils64.cast::<f32>();
        let mut subjects = Vec::new();
        let n = (cfg.train_subjects + cfg.test_subjects) as u64;
        for &contrast in &cfg.contrasts {
            for &field in &cfg.fields {
                for subject in 0..n {
                    let split = if subject < cfg.train_subjects as u64 { Split::Train } else { Split::Test };
                    let phantom_seed = mix_seed(&[cfg.seed, 1, subject]);
                    let spec = PhantomSpec { contrast, field, subject_seed: phantom_seed, height: h, width: w };
                    // Simulate from the stored (f32) ground truth so disk data is self-consistent.
                    let image = make_phantom::<f64>(&spec)?.cast::<f32>();
                    let image64 = image.cast::<f64>();
                    let sigma = cfg.noise.sigma(field);
                    let mut acquisitions = Vec::new();
                    for (ai, &r) in cfg.accelerations.iter().enumerate() {
                        let key = [cfg.seed, contrast_code(contrast), field_code(field), subject, ai as u64];
                        let mask_seed = mix_seed(&[&key[..], &[2]].concat());
                        let noise_seed = mix_seed(&[&key[..], &[3]].concat());
                        let mask = make_mask(h, w, r, &cfg.mask, mask_seed)?;
                        let op = MriOperator::new(coils64.clone(), mask)?;
                        let kspace = op.simulate(&image64, sigma, noise_seed)?.cast::<f32>();
                        acquisitions.push(Acquisition { acceleration: r, kspace, mask_seed, noise_seed });
                    }
                    subjects.push(SubjectData {
                        contrast,
                        field,
                        subject,
                        split,
                        phantom_seed,
                        sigma,
                        image,
                        coils: coils.clone(),
                        acquisitions,
                    });
                }
            }
        }
        Ok(Self { config: cfg.clone(), subjects })
    }

    pub fn subjects_in(&self, split: Split) -> impl Iterator<Item = &SubjectData> {
        self.subjects.iter().filter(move |s| s.split == split)
    }

    pub fn samples<T: Real>(&self, split: Split) -> Result<Vec<Sample<T>>> {
        let mut out = Vec::new();
        for s in self.subjects_in(split) {
            out.extend(s.samples()?);
        }
        Ok(out)
    }

    pub fn write(&self, root: &Path, force: bool) -> Result<()> {
        if root.exists() {
            ensure!(force, Contract, "{} already exists (pass --force to replace it)", root.display());
            if root.is_dir() {
                fs::remove_dir_all(root).map_err(|e| Error::io(root, e))?;
            } else {
                fs::remove_file(root).map_err(|e| Error::io(root, e))?;
            }
        }
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let mut entries = Vec::new();
        for s in &self.subjects {
            let dir = root.join(s.dir_name());
            fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
            let (meta, files) = encode_subject(s)?;
            for (name, bytes) in files {
                let p = dir.join(&name);
                fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
            }
            write_json(&dir.join("meta.json"), &meta)?;
            entries.push(ManifestEntry {
                dir: s.dir_name(),
                contrast: s.contrast,
                field: s.field,
                subject: s.subject,
                split: s.split,
                accelerations: s.acquisitions.iter().map(|a| a.acceleration).collect(),
            });
        }
        let manifest = DatasetManifest { format_version: DATASET_VERSION, config: self.config.clone(), subjects: entries };
        write_json(&root.join("manifest.json"), &manifest)
    }

    pub fn read(root: &Path) -> Result<Self> {
        let mp = root.join("manifest.json");
        let manifest = DatasetManifest::from_json(&fs::read(&mp).map_err(|e| Error::io(&mp, e))?)?;
        let mut subjects = Vec::with_capacity(manifest.subjects.len());
        for e in &manifest.subjects {
            ensure!(
                !e.dir.is_empty() && !e.dir.contains(['/', '\\']) && e.dir != "." && e.dir != "..",
                Format,
                "subject directory '{}' is not a plain name",
                e.dir
            );
            let dir = root.join(&e.dir);
            let meta_path = dir.join("meta.json");
            let meta = SubjectMeta::from_json(&fs::read(&meta_path).map_err(|err| Error::io(&meta_path, err))?)?;
            let s = decode_subject(&meta, |name| {
                let p = dir.join(name);
                fs::read(&p).map_err(|err| Error::io(&p, err))
            })?;
            ensure!(
                s.contrast == e.contrast && s.field == e.field && s.subject == e.subject && s.split == e.split,
                Format,
                "meta.json in {} disagrees with the dataset manifest",
                e.dir
            );
            subjects.push(s);
        }
        Ok(Self { config: manifest.config, subjects })
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub dir: String,
    pub contrast: Contrast,
    pub field: FieldStrength,
    pub subject: u64,
    pub split: Split,
    pub accelerations: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub config: DataConfig,
    pub subjects: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let m: Self = serde_json::from_slice(bytes)?;
        ensure!(
            m.format_version == DATASET_VERSION,
            Compatibility,
            "dataset format version {} is not supported",
            m.format_version
        );
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayInfo {
    pub shape: Vec<usize>,
    pub dtype: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionMeta {
    pub acceleration: f64,
    pub mask_file: String,
    pub kspace_file: String,
    pub mask_kind: crate::mri::MaskKind,
    pub mask_seed: u64,
    pub noise_seed: u64,
}

/// Contents of a subject's `meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectMeta {
    pub contrast: Contrast,
    pub field: FieldStrength,
    pub subject: u64,
    pub split: Split,
    pub height: usize,
    pub width: usize,
    pub num_coils: usize,
    pub sigma: f64,
    pub phantom_seed: u64,
    pub accelerations: Vec<f64>,
    pub acquisitions: Vec<AcquisitionMeta>,
    pub arrays: BTreeMap<String, ArrayInfo>,
}

impl SubjectMeta {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    fn array(&self, name: &str, shape: &[usize]) -> Result<()> {
        let info = self
            .arrays
            .get(name)
            .ok_or_else(|| Error::Format(format!("meta.json does not describe {name}")))?;
        ensure!(
            info.shape == shape && info.dtype == ARRAY_DTYPE,
            Format,
            "{name}: declared {:?} {} but expected {shape:?} {ARRAY_DTYPE}",
            info.shape,
            info.dtype
        );
        Ok(())
    }
}

/// Interleaved little-endian `f32` pairs.
pub fn encode_complex(values: &[Complex<f32>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

/// Inverse of [`encode_complex`]; the byte count must equal `8 * prod(shape)` and values must be finite.
pub fn decode_complex(bytes: &[u8], shape: &[usize]) -> Result<Vec<Complex<f32>>> {
    let n = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format(format!("array shape {shape:?} is too large")))?;
    ensure!(bytes.len() == n, Format, "expected {n} bytes for shape {shape:?}, found {}", bytes.len());
    let out: Vec<Complex<f32>> = bytes
        .chunks_exact(8)
        .map(|c| Complex::new(f32::from_le_bytes([c[0], c[1], c[2], c[3]]), f32::from_le_bytes([c[4], c[5], c[6], c[7]])))
        .collect();
    ensure!(out.iter().all(|v| v.re.is_finite() && v.im.is_finite()), Format, "array holds non-finite values");
    Ok(out)
}

/// Stored masks are full `H x W` grids of 0/1 real values, constant down each column.
pub fn decode_mask(bytes: &[u8], height: usize, width: usize, kind: crate::mri::MaskKind, acceleration: f64) -> Result<SamplingMask> {
    let grid = decode_complex(bytes, &[height, width])?;
    ensure!(height >= 1 && width >= 1, Format, "empty mask");
    let kept: Vec<bool> = grid[..width].iter().map(|v| v.re == 1.0).collect();
    for (i, v) in grid.iter().enumerate() {
        ensure!(
            v.im == 0.0 && (v.re == 0.0 || v.re == 1.0) && (v.re == 1.0) == kept[i % width],
            Format,
            "mask entry {i} is not a column-constant 0/1 value"
        );
    }
    ensure!(acceleration.is_finite() && acceleration >= 1.0, Format, "mask acceleration {acceleration} is invalid");
    SamplingMask::from_columns(height, width, kept, kind, acceleration)
}

type EncodedSubject = (SubjectMeta, Vec<(String, Vec<u8>)>);

fn encode_subject(s: &SubjectData) -> Result<EncodedSubject> {
    let (h, w, nc) = (s.image.height(), s.image.width(), s.coils.num_coils());
    let mut arrays = BTreeMap::new();
    let info = |shape: Vec<usize>| ArrayInfo { shape, dtype: ARRAY_DTYPE.into() };
    let mut files = vec![("image.bin".to_string(), encode_complex(s.image.data()))];
    arrays.insert("image.bin".to_string(), info(vec![h, w]));
    let coil_data: Vec<Complex<f32>> = s.coils.maps().iter().flat_map(|m| m.data().iter().copied()).collect();
    files.push(("coils.bin".into(), encode_complex(&coil_data)));
    arrays.insert("coils.bin".into(), info(vec![nc, h, w]));
    let mut acquisitions = Vec::new();
    for a in &s.acquisitions {
        let tag = acceleration_tag(a.acceleration);
        let (mf, kf) = (format!("mask_{tag}.bin"), format!("kspace_{tag}.bin"));
        let mask = a.kspace.mask();
        let grid: Vec<Complex<f32>> = mask.to_grid().into_iter().map(|v| Complex::new(v, 0.0)).collect();
        files.push((mf.clone(), encode_complex(&grid)));
        files.push((kf.clone(), encode_complex(a.kspace.data())));
        arrays.insert(mf.clone(), info(vec![h, w]));
        arrays.insert(kf.clone(), info(vec![nc, h, w]));
        acquisitions.push(AcquisitionMeta {
            acceleration: a.acceleration,
            mask_file: mf,
            kspace_file: kf,
            mask_kind: mask.kind(),
            mask_seed: a.mask_seed,
            noise_seed: a.noise_seed,
        });
    }
    let meta = SubjectMeta {
        contrast: s.contrast,
        field: s.field,
        subject: s.subject,
        split: s.split,
        height: h,
        width: w,
        num_coils: nc,
        sigma: s.sigma,
        phantom_seed: s.phantom_seed,
        accelerations: s.acquisitions.iter().map(|a| a.acceleration).collect(),
        acquisitions,
        arrays,
    };
    Ok((meta, files))
}

/// Rebuilds a subject from its metadata and a file reader (file name -> bytes).
pub fn decode_subject(meta: &SubjectMeta, mut read: impl FnMut(&str) -> Result<Vec<u8>>) -> Result<SubjectData> {
    let (h, w, nc) = (meta.height, meta.width, meta.num_coils);
    ensure!(h >= 8 && w >= 8 && nc >= 1, Format, "subject geometry {h}x{w} with {nc} coils is invalid");
    ensure!(
        meta.accelerations.len() == meta.acquisitions.len()
            && meta.accelerations.iter().zip(&meta.acquisitions).all(|(r, a)| *r == a.acceleration),
        Format,
        "acceleration list disagrees with the acquisitions"
    );
    meta.array("image.bin", &[h, w])?;
    meta.array("coils.bin", &[nc, h, w])?;
    let image = ComplexImage::new(h, w, decode_complex(&read("image.bin")?, &[h, w])?)?;
    let coil_data = decode_complex(&read("coils.bin")?, &[nc, h, w])?;
    let maps = coil_data
        .chunks_exact(h * w)
        .map(|c| ComplexImage::new(h, w, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let coils = CoilMaps::from_maps(maps).map_err(|e| Error::Format(e.to_string()))?;
    let mut acquisitions = Vec::new();
    for a in &meta.acquisitions {
        let tag = acceleration_tag(a.acceleration);
        ensure!(
            a.mask_file == format!("mask_{tag}.bin") && a.kspace_file == format!("kspace_{tag}.bin"),
            Format,
            "unexpected file names for R={}",
            a.acceleration
        );
        meta.array(&a.mask_file, &[h, w])?;
        meta.array(&a.kspace_file, &[nc, h, w])?;
        let mask = decode_mask(&read(&a.mask_file)?, h, w, a.mask_kind, a.acceleration)?;
        let data = decode_complex(&read(&a.kspace_file)?, &[nc, h, w])?;
        let kspace = KSpace::new(nc, h, w, data, mask)?;
        acquisitions.push(Acquisition { acceleration: a.acceleration, kspace, mask_seed: a.mask_seed, noise_seed: a.noise_seed });
    }
    Ok(SubjectData {
        contrast: meta.contrast,
        field: meta.field,
        subject: meta.subject,
        split: meta.split,
        phantom_seed: meta.phantom_seed,
        sigma: meta.sigma,
        image,
        coils,
        acquisitions,
    })
}
