//! Checkpoint directory: `manifest.json` plus a flat little-endian `tensors.bin`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::AdamState;
use crate::conditioning::{MlpParams, CONDITION_SCHEMA};
use crate::dc::CgConfig;
use crate::denoiser::CnnParams;
use crate::error::{ensure, Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;
use crate::unrolled::{Mode, ReconModel, UnrollConfig};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSORS_FILE: &str = "tensors.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub nbytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub dtype: String,
    pub mode: Mode,
    pub unroll: usize,
    pub cg: CgConfig,
    pub channels: usize,
    pub mlp_hidden: Option<usize>,
    pub condition_schema: Vec<String>,
    pub config_hash: String,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    pub adam_step: Option<u64>,
    pub tensors_sha256: String,
    pub tensors: Vec<TensorEntry>,
}

impl Manifest {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    /// Fails with a compatibility error when the stored model differs from `expect`.
    pub fn check(&self, expect: &Expectation) -> Result<()> {
        ensure!(
            self.format_version == FORMAT_VERSION,
            Compatibility,
            "checkpoint format version {} is not supported (expected {FORMAT_VERSION})",
            self.format_version
        );
        ensure!(
            self.condition_schema.iter().map(String::as_str).eq(CONDITION_SCHEMA),
            Compatibility,
            "condition schema {:?} differs from {:?}",
            self.condition_schema,
            CONDITION_SCHEMA
        );
        if let Some(c) = expect.channels {
            ensure!(c == self.channels, Compatibility, "checkpoint has C={}, expected C={c}", self.channels);
        }
        if let Some(n) = expect.mlp_hidden {
            ensure!(
                Some(n) == self.mlp_hidden,
                Compatibility,
                "checkpoint has MLP width {:?}, expected {n}",
                self.mlp_hidden
            );
        }
        if let Some(m) = expect.mode {
            ensure!(m == self.mode, Compatibility, "checkpoint mode {:?}, expected {m:?}", self.mode);
        }
        Ok(())
    }
}

/// Architecture constraints a caller places on a checkpoint it loads.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Expectation {
    pub channels: Option<usize>,
    pub mlp_hidden: Option<usize>,
    pub mode: Option<Mode>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint<T: Real> {
    pub model: ReconModel<T>,
    pub adam: Option<AdamState<T>>,
    pub config_hash: String,
    pub metrics: BTreeMap<String, f64>,
}

fn adam_names(name: &str) -> (String, String) {
    (format!("adam.m.{name}"), format!("adam.v.{name}"))
}

fn expected_shapes(m: &Manifest) -> Result<Vec<(String, Vec<usize>)>> {
    ensure!(m.channels >= 1, Format, "channel count must be positive");
    let mut shapes = CnnParams::<f32>::shapes(m.channels);
    match (m.mode, m.mlp_hidden) {
        (Mode::Ada, Some(n)) if n >= 1 => shapes.extend(MlpParams::<f32>::shapes(n, m.channels)),
        (Mode::Ada, _) => return Err(Error::Format("ada checkpoint needs a positive MLP width".into())),
        (_, None) => shapes.push(("lambda.raw".into(), vec![])),
        (_, Some(_)) => return Err(Error::Format("plain checkpoint must not declare an MLP width".into())),
    }
    if m.adam_step.is_some() {
        let adam: Vec<_> = shapes
            .iter()
            .flat_map(|(n, s)| {
                let (a, b) = adam_names(n);
                [(a, s.clone()), (b, s.clone())]
            })
            .collect();
        shapes.extend(adam);
    }
    Ok(shapes)
}

fn checked_numel(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

impl<T: Real> ModelCheckpoint<T> {
    pub fn new(model: ReconModel<T>, adam: Option<AdamState<T>>, config_hash: impl Into<String>) -> Self {
        Self {
            model,
            adam,
            config_hash: config_hash.into(),
            metrics: BTreeMap::new(),
        }
    }

    fn tensors(&self) -> Result<Vec<(String, &Tensor<T>)>> {
        let mut out = self.model.named();
        if let Some(adam) = &self.adam {
            let names: Vec<String> = out.iter().map(|(n, _)| n.clone()).collect();
            ensure!(
                adam.names() == names.as_slice(),
                Contract,
                "optimiser state does not track the model's parameters"
            );
            let moments: Vec<_> = adam
                .moments()
                .flat_map(|(n, m, v)| {
                    let (a, b) = adam_names(n);
                    [(a, m), (b, v)]
                })
                .collect();
            out.extend(moments);
        }
        Ok(out)
    }

    /// Serialises to `(manifest.json bytes, tensors.bin bytes)`.
    pub fn encode(&self) -> Result<(Vec<u8>, Vec<u8>)> {
        for (k, v) in &self.metrics {
            ensure!(v.is_finite(), Contract, "metric '{k}' = {v} cannot be stored");
        }
        let mut blob = Vec::new();
        let mut entries = Vec::new();
        for (name, t) in self.tensors()? {
            let offset = blob.len() as u64;
            t.data().iter().for_each(|v| v.to_le(&mut blob));
            entries.push(TensorEntry {
                name,
                shape: t.shape().to_vec(),
                offset,
                nbytes: blob.len() as u64 - offset,
            });
        }
        let cfg = self.model.config;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            dtype: T::DTYPE.into(),
            mode: cfg.mode,
            unroll: cfg.unroll,
            cg: cfg.cg,
            channels: self.model.channels(),
            mlp_hidden: self.model.mlp_hidden(),
            condition_schema: CONDITION_SCHEMA.iter().map(|s| s.to_string()).collect(),
            config_hash: self.config_hash.clone(),
            metrics: self.metrics.clone(),
            adam_step: self.adam.as_ref().map(|a| a.step),
            tensors_sha256: hex::encode(Sha256::digest(&blob)),
            tensors: entries,
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        Ok((json, blob))
    }

    /// Parses and validates a checkpoint held in memory.
    pub fn decode(manifest: &[u8], blob: &[u8], expect: &Expectation) -> Result<Self> {
        let m = Manifest::from_json(manifest)?;
        Self::decode_parsed(&m, blob, expect)
    }

    fn decode_parsed(m: &Manifest, blob: &[u8], expect: &Expectation) -> Result<Self> {
        m.check(expect)?;
        ensure!(
            m.dtype == T::DTYPE,
            Compatibility,
            "checkpoint stores {} values, loader expects {}",
            m.dtype,
            T::DTYPE
        );
        let config = UnrollConfig { unroll: m.unroll, cg: m.cg, mode: m.mode };
        config.validate().map_err(|e| Error::Format(e.to_string()))?;
        ensure!(
            hex::encode(Sha256::digest(blob)) == m.tensors_sha256.to_ascii_lowercase(),
            Format,
            "tensors.bin does not match its recorded checksum"
        );
        let shapes = expected_shapes(m)?;
        ensure!(
            shapes.len() == m.tensors.len(),
            Format,
            "manifest lists {} tensors, expected {}",
            m.tensors.len(),
            shapes.len()
        );
        let width = std::mem::size_of::<T>();
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(shapes.len());
        for ((name, shape), e) in shapes.iter().zip(&m.tensors) {
            ensure!(
                *name == e.name && *shape == e.shape,
                Format,
                "tensor '{}' {:?} where '{name}' {shape:?} was expected",
                e.name,
                e.shape
            );
            let nbytes = checked_numel(shape)
                .and_then(|n| n.checked_mul(width))
                .ok_or_else(|| Error::Format(format!("tensor '{name}' is too large")))?;
            let start = usize::try_from(e.offset).map_err(|_| Error::Format("offset out of range".into()))?;
            let end = start
                .checked_add(nbytes)
                .filter(|&end| e.nbytes == nbytes as u64 && end <= blob.len())
                .ok_or_else(|| Error::Format(format!("tensor '{name}' has inconsistent byte range")))?;
            let data: Vec<T> = blob[start..end].chunks_exact(width).map(T::from_le).collect();
            ensure!(data.iter().all(|v| v.is_finite()), Format, "tensor '{name}' holds non-finite values");
            values.push(Tensor::new(shape.clone(), data)?);
        }
        let n_model = if m.adam_step.is_some() { values.len() / 3 } else { values.len() };
        let mut rest = values.split_off(n_model).into_iter();

        let theta = CnnParams::zeros(m.channels);
        let phi = m.mlp_hidden.map(|n| MlpParams::zeros(n, m.channels));
        let lambda_raw = (m.mode != Mode::Ada).then(|| Tensor::scalar(T::zero()).with_grad());
        let mut model = ReconModel::from_parts(theta, phi, lambda_raw, config)?;
        for ((_, slot), v) in model.named_mut().into_iter().zip(&values) {
            slot.data_mut().copy_from_slice(v.data());
        }
        let adam = match m.adam_step {
            Some(step) => {
                let moments = shapes[..n_model]
                    .iter()
                    .map(|(n, _)| {
                        let first = rest.next().expect("length checked");
                        let second = rest.next().expect("length checked");
                        (n.clone(), first, second)
                    })
                    .collect();
                Some(AdamState::from_parts(step, moments)?)
            }
            None => None,
        };
        Ok(Self {
            model,
            adam,
            config_hash: m.config_hash.clone(),
            metrics: m.metrics.clone(),
        })
    }
}

/// Writes `manifest.json` and `tensors.bin` into `dir`, creating it if needed.
pub fn save_checkpoint<T: Real>(ckpt: &ModelCheckpoint<T>, dir: &Path) -> Result<()> {
    let (manifest, blob) = ckpt.encode()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    // Tensors first so a reader never sees a manifest describing a missing blob.
    let tp = dir.join(TENSORS_FILE);
    fs::write(&tp, blob).map_err(|e| Error::io(&tp, e))?;
    let mp = dir.join(MANIFEST_FILE);
    fs::write(&mp, manifest).map_err(|e| Error::io(&mp, e))?;
    Ok(())
}

/// Reads just the manifest of a checkpoint directory.
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let mp = dir.join(MANIFEST_FILE);
    Manifest::from_json(&fs::read(&mp).map_err(|e| Error::io(&mp, e))?)
}

/// Loads a checkpoint; the manifest is validated against `expect` before the tensors are read.
pub fn load_checkpoint<T: Real>(dir: &Path, expect: &Expectation) -> Result<ModelCheckpoint<T>> {
    let manifest = read_manifest(dir)?;
    manifest.check(expect)?;
    let tp = dir.join(TENSORS_FILE);
    let blob = fs::read(&tp).map_err(|e| Error::io(&tp, e))?;
    ModelCheckpoint::decode_parsed(&manifest, &blob, expect)
}
