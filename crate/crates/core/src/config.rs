//! Single JSON document configuring a run, with shipped presets.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conditioning::{ConditionVector, Setting};
use crate::data::DataConfig;
use crate::dc::CgConfig;
use crate::error::{ensure, Error, Result};
use crate::evaluation::PsnrMode;
use crate::training::TrainConfig;
use crate::unrolled::{ModelArch, Mode, UnrollConfig};

pub const PRESETS: [(&str, &str); 2] = [
    ("desk-small", include_str!("../presets/desk-small.json")),
    ("paper-shape", include_str!("../presets/paper-shape.json")),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub psnr_mode: PsnrMode,
    #[serde(default = "yes")]
    pub cross_domain: bool,
    /// `[start, stop, step]` of the lambda curve.
    pub lambda_accelerations: [f64; 3],
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub mlp_widths: Vec<usize>,
    /// Setting excluded from training in the MLP-width sweep.
    pub held_out: Setting,
    pub subject_counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelArch,
    pub unroll: usize,
    pub cg: CgConfig,
    /// An empty `settings` list means every (contrast, field, acceleration) of the dataset.
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweeps: SweepConfig,
}

impl RunConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: Self = serde_json::from_slice(bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Contract(format!("unknown preset '{name}'")))?;
        Self::from_json(text.as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        ensure!(self.model.channels >= 1 && self.model.mlp_hidden >= 1, Contract, "model widths must be positive");
        self.unroll_config(Mode::Ada).validate()?;
        ensure!(self.sweeps.mlp_widths.iter().all(|&n| n >= 1), Contract, "MLP widths must be positive");
        ensure!(self.sweeps.subject_counts.iter().all(|&n| n >= 1), Contract, "subject counts must be positive");
        let [a, b, s] = self.eval.lambda_accelerations;
        ensure!(a >= 1.0 && a <= b && s > 0.0, Contract, "lambda_accelerations must be [start >= 1, stop >= start, step > 0]");
        Ok(())
    }

    pub fn unroll_config(&self, mode: Mode) -> UnrollConfig {
        UnrollConfig { unroll: self.unroll, cg: self.cg, mode }
    }

    /// Every (contrast, field) pair of the dataset.
    pub fn data_settings(&self) -> Vec<Setting> {
        let mut out = Vec::new();
        for &c in &self.data.contrasts {
            for &f in &self.data.fields {
                out.push(Setting::new(c, f));
            }
        }
        out
    }

    /// Training conditions (explicit list or the full dataset grid).
    pub fn train_settings(&self) -> Result<Vec<ConditionVector>> {
        if !self.train.settings.is_empty() {
            return Ok(self.train.settings.clone());
        }
        let mut out = Vec::new();
        for s in self.data_settings() {
            for &r in &self.data.accelerations {
                out.push(s.condition(r)?);
            }
        }
        Ok(out)
    }

    /// Copy with defaults filled in, as echoed next to every output.
    pub fn resolved(&self) -> Result<Self> {
        let mut r = self.clone();
        r.train.settings = self.train_settings()?;
        Ok(r)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }

    /// SHA-256 of the compact JSON of the resolved configuration.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(&self.resolved()?)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for (name, _) in PRESETS {
            let c = RunConfig::preset(name).unwrap();
            let back = RunConfig::from_json(&c.to_json().unwrap()).unwrap();
            assert_eq!(back, c);
        }
        assert!(RunConfig::preset("nope").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = PRESETS[0].1.replacen('{', "{\"surprise\": 1,", 1);
        assert!(matches!(RunConfig::from_json(text.as_bytes()), Err(Error::Format(_))));
        let nested = PRESETS[0].1.replacen("\"height\"", "\"heigth\": 3, \"height\"", 1);
        assert!(RunConfig::from_json(nested.as_bytes()).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::preset("desk-small").unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.train.lr *= 2.0;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        // Explicitly listing the default settings does not change the resolved document.
        let explicit = a.resolved().unwrap();
        assert_eq!(explicit.hash().unwrap(), a.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }

    #[test]
    fn default_settings_cover_the_dataset_grid() {
        let a = RunConfig::preset("desk-small").unwrap();
        let s = a.train_settings().unwrap();
        assert_eq!(s.len(), a.data.contrasts.len() * a.data.fields.len() * a.data.accelerations.len());
    }
}
