//! Two-stage training: a single-step warm-up, then the full unroll, each with a fresh Adam on the MSE loss.

mod adam;
pub mod checkpoint;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, read_manifest, save_checkpoint, Expectation, Manifest, ModelCheckpoint};

use crate::autodiff::Graph;
use crate::conditioning::ConditionVector;
pub use crate::data::Sample;
use crate::error::{ensure, Error, Result};
use crate::real::Real;
use crate::unrolled::{loss_mse, ReconModel};

fn default_lr() -> f64 {
    1e-4
}

fn default_batch() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    /// Slices per optimiser step.
    #[serde(default = "default_batch")]
    pub batch: usize,
    pub seed: u64,
    pub settings: Vec<ConditionVector>,
    /// Use only the first `n` subjects of every setting; `None` keeps all.
    #[serde(default)]
    pub subjects_per_setting: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            epochs_stage1: 100,
            epochs_stage2: 400,
            batch: 1,
            seed: 0,
            settings: Vec::new(),
            subjects_per_setting: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.lr.is_finite() && self.lr > 0.0, Contract, "learning rate must be positive");
        ensure!(self.batch >= 1, Contract, "batch must be >= 1");
        ensure!(!self.settings.is_empty(), Contract, "at least one training setting is required");
        for s in &self.settings {
            ConditionVector::new(s.contrast, s.field, s.acceleration)?;
        }
        ensure!(self.subjects_per_setting != Some(0), Contract, "subjects_per_setting must be >= 1");
        Ok(())
    }
}

fn same_setting(a: &ConditionVector, b: &ConditionVector) -> bool {
    a.contrast == b.contrast && a.field == b.field && (a.acceleration - b.acceleration).abs() < 1e-9
}

/// Samples of the configured settings, limited to the first `subjects_per_setting` subjects.
pub fn select_samples<'a, T: Real>(samples: &'a [Sample<T>], cfg: &TrainConfig) -> Result<Vec<&'a Sample<T>>> {
    ensure!(!samples.is_empty(), Contract, "training set is empty");
    let mut out = Vec::new();
    for s in &cfg.settings {
        let matching: Vec<&Sample<T>> = samples.iter().filter(|x| same_setting(&x.condition, s)).collect();
        ensure!(
            !matching.is_empty(),
            Contract,
            "training set has no samples for {} {} R={}",
            s.contrast.label(),
            s.field.label(),
            s.acceleration
        );
        let subjects: BTreeSet<u64> = matching.iter().map(|x| x.subject).collect();
        let keep: BTreeSet<u64> = subjects
            .into_iter()
            .take(cfg.subjects_per_setting.unwrap_or(usize::MAX))
            .collect();
        out.extend(matching.into_iter().filter(|x| keep.contains(&x.subject)));
    }
    Ok(out)
}

/// Per-epoch log line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: u8,
    pub loss: f64,
    pub samples: usize,
    pub wall_time: f64,
}

/// Where [`train`] writes checkpoints and its log.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub dir: PathBuf,
    pub config_hash: String,
}

impl TrainOutput {
    pub fn final_dir(&self) -> PathBuf {
        self.dir.join("final")
    }

    pub fn best_dir(&self) -> PathBuf {
        self.dir.join("best")
    }

    pub fn last_good_dir(&self) -> PathBuf {
        self.dir.join("last_good")
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join("train_log.jsonl")
    }
}

pub struct TrainOutcome<T: Real> {
    pub model: ReconModel<T>,
    pub adam: AdamState<T>,
    pub log: Vec<EpochRecord>,
    /// Lowest epoch loss of the last stage that ran, and the parameters that produced it.
    pub best: Option<(f64, ReconModel<T>)>,
}

impl<T: Real> TrainOutcome<T> {
    pub fn checkpoint(&self, config_hash: &str) -> ModelCheckpoint<T> {
        ModelCheckpoint::new(self.model.clone(), Some(self.adam.clone()), config_hash)
    }
}

/// Loss of one sample without recording gradients.
pub fn sample_loss<T: Real>(model: &ReconModel<T>, sample: &Sample<T>) -> Result<f64> {
    let mut g = Graph::new();
    let fv = model.forward_graph(&mut g, &sample.problem, Some(&sample.condition))?;
    let gt = g.constant(sample.target.clone());
    let l = loss_mse(&mut g, fv.output, gt)?;
    Ok(g.value(l).item().as_f64())
}

/// Mean of [`sample_loss`] over `samples`.
pub fn dataset_loss<T: Real>(model: &ReconModel<T>, samples: &[&Sample<T>]) -> Result<f64> {
    ensure!(!samples.is_empty(), Contract, "no samples to evaluate");
    let mut total = 0.0;
    for s in samples {
        total += sample_loss(model, s)?;
    }
    Ok(total / samples.len() as f64)
}

/// Adds `scale * dL/dparam` of one sample into the model's gradient fields and returns the loss.
pub fn accumulate_sample_grad<T: Real>(model: &mut ReconModel<T>, sample: &Sample<T>, scale: f64) -> Result<f64> {
    let mut g = Graph::new();
    let fv = model.forward_graph(&mut g, &sample.problem, Some(&sample.condition))?;
    let gt = g.constant(sample.target.clone());
    let l = loss_mse(&mut g, fv.output, gt)?;
    let loss = g.value(l).item().as_f64();
    let scaled = g.scale(l, T::lit(scale))?;
    let grads = g.backward(scaled)?;
    for ((_, t), v) in model.named_mut().into_iter().zip(&fv.params) {
        grads.accumulate_into(*v, t)?;
    }
    Ok(loss)
}

struct Trainer<'a, T: Real> {
    cfg: &'a TrainConfig,
    samples: Vec<&'a Sample<T>>,
    out: Option<&'a TrainOutput>,
    log_file: Option<File>,
    rng: ChaCha8Rng,
    start: Instant,
    model: ReconModel<T>,
    adam: AdamState<T>,
    log: Vec<EpochRecord>,
    best: Option<(f64, ReconModel<T>)>,
}

impl<T: Real> Trainer<'_, T> {
    fn epoch(&mut self, stage: u8, epoch: usize) -> Result<f64> {
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for chunk in order.chunks(self.cfg.batch) {
            self.model.zero_grad();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let sample = self.samples[i];
                let loss = accumulate_sample_grad(&mut self.model, sample, scale).map_err(|e| match e {
                    Error::Numeric(msg) => Error::Numeric(format!(
                        "stage {stage} epoch {epoch}, subject {} ({} {} R={}): {msg}",
                        sample.subject,
                        sample.condition.contrast.label(),
                        sample.condition.field.label(),
                        sample.condition.acceleration
                    )),
                    other => other,
                })?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!("stage {stage} epoch {epoch}: loss is {loss}")));
                }
                total += loss;
            }
            adam_step(&mut self.model.named_mut(), &mut self.adam, self.cfg.lr)?;
        }
        self.model.zero_grad();
        Ok(total / self.samples.len() as f64)
    }

    fn record(&mut self, rec: EpochRecord) -> Result<()> {
        if let (Some(f), Some(out)) = (&mut self.log_file, self.out) {
            let line = serde_json::to_string(&rec)?;
            writeln!(f, "{line}").map_err(|e| Error::io(out.log_path(), e))?;
        }
        self.log.push(rec);
        Ok(())
    }

    fn save(&self, model: &ReconModel<T>, dir: &Path, loss: Option<f64>) -> Result<()> {
        let Some(out) = self.out else { return Ok(()) };
        let mut ck = ModelCheckpoint::new(model.clone(), Some(self.adam.clone()), out.config_hash.clone());
        if let Some(l) = loss {
            ck.metrics.insert("train_loss".into(), l);
        }
        save_checkpoint(&ck, dir)
    }

    fn run_stage(&mut self, stage: u8, epochs: usize, unroll: usize) -> Result<()> {
        if epochs == 0 {
            return Ok(());
        }
        self.model.config.unroll = unroll;
        // The warm-up result is only an initialization: moments from the single-step problem
        // would turn the first full-unroll gradients into oversized steps.
        self.adam = AdamState::new(self.model.named());
        self.best = None;
        for epoch in 1..=epochs {
            let loss = match self.epoch(stage, epoch) {
                Ok(l) => l,
                Err(e) => {
                    if let Some(out) = self.out {
                        self.save(&self.model, &out.last_good_dir(), None)?;
                    }
                    return Err(e);
                }
            };
            let rec = EpochRecord {
                epoch,
                stage,
                loss,
                samples: self.samples.len(),
                wall_time: self.start.elapsed().as_secs_f64(),
            };
            self.record(rec)?;
            if self.best.as_ref().is_none_or(|(b, _)| loss < *b) {
                self.best = Some((loss, self.model.clone()));
            }
        }
        Ok(())
    }
}

/// Trains `model` in place of its current parameters; stage 1 runs with one unroll step,
/// stage 2 with the model's configured count.
pub fn train<T: Real>(
    model: ReconModel<T>,
    samples: &[Sample<T>],
    cfg: &TrainConfig,
    out: Option<&TrainOutput>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let selected = select_samples(samples, cfg)?;
    let unroll = model.config.unroll;
    let log_file = match out {
        Some(o) => {
            std::fs::create_dir_all(&o.dir).map_err(|e| Error::io(&o.dir, e))?;
            Some(File::create(o.log_path()).map_err(|e| Error::io(o.log_path(), e))?)
        }
        None => None,
    };
    let adam = AdamState::new(model.named());
    let mut t = Trainer {
        cfg,
        samples: selected,
        out,
        log_file,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        start: Instant::now(),
        model,
        adam,
        log: Vec::new(),
        best: None,
    };
    t.run_stage(1, cfg.epochs_stage1, 1)?;
    t.run_stage(2, cfg.epochs_stage2, unroll)?;
    t.model.config.unroll = unroll;
    if let Some((_, m)) = &mut t.best {
        m.config.unroll = unroll;
    }
    if let Some(o) = out {
        t.save(&t.model, &o.final_dir(), t.log.last().map(|r| r.loss))?;
        let best = t.best.as_ref().map(|(l, m)| (*l, m)).unwrap_or((f64::NAN, &t.model));
        t.save(best.1, &o.best_dir(), best.0.is_finite().then_some(best.0))?;
    }
    Ok(TrainOutcome { model: t.model, adam: t.adam, log: t.log, best: t.best })
}

/// Number of samples per (contrast, field) group that training would use.
pub fn sample_counts<T: Real>(samples: &[Sample<T>], cfg: &TrainConfig) -> Result<BTreeMap<String, usize>> {
    let mut counts = BTreeMap::new();
    for s in select_samples(samples, cfg)? {
        *counts
            .entry(format!("{}-{}", s.condition.contrast.label(), s.condition.field.label()))
            .or_insert(0) += 1;
    }
    Ok(counts)
}
