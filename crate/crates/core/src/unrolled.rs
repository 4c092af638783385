//! K-step unrolled reconstruction alternating the denoiser and the
//! data-consistency solve, with weights shared across steps.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softplus_inverse, Graph, Var};
use crate::conditioning::{lambda_from_raw, mlp_graph, ConditionVector, FilmParams, MlpParams, LAMBDA_FLOOR};
use crate::dc::{dc_block, CgConfig, DataConsistency};
use crate::denoiser::{denoise_graph, CnnParams};
use crate::error::{ensure, Error, Result};
use crate::mri::ComplexImage;
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Condition-driven feature scales and lambda.
    #[serde(rename = "ada")]
    Ada,
    /// One network and one scalar lambda for every setting.
    #[serde(rename = "joint_plain", alias = "joint")]
    JointPlain,
    /// Same architecture as `JointPlain`, trained on one setting.
    #[serde(rename = "individual_plain", alias = "individual")]
    IndividualPlain,
}

impl Mode {
    pub fn is_ada(self) -> bool {
        self == Mode::Ada
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Ada => "ada",
            Mode::JointPlain => "joint_plain",
            Mode::IndividualPlain => "individual_plain",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnrollConfig {
    /// Number of unrolled denoise + data-consistency steps.
    pub unroll: usize,
    pub cg: CgConfig,
    pub mode: Mode,
}

impl UnrollConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.unroll >= 1, Contract, "unroll count must be >= 1");
        self.cg.validate()
    }
}

/// Network widths and initial lambda.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArch {
    pub channels: usize,
    pub mlp_hidden: usize,
    pub init_lambda: f64,
}

impl Default for ModelArch {
    fn default() -> Self {
        Self {
            channels: 64,
            mlp_hidden: 16,
            init_lambda: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconModel<T: Real> {
    pub theta: CnnParams<T>,
    /// Present in `Ada` mode only.
    pub phi: Option<MlpParams<T>>,
    /// Raw (pre-softplus) scalar lambda; present in the plain modes only.
    pub lambda_raw: Option<Tensor<T>>,
    pub config: UnrollConfig,
}

/// Graph handles produced by [`ReconModel::forward_graph`].
pub struct ForwardVars {
    /// In [`ReconModel::named`] order.
    pub params: Vec<Var>,
    pub output: Var,
    pub lambda: Var,
}

impl<T: Real> ReconModel<T> {
    pub fn new(arch: &ModelArch, config: UnrollConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = CnnParams::init(arch.channels, &mut rng)?;
        let (phi, lambda_raw) = if config.mode.is_ada() {
            (Some(MlpParams::init(arch.mlp_hidden, arch.channels, arch.init_lambda, &mut rng)?), None)
        } else {
            ensure!(arch.init_lambda > LAMBDA_FLOOR, Contract, "initial lambda must exceed {LAMBDA_FLOOR}");
            let raw = T::lit(softplus_inverse(arch.init_lambda - LAMBDA_FLOOR));
            (None, Some(Tensor::scalar(raw).with_grad()))
        };
        Ok(Self { theta, phi, lambda_raw, config })
    }

    /// Assembles a model from parts, checking the mode contract.
    pub fn from_parts(
        theta: CnnParams<T>,
        phi: Option<MlpParams<T>>,
        lambda_raw: Option<Tensor<T>>,
        config: UnrollConfig,
    ) -> Result<Self> {
        config.validate()?;
        ensure!(
            config.mode.is_ada() == phi.is_some() && phi.is_some() != lambda_raw.is_some(),
            Contract,
            "mode {:?} needs exactly one of MLP parameters / scalar lambda",
            config.mode
        );
        if let Some(p) = &phi {
            ensure!(
                p.channels() == theta.channels(),
                Dimension,
                "MLP emits scales for {} channels, CNN has {}",
                p.channels(),
                theta.channels()
            );
        }
        if let Some(l) = &lambda_raw {
            ensure!(l.len() == 1, Dimension, "scalar lambda must hold one value");
        }
        Ok(Self { theta, phi, lambda_raw, config })
    }

    pub fn channels(&self) -> usize {
        self.theta.channels()
    }

    pub fn mlp_hidden(&self) -> Option<usize> {
        self.phi.as_ref().map(|p| p.hidden())
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    /// Copy with a different unroll count (same parameters).
    pub fn with_unroll(&self, unroll: usize) -> Self {
        let mut m = self.clone();
        m.config.unroll = unroll;
        m
    }

    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.theta.named();
        if let Some(p) = &self.phi {
            out.extend(p.named());
        }
        if let Some(l) = &self.lambda_raw {
            out.push(("lambda.raw".to_string(), l));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = self.theta.named_mut();
        if let Some(p) = &mut self.phi {
            out.extend(p.named_mut());
        }
        if let Some(l) = &mut self.lambda_raw {
            out.push(("lambda.raw".to_string(), l));
        }
        out
    }

    pub fn count_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.named_mut().into_iter().for_each(|(_, t)| t.zero_grad());
    }

    fn require_condition<'a>(&self, m: Option<&'a ConditionVector>) -> Result<Option<&'a ConditionVector>> {
        if self.config.mode.is_ada() {
            m.map(Some)
                .ok_or_else(|| Error::Contract("ada mode requires a condition vector".into()))
        } else {
            Ok(None)
        }
    }

    /// Feature scales and lambda the model uses for condition `m`.
    pub fn film(&self, m: Option<&ConditionVector>) -> Result<FilmParams<T>> {
        match (self.require_condition(m)?, &self.phi, &self.lambda_raw) {
            (Some(m), Some(phi), _) => crate::conditioning::mlp_forward(m, phi),
            (None, _, Some(raw)) => Ok(FilmParams::identity(self.channels(), lambda_from_raw(raw.item()))),
            _ => Err(Error::Contract("model parameters inconsistent with its mode".into())),
        }
    }

    pub fn lambda_for(&self, m: Option<&ConditionVector>) -> Result<T> {
        Ok(self.film(m)?.lambda)
    }

    /// Records the full unrolled forward pass; the perceptron runs once and its output is shared by all steps.
    pub fn forward_graph(
        &self,
        g: &mut Graph<T>,
        problem: &Arc<DataConsistency<T>>,
        m: Option<&ConditionVector>,
    ) -> Result<ForwardVars> {
        let m = self.require_condition(m)?;
        let params: Vec<Var> = self.named().into_iter().map(|(_, t)| g.param(t)).collect();
        let theta = &params[..10];
        let (scales, lambda) = match (m, &self.phi) {
            (Some(m), Some(phi)) => {
                let film = mlp_graph(g, m, phi, &params[10..20])?;
                (Some(film.scales), film.lambda)
            }
            _ => {
                let sp = g.softplus(params[10])?;
                (None, g.add_const(sp, T::lit(LAMBDA_FLOOR))?)
            }
        };
        let mut x = g.constant(problem.atb().to_tensor());
        for _ in 0..self.config.unroll {
            let z = denoise_graph(g, x, theta, scales.as_deref())?;
            x = dc_block(g, problem, z, lambda, &self.config.cg)?;
        }
        Ok(ForwardVars { params, output: x, lambda })
    }

    /// Inference: `x_0 = A^H b`, then K rounds of denoise and data consistency.
    pub fn reconstruct(&self, problem: &Arc<DataConsistency<T>>, m: Option<&ConditionVector>) -> Result<ComplexImage<T>> {
        let mut g = Graph::new();
        let fv = self.forward_graph(&mut g, problem, m)?;
        ComplexImage::from_tensor(g.value(fv.output))
    }
}

/// Mean over all `2HW` real components of the squared difference, recorded in `g`.
pub fn loss_mse<T: Real>(g: &mut Graph<T>, x_rec: Var, x_gt: Var) -> Result<Var> {
    let d = g.sub(x_rec, x_gt)?;
    let sq = g.mul(d, d)?;
    g.mean(sq)
}

/// [`loss_mse`] on plain images.
pub fn mse<T: Real>(x_rec: &ComplexImage<T>, x_gt: &ComplexImage<T>) -> Result<f64> {
    ensure!(
        x_rec.height() == x_gt.height() && x_rec.width() == x_gt.width(),
        Dimension,
        "images {}x{} and {}x{} differ in size",
        x_rec.height(),
        x_rec.width(),
        x_gt.height(),
        x_gt.width()
    );
    let s: f64 = x_rec
        .data()
        .iter()
        .zip(x_gt.data())
        .map(|(a, b)| (*a - *b).norm_sqr().as_f64())
        .sum();
    Ok(s / (2 * x_gt.data().len()) as f64)
}

impl<T: Real> MlpParams<T> {
    /// Perceptron whose output ignores its input: unit scales and the given lambda.
    pub fn constant_output(hidden: usize, channels: usize, lambda: f64) -> Result<Self> {
        ensure!(lambda > LAMBDA_FLOOR, Contract, "lambda must exceed {LAMBDA_FLOOR}");
        let mut p = Self::zeros(hidden, channels);
        let raw = T::lit(softplus_inverse(lambda - LAMBDA_FLOOR));
        if let Some((_, bias)) = p.named_mut().pop() {
            let n = bias.len();
            bias.data_mut().iter_mut().for_each(|v| *v = T::one());
            bias.data_mut()[n - 1] = raw;
        }
        Ok(p)
    }
}
