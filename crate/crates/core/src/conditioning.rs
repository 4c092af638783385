//! Acquisition-condition vectors and the perceptron that maps them to
//! per-channel feature scales and the data-consistency weight.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softplus, softplus_inverse, Graph, Var};
use crate::error::{ensure, Error, Result};
use crate::mri::{Contrast, FieldStrength};
use crate::real::Real;
use crate::tensor::Tensor;

/// Entry names of the condition vector, in order. Serialised into checkpoints.
pub const CONDITION_SCHEMA: [&str; 5] = ["contrast_t1", "contrast_t2", "contrast_flair", "field_3t", "acceleration"];

/// Floor added after softplus so lambda stays strictly positive.
pub const LAMBDA_FLOOR: f64 = 1e-4;

/// Number of modulated CNN layers.
pub const SCALED_LAYERS: usize = 4;

/// Contrast and field strength of an acquisition, written `T2-3T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Setting {
    pub contrast: Contrast,
    pub field: FieldStrength,
}

impl Setting {
    pub fn new(contrast: Contrast, field: FieldStrength) -> Self {
        Self { contrast, field }
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.contrast.label(), self.field.label())
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Contract(format!("setting '{s}' is not of the form CONTRAST-FIELD (e.g. T2-3T)"));
        let (c, f) = s.split_once('-').ok_or_else(bad)?;
        Ok(Self {
            contrast: Contrast::parse(c).ok_or_else(bad)?,
            field: FieldStrength::parse(f).ok_or_else(bad)?,
        })
    }

    pub fn condition(&self, acceleration: f64) -> Result<ConditionVector> {
        ConditionVector::new(self.contrast, self.field, acceleration)
    }
}

/// Contrast one-hot, field bit (1 = 3T) and raw acceleration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionVector {
    pub contrast: Contrast,
    pub field: FieldStrength,
    pub acceleration: f64,
}

pub fn encode_condition(contrast: &str, field_tesla: f64, acceleration: f64) -> Result<ConditionVector> {
    let contrast = Contrast::parse(contrast).ok_or_else(|| Error::Contract(format!("unknown contrast '{contrast}'")))?;
    let field = FieldStrength::from_tesla(field_tesla)
        .ok_or_else(|| Error::Contract(format!("unsupported field strength {field_tesla}T")))?;
    ConditionVector::new(contrast, field, acceleration)
}

impl ConditionVector {
    pub fn new(contrast: Contrast, field: FieldStrength, acceleration: f64) -> Result<Self> {
        ensure!(
            acceleration.is_finite() && acceleration >= 1.0,
            Contract,
            "acceleration must be >= 1, got {acceleration}"
        );
        Ok(Self { contrast, field, acceleration })
    }

    pub fn setting(&self) -> Setting {
        Setting::new(self.contrast, self.field)
    }

    pub fn values(&self) -> [f64; 5] {
        let mut v = [0.0; 5];
        v[match self.contrast {
            Contrast::T1 => 0,
            Contrast::T2 => 1,
            Contrast::Flair => 2,
        }] = 1.0;
        v[3] = if self.field == FieldStrength::T3 { 1.0 } else { 0.0 };
        v[4] = self.acceleration;
        v
    }

    /// Decodes a raw vector; the one-hot block must have exactly one set bit.
    pub fn from_values(v: &[f64]) -> Result<Self> {
        ensure!(v.len() == 5, Dimension, "condition vector has {} entries, expected 5", v.len());
        let hot: Vec<usize> = (0..3).filter(|&i| v[i] == 1.0).collect();
        ensure!(
            hot.len() == 1 && (0..3).all(|i| v[i] == 0.0 || v[i] == 1.0),
            Contract,
            "contrast block {:?} is not one-hot",
            &v[..3]
        );
        ensure!(v[3] == 0.0 || v[3] == 1.0, Contract, "field entry {} is not binary", v[3]);
        let field = if v[3] == 1.0 { FieldStrength::T3 } else { FieldStrength::T1_5 };
        Self::new(Contrast::ALL[hot[0]], field, v[4])
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::new(vec![1, 5], self.values().iter().map(|&v| T::lit(v)).collect()).expect("static shape")
    }
}

/// Five dense layers: `5 -> N -> N -> N -> N -> 4C + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T: Real> {
    hidden: usize,
    channels: usize,
    /// `(weight [out, in], bias [out])` per layer.
    layers: Vec<(Tensor<T>, Tensor<T>)>,
}

fn layer_dims(hidden: usize, channels: usize) -> [(usize, usize); 5] {
    let out = SCALED_LAYERS * channels + 1;
    [(5, hidden), (hidden, hidden), (hidden, hidden), (hidden, hidden), (hidden, out)]
}

/// Learnable scalar count of the perceptron for hidden width `hidden` and CNN width `channels`.
pub fn mlp_param_count(hidden: usize, channels: usize) -> usize {
    layer_dims(hidden, channels).iter().map(|&(i, o)| i * o + o).sum()
}

impl<T: Real> MlpParams<T> {
    pub fn zeros(hidden: usize, channels: usize) -> Self {
        let layers = layer_dims(hidden, channels)
            .iter()
            .map(|&(i, o)| (Tensor::zeros(&[o, i]).with_grad(), Tensor::zeros(&[o]).with_grad()))
            .collect();
        Self { hidden, channels, layers }
    }

    /// Fan-in uniform init; the head starts near identity scales and `lambda = init_lambda`.
    pub fn init<R: Rng>(hidden: usize, channels: usize, init_lambda: f64, rng: &mut R) -> Result<Self> {
        ensure!(hidden >= 1 && channels >= 1, Contract, "MLP widths must be positive");
        ensure!(
            init_lambda > LAMBDA_FLOOR,
            Contract,
            "initial lambda must exceed {LAMBDA_FLOOR}"
        );
        let dims = layer_dims(hidden, channels);
        let mut layers = Vec::with_capacity(5);
        for (l, &(i, o)) in dims.iter().enumerate() {
            let bound = 1.0 / (i as f64).sqrt();
            let head = l == dims.len() - 1;
            let wscale = if head { 0.1 } else { 1.0 };
            let w: Vec<T> = (0..i * o).map(|_| T::lit(wscale * rng.random_range(-bound..bound))).collect();
            let b: Vec<T> = if head {
                let mut b = vec![T::one(); o];
                b[o - 1] = T::lit(softplus_inverse(init_lambda - LAMBDA_FLOOR));
                b
            } else {
                (0..o).map(|_| T::lit(rng.random_range(-bound..bound))).collect()
            };
            layers.push((Tensor::new(vec![o, i], w)?.with_grad(), Tensor::new(vec![o], b)?.with_grad()));
        }
        Ok(Self { hidden, channels, layers })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn count_params(&self) -> usize {
        self.layers.iter().map(|(w, b)| w.len() + b.len()).sum()
    }

    pub fn output_len(&self) -> usize {
        SCALED_LAYERS * self.channels + 1
    }

    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, (w, b))| [(format!("fc{}.weight", i + 1), w), (format!("fc{}.bias", i + 1), b)])
            .collect()
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, (w, b))| [(format!("fc{}.weight", i + 1), w), (format!("fc{}.bias", i + 1), b)])
            .collect()
    }

    pub fn shapes(hidden: usize, channels: usize) -> Vec<(String, Vec<usize>)> {
        layer_dims(hidden, channels)
            .iter()
            .enumerate()
            .flat_map(|(l, &(i, o))| [(format!("fc{}.weight", l + 1), vec![o, i]), (format!("fc{}.bias", l + 1), vec![o])])
            .collect()
    }

    /// Registers the parameters as graph leaves in [`MlpParams::named`] order.
    pub fn bind(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.named().into_iter().map(|(_, t)| g.param(t)).collect()
    }
}

/// Feature scales for the four modulated layers and the data-consistency weight.
#[derive(Clone, Debug, PartialEq)]
pub struct FilmParams<T> {
    pub scales: Vec<Vec<T>>,
    pub lambda: T,
}

impl<T: Real> FilmParams<T> {
    /// Unmodulated features with the given lambda.
    pub fn identity(channels: usize, lambda: T) -> Self {
        Self {
            scales: vec![vec![T::one(); channels]; SCALED_LAYERS],
            lambda,
        }
    }
}

/// Graph handles for the perceptron output.
#[derive(Clone, Debug)]
pub struct FilmVars {
    pub scales: Vec<Var>,
    pub lambda: Var,
}

/// Hidden layers use ReLU; the head is split into raw scales and `softplus(.) + floor` for lambda.
pub fn mlp_graph<T: Real>(g: &mut Graph<T>, m: &ConditionVector, params: &MlpParams<T>, vars: &[Var]) -> Result<FilmVars> {
    ensure!(vars.len() == 10, Dimension, "MLP needs 10 bound tensors, got {}", vars.len());
    let mut h = g.constant(m.to_tensor());
    for l in 0..5 {
        h = g.dense(h, vars[2 * l], vars[2 * l + 1])?;
        if l < 4 {
            h = g.relu(h)?;
        }
    }
    let c = params.channels();
    let scales = (0..SCALED_LAYERS)
        .map(|i| g.slice(h, i * c, &[c]))
        .collect::<Result<Vec<_>>>()?;
    let raw = g.slice(h, SCALED_LAYERS * c, &[])?;
    let sp = g.softplus(raw)?;
    let lambda = g.add_const(sp, T::lit(LAMBDA_FLOOR))?;
    Ok(FilmVars { scales, lambda })
}

/// Evaluates the perceptron outside of training.
pub fn mlp_forward<T: Real>(m: &ConditionVector, params: &MlpParams<T>) -> Result<FilmParams<T>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = params.named().into_iter().map(|(_, t)| g.constant(t.clone())).collect();
    let film = mlp_graph(&mut g, m, params, &vars)?;
    Ok(FilmParams {
        scales: film.scales.iter().map(|&v| g.value(v).data().to_vec()).collect(),
        lambda: g.value(film.lambda).item(),
    })
}

/// `softplus(raw) + floor`, the positivity transform shared by both lambda parametrisations.
pub fn lambda_from_raw<T: Real>(raw: T) -> T {
    softplus(raw) + T::lit(LAMBDA_FLOOR)
}
