//! Residual five-layer CNN with optional per-channel feature scaling.

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::conditioning::{FilmParams, SCALED_LAYERS};
use crate::error::{ensure, Result};
use crate::mri::ComplexImage;
use crate::real::Real;
use crate::tensor::Tensor;

/// Kernels `2->C, C->C, C->C, C->C, C->2`, all 3x3, each with a bias.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnParams<T: Real> {
    channels: usize,
    layers: Vec<(Tensor<T>, Tensor<T>)>,
}

fn layer_channels(c: usize) -> [(usize, usize); 5] {
    [(2, c), (c, c), (c, c), (c, c), (c, 2)]
}

pub fn cnn_param_count(channels: usize) -> usize {
    layer_channels(channels).iter().map(|&(i, o)| o * i * 9 + o).sum()
}

impl<T: Real> CnnParams<T> {
    pub fn zeros(channels: usize) -> Self {
        let layers = layer_channels(channels)
            .iter()
            .map(|&(i, o)| (Tensor::zeros(&[o, i, 3, 3]).with_grad(), Tensor::zeros(&[o]).with_grad()))
            .collect();
        Self { channels, layers }
    }

    /// Uniform in `+-1/sqrt(fan_in)` for kernels and biases.
    pub fn init<R: Rng>(channels: usize, rng: &mut R) -> Result<Self> {
        ensure!(channels >= 1, Contract, "CNN width must be positive");
        let mut layers = Vec::with_capacity(5);
        for &(i, o) in &layer_channels(channels) {
            let bound = 1.0 / ((i * 9) as f64).sqrt();
            let w = (0..o * i * 9).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
            let b = (0..o).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
            layers.push((Tensor::new(vec![o, i, 3, 3], w)?.with_grad(), Tensor::new(vec![o], b)?.with_grad()));
        }
        Ok(Self { channels, layers })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn count_params(&self) -> usize {
        self.layers.iter().map(|(w, b)| w.len() + b.len()).sum()
    }

    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, (w, b))| [(format!("conv{}.weight", i + 1), w), (format!("conv{}.bias", i + 1), b)])
            .collect()
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, (w, b))| [(format!("conv{}.weight", i + 1), w), (format!("conv{}.bias", i + 1), b)])
            .collect()
    }

    pub fn shapes(channels: usize) -> Vec<(String, Vec<usize>)> {
        layer_channels(channels)
            .iter()
            .enumerate()
            .flat_map(|(l, &(i, o))| {
                [(format!("conv{}.weight", l + 1), vec![o, i, 3, 3]), (format!("conv{}.bias", l + 1), vec![o])]
            })
            .collect()
    }

    pub fn bind(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.named().into_iter().map(|(_, t)| g.param(t)).collect()
    }
}

/// Records `x - N(x)` for a `[2,H,W]` input; `scales` modulates layers 1-4 (conv, scale, ReLU).
pub fn denoise_graph<T: Real>(g: &mut Graph<T>, x: Var, theta: &[Var], scales: Option<&[Var]>) -> Result<Var> {
    ensure!(theta.len() == 10, Dimension, "CNN needs 10 bound tensors, got {}", theta.len());
    if let Some(s) = scales {
        ensure!(s.len() == SCALED_LAYERS, Dimension, "expected {SCALED_LAYERS} scale vectors, got {}", s.len());
    }
    let shape = g.shape(x).to_vec();
    ensure!(
        shape.len() == 3 && shape[0] == 2,
        Dimension,
        "denoiser input must be [2,H,W], got {shape:?}"
    );
    let mut h = g.reshape(x, &[1, 2, shape[1], shape[2]])?;
    for l in 0..5 {
        h = g.conv2d(h, theta[2 * l], theta[2 * l + 1])?;
        if l < 4 {
            if let Some(s) = scales {
                h = g.channel_scale(h, s[l])?;
            }
            h = g.relu(h)?;
        }
    }
    let noise = g.reshape(h, &shape)?;
    g.sub(x, noise)
}

/// Applies the denoiser outside of training. `film = None` runs the unmodulated network.
pub fn denoise<T: Real>(x: &ComplexImage<T>, theta: &CnnParams<T>, film: Option<&FilmParams<T>>) -> Result<ComplexImage<T>> {
    let mut g = Graph::new();
    let xv = g.constant(x.to_tensor());
    let vars: Vec<Var> = theta.named().into_iter().map(|(_, t)| g.constant(t.clone())).collect();
    let scales = match film {
        Some(f) => {
            ensure!(
                f.scales.len() == SCALED_LAYERS && f.scales.iter().all(|s| s.len() == theta.channels()),
                Dimension,
                "film scales must be {SCALED_LAYERS} vectors of length {}",
                theta.channels()
            );
            Some(
                f.scales
                    .iter()
                    .map(|s| g.constant(Tensor::from_vec(s.clone())))
                    .collect::<Vec<_>>(),
            )
        }
        None => None,
    };
    let out = denoise_graph(&mut g, xv, &vars, scales.as_deref())?;
    ComplexImage::from_tensor(g.value(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{grad_check, rand_tensor, rng};

    fn rand_image(seed: u64, h: usize, w: usize) -> ComplexImage<f64> {
        ComplexImage::from_tensor(&rand_tensor(&mut rng(seed), &[2, h, w])).unwrap()
    }

    #[test]
    fn counts_match_layer_arithmetic() {
        assert_eq!(cnn_param_count(64), 113_154);
        assert_eq!(cnn_param_count(64), 1_216 + 3 * 36_928 + 1_154);
        assert_eq!(cnn_param_count(8), 3 * (9 * 64 + 8) + (9 * 16 + 8) + (9 * 16 + 2));
        assert_eq!(CnnParams::<f32>::zeros(64).count_params(), 113_154);
        let ratio = crate::conditioning::mlp_param_count(16, 64) as f64 / 113_154.0;
        assert!((ratio - 0.047).abs() < 0.001);
    }

    #[test]
    fn zero_weights_give_identity() {
        let x = rand_image(1, 8, 9);
        let theta = CnnParams::<f64>::zeros(4);
        assert_eq!(denoise(&x, &theta, None).unwrap(), x);
        let film = FilmParams { scales: vec![vec![3.0; 4]; 4], lambda: 1.0 };
        assert_eq!(denoise(&x, &theta, Some(&film)).unwrap(), x);
    }

    #[test]
    fn unit_scales_reproduce_plain_network_exactly() {
        let x = rand_image(2, 10, 8);
        let theta = CnnParams::<f64>::init(6, &mut rng(3)).unwrap();
        let plain = denoise(&x, &theta, None).unwrap();
        let ada = denoise(&x, &theta, Some(&FilmParams::identity(6, 1.0))).unwrap();
        assert_eq!(plain, ada);
        assert_ne!(plain, x);
        assert_eq!(plain.height(), 10);
        assert_eq!(plain.width(), 8);
    }

    #[test]
    fn rejects_mis_sized_scales() {
        let x = rand_image(4, 8, 8);
        let theta = CnnParams::<f64>::init(4, &mut rng(4)).unwrap();
        let film = FilmParams { scales: vec![vec![1.0; 3]; 4], lambda: 1.0 };
        assert!(denoise(&x, &theta, Some(&film)).is_err());
    }

    #[test]
    fn scaling_layer_only_affects_later_layers() {
        let x = rand_image(5, 8, 8);
        let theta = CnnParams::<f64>::init(4, &mut rng(5)).unwrap();
        // Record activations after each conv with two films differing at layer 3 only.
        let acts = |scale3: f64| {
            let mut g = Graph::new();
            let xv = g.constant(x.to_tensor());
            let vars: Vec<Var> = theta.named().into_iter().map(|(_, t)| g.constant(t.clone())).collect();
            let mut h = g.reshape(xv, &[1, 2, 8, 8]).unwrap();
            let mut out = Vec::new();
            for l in 0..4 {
                h = g.conv2d(h, vars[2 * l], vars[2 * l + 1]).unwrap();
                let s = g.constant(Tensor::full(&[4], if l == 2 { scale3 } else { 1.0 }));
                h = g.channel_scale(h, s).unwrap();
                h = g.relu(h).unwrap();
                out.push(g.value(h).data().to_vec());
            }
            out
        };
        let (a, b) = (acts(1.0), acts(0.3));
        assert_eq!(a[0], b[0]);
        assert_eq!(a[1], b[1]);
        assert_ne!(a[2], b[2]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let theta = CnnParams::<f64>::init(3, &mut rng(6)).unwrap();
        let x = rand_image(7, 8, 8).to_tensor();
        let mut r = rng(8);
        let scales: Vec<Tensor<f64>> = (0..4).map(|_| rand_tensor(&mut r, &[3])).collect();
        let mut inputs: Vec<Tensor<f64>> = theta.named().into_iter().map(|(_, t)| t.detached()).collect();
        inputs.extend(scales);
        let err = grad_check(&inputs, |g, v| {
            let xv = g.constant(x.clone());
            let out = denoise_graph(g, xv, &v[..10], Some(&v[10..]))?;
            g.dot(out, out)
        });
        assert!(err < 1e-3, "relative error {err}");
    }
}
