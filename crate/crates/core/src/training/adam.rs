use crate::error::{ensure, Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Bias-corrected Adam moments for a named parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Real> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    names: Vec<String>,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = (String, &'a Tensor<T>)>) -> Self {
        let (mut names, mut first, mut second) = (Vec::new(), Vec::new(), Vec::new());
        for (name, p) in params {
            names.push(name);
            first.push(Tensor::zeros(p.shape()));
            second.push(Tensor::zeros(p.shape()));
        }
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            names,
            first,
            second,
        }
    }

    /// Rebuilds a state from stored moments.
    pub fn from_parts(step: u64, moments: Vec<(String, Tensor<T>, Tensor<T>)>) -> Result<Self> {
        let mut s = Self::new(std::iter::empty());
        s.step = step;
        for (name, m, v) in moments {
            ensure!(m.shape() == v.shape(), Dimension, "moments of '{name}' differ in shape");
            s.names.push(name);
            s.first.push(m.detached());
            s.second.push(v.detached());
        }
        Ok(s)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `(name, first moment, second moment)` per parameter.
    pub fn moments(&self) -> impl Iterator<Item = (&str, &Tensor<T>, &Tensor<T>)> {
        self.names
            .iter()
            .zip(&self.first)
            .zip(&self.second)
            .map(|((n, m), v)| (n.as_str(), m, v))
    }
}

/// One Adam update from each parameter's accumulated gradient (missing gradient = zero).
///
/// All gradients are checked before anything is written, so a non-finite gradient leaves
/// parameters and state untouched.
pub fn adam_step<T: Real>(params: &mut [(String, &mut Tensor<T>)], state: &mut AdamState<T>, lr: f64) -> Result<()> {
    ensure!(lr.is_finite() && lr > 0.0, Contract, "learning rate must be positive, got {lr}");
    ensure!(
        params.len() == state.names.len(),
        Dimension,
        "{} parameters but optimiser tracks {}",
        params.len(),
        state.names.len()
    );
    for (i, (name, p)) in params.iter().enumerate() {
        ensure!(
            *name == state.names[i] && p.shape() == state.first[i].shape(),
            Dimension,
            "parameter '{name}' {:?} does not match optimiser slot '{}' {:?}",
            p.shape(),
            state.names[i],
            state.first[i].shape()
        );
        if let Some(g) = p.grad() {
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in '{name}' at index {j}")));
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, (_, p)) in params.iter_mut().enumerate() {
        let grad: Vec<f64> = match p.grad() {
            Some(g) => g.iter().map(|v| v.as_f64()).collect(),
            None => vec![0.0; p.len()],
        };
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            let g = grad[j];
            let mj = b1 * m[j].as_f64() + (1.0 - b1) * g;
            let vj = b2 * v[j].as_f64() + (1.0 - b2) * g * g;
            m[j] = T::lit(mj);
            v[j] = T::lit(vj);
            let update = lr * (mj / c1) / ((vj / c2).sqrt() + state.eps);
            *x = T::lit(x.as_f64() - update);
        }
    }
    Ok(())
}
