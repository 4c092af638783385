//! Data consistency: solve `(A^H A + lambda I) x = A^H b + lambda z` by conjugate
//! gradients, with an implicit-differentiation backward rule.
//!
//! The backward pass never touches the CG iterates. With
//! `u = (A^H A + lambda I)^-1 g` (one more CG solve), the gradients are
//! `dL/dz = lambda u` and `dL/dlambda = Re <u, z - x>`, the latter from
//! `dx/dlambda = (A^H A + lambda I)^-1 (z - x)`.

use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::autodiff::{CustomOp, Graph, Var};
use crate::error::{ensure, Error, Result};
use crate::mri::{ComplexImage, KSpace, MriOperator};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgConfig {
    pub max_iters: usize,
    /// Stop once `||residual|| / ||rhs||` falls to this value.
    pub tolerance: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            max_iters: 15,
            tolerance: 1e-6,
        }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.max_iters >= 1, Contract, "CG max_iters must be >= 1");
        ensure!(
            self.tolerance > 0.0 && self.tolerance.is_finite(),
            Contract,
            "CG tolerance must be positive"
        );
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome<T: Real> {
    pub x: ComplexImage<T>,
    pub iterations: usize,
    /// Relative residual before the first and after every iteration.
    pub residuals: Vec<f64>,
}

type C<T> = Complex<T>;

fn re_dot<T: Real>(a: &[C<T>], b: &[C<T>]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p.re * q.re + p.im * q.im).as_f64()).sum()
}

/// Conjugate gradients for the Hermitian positive-definite map `apply`.
pub fn conjugate_gradient<T, F>(apply: F, rhs: &[C<T>], x0: &[C<T>], cfg: &CgConfig) -> Result<(Vec<C<T>>, usize, Vec<f64>)>
where
    T: Real,
    F: Fn(&[C<T>], &mut [C<T>]),
{
    cfg.validate()?;
    let n = rhs.len();
    let zero = C::new(T::zero(), T::zero());
    let rhs_norm = re_dot(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        return Ok((vec![zero; n], 0, vec![0.0]));
    }
    let mut x = x0.to_vec();
    let mut ap = vec![zero; n];
    apply(&x, &mut ap);
    let mut r: Vec<C<T>> = rhs.iter().zip(&ap).map(|(b, a)| *b - *a).collect();
    let mut p = r.clone();
    let mut rr = re_dot(&r, &r);
    let mut history = vec![rr.sqrt() / rhs_norm];
    let mut iters = 0;
    while iters < cfg.max_iters && history[iters] > cfg.tolerance {
        apply(&p, &mut ap);
        let pap = re_dot(&p, &ap);
        if !(pap.is_finite() && pap > 0.0) {
            return Err(Error::Numeric(format!("CG breakdown: <p, Mp> = {pap}")));
        }
        let alpha = T::lit(rr / pap);
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi = *xi + *pi * alpha);
        r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri = *ri - *ai * alpha);
        let rr_new = re_dot(&r, &r);
        if !rr_new.is_finite() {
            return Err(Error::Numeric("CG residual is not finite".into()));
        }
        let beta = T::lit(rr_new / rr);
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = *ri + *pi * beta);
        rr = rr_new;
        iters += 1;
        history.push(rr.sqrt() / rhs_norm);
        if rr == 0.0 {
            break;
        }
    }
    Ok((x, iters, history))
}

/// One acquisition's data-consistency problem with `A^H b` cached.
#[derive(Clone, Debug)]
pub struct DataConsistency<T: Real> {
    op: MriOperator<T>,
    atb: ComplexImage<T>,
}

impl<T: Real> DataConsistency<T> {
    pub fn new(op: MriOperator<T>, b: &KSpace<T>) -> Result<Self> {
        let atb = op.adjoint(b)?;
        Ok(Self { op, atb })
    }

    pub fn operator(&self) -> &MriOperator<T> {
        &self.op
    }

    /// Zero-filled reconstruction `A^H b`.
    pub fn atb(&self) -> &ComplexImage<T> {
        &self.atb
    }

    fn system(&self, lambda: T) -> impl Fn(&[C<T>], &mut [C<T>]) + '_ {
        move |v, out| {
            self.op.normal(v, out);
            out.iter_mut().zip(v).for_each(|(o, vi)| *o = *o + *vi * lambda);
        }
    }

    fn check(&self, img: &ComplexImage<T>, lambda: T) -> Result<()> {
        ensure!(
            lambda > T::zero() && lambda.is_finite(),
            Contract,
            "lambda must be positive, got {lambda}"
        );
        ensure!(
            img.height() == self.op.height() && img.width() == self.op.width(),
            Dimension,
            "image {}x{} for operator {}x{}",
            img.height(),
            img.width(),
            self.op.height(),
            self.op.width()
        );
        Ok(())
    }

    /// Solves for `x`, warm-started at `z`.
    pub fn solve(&self, z: &ComplexImage<T>, lambda: T, cfg: &CgConfig) -> Result<CgOutcome<T>> {
        self.check(z, lambda)?;
        let rhs: Vec<C<T>> = self.atb.data().iter().zip(z.data()).map(|(a, zi)| *a + *zi * lambda).collect();
        let (x, iterations, residuals) = conjugate_gradient(self.system(lambda), &rhs, z.data(), cfg)?;
        let x = ComplexImage::new(z.height(), z.width(), x)?;
        Ok(CgOutcome { x, iterations, residuals })
    }

    /// Implicit gradients `(dL/dz, dL/dlambda)` given `dL/dx` at the solution `x`.
    pub fn backward(
        &self,
        grad_x: &ComplexImage<T>,
        x: &ComplexImage<T>,
        z: &ComplexImage<T>,
        lambda: T,
        cfg: &CgConfig,
    ) -> Result<(ComplexImage<T>, f64)> {
        self.check(grad_x, lambda)?;
        let zero = vec![C::new(T::zero(), T::zero()); grad_x.data().len()];
        let (u, _, _) = conjugate_gradient(self.system(lambda), grad_x.data(), &zero, cfg)?;
        let grad_z: Vec<C<T>> = u.iter().map(|v| *v * lambda).collect();
        let grad_lambda: f64 = u
            .iter()
            .zip(z.data().iter().zip(x.data()))
            .map(|(ui, (zi, xi))| {
                let d = *zi - *xi;
                (ui.re * d.re + ui.im * d.im).as_f64()
            })
            .sum();
        if !grad_lambda.is_finite() {
            return Err(Error::Numeric("non-finite lambda gradient".into()));
        }
        Ok((ComplexImage::new(z.height(), z.width(), grad_z)?, grad_lambda))
    }
}

/// `dc_solve(z, b, setup, lambda, cfg)` as a free function.
pub fn dc_solve<T: Real>(
    z: &ComplexImage<T>,
    b: &KSpace<T>,
    op: &MriOperator<T>,
    lambda: T,
    cfg: &CgConfig,
) -> Result<CgOutcome<T>> {
    DataConsistency::new(op.clone(), b)?.solve(z, lambda, cfg)
}

/// Graph node wrapping [`DataConsistency::solve`]; inputs are `z` as `[2,H,W]` and a scalar `lambda`.
pub struct DcNode<T: Real> {
    pub problem: Arc<DataConsistency<T>>,
    pub cfg: CgConfig,
}

impl<T: Real> CustomOp<T> for DcNode<T> {
    fn name(&self) -> &str {
        "data_consistency"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        ensure!(inputs.len() == 2, Contract, "dc node takes (z, lambda)");
        let z = ComplexImage::from_tensor(inputs[0])?;
        let out = self.problem.solve(&z, inputs[1].item(), &self.cfg)?;
        out.x.to_tensor().reshape(inputs[0].shape())
    }

    fn backward(&self, grad: &Tensor<T>, inputs: &[&Tensor<T>], output: &Tensor<T>) -> Result<Vec<Option<Tensor<T>>>> {
        let g = ComplexImage::from_tensor(grad)?;
        let z = ComplexImage::from_tensor(inputs[0])?;
        let x = ComplexImage::from_tensor(output)?;
        let (gz, gl) = self.problem.backward(&g, &x, &z, inputs[1].item(), &self.cfg)?;
        Ok(vec![
            Some(gz.to_tensor().reshape(inputs[0].shape())?),
            Some(Tensor::new(inputs[1].shape().to_vec(), vec![T::lit(gl)])?),
        ])
    }
}

/// Adds a data-consistency step to `graph`.
pub fn dc_block<T: Real>(
    graph: &mut Graph<T>,
    problem: &Arc<DataConsistency<T>>,
    z: Var,
    lambda: Var,
    cfg: &CgConfig,
) -> Result<Var> {
    graph.custom(
        &[z, lambda],
        Box::new(DcNode {
            problem: Arc::clone(problem),
            cfg: *cfg,
        }),
    )
}

/// Graph node applying `A^H A` to a `[2,H,W]` tensor; self-adjoint, so backward applies it again.
pub struct NormalNode<T: Real> {
    pub op: MriOperator<T>,
}

impl<T: Real> NormalNode<T> {
    fn apply(&self, t: &Tensor<T>) -> Result<Tensor<T>> {
        let img = ComplexImage::from_tensor(t)?;
        let mut out = vec![C::new(T::zero(), T::zero()); img.data().len()];
        self.op.normal(img.data(), &mut out);
        ComplexImage::new(img.height(), img.width(), out)?.to_tensor().reshape(t.shape())
    }
}

impl<T: Real> CustomOp<T> for NormalNode<T> {
    fn name(&self) -> &str {
        "normal_operator"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        self.apply(inputs[0])
    }

    fn backward(&self, grad: &Tensor<T>, _: &[&Tensor<T>], _: &Tensor<T>) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(self.apply(grad)?)])
    }
}
