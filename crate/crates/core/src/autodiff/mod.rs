//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records every operation applied during a forward pass. Nodes
//! are appended in evaluation order, so the node index is a topological
//! order and [`Graph::backward`] simply walks it in reverse, visiting each
//! node once.
//!
//! Learnable tensors enter the graph through [`Graph::param`]; everything
//! else through [`Graph::constant`]. After `backward`, gradients are read
//! from the returned [`Gradients`] and folded into the parameter tensors with
//! [`Gradients::accumulate_into`].
//!
//! Operations that need a hand-written backward rule (the data-consistency
//! solve, for one) implement [`CustomOp`].

mod conv;

use crate::error::{ensure, Error, Result};
use crate::real::Real;
use crate::tensor::{check_finite, numel, Tensor};

use conv::ConvGeom;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An operation with a user-supplied backward rule.
pub trait CustomOp<T: Real> {
    fn name(&self) -> &str {
        "custom"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>>;

    /// Returns one entry per input; `None` means "no gradient for this input".
    fn backward(
        &self,
        grad_output: &Tensor<T>,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
    ) -> Result<Vec<Option<Tensor<T>>>>;
}

/// Closure-backed [`CustomOp`].
pub struct FnOp<F, B> {
    pub name: String,
    pub forward: F,
    pub backward: B,
}

impl<T, F, B> CustomOp<T> for FnOp<F, B>
where
    T: Real,
    F: Fn(&[&Tensor<T>]) -> Result<Tensor<T>>,
    B: Fn(&Tensor<T>, &[&Tensor<T>], &Tensor<T>) -> Result<Vec<Option<Tensor<T>>>>,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        (self.forward)(inputs)
    }

    fn backward(
        &self,
        grad_output: &Tensor<T>,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
    ) -> Result<Vec<Option<Tensor<T>>>> {
        (self.backward)(grad_output, inputs, output)
    }
}

enum Op<T: Real> {
    Leaf,
    Conv2d { input: Var, kernel: Var, bias: Var, cols: Vec<T>, geom: ConvGeom },
    Dense { input: Var, weight: Var, bias: Var },
    Relu { input: Var },
    ChannelScale { input: Var, scale: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    ScaleConst { input: Var, factor: T },
    AddConst { input: Var },
    MulScalar { input: Var, scalar: Var },
    DivScalar { num: Var, den: Var },
    Dot { a: Var, b: Var },
    Sum { input: Var },
    Mean { input: Var },
    Softplus { input: Var },
    Reshape { input: Var },
    Slice { input: Var, start: usize },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp<T>> },
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    tracked: bool,
}

/// Computation graph recorded during a forward pass.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&[T]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `var` into `tensor`'s grad field (no-op when unreachable).
    pub fn accumulate_into(&self, var: Var, tensor: &mut Tensor<T>) -> Result<()> {
        match self.get(var) {
            Some(g) => tensor.accumulate_grad(g),
            None => Ok(()),
        }
    }
}

fn add_into<T: Real>(slot: &mut Option<Vec<T>>, g: Vec<T>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
        None => *slot = Some(g),
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, what: &str, value: Tensor<T>, op: Op<T>, tracked: bool) -> Result<Var> {
        check_finite(what, value.data())?;
        self.nodes.push(Node { value, op, tracked });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Leaf that does not receive gradients.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: t.detached(),
            op: Op::Leaf,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives gradients.
    pub fn param(&mut self, t: &Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: t.detached(),
            op: Op::Leaf,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, what: &str, a: Var, b: Var) -> Result<()> {
        ensure!(
            self.shape(a) == self.shape(b),
            Dimension,
            "{what}: shapes {:?} and {:?} differ",
            self.shape(a),
            self.shape(b)
        );
        Ok(())
    }

    fn is_scalar(&self, v: Var) -> bool {
        self.nodes[v.0].value.len() == 1
    }

    /// 3x3 cross-correlation with zero padding 1, stride 1, plus per-channel bias.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (is, ks, bs) = (self.shape(input), self.shape(kernel), self.shape(bias));
        ensure!(is.len() == 4, Dimension, "conv2d input must be [N,C,H,W], got {is:?}");
        ensure!(
            ks.len() == 4 && ks[2] == 3 && ks[3] == 3 && ks[1] == is[1],
            Dimension,
            "conv2d kernel {ks:?} incompatible with input {is:?}"
        );
        ensure!(bs == [ks[0]], Dimension, "conv2d bias {bs:?} for {} output channels", ks[0]);
        let geom = ConvGeom { n: is[0], cin: is[1], cout: ks[0], h: is[2], w: is[3] };
        let (out, cols) = conv::forward(
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
            &geom,
        );
        let value = Tensor::new(vec![geom.n, geom.cout, geom.h, geom.w], out)?;
        let tracked = self.tracked(input) || self.tracked(kernel) || self.tracked(bias);
        // Patch matrices are only needed for the kernel gradient.
        let cols = if self.tracked(kernel) { cols } else { Vec::new() };
        self.push("conv2d", value, Op::Conv2d { input, kernel, bias, cols, geom }, tracked)
    }

    /// `input [N,Din] * weight[Dout,Din]^T + bias[Dout]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (is, ws, bs) = (self.shape(input), self.shape(weight), self.shape(bias));
        ensure!(
            is.len() == 2 && ws.len() == 2 && ws[1] == is[1] && bs == [ws[0]],
            Dimension,
            "dense: input {is:?}, weight {ws:?}, bias {bs:?}"
        );
        let (n, din, dout) = (is[0], is[1], ws[0]);
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let b = self.value(bias).data();
        let mut out = Vec::with_capacity(n * dout);
        for row in x.chunks(din.max(1)).take(n) {
            for (o, wrow) in w.chunks(din.max(1)).take(dout).enumerate() {
                let acc = row.iter().zip(wrow).fold(b[o], |a, (&p, &q)| a + p * q);
                out.push(acc);
            }
        }
        let value = Tensor::new(vec![n, dout], out)?;
        let tracked = self.tracked(input) || self.tracked(weight) || self.tracked(bias);
        self.push("dense", value, Op::Dense { input, weight, bias }, tracked)
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let tracked = self.tracked(input);
        self.push("relu", value, Op::Relu { input }, tracked)
    }

    /// Multiplies channel `c` of an `[N,C,H,W]` tensor by `scale[c]`.
    pub fn channel_scale(&mut self, input: Var, scale: Var) -> Result<Var> {
        let (is, ss) = (self.shape(input), self.shape(scale));
        ensure!(
            is.len() == 4 && ss == [is[1]],
            Dimension,
            "channel_scale: input {is:?} with scale {ss:?}"
        );
        let hw = is[2] * is[3];
        let c = is[1];
        let s = self.value(scale).data();
        let data = self
            .value(input)
            .data()
            .chunks(hw.max(1))
            .enumerate()
            .flat_map(|(i, chunk)| {
                let f = s[i % c];
                chunk.iter().map(move |&v| v * f)
            })
            .collect();
        let value = Tensor::new(is.to_vec(), data)?;
        let tracked = self.tracked(input) || self.tracked(scale);
        self.push("channel_scale", value, Op::ChannelScale { input, scale }, tracked)
    }

    fn zip_op(&mut self, what: &str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.same_shape(what, a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(what, value, op, tracked)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    /// `factor * input` for a fixed factor.
    pub fn scale(&mut self, input: Var, factor: T) -> Result<Var> {
        let x = self.value(input);
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| v * factor).collect())?;
        let tracked = self.tracked(input);
        self.push("scale", value, Op::ScaleConst { input, factor }, tracked)
    }

    /// `input + offset` for a fixed offset.
    pub fn add_const(&mut self, input: Var, offset: T) -> Result<Var> {
        let x = self.value(input);
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| v + offset).collect())?;
        let tracked = self.tracked(input);
        self.push("add_const", value, Op::AddConst { input }, tracked)
    }

    /// Tensor times a one-element tensor.
    pub fn mul_scalar(&mut self, input: Var, scalar: Var) -> Result<Var> {
        ensure!(self.is_scalar(scalar), Dimension, "mul_scalar: {:?} is not a scalar", self.shape(scalar));
        let s = self.value(scalar).item();
        let x = self.value(input);
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| v * s).collect())?;
        let tracked = self.tracked(input) || self.tracked(scalar);
        self.push("mul_scalar", value, Op::MulScalar { input, scalar }, tracked)
    }

    /// Ratio of two one-element tensors.
    pub fn div_scalar(&mut self, num: Var, den: Var) -> Result<Var> {
        ensure!(
            self.is_scalar(num) && self.is_scalar(den),
            Dimension,
            "div_scalar expects scalars, got {:?} / {:?}",
            self.shape(num),
            self.shape(den)
        );
        let value = Tensor::scalar(self.value(num).item() / self.value(den).item());
        let tracked = self.tracked(num) || self.tracked(den);
        self.push("div_scalar", value, Op::DivScalar { num, den }, tracked)
    }

    /// Real inner product of two same-shape tensors.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("dot", a, b)?;
        let s = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
        let tracked = self.tracked(a) || self.tracked(b);
        self.push("dot", Tensor::scalar(s), Op::Dot { a, b }, tracked)
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let s = self.value(input).data().iter().fold(T::zero(), |a, &b| a + b);
        let tracked = self.tracked(input);
        self.push("sum", Tensor::scalar(s), Op::Sum { input }, tracked)
    }

    pub fn mean(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        ensure!(!x.is_empty(), Dimension, "mean of empty tensor");
        let s = x.data().iter().fold(T::zero(), |a, &b| a + b) / T::lit(x.len() as f64);
        let tracked = self.tracked(input);
        self.push("mean", Tensor::scalar(s), Op::Mean { input }, tracked)
    }

    /// Numerically stable `ln(1 + e^x)`.
    pub fn softplus(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| softplus(v)).collect())?;
        let tracked = self.tracked(input);
        self.push("softplus", value, Op::Softplus { input }, tracked)
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).detached().reshape(shape)?;
        let tracked = self.tracked(input);
        self.push("reshape", value, Op::Reshape { input }, tracked)
    }

    /// Contiguous range of the flattened input, reshaped to `shape`.
    pub fn slice(&mut self, input: Var, start: usize, shape: &[usize]) -> Result<Var> {
        let len = numel(shape);
        let x = self.value(input);
        ensure!(
            start.checked_add(len).is_some_and(|end| end <= x.len()),
            Dimension,
            "slice [{start}, +{len}) out of range for {} elements",
            x.len()
        );
        let value = Tensor::new(shape.to_vec(), x.data()[start..start + len].to_vec())?;
        let tracked = self.tracked(input);
        self.push("slice", value, Op::Slice { input, start }, tracked)
    }

    /// Registers a node whose forward and backward are supplied by `op`.
    pub fn custom(&mut self, inputs: &[Var], op: Box<dyn CustomOp<T>>) -> Result<Var> {
        let vals: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
        let value = op.forward(&vals)?.detached();
        let tracked = inputs.iter().any(|&v| self.tracked(v));
        let name = op.name().to_string();
        self.push(&name, value, Op::Custom { inputs: inputs.to_vec(), op }, tracked)
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        ensure!(
            self.is_scalar(loss),
            Contract,
            "backward needs a scalar loss, got shape {:?}",
            self.shape(loss)
        );
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let contributions = self.input_grads(node, &g)?;
            for (var, contrib) in contributions {
                if self.tracked(var) {
                    check_finite("backward", &contrib)?;
                    add_into(&mut grads[var.0], contrib);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn input_grads(&self, node: &Node<T>, g: &[T]) -> Result<Vec<(Var, Vec<T>)>> {
        let val = |v: Var| self.value(v).data();
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, kernel, bias, cols, geom } => {
                let need = [self.tracked(*input), self.tracked(*kernel), self.tracked(*bias)];
                let grads = conv::backward(g, val(*kernel), cols, geom, need);
                if let Some(gi) = grads.input {
                    out.push((*input, gi));
                }
                if let Some(gk) = grads.kernel {
                    out.push((*kernel, gk));
                }
                if let Some(gb) = grads.bias {
                    out.push((*bias, gb));
                }
            }
            Op::Dense { input, weight, bias } => {
                let x = val(*input);
                let w = val(*weight);
                let ws = self.shape(*weight);
                let (dout, din) = (ws[0], ws[1]);
                let n = self.shape(*input)[0];
                if self.tracked(*input) {
                    let mut gi = vec![T::zero(); n * din];
                    for s in 0..n {
                        for o in 0..dout {
                            let go = g[s * dout + o];
                            for i in 0..din {
                                gi[s * din + i] = gi[s * din + i] + go * w[o * din + i];
                            }
                        }
                    }
                    out.push((*input, gi));
                }
                if self.tracked(*weight) {
                    let mut gw = vec![T::zero(); dout * din];
                    for s in 0..n {
                        for o in 0..dout {
                            let go = g[s * dout + o];
                            for i in 0..din {
                                gw[o * din + i] = gw[o * din + i] + go * x[s * din + i];
                            }
                        }
                    }
                    out.push((*weight, gw));
                }
                if self.tracked(*bias) {
                    let mut gb = vec![T::zero(); dout];
                    for s in 0..n {
                        for o in 0..dout {
                            gb[o] = gb[o] + g[s * dout + o];
                        }
                    }
                    out.push((*bias, gb));
                }
            }
            Op::Relu { input } => {
                let gi = val(*input)
                    .iter()
                    .zip(g)
                    .map(|(&x, &gv)| if x > T::zero() { gv } else { T::zero() })
                    .collect();
                out.push((*input, gi));
            }
            Op::ChannelScale { input, scale } => {
                let is = self.shape(*input);
                let (c, hw) = (is[1], is[2] * is[3]);
                let s = val(*scale);
                if self.tracked(*input) {
                    let gi = g
                        .chunks(hw.max(1))
                        .enumerate()
                        .flat_map(|(i, chunk)| {
                            let f = s[i % c];
                            chunk.iter().map(move |&v| v * f)
                        })
                        .collect();
                    out.push((*input, gi));
                }
                if self.tracked(*scale) {
                    let mut gs = vec![T::zero(); c];
                    for (i, (gc, xc)) in g.chunks(hw.max(1)).zip(val(*input).chunks(hw.max(1))).enumerate() {
                        gs[i % c] = gc.iter().zip(xc).fold(gs[i % c], |a, (&p, &q)| a + p * q);
                    }
                    out.push((*scale, gs));
                }
            }
            Op::Add { a, b } => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.to_vec()));
            }
            Op::Sub { a, b } => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.iter().map(|&v| -v).collect()));
            }
            Op::Mul { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                out.push((*a, g.iter().zip(bv).map(|(&p, &q)| p * q).collect()));
                out.push((*b, g.iter().zip(av).map(|(&p, &q)| p * q).collect()));
            }
            Op::ScaleConst { input, factor } => {
                out.push((*input, g.iter().map(|&v| v * *factor).collect()));
            }
            Op::AddConst { input } => out.push((*input, g.to_vec())),
            Op::MulScalar { input, scalar } => {
                let s = self.value(*scalar).item();
                if self.tracked(*input) {
                    out.push((*input, g.iter().map(|&v| v * s).collect()));
                }
                if self.tracked(*scalar) {
                    let gs = g.iter().zip(val(*input)).fold(T::zero(), |a, (&p, &q)| a + p * q);
                    out.push((*scalar, vec![gs]));
                }
            }
            Op::DivScalar { num, den } => {
                let (n, d) = (self.value(*num).item(), self.value(*den).item());
                out.push((*num, vec![g[0] / d]));
                out.push((*den, vec![-g[0] * n / (d * d)]));
            }
            Op::Dot { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                out.push((*a, bv.iter().map(|&q| g[0] * q).collect()));
                out.push((*b, av.iter().map(|&p| g[0] * p).collect()));
            }
            Op::Sum { input } => out.push((*input, vec![g[0]; self.value(*input).len()])),
            Op::Mean { input } => {
                let n = self.value(*input).len();
                out.push((*input, vec![g[0] / T::lit(n as f64); n]));
            }
            Op::Softplus { input } => {
                let gi = val(*input).iter().zip(g).map(|(&x, &gv)| gv * sigmoid(x)).collect();
                out.push((*input, gi));
            }
            Op::Reshape { input } => out.push((*input, g.to_vec())),
            Op::Slice { input, start } => {
                let mut gi = vec![T::zero(); self.value(*input).len()];
                gi[*start..*start + g.len()].copy_from_slice(g);
                out.push((*input, gi));
            }
            Op::Custom { inputs, op } => {
                let vals: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
                let grad_out = Tensor::new(node.value.shape().to_vec(), g.to_vec())?;
                let grads = op.backward(&grad_out, &vals, &node.value)?;
                ensure!(
                    grads.len() == inputs.len(),
                    Contract,
                    "custom op '{}' returned {} gradients for {} inputs",
                    op.name(),
                    grads.len(),
                    inputs.len()
                );
                for (var, grad) in inputs.iter().zip(grads) {
                    let Some(grad) = grad else { continue };
                    if grad.shape() != self.shape(*var) {
                        return Err(Error::Dimension(format!(
                            "custom op '{}' gradient shape {:?} for input {:?}",
                            op.name(),
                            grad.shape(),
                            self.shape(*var)
                        )));
                    }
                    out.push((*var, grad.into_data()));
                }
            }
        }
        Ok(out)
    }
}

pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

#[cfg(test)]
mod tests;
