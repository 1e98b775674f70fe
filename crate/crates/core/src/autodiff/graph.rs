//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as it is evaluated. Nodes only ever
//! reference earlier nodes, so the tape is acyclic by construction and the
//! reverse pass is a single backwards sweep over it.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::kernels::{self, Broadcast, ConvGeom};
use super::tensor::{split_axis, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnaryKind {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
}

enum Op<T> {
    Leaf,
    Binary { kind: BinaryKind, a: Var, b: Var },
    Scale { x: Var, factor: T },
    AddScalar { x: Var },
    Unary { kind: UnaryKind, x: Var },
    MatMul { a: Var, b: Var },
    BatchMatMul { a: Var, b: Var, trans_b: bool },
    Reshape { x: Var },
    Slice { x: Var, axis: usize, start: usize },
    SumAll { x: Var },
    MeanAll { x: Var },
    SumAxis { x: Var },
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gain: Var, bias: Var, rstd: Vec<T> },
    Conv2d { x: Var, kernel: Var, geom: ConvGeom },
    ConvTranspose2d { x: Var, kernel: Var, geom: ConvGeom },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recorded computation over [`Tensor`]s.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A trainable leaf; its gradient is kept after [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last [`Graph::backward`] loss with respect to leaf `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    // ---- elementwise ---------------------------------------------------

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let plan = Broadcast::new(self.shape(a), self.shape(b))?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); plan.len()];
        match kind {
            BinaryKind::Add => plan.for_each(|o, i, j| out[o] = av[i] + bv[j]),
            BinaryKind::Sub => plan.for_each(|o, i, j| out[o] = av[i] - bv[j]),
            BinaryKind::Mul => plan.for_each(|o, i, j| out[o] = av[i] * bv[j]),
            BinaryKind::Div => plan.for_each(|o, i, j| out[o] = av[i] / bv[j]),
        }
        let value = Tensor::new(&plan.out_shape, out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Binary { kind, a, b }, rg))
    }

    /// Elementwise sum with equal-rank broadcasting over size-1 dimensions.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.needs(&[x]);
        self.push(value, Op::Scale { x, factor }, rg)
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v + c);
        let rg = self.needs(&[x]);
        self.push(value, Op::AddScalar { x }, rg)
    }

    fn unary(&mut self, kind: UnaryKind, x: Var) -> Var {
        let f = |v: T| match kind {
            UnaryKind::Relu => v.max(T::zero()),
            UnaryKind::Sigmoid => T::one() / (T::one() + (-v).exp()),
            UnaryKind::Tanh => v.tanh(),
            UnaryKind::Exp => v.exp(),
            UnaryKind::Log => v.ln(),
        };
        let value = self.value(x).map(f);
        let rg = self.needs(&[x]);
        self.push(value, Op::Unary { kind, x }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Relu, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Tanh, x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Exp, x)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Log, x)
    }

    // ---- linear algebra ------------------------------------------------

    /// `[m,k] × [k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape(format!("matmul of {sa:?} and {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::new(&[m, n], out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul { a, b }, rg))
    }

    /// Batched `[B,m,k] × [B,k,n]`, or `[B,m,k] × [B,n,k]ᵀ` when `trans_b`.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let bad = || Error::Shape(format!("bmm of {sa:?} and {sb:?} (trans_b={trans_b})"));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(bad());
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(bad());
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); batch * m * n];
        let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
        for i in 0..batch {
            T::gemm(
                m,
                k,
                n,
                T::one(),
                &av[i * m * k..],
                k as isize,
                1,
                &bv[i * k * n..],
                rsb,
                csb,
                T::zero(),
                &mut out[i * m * n..],
                n as isize,
                1,
            );
        }
        let value = Tensor::new(&[batch, m, n], out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::BatchMatMul { a, b, trans_b }, rg))
    }

    // ---- shape ---------------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let value = self.value(x).slice_axis(axis, start, len)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Slice { x, axis, start }, rg))
    }

    // ---- reductions ----------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.needs(&[x]);
        self.push(value, Op::SumAll { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor::scalar(t.sum() / T::from_usize(t.len().max(1)).unwrap());
        let rg = self.needs(&[x]);
        self.push(value, Op::MeanAll { x }, rg)
    }

    /// Sum over `axis`, keeping it with size 1. Order-independent along the axis.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (outer, dim, inner) = split_axis(&shape, axis)?;
        let out = kernels::sum_axis(self.value(x).data(), outer, dim, inner);
        let mut out_shape = shape;
        out_shape[axis] = 1;
        let value = Tensor::new(&out_shape, out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::SumAxis { x }, rg))
    }

    /// Softmax along `axis`. Order-independent along the axis.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (outer, dim, inner) = split_axis(&shape, axis)?;
        let out = kernels::softmax_forward(self.value(x).data(), outer, dim, inner);
        let value = Tensor::new(&shape, out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Softmax { x, axis }, rg))
    }

    /// Layer normalisation over the last axis with per-channel gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = *shape
            .last()
            .ok_or_else(|| Error::Shape("layer_norm on a scalar".to_string()))?;
        if self.shape(gain) != [c] || self.shape(bias) != [c] {
            return Err(Error::Shape(format!(
                "layer_norm over {c} channels with gain {:?} and bias {:?}",
                self.shape(gain),
                self.shape(bias)
            )));
        }
        let (y, rstd) = kernels::layer_norm_forward(
            self.value(x).data(),
            self.value(gain).data(),
            self.value(bias).data(),
            c,
            eps,
        );
        let value = Tensor::new(&shape, y)?;
        let rg = self.needs(&[x, gain, bias]);
        Ok(self.push(value, Op::LayerNorm { x, gain, bias, rstd }, rg))
    }

    // ---- convolution ---------------------------------------------------

    /// "Same"-padded cross-correlation. `x` is `[N,H,W,Cin]`, `kernel` is
    /// `[kh,kw,Cin,Cout]`; output is `[N,⌈H/s⌉,⌈W/s⌉,Cout]`.
    pub fn conv2d(&mut self, x: Var, kernel: Var, stride: usize) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(x), self.shape(kernel), stride)?;
        let out = kernels::conv_forward(self.value(x).data(), self.value(kernel).data(), &geom);
        let value = Tensor::new(&[geom.n, geom.ho, geom.wo, geom.cout], out)?;
        let rg = self.needs(&[x, kernel]);
        Ok(self.push(value, Op::Conv2d { x, kernel, geom }, rg))
    }

    /// Adjoint of [`Graph::conv2d`] with the same kernel layout.
    ///
    /// `x` is `[N,h,w,Cout]` where `Cout = kernel.shape[3]`; the output is
    /// `[N,h·s,w·s,Cin]` with `Cin = kernel.shape[2]`.
    pub fn conv_transpose2d(&mut self, x: Var, kernel: Var, stride: usize) -> Result<Var> {
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(kernel).to_vec());
        if sx.len() != 4 || sk.len() != 4 || sx[3] != sk[3] {
            return Err(Error::Shape(format!("conv_transpose2d of {sx:?} with kernel {sk:?}")));
        }
        let full = [sx[0], sx[1] * stride, sx[2] * stride, sk[2]];
        let geom = ConvGeom::new(&full, &sk, stride)?;
        debug_assert_eq!((geom.ho, geom.wo), (sx[1], sx[2]));
        let out = kernels::conv_input_adjoint(self.value(x).data(), self.value(kernel).data(), &geom);
        let value = Tensor::new(&full, out)?;
        let rg = self.needs(&[x, kernel]);
        Ok(self.push(value, Op::ConvTranspose2d { x, kernel, geom }, rg))
    }

    // ---- reverse pass --------------------------------------------------

    /// Accumulates d`loss`/d`leaf` into every gradient-requiring leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        let seed_shape = self.shape(loss).to_vec();
        self.grads[loss.0] = Some(Tensor::ones(&seed_shape));
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = self.grads[id].take() else { continue };
            if matches!(self.nodes[id].op, Op::Leaf) {
                self.grads[id] = Some(g);
                continue;
            }
            for (var, contribution) in self.input_grads(id, &g)? {
                self.accumulate(var, contribution);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, var: Var, contribution: Tensor<T>) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        match &mut self.grads[var.0] {
            Some(existing) => existing.add_assign(&contribution),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn input_grads(&self, id: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[id];
        let gd = g.data();
        let mut out = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::Binary { kind, a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let plan = Broadcast::new(av.shape(), bv.shape())?;
                let (ad, bd) = (av.data(), bv.data());
                let mut ga = vec![T::zero(); ad.len()];
                let mut gb = vec![T::zero(); bd.len()];
                match kind {
                    BinaryKind::Add => plan.for_each(|o, i, j| {
                        ga[i] = ga[i] + gd[o];
                        gb[j] = gb[j] + gd[o];
                    }),
                    BinaryKind::Sub => plan.for_each(|o, i, j| {
                        ga[i] = ga[i] + gd[o];
                        gb[j] = gb[j] - gd[o];
                    }),
                    BinaryKind::Mul => plan.for_each(|o, i, j| {
                        ga[i] = ga[i] + gd[o] * bd[j];
                        gb[j] = gb[j] + gd[o] * ad[i];
                    }),
                    BinaryKind::Div => plan.for_each(|o, i, j| {
                        ga[i] = ga[i] + gd[o] / bd[j];
                        gb[j] = gb[j] - gd[o] * ad[i] / (bd[j] * bd[j]);
                    }),
                }
                out.push((*a, Tensor::new(av.shape(), ga)?));
                out.push((*b, Tensor::new(bv.shape(), gb)?));
            }
            Op::Scale { x, factor } => out.push((*x, g.map(|v| v * *factor))),
            Op::AddScalar { x } => out.push((*x, g.clone())),
            Op::Unary { kind, x } => {
                let xv = self.value(*x).data();
                let yv = node.value.data();
                let d: Vec<T> = (0..gd.len())
                    .map(|i| {
                        let local = match kind {
                            UnaryKind::Relu => {
                                if xv[i] > T::zero() {
                                    T::one()
                                } else {
                                    T::zero()
                                }
                            }
                            UnaryKind::Sigmoid => yv[i] * (T::one() - yv[i]),
                            UnaryKind::Tanh => T::one() - yv[i] * yv[i],
                            UnaryKind::Exp => yv[i],
                            UnaryKind::Log => T::one() / xv[i],
                        };
                        gd[i] * local
                    })
                    .collect();
                out.push((*x, Tensor::new(g.shape(), d)?));
            }
            Op::MatMul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                out.push((*a, Tensor::new(&[m, k], kernels::matmul_bt(gd, bv.data(), m, n, k))?));
                out.push((*b, Tensor::new(&[k, n], kernels::matmul_at(av.data(), gd, k, m, n))?));
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (batch, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                let n = node.value.shape()[2];
                let mut ga = vec![T::zero(); av.len()];
                let mut gb = vec![T::zero(); bv.len()];
                for i in 0..batch {
                    let gs = &gd[i * m * n..];
                    let a_i = &av.data()[i * m * k..];
                    let b_i = &bv.data()[i * k * n..];
                    // dA = dC · op(B)ᵀ
                    let (rs, cs) = if *trans_b { (k as isize, 1) } else { (1, n as isize) };
                    T::gemm(m, n, k, T::one(), gs, n as isize, 1, b_i, rs, cs, T::zero(), &mut ga[i * m * k..], k as isize, 1);
                    if *trans_b {
                        // dB[n,k] = dCᵀ · A
                        T::gemm(n, m, k, T::one(), gs, 1, n as isize, a_i, k as isize, 1, T::zero(), &mut gb[i * k * n..], k as isize, 1);
                    } else {
                        // dB[k,n] = Aᵀ · dC
                        T::gemm(k, m, n, T::one(), a_i, 1, k as isize, gs, n as isize, 1, T::zero(), &mut gb[i * k * n..], n as isize, 1);
                    }
                }
                out.push((*a, Tensor::new(av.shape(), ga)?));
                out.push((*b, Tensor::new(bv.shape(), gb)?));
            }
            Op::Reshape { x } => out.push((*x, g.clone().reshape(self.shape(*x))?)),
            Op::Slice { x, axis, start } => {
                let xs = self.shape(*x);
                let (outer, dim, inner) = split_axis(xs, *axis)?;
                let len = node.value.shape()[*axis];
                let mut d = vec![T::zero(); outer * dim * inner];
                for o in 0..outer {
                    let dst = o * dim * inner + start * inner;
                    let src = o * len * inner;
                    d[dst..dst + len * inner].copy_from_slice(&gd[src..src + len * inner]);
                }
                out.push((*x, Tensor::new(xs, d)?));
            }
            Op::SumAll { x } => out.push((*x, Tensor::full(self.shape(*x), gd[0]))),
            Op::MeanAll { x } => {
                let n = T::from_usize(self.value(*x).len().max(1)).unwrap();
                out.push((*x, Tensor::full(self.shape(*x), gd[0] / n)));
            }
            Op::SumAxis { x } => {
                let plan = Broadcast::new(self.shape(*x), g.shape())?;
                let mut d = vec![T::zero(); plan.len()];
                plan.for_each(|o, _, j| d[o] = gd[j]);
                out.push((*x, Tensor::new(self.shape(*x), d)?));
            }
            Op::Softmax { x, axis } => {
                let (outer, dim, inner) = split_axis(node.value.shape(), *axis)?;
                let d = kernels::softmax_backward(node.value.data(), gd, outer, dim, inner);
                out.push((*x, Tensor::new(g.shape(), d)?));
            }
            Op::LayerNorm { x, gain, bias, rstd } => {
                let xv = self.value(*x);
                let c = *xv.shape().last().unwrap();
                let (dx, dgain, dbias) =
                    kernels::layer_norm_backward(xv.data(), self.value(*gain).data(), rstd, gd, c);
                out.push((*x, Tensor::new(xv.shape(), dx)?));
                out.push((*gain, Tensor::new(&[c], dgain)?));
                out.push((*bias, Tensor::new(&[c], dbias)?));
            }
            Op::Conv2d { x, kernel, geom } => {
                let kv = self.value(*kernel);
                if self.requires_grad(*kernel) {
                    let dk = kernels::conv_kernel_grad(self.value(*x).data(), gd, geom);
                    out.push((*kernel, Tensor::new(kv.shape(), dk)?));
                }
                if self.requires_grad(*x) {
                    let dx = kernels::conv_input_adjoint(gd, kv.data(), geom);
                    out.push((*x, Tensor::new(self.shape(*x), dx)?));
                }
            }
            Op::ConvTranspose2d { x, kernel, geom } => {
                let kv = self.value(*kernel);
                if self.requires_grad(*kernel) {
                    let dk = kernels::conv_kernel_grad(gd, self.value(*x).data(), geom);
                    out.push((*kernel, Tensor::new(kv.shape(), dk)?));
                }
                if self.requires_grad(*x) {
                    let dx = kernels::conv_forward(gd, kv.data(), geom);
                    out.push((*x, Tensor::new(self.shape(*x), dx)?));
                }
            }
        }
        Ok(out)
    }

    /// Hash of the activation pattern of every non-smooth operator.
    ///
    /// Two evaluations with equal signatures lie in the same smooth piece of
    /// the function, which is what finite differences need.
    pub fn kink_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            if let Op::Unary { kind: UnaryKind::Relu, x } = node.op {
                for &v in self.value(x).data() {
                    (v > T::zero()).hash(&mut h);
                }
            }
        }
        h.finish()
    }

    /// Smallest |input| over all ReLU nodes, or `None` without ReLUs.
    pub fn min_kink_distance(&self) -> Option<T> {
        self.nodes
            .iter()
            .filter_map(|node| match node.op {
                Op::Unary { kind: UnaryKind::Relu, x } => {
                    self.value(x).data().iter().map(|v| v.abs()).reduce(T::min)
                }
                _ => None,
            })
            .reduce(T::min)
    }
}
