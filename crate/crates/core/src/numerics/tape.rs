use alloc::borrow::Cow;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Real, Tensor};
use crate::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Op<T> {
    Leaf,
    StopGradient,
    Affine { x: usize, w: usize, b: usize },
    Tanh(usize),
    Relu(usize),
    Softplus(usize),
    Exp(usize),
    Log(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Shift(usize),
    Sum(usize),
    Mean(usize),
    RowSum(usize),
    Square(usize),
    Min(usize, usize),
    Concat(usize, usize),
}

struct Node<'a, T: Real> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records primitive ops in topological order for one reverse sweep.
///
/// Parameters may be borrowed for the tape's lifetime, so binding a large
/// weight matrix costs nothing. A [`Tape::stop_gradient`] node forwards its
/// input's value but never passes an adjoint upstream.
pub struct Tape<'a, T: Real> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Real> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, detail: alloc::string::String) -> Error {
    Error::Shape { op, detail }
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(128),
        }
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Cow<'a, Tensor<T>>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(
        &mut self,
        op_name: &'static str,
        value: Tensor<T>,
        op: Op<T>,
        rg: bool,
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        Ok(self.push(Cow::Owned(value), op, rg))
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn val(&self, i: usize) -> &Tensor<T> {
        &self.nodes[i].value
    }

    /// Trainable leaf borrowing its value.
    pub fn param(&mut self, value: &'a Tensor<T>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "param" });
        }
        Ok(self.push(Cow::Borrowed(value), Op::Leaf, true))
    }

    /// Leaf that never requires a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push_checked("constant", value, Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor<T>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "constant" });
        }
        Ok(self.push(Cow::Borrowed(value), Op::Leaf, false))
    }

    /// `sg(x)`: same value, zero adjoint upstream.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let value = match &self.nodes[x.0].value {
            Cow::Borrowed(t) => Cow::Borrowed(*t),
            Cow::Owned(t) => Cow::Owned(t.clone()),
        };
        self.push(value, Op::StopGradient, false)
    }

    /// `x · w + b` for `x: [n, i]`, `w: [i, o]`, `b: [o]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.val(x.0), self.val(w.0), self.val(b.0));
        let (n, i) = xv.dims2().ok_or_else(|| {
            shape_err(
                "affine",
                format!("input must be rank 2, got {:?}", xv.shape()),
            )
        })?;
        let (wi, o) = wv.dims2().ok_or_else(|| {
            shape_err(
                "affine",
                format!("weight must be rank 2, got {:?}", wv.shape()),
            )
        })?;
        if wi != i || bv.shape() != [o] {
            return Err(shape_err(
                "affine",
                format!(
                    "input {:?}, weight {:?}, bias {:?}",
                    xv.shape(),
                    wv.shape(),
                    bv.shape()
                ),
            ));
        }
        let mut out = Vec::with_capacity(n * o);
        for _ in 0..n {
            out.extend_from_slice(bv.data());
        }
        T::gemm(
            n,
            i,
            o,
            xv.data(),
            (i as isize, 1),
            wv.data(),
            (o as isize, 1),
            &mut out,
            true,
        );
        let rg = self.rg(x.0) || self.rg(w.0) || self.rg(b.0);
        self.push_checked(
            "affine",
            Tensor::with_shape(vec![n, o], out),
            Op::Affine {
                x: x.0,
                w: w.0,
                b: b.0,
            },
            rg,
        )
    }

    fn unary(&mut self, name: &'static str, x: Var, op: Op<T>, f: impl Fn(T) -> T) -> Result<Var> {
        let out = self.val(x.0).map(f);
        let rg = self.rg(x.0);
        self.push_checked(name, out, op, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary("tanh", x, Op::Tanh(x.0), |v| v.tanh())
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary("relu", x, Op::Relu(x.0), |v| {
            if v > T::zero() {
                v
            } else {
                T::zero()
            }
        })
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.unary("softplus", x, Op::Softplus(x.0), |v| {
            if v > T::zero() {
                v + (-v).exp().ln_1p()
            } else {
                v.exp().ln_1p()
            }
        })
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary("exp", x, Op::Exp(x.0), |v| v.exp())
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary("log", x, Op::Log(x.0), |v| v.ln())
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary("square", x, Op::Square(x.0), |v| v * v)
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        self.unary("scale", x, Op::Scale(x.0, c), |v| v * c)
    }

    /// `x + c` for a scalar constant `c`.
    pub fn shift(&mut self, x: Var, c: T) -> Result<Var> {
        self.unary("shift", x, Op::Shift(x.0), |v| v + c)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op<T>,
        f: impl Fn(T, T) -> T,
    ) -> Result<Var> {
        let (av, bv) = (self.val(a.0), self.val(b.0));
        if av.shape() != bv.shape() {
            return Err(shape_err(
                name,
                format!("{:?} vs {:?}", av.shape(), bv.shape()),
            ));
        }
        let out = av.zip_map(bv, f);
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push_checked(name, out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a.0, b.0), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a.0, b.0), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a.0, b.0), |x, y| x * y)
    }

    /// Elementwise minimum; ties route the adjoint to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(
            "min",
            a,
            b,
            Op::Min(a.0, b.0),
            |x, y| if x <= y { x } else { y },
        )
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.val(x.0).sum();
        let rg = self.rg(x.0);
        self.push_checked("sum", Tensor::scalar(s), Op::Sum(x.0), rg)
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.val(x.0);
        let m = v.sum() / T::of(v.len() as f64);
        let rg = self.rg(x.0);
        self.push_checked("mean", Tensor::scalar(m), Op::Mean(x.0), rg)
    }

    /// Per-row sum: `[n, d] -> [n, 1]`.
    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        let v = self.val(x.0);
        let (n, d) = v.dims2().ok_or_else(|| {
            shape_err(
                "row_sum",
                format!("input must be rank 2, got {:?}", v.shape()),
            )
        })?;
        let out: Vec<T> = (0..n)
            .map(|r| {
                v.data()[r * d..(r + 1) * d]
                    .iter()
                    .fold(T::zero(), |acc, &e| acc + e)
            })
            .collect();
        let rg = self.rg(x.0);
        self.push_checked(
            "row_sum",
            Tensor::with_shape(vec![n, 1], out),
            Op::RowSum(x.0),
            rg,
        )
    }

    /// Column concatenation: `[n, p] ⊕ [n, q] -> [n, p + q]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.val(a.0), self.val(b.0));
        let (n, p, q) = match (av.dims2(), bv.dims2()) {
            (Some((n, p)), Some((m, q))) if n == m => (n, p, q),
            _ => {
                return Err(shape_err(
                    "concat",
                    format!("{:?} vs {:?}", av.shape(), bv.shape()),
                ));
            }
        };
        let mut out = Vec::with_capacity(n * (p + q));
        for r in 0..n {
            out.extend_from_slice(&av.data()[r * p..(r + 1) * p]);
            out.extend_from_slice(&bv.data()[r * q..(r + 1) * q]);
        }
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push_checked(
            "concat",
            Tensor::with_shape(vec![n, p + q], out),
            Op::Concat(a.0, b.0),
            rg,
        )
    }

    /// Reverse sweep from a scalar output seeded with 1.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        let shape = self.value(loss).shape().to_vec();
        self.backward_seeded(&[(loss, Tensor::full(&shape, T::one()))])
    }

    /// Reverse sweep from arbitrary seed adjoints.
    pub fn backward_seeded(&self, seeds: &[(Var, Tensor<T>)]) -> Result<Grads<T>> {
        let mut adj: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        for (v, seed) in seeds {
            let expected = self.value(*v).shape();
            if seed.shape() != expected {
                return Err(Error::AdjointShape {
                    expected: expected.to_vec(),
                    got: seed.shape().to_vec(),
                });
            }
            if self.rg(v.0) {
                accumulate(&mut adj, v.0, seed.clone());
            }
        }
        for i in (0..self.nodes.len()).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj);
        }
        Ok(Grads { adj })
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, adj: &mut [Option<Tensor<T>>]) {
        let y = &*self.nodes[i].value;
        match self.nodes[i].op {
            Op::Leaf | Op::StopGradient => {}
            Op::Affine { x, w, b } => {
                let (xv, wv) = (self.val(x), self.val(w));
                let (n, inp) = xv.dims2().unwrap();
                let o = wv.shape()[1];
                if self.rg(x) {
                    let mut dx = vec![T::zero(); n * inp];
                    // dy [n, o] · wᵀ [o, inp]
                    T::gemm(
                        n,
                        o,
                        inp,
                        g.data(),
                        (o as isize, 1),
                        wv.data(),
                        (1, o as isize),
                        &mut dx,
                        false,
                    );
                    accumulate(adj, x, Tensor::with_shape(vec![n, inp], dx));
                }
                if self.rg(w) {
                    let mut dw = vec![T::zero(); inp * o];
                    // xᵀ [inp, n] · dy [n, o]
                    T::gemm(
                        inp,
                        n,
                        o,
                        xv.data(),
                        (1, inp as isize),
                        g.data(),
                        (o as isize, 1),
                        &mut dw,
                        false,
                    );
                    accumulate(adj, w, Tensor::with_shape(vec![inp, o], dw));
                }
                if self.rg(b) {
                    let mut db = vec![T::zero(); o];
                    for r in 0..n {
                        for (acc, &v) in db.iter_mut().zip(&g.data()[r * o..(r + 1) * o]) {
                            *acc = *acc + v;
                        }
                    }
                    accumulate(adj, b, Tensor::with_shape(vec![o], db));
                }
            }
            Op::Tanh(x) => {
                let d = g.zip_map(y, |gv, yv| gv * (T::one() - yv * yv));
                self.acc_if(adj, x, d);
            }
            Op::Relu(x) => {
                let d = g.zip_map(
                    self.val(x),
                    |gv, xv| if xv > T::zero() { gv } else { T::zero() },
                );
                self.acc_if(adj, x, d);
            }
            Op::Softplus(x) => {
                let d = g.zip_map(self.val(x), |gv, xv| {
                    let s = if xv >= T::zero() {
                        T::one() / (T::one() + (-xv).exp())
                    } else {
                        let e = xv.exp();
                        e / (T::one() + e)
                    };
                    gv * s
                });
                self.acc_if(adj, x, d);
            }
            Op::Exp(x) => {
                let d = g.zip_map(y, |gv, yv| gv * yv);
                self.acc_if(adj, x, d);
            }
            Op::Log(x) => {
                let d = g.zip_map(self.val(x), |gv, xv| gv / xv);
                self.acc_if(adj, x, d);
            }
            Op::Add(a, b) => {
                self.acc_if(adj, a, g.clone());
                self.acc_if(adj, b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc_if(adj, a, g.clone());
                if self.rg(b) {
                    accumulate(adj, b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if self.rg(a) {
                    accumulate(adj, a, g.zip_map(self.val(b), |gv, bv| gv * bv));
                }
                if self.rg(b) {
                    accumulate(adj, b, g.zip_map(self.val(a), |gv, av| gv * av));
                }
            }
            Op::Scale(x, c) => {
                self.acc_if(adj, x, g.map(|v| v * c));
            }
            Op::Shift(x) => {
                self.acc_if(adj, x, g.clone());
            }
            Op::Sum(x) => {
                let shape = self.val(x).shape().to_vec();
                self.acc_if(adj, x, Tensor::full(&shape, g.item()));
            }
            Op::Mean(x) => {
                let xv = self.val(x);
                let v = g.item() / T::of(xv.len() as f64);
                self.acc_if(adj, x, Tensor::full(xv.shape(), v));
            }
            Op::RowSum(x) => {
                let (n, d) = self.val(x).dims2().unwrap();
                let data = (0..n * d).map(|k| g.data()[k / d]).collect();
                self.acc_if(adj, x, Tensor::with_shape(vec![n, d], data));
            }
            Op::Square(x) => {
                let two = T::of(2.0);
                let d = g.zip_map(self.val(x), |gv, xv| two * xv * gv);
                self.acc_if(adj, x, d);
            }
            Op::Min(a, b) => {
                let (av, bv) = (self.val(a), self.val(b));
                if self.rg(a) {
                    let d = Tensor::with_shape(
                        av.shape().to_vec(),
                        (0..av.len())
                            .map(|k| {
                                if av.data()[k] <= bv.data()[k] {
                                    g.data()[k]
                                } else {
                                    T::zero()
                                }
                            })
                            .collect(),
                    );
                    accumulate(adj, a, d);
                }
                if self.rg(b) {
                    let d = Tensor::with_shape(
                        bv.shape().to_vec(),
                        (0..bv.len())
                            .map(|k| {
                                if av.data()[k] <= bv.data()[k] {
                                    T::zero()
                                } else {
                                    g.data()[k]
                                }
                            })
                            .collect(),
                    );
                    accumulate(adj, b, d);
                }
            }
            Op::Concat(a, b) => {
                let (n, p) = self.val(a).dims2().unwrap();
                let q = self.val(b).shape()[1];
                let w = p + q;
                if self.rg(a) {
                    let mut d = Vec::with_capacity(n * p);
                    for r in 0..n {
                        d.extend_from_slice(&g.data()[r * w..r * w + p]);
                    }
                    accumulate(adj, a, Tensor::with_shape(vec![n, p], d));
                }
                if self.rg(b) {
                    let mut d = Vec::with_capacity(n * q);
                    for r in 0..n {
                        d.extend_from_slice(&g.data()[r * w + p..(r + 1) * w]);
                    }
                    accumulate(adj, b, Tensor::with_shape(vec![n, q], d));
                }
            }
        }
    }

    fn acc_if(&self, adj: &mut [Option<Tensor<T>>], i: usize, g: Tensor<T>) {
        if self.rg(i) {
            accumulate(adj, i, g);
        }
    }
}

fn accumulate<T: Real>(adj: &mut [Option<Tensor<T>>], i: usize, g: Tensor<T>) {
    match &mut adj[i] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Adjoints produced by a reverse sweep, indexed by [`Var`].
pub struct Grads<T> {
    adj: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Grads<T> {
    /// Gradient of `v`, or `None` when no adjoint reached it.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.adj.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, materializing zeros shaped like its value.
    pub fn get_or_zeros(&self, tape: &Tape<'_, T>, v: Var) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
    }
}
