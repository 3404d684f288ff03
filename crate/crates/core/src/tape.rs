//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! Every primitive appends a node to the [`Tape`]. Nodes are appended after
//! their inputs, so walking the node list backwards is a reverse topological
//! order and [`Tape::backward`] needs no sorting.
//!
//! Elementwise binary ops require identical shapes. Expanding a size-1 axis
//! is done explicitly with [`Tape::broadcast`].

use crate::error::{Error, Result};
use crate::params::{Gradients, ParamId, ParamSet};
use crate::tensor::{axis_split, matmul_into, matmul_nt_acc, matmul_tn_acc, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Sum { input: Var, axis: Option<usize> },
    Mean { input: Var, axis: Option<usize> },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Stack { inputs: Vec<Var>, axis: usize },
    Broadcast(Var),
    Clamp { input: Var, lo: f64, hi: f64 },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamId>,
    /// False for constants and anything computed only from constants;
    /// backward skips such nodes.
    requires_grad: bool,
}

/// Parameters of a [`ParamSet`] registered as leaves on a tape.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn get(&self, id: ParamId) -> Var {
        self.vars[id.index()]
    }
}

/// Recorded forward computation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradient of a root with respect to every node on the tape.
#[derive(Clone, Debug)]
pub struct NodeGrads {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl NodeGrads {
    /// Gradient for `var`; zeros if the root does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.0]),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = match &op {
            Op::Leaf => true,
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::MatMul(a, b) => {
                self.requires(*a) || self.requires(*b)
            }
            Op::Scale(a, _)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Log(a)
            | Op::Exp(a)
            | Op::Broadcast(a)
            | Op::Sum { input: a, .. }
            | Op::Mean { input: a, .. }
            | Op::Slice { input: a, .. }
            | Op::Clamp { input: a, .. } => self.requires(*a),
            Op::Concat { inputs, .. } | Op::Stack { inputs, .. } => inputs.iter().any(|&v| self.requires(v)),
        };
        self.nodes.push(Node {
            value,
            op,
            param: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn check(&self, v: Var) -> Result<&Tensor> {
        self.nodes
            .get(v.0)
            .map(|n| &n.value)
            .ok_or(Error::UnknownVar(v.0))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// A leaf that gradients flow into but that is not a parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A non-trainable input. No gradient is computed for it or for values
    /// derived only from constants; [`NodeGrads::wrt`] reports zeros there.
    pub fn constant(&mut self, value: Tensor) -> Var {
        let v = self.push(value, Op::Leaf);
        self.nodes[v.0].requires_grad = false;
        v
    }

    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        let v = self.push(params.get(id).clone(), Op::Leaf);
        self.nodes[v.0].param = Some(id);
        v
    }

    /// Registers every parameter as a leaf, in iteration order.
    pub fn bind(&mut self, params: &ParamSet) -> Bound {
        Bound {
            vars: params.ids().map(|id| self.param(params, id)).collect(),
        }
    }

    fn binary_same(&self, op: &'static str, a: Var, b: Var) -> Result<(&Tensor, &Tensor)> {
        let (ta, tb) = (self.check(a)?, self.check(b)?);
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                op,
                &[ta.shape(), tb.shape()],
                "elementwise operands must have identical shapes; broadcast explicitly",
            ));
        }
        Ok((ta, tb))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = self.binary_same("add", a, b)?;
        let out = ta.zip(tb, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = self.binary_same("sub", a, b)?;
        let out = ta.zip(tb, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = self.binary_same("mul", a, b)?;
        let out = ta.zip(tb, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = self.binary_same("div", a, b)?;
        let out = ta.zip(tb, |x, y| x / y);
        Ok(self.push(out, Op::Div(a, b)))
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.check(a)?.map(|x| x * c);
        Ok(self.push(out, Op::Scale(a, c)))
    }

    /// `c - a` for a constant `c`, recorded as a subtraction from a constant leaf.
    pub fn rsub_scalar(&mut self, c: f64, a: Var) -> Result<Var> {
        let shape = self.check(a)?.shape().to_vec();
        let k = self.constant(Tensor::full(&shape, c));
        self.sub(k, a)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.check(a)?, self.check(b)?);
        let (m, k, k2, n) = match (ta.dims2(), tb.dims2()) {
            (Some((m, k)), Some((k2, n))) => (m, k, k2, n),
            _ => {
                return Err(Error::shape(
                    "matmul",
                    &[ta.shape(), tb.shape()],
                    "both operands must be 2-D",
                ))
            }
        };
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                &[ta.shape(), tb.shape()],
                "inner dimensions differ",
            ));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), &mut out, m, k, n);
        let out = Tensor::new(vec![m, n], out)?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.check(a)?.map(f64::tanh);
        Ok(self.push(out, Op::Tanh(a)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.check(a)?.map(sigmoid);
        Ok(self.push(out, Op::Sigmoid(a)))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let out = self.check(a)?.map(f64::ln);
        Ok(self.push(out, Op::Log(a)))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.check(a)?.map(f64::exp);
        Ok(self.push(out, Op::Exp(a)))
    }

    /// Sum of all elements (`axis = None`, scalar result) or along one axis,
    /// which is kept with extent 1.
    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        let out = reduce_sum("sum", self.check(a)?, axis)?;
        Ok(self.push(out, Op::Sum { input: a, axis }))
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        let t = self.check(a)?;
        let count = match axis {
            None => t.len(),
            Some(ax) => t.shape().get(ax).copied().unwrap_or(1),
        };
        let mut out = reduce_sum("mean", t, axis)?;
        let inv = 1.0 / count as f64;
        out.data_mut().iter_mut().for_each(|v| *v *= inv);
        Ok(self.push(out, Op::Mean { input: a, axis }))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .check(*inputs.first().ok_or_else(|| Error::invalid("concat of zero tensors"))?)?
            .shape()
            .to_vec();
        if axis >= first.len() {
            return Err(Error::shape("concat", &[&first], format!("axis {axis} out of range")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.check(v)?.shape();
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape(
                    "concat",
                    &[&first, s],
                    "extents must agree off the concatenation axis",
                ));
            }
            total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut out = vec![0.0; outer * total * inner];
        let mut offset = 0;
        for &v in inputs {
            let t = self.value(v);
            let len = t.shape()[axis];
            for o in 0..outer {
                let src = &t.data()[o * len * inner..(o + 1) * len * inner];
                let dst = o * total * inner + offset * inner;
                out[dst..dst + len * inner].copy_from_slice(src);
            }
            offset += len;
        }
        let out = Tensor::new(shape, out)?;
        Ok(self.push(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    /// Elements `start..start + len` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = self.check(a)?;
        if axis >= t.ndim() || start + len > t.shape()[axis] {
            return Err(Error::shape(
                "slice",
                &[t.shape()],
                format!("range {start}..{} on axis {axis} out of bounds", start + len),
            ));
        }
        let (outer, extent, inner) = axis_split(t.shape(), axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * extent * inner + start * inner;
            out.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let out = Tensor::new(shape, out)?;
        Ok(self.push(out, Op::Slice { input: a, axis, start }))
    }

    /// Stacks equally shaped tensors along a new axis inserted at `axis`.
    pub fn stack(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .check(*inputs.first().ok_or_else(|| Error::invalid("stack of zero tensors"))?)?
            .shape()
            .to_vec();
        if axis > first.len() {
            return Err(Error::shape("stack", &[&first], format!("axis {axis} out of range")));
        }
        for &v in inputs {
            let s = self.check(v)?.shape();
            if s != first.as_slice() {
                return Err(Error::shape("stack", &[&first, s], "stacked tensors must share a shape"));
            }
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis..].iter().product();
        let count = inputs.len();
        let mut out = vec![0.0; outer * count * inner];
        for (j, &v) in inputs.iter().enumerate() {
            let t = self.value(v);
            for o in 0..outer {
                let dst = (o * count + j) * inner;
                out[dst..dst + inner].copy_from_slice(&t.data()[o * inner..(o + 1) * inner]);
            }
        }
        let mut shape = first;
        shape.insert(axis, count);
        let out = Tensor::new(shape, out)?;
        Ok(self.push(
            out,
            Op::Stack {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    /// Expands size-1 axes of `a` to `shape`. Ranks must match.
    pub fn broadcast(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.check(a)?;
        let ok = t.ndim() == shape.len()
            && t.shape().iter().zip(shape).all(|(&s, &d)| s == d || s == 1);
        if !ok {
            return Err(Error::shape(
                "broadcast",
                &[t.shape(), shape],
                "only size-1 axes may be expanded",
            ));
        }
        let src = t.data();
        let out: Vec<f64> = match row_broadcast(t.shape(), shape) {
            Some(_) => src.iter().copied().cycle().take(shape.iter().product()).collect(),
            None => {
                let map = BroadcastMap::new(t.shape(), shape);
                (0..map.len).map(|i| src[map.source(i)]).collect()
            }
        };
        let out = Tensor::new(shape.to_vec(), out)?;
        Ok(self.push(out, Op::Broadcast(a)))
    }

    /// Clamps into `[lo, hi]`; gradient passes through only inside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi {
            return Err(Error::invalid(format!("clamp bounds reversed: [{lo}, {hi}]")));
        }
        let out = self.check(a)?.map(|x| x.clamp(lo, hi));
        Ok(self.push(out, Op::Clamp { input: a, lo, hi }))
    }

    fn propagate(&self, root: Var) -> Result<Vec<Option<Tensor>>> {
        let rv = self.check(root)?;
        if !rv.is_scalar() {
            return Err(Error::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::full(rv.shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads, *a, g.zip(vb, |g, b| g * b));
                    accumulate(&mut grads, *b, g.zip(va, |g, a| g * a));
                }
                Op::Div(a, b) => {
                    let vb = self.value(*b);
                    accumulate(&mut grads, *a, g.zip(vb, |g, b| g / b));
                    let gb = g.zip(y, |g, y| g * y).zip(vb, |gy, b| -gy / b);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.map(|v| v * c)),
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (m, k) = va.dims2().expect("matmul operand");
                    let n = vb.shape()[1];
                    if self.requires(*a) {
                        let mut ga = vec![0.0; m * k];
                        matmul_nt_acc(g.data(), vb.data(), &mut ga, m, n, k);
                        accumulate(&mut grads, *a, Tensor::new(vec![m, k], ga)?);
                    }
                    if self.requires(*b) {
                        let mut gb = vec![0.0; k * n];
                        matmul_tn_acc(va.data(), g.data(), &mut gb, m, k, n);
                        accumulate(&mut grads, *b, Tensor::new(vec![k, n], gb)?);
                    }
                }
                Op::Tanh(a) => accumulate(&mut grads, *a, g.zip(y, |g, y| g * (1.0 - y * y))),
                Op::Sigmoid(a) => {
                    accumulate(&mut grads, *a, g.zip(y, |g, y| g * y * (1.0 - y)))
                }
                Op::Log(a) => {
                    let va = self.value(*a);
                    accumulate(&mut grads, *a, g.zip(va, |g, x| g / x));
                }
                Op::Exp(a) => accumulate(&mut grads, *a, g.zip(y, |g, y| g * y)),
                Op::Sum { input, axis } => {
                    let shape = self.value(*input).shape().to_vec();
                    accumulate(&mut grads, *input, expand_reduced(&g, &shape, *axis, 1.0));
                }
                Op::Mean { input, axis } => {
                    let shape = self.value(*input).shape().to_vec();
                    let count = match axis {
                        None => shape.iter().product::<usize>(),
                        Some(ax) => shape[*ax],
                    };
                    let gi = expand_reduced(&g, &shape, *axis, 1.0 / count as f64);
                    accumulate(&mut grads, *input, gi);
                }
                Op::Concat { inputs, axis } => {
                    let (outer, total, inner) = axis_split(y.shape(), *axis);
                    let mut offset = 0;
                    for &v in inputs {
                        let shape = self.value(v).shape().to_vec();
                        let len = shape[*axis];
                        let mut part = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = o * total * inner + offset * inner;
                            part.extend_from_slice(&g.data()[base..base + len * inner]);
                        }
                        accumulate(&mut grads, v, Tensor::new(shape, part)?);
                        offset += len;
                    }
                }
                Op::Slice { input, axis, start } => {
                    let shape = self.value(*input).shape().to_vec();
                    let (outer, extent, inner) = axis_split(&shape, *axis);
                    let len = y.shape()[*axis];
                    let mut full = vec![0.0; outer * extent * inner];
                    for o in 0..outer {
                        let base = o * extent * inner + start * inner;
                        full[base..base + len * inner]
                            .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                    }
                    accumulate(&mut grads, *input, Tensor::new(shape, full)?);
                }
                Op::Stack { inputs, axis } => {
                    let shape = self.value(inputs[0]).shape().to_vec();
                    let outer: usize = shape[..*axis].iter().product();
                    let inner: usize = shape[*axis..].iter().product();
                    let count = inputs.len();
                    for (j, &v) in inputs.iter().enumerate() {
                        let mut part = Vec::with_capacity(outer * inner);
                        for o in 0..outer {
                            let src = (o * count + j) * inner;
                            part.extend_from_slice(&g.data()[src..src + inner]);
                        }
                        accumulate(&mut grads, v, Tensor::new(shape.clone(), part)?);
                    }
                }
                Op::Broadcast(a) => {
                    let in_shape = self.value(*a).shape().to_vec();
                    let mut gi = vec![0.0; in_shape.iter().product()];
                    if let Some(cols) = row_broadcast(&in_shape, y.shape()) {
                        for row in g.data().chunks(cols) {
                            for (d, s) in gi.iter_mut().zip(row) {
                                *d += s;
                            }
                        }
                    } else {
                        let map = BroadcastMap::new(&in_shape, y.shape());
                        for (i, &gv) in g.data().iter().enumerate() {
                            gi[map.source(i)] += gv;
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::new(in_shape, gi)?);
                }
                Op::Clamp { input, lo, hi } => {
                    let x = self.value(*input);
                    let gi = g.zip(x, |g, x| if x >= *lo && x <= *hi { g } else { 0.0 });
                    accumulate(&mut grads, *input, gi);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    /// Gradients of a scalar `root` with respect to every tape node.
    pub fn backward_nodes(&self, root: Var) -> Result<NodeGrads> {
        let mut grads = self.propagate(root)?;
        grads.resize(self.nodes.len(), None);
        Ok(NodeGrads {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    /// Gradients of a scalar `root` with respect to every parameter in `params`.
    ///
    /// Parameters the root does not depend on get zero gradients. A parameter
    /// bound more than once accumulates over all of its leaves.
    pub fn backward(&self, root: Var, params: &ParamSet) -> Result<Gradients> {
        let grads = self.propagate(root)?;
        let mut out = Gradients::zeros_like(params);
        for (idx, g) in grads.into_iter().enumerate() {
            if let (Some(g), Some(pid)) = (g, self.nodes[idx].param) {
                if pid.index() < out.len() && out.get(pid).shape() == g.shape() {
                    out.get_mut(pid).add_assign(&g);
                }
            }
        }
        Ok(out)
    }
}

/// `Some(n)` when broadcasting `[1, n]` to `[m, n]`: the common bias case.
fn row_broadcast(src: &[usize], out: &[usize]) -> Option<usize> {
    match (src, out) {
        ([1, n], [_, n2]) if n == n2 => Some(*n),
        _ => None,
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn reduce_sum(op: &'static str, t: &Tensor, axis: Option<usize>) -> Result<Tensor> {
    match axis {
        None => Ok(Tensor::scalar(t.data().iter().sum())),
        Some(ax) if ax < t.ndim() => {
            let (outer, extent, inner) = axis_split(t.shape(), ax);
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for e in 0..extent {
                    let src = &t.data()[(o * extent + e) * inner..(o * extent + e + 1) * inner];
                    for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            let mut shape = t.shape().to_vec();
            shape[ax] = 1;
            Tensor::new(shape, out)
        }
        Some(ax) => Err(Error::shape(op, &[t.shape()], format!("axis {ax} out of range"))),
    }
}

/// Spreads the gradient of a reduction back over the reduced extent.
fn expand_reduced(g: &Tensor, shape: &[usize], axis: Option<usize>, factor: f64) -> Tensor {
    match axis {
        None => Tensor::full(shape, g.data()[0] * factor),
        Some(ax) => {
            let (outer, extent, inner) = axis_split(shape, ax);
            let mut out = vec![0.0; outer * extent * inner];
            for o in 0..outer {
                let src = &g.data()[o * inner..(o + 1) * inner];
                for e in 0..extent {
                    let dst = &mut out[(o * extent + e) * inner..(o * extent + e + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = s * factor;
                    }
                }
            }
            Tensor::new(shape.to_vec(), out).expect("shape preserved")
        }
    }
}

/// Maps linear indices of a broadcast result back to its source.
struct BroadcastMap {
    len: usize,
    out_shape: Vec<usize>,
    src_strides: Vec<usize>,
}

impl BroadcastMap {
    fn new(src: &[usize], out: &[usize]) -> Self {
        let mut src_strides = vec![0; src.len()];
        let mut stride = 1;
        for i in (0..src.len()).rev() {
            src_strides[i] = if src[i] == 1 { 0 } else { stride };
            stride *= src[i];
        }
        BroadcastMap {
            len: out.iter().product(),
            out_shape: out.to_vec(),
            src_strides,
        }
    }

    fn source(&self, mut linear: usize) -> usize {
        let mut idx = 0;
        for i in (0..self.out_shape.len()).rev() {
            let extent = self.out_shape[i];
            idx += (linear % extent) * self.src_strides[i];
            linear /= extent;
        }
        idx
    }
}
