use std::cell::{Ref, RefCell};
use std::fmt;

use super::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Maximum(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Shift(usize),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Sqrt(usize),
    Clamp(usize, f64, f64),
    MatMul(usize, usize),
    Transpose(usize),
    Sum(usize),
    Mean(usize),
    SumAxis(usize, usize),
    LogSumExp(usize),
    Concat(Vec<usize>, usize),
    Slice(usize, usize, usize, usize),
    Reshape(usize),
    BroadcastRows(usize),
    GatherRows(usize, Vec<usize>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Maximum(..) => "maximum",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::Shift(..) => "shift",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Tanh(..) => "tanh",
            Op::Sqrt(..) => "sqrt",
            Op::Clamp(..) => "clamp",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumAxis(..) => "sum_axis",
            Op::LogSumExp(..) => "logsumexp",
            Op::Concat(..) => "concat",
            Op::Slice(..) => "slice",
            Op::Reshape(..) => "reshape",
            Op::BroadcastRows(..) => "broadcast_rows",
            Op::GatherRows(..) => "gather_rows",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Nodes are pushed in evaluation order, so every input index is smaller than
/// the index of the node consuming it and a reverse sweep is a valid
/// topological order. A tape lives for one training step and is then dropped.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var { tape: self, id }
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(self, root.tape), "root belongs to another tape");
        let nodes = self.nodes.borrow();
        let root_value = &nodes[root.id].value;
        if root_value.numel() != 1 {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.id + 1];
        grads[root.id] = Some(Tensor::full(root_value.shape(), 1.0));

        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                backprop(&nodes, id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Reduce a gradient to the shape of an operand that may have been broadcast
/// from a scalar.
fn unbroadcast(g: Tensor, target: &Tensor) -> Tensor {
    if target.is_scalar() && !g.is_scalar() {
        Tensor::scalar(g.data().iter().sum())
    } else {
        g
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    // Broadcasting rule: equal shapes, or one side rank-0.
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
    } else if a.is_scalar() {
        let x = a.item();
        b.map(|y| f(x, y))
    } else {
        let y = b.item();
        a.map(|x| f(x, y))
    }
}

fn backprop(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let out = &nodes[id].value;
    let val = |i: usize| &nodes[i].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, unbroadcast(g.clone(), val(*a)));
            accumulate(nodes, grads, *b, unbroadcast(g.clone(), val(*b)));
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, unbroadcast(g.clone(), val(*a)));
            accumulate(nodes, grads, *b, unbroadcast(g.map(|x| -x), val(*b)));
        }
        Op::Mul(a, b) => {
            let ga = zip_map(g, val(*b), |g, y| g * y);
            let gb = zip_map(g, val(*a), |g, x| g * x);
            accumulate(nodes, grads, *a, unbroadcast(ga, val(*a)));
            accumulate(nodes, grads, *b, unbroadcast(gb, val(*b)));
        }
        Op::Div(a, b) => {
            let ga = zip_map(g, val(*b), |g, y| g / y);
            // d(x/y)/dy = -out / y
            let gy = zip_map(out, val(*b), |o, y| -o / y);
            let gb = zip_map(g, &gy, |g, d| g * d);
            accumulate(nodes, grads, *a, unbroadcast(ga, val(*a)));
            accumulate(nodes, grads, *b, unbroadcast(gb, val(*b)));
        }
        Op::Maximum(a, b) => {
            let mask_a = zip_map(val(*a), val(*b), |x, y| if x >= y { 1.0 } else { 0.0 });
            let ga = zip_map(g, &mask_a, |g, m| g * m);
            let gb = zip_map(g, &mask_a, |g, m| g * (1.0 - m));
            accumulate(nodes, grads, *a, unbroadcast(ga, val(*a)));
            accumulate(nodes, grads, *b, unbroadcast(gb, val(*b)));
        }
        Op::Neg(a) => accumulate(nodes, grads, *a, g.map(|x| -x)),
        Op::Scale(a, c) => {
            let c = *c;
            accumulate(nodes, grads, *a, g.map(|x| x * c))
        }
        Op::Shift(a) => accumulate(nodes, grads, *a, g.clone()),
        Op::Exp(a) => accumulate(nodes, grads, *a, zip_map(g, out, |g, y| g * y)),
        Op::Log(a) => accumulate(nodes, grads, *a, zip_map(g, val(*a), |g, x| g / x)),
        Op::Tanh(a) => accumulate(nodes, grads, *a, zip_map(g, out, |g, y| g * (1.0 - y * y))),
        Op::Sqrt(a) => accumulate(nodes, grads, *a, zip_map(g, out, |g, y| g / (2.0 * y))),
        Op::Clamp(a, lo, hi) => {
            let (lo, hi) = (*lo, *hi);
            let ga = zip_map(g, val(*a), |g, x| if x >= lo && x <= hi { g } else { 0.0 });
            accumulate(nodes, grads, *a, ga)
        }
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k, n) = (av.rows(), av.cols(), bv.cols());
            if nodes[*a].requires_grad {
                let ga = matmul_nt(g.data(), bv.data(), m, n, k);
                accumulate(nodes, grads, *a, Tensor::matrix(m, k, ga).unwrap());
            }
            if nodes[*b].requires_grad {
                let gb = matmul_tn(av.data(), g.data(), m, k, n);
                accumulate(nodes, grads, *b, Tensor::matrix(k, n, gb).unwrap());
            }
        }
        Op::Transpose(a) => accumulate(nodes, grads, *a, transpose(g)),
        Op::Sum(a) => {
            let s = g.item();
            accumulate(nodes, grads, *a, Tensor::full(val(*a).shape(), s))
        }
        Op::Mean(a) => {
            let n = val(*a).numel() as f64;
            accumulate(nodes, grads, *a, Tensor::full(val(*a).shape(), g.item() / n))
        }
        Op::SumAxis(a, axis) => {
            let shape = val(*a).shape().to_vec();
            let (r, c) = (shape[0], shape[1]);
            let mut ga = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    ga[i * c + j] = if *axis == 1 { g.data()[i] } else { g.data()[j] };
                }
            }
            accumulate(nodes, grads, *a, Tensor::new(shape, ga).unwrap())
        }
        Op::LogSumExp(a) => {
            let s = g.item();
            let lse = out.item();
            accumulate(nodes, grads, *a, val(*a).map(|x| s * (x - lse).exp()))
        }
        Op::Concat(inputs, axis) => {
            let mut offset = 0;
            for &i in inputs {
                let shape = val(i).shape();
                let extent = shape[*axis];
                let piece = slice_tensor(g, *axis, offset, offset + extent);
                accumulate(nodes, grads, i, piece);
                offset += extent;
            }
        }
        Op::Slice(a, axis, start, end) => {
            let src = val(*a);
            let mut ga = Tensor::zeros(src.shape());
            scatter_slice(&mut ga, g, *axis, *start, *end);
            accumulate(nodes, grads, *a, ga)
        }
        Op::Reshape(a) => {
            let ga = g.clone().reshape(val(*a).shape().to_vec()).unwrap();
            accumulate(nodes, grads, *a, ga)
        }
        Op::BroadcastRows(a) => {
            let src = val(*a);
            let k = src.numel();
            let mut ga = vec![0.0; k];
            for row in g.data().chunks(k) {
                for (acc, &x) in ga.iter_mut().zip(row) {
                    *acc += x;
                }
            }
            accumulate(nodes, grads, *a, Tensor::new(src.shape().to_vec(), ga).unwrap())
        }
        Op::GatherRows(a, idx) => {
            let src = val(*a);
            let width = if src.rank() == 2 { src.cols() } else { 1 };
            let mut ga = Tensor::zeros(src.shape());
            let dst = ga.data_mut();
            for (r, &j) in idx.iter().enumerate() {
                for c in 0..width {
                    dst[j * width + c] += g.data()[r * width + c];
                }
            }
            accumulate(nodes, grads, *a, ga)
        }
    }
}

fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = (t.rows(), t.cols());
    let src = t.data();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = src[i * c + j];
        }
    }
    Tensor::matrix(c, r, out).unwrap()
}

fn slice_tensor(t: &Tensor, axis: usize, start: usize, end: usize) -> Tensor {
    if t.rank() == 1 {
        return Tensor::vector(t.data()[start..end].to_vec());
    }
    let (r, c) = (t.rows(), t.cols());
    let src = t.data();
    if axis == 0 {
        Tensor::matrix(end - start, c, src[start * c..end * c].to_vec()).unwrap()
    } else {
        let w = end - start;
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&src[i * c + start..i * c + end]);
        }
        Tensor::matrix(r, w, out).unwrap()
    }
}

fn scatter_slice(dst: &mut Tensor, piece: &Tensor, axis: usize, start: usize, end: usize) {
    if dst.rank() == 1 {
        dst.data_mut()[start..end].copy_from_slice(piece.data());
        return;
    }
    let c = dst.cols();
    let r = dst.rows();
    let data = dst.data_mut();
    if axis == 0 {
        data[start * c..end * c].copy_from_slice(piece.data());
    } else {
        let w = end - start;
        for i in 0..r {
            data[i * c + start..i * c + end].copy_from_slice(&piece.data()[i * w..(i + 1) * w]);
        }
    }
}

/// Result of a reverse sweep, indexed by tape node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `var`; zeros if `var` did not
    /// influence the root.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        match self.grads.get(var.id).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&var.shape()),
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn to_tensor(&self) -> Tensor {
        self.value().clone()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.value().data().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Same value as a fresh constant leaf; gradients stop here.
    pub fn detach(self) -> Var<'t> {
        let v = self.to_tensor();
        self.tape.constant(v)
    }

    fn unary(self, op: Op, value: Tensor) -> Var<'t> {
        let rg = self.requires_grad();
        self.tape.push(value, op, rg)
    }

    fn binary(self, other: Var<'t>, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var<'t>> {
        let value = {
            let (a, b) = (self.value(), other.value());
            if a.shape() != b.shape() && !a.is_scalar() && !b.is_scalar() {
                return Err(Error::shape(op.name(), a.shape(), b.shape()));
            }
            zip_map(&a, &b, f)
        };
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, op, rg))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Add(self.id, other.id), |x, y| x + y)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Sub(self.id, other.id), |x, y| x - y)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Mul(self.id, other.id), |x, y| x * y)
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Div(self.id, other.id), |x, y| x / y)
    }

    /// Elementwise maximum; ties route the gradient to `self`.
    pub fn maximum(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Maximum(self.id, other.id), f64::max)
    }

    pub fn neg(self) -> Var<'t> {
        let v = self.value().map(|x| -x);
        self.unary(Op::Neg(self.id), v)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let v = self.value().map(|x| x * c);
        self.unary(Op::Scale(self.id, c), v)
    }

    pub fn shift(self, c: f64) -> Var<'t> {
        let v = self.value().map(|x| x + c);
        self.unary(Op::Shift(self.id), v)
    }

    pub fn exp(self) -> Var<'t> {
        let v = self.value().map(f64::exp);
        self.unary(Op::Exp(self.id), v)
    }

    pub fn log(self) -> Result<Var<'t>> {
        let v = {
            let x = self.value();
            if let Some(bad) = x.data().iter().find(|&&x| !(x > 0.0)) {
                return Err(Error::domain("log", format!("non-positive argument {bad}")));
            }
            x.map(f64::ln)
        };
        Ok(self.unary(Op::Log(self.id), v))
    }

    pub fn tanh(self) -> Var<'t> {
        let v = self.value().map(f64::tanh);
        self.unary(Op::Tanh(self.id), v)
    }

    pub fn sqrt(self) -> Result<Var<'t>> {
        let v = {
            let x = self.value();
            if let Some(bad) = x.data().iter().find(|&&x| !(x >= 0.0)) {
                return Err(Error::domain("sqrt", format!("negative argument {bad}")));
            }
            x.map(f64::sqrt)
        };
        Ok(self.unary(Op::Sqrt(self.id), v))
    }

    pub fn square(self) -> Var<'t> {
        self.mul(self).expect("same shape")
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where the input lies
    /// outside the interval.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        let v = self.value().map(|x| x.clamp(lo, hi));
        self.unary(Op::Clamp(self.id, lo, hi), v)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let (a, b) = (self.value(), other.value());
            if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
                return Err(Error::shape("matmul", a.shape(), b.shape()));
            }
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            Tensor::matrix(m, n, matmul_nn(a.data(), b.data(), m, k, n))?
        };
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), rg))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let v = {
            let a = self.value();
            if a.rank() != 2 {
                return Err(Error::shape("transpose", a.shape(), &[]));
            }
            transpose(&a)
        };
        Ok(self.unary(Op::Transpose(self.id), v))
    }

    pub fn sum(self) -> Var<'t> {
        let v = Tensor::scalar(self.value().data().iter().sum());
        self.unary(Op::Sum(self.id), v)
    }

    pub fn mean(self) -> Var<'t> {
        let v = {
            let a = self.value();
            Tensor::scalar(a.data().iter().sum::<f64>() / a.numel() as f64)
        };
        self.unary(Op::Mean(self.id), v)
    }

    /// Sum a matrix over `axis` (0: down columns → `[cols]`, 1: across rows → `[rows]`).
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        let v = {
            let a = self.value();
            if a.rank() != 2 || axis > 1 {
                return Err(Error::shape("sum_axis", a.shape(), &[axis]));
            }
            let (r, c) = (a.rows(), a.cols());
            if axis == 1 {
                Tensor::vector((0..r).map(|i| a.row(i).iter().sum()).collect())
            } else {
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for (o, x) in out.iter_mut().zip(a.row(i)) {
                        *o += x;
                    }
                }
                Tensor::vector(out)
            }
        };
        Ok(self.unary(Op::SumAxis(self.id, axis), v))
    }

    /// `log Σ exp(x)` over every element, computed stably.
    pub fn logsumexp(self) -> Var<'t> {
        let v = Tensor::scalar(logsumexp(self.value().data()));
        self.unary(Op::LogSumExp(self.id), v)
    }

    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts.first().expect("concat of nothing");
        let tape = first.tape;
        let value = {
            let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
            let rank = vals[0].rank();
            if rank == 0 || rank > 2 || axis >= rank {
                return Err(Error::shape("concat", vals[0].shape(), &[axis]));
            }
            for v in &vals[1..] {
                let ok = v.rank() == rank && (rank == 1 || v.shape()[1 - axis] == vals[0].shape()[1 - axis]);
                if !ok {
                    return Err(Error::shape("concat", vals[0].shape(), v.shape()));
                }
            }
            if rank == 1 {
                Tensor::vector(vals.iter().flat_map(|v| v.data().iter().copied()).collect())
            } else if axis == 0 {
                let rows = vals.iter().map(|v| v.rows()).sum();
                let data = vals.iter().flat_map(|v| v.data().iter().copied()).collect();
                Tensor::matrix(rows, vals[0].cols(), data)?
            } else {
                let r = vals[0].rows();
                let cols: usize = vals.iter().map(|v| v.cols()).sum();
                let mut data = Vec::with_capacity(r * cols);
                for i in 0..r {
                    for v in &vals {
                        data.extend_from_slice(v.row(i));
                    }
                }
                Tensor::matrix(r, cols, data)?
            }
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = tape.requires(&ids);
        Ok(tape.push(value, Op::Concat(ids, axis), rg))
    }

    /// Half-open range `start..end` along `axis`.
    pub fn slice(self, axis: usize, start: usize, end: usize) -> Result<Var<'t>> {
        let v = {
            let a = self.value();
            if a.rank() == 0 || a.rank() > 2 || axis >= a.rank() || start > end || end > a.shape()[axis] {
                return Err(Error::shape("slice", a.shape(), &[axis, start, end]));
            }
            slice_tensor(&a, axis, start, end)
        };
        Ok(self.unary(Op::Slice(self.id, axis, start, end), v))
    }

    /// Columns `start..end` of a matrix.
    pub fn cols(self, start: usize, end: usize) -> Result<Var<'t>> {
        self.slice(1, start, end)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let v = self.to_tensor().reshape(shape.to_vec())?;
        Ok(self.unary(Op::Reshape(self.id), v))
    }

    /// Repeat a `[k]` or `[1,k]` row `n` times into `[n,k]`.
    pub fn broadcast_rows(self, n: usize) -> Result<Var<'t>> {
        let v = {
            let a = self.value();
            let k = match a.shape() {
                [k] => *k,
                [1, k] => *k,
                s => return Err(Error::shape("broadcast_rows", s, &[n])),
            };
            let mut data = Vec::with_capacity(n * k);
            for _ in 0..n {
                data.extend_from_slice(a.data());
            }
            Tensor::matrix(n, k, data)?
        };
        Ok(self.unary(Op::BroadcastRows(self.id), v))
    }

    /// Select rows (or elements of a vector) by index; indices may repeat.
    pub fn gather_rows(self, idx: &[usize]) -> Result<Var<'t>> {
        let v = {
            let a = self.value();
            let (n, width) = match a.shape() {
                [n] => (*n, 1),
                [n, c] => (*n, *c),
                s => return Err(Error::shape("gather_rows", s, &[idx.len()])),
            };
            if let Some(&bad) = idx.iter().find(|&&j| j >= n) {
                return Err(Error::shape("gather_rows", a.shape(), &[bad]));
            }
            let mut data = Vec::with_capacity(idx.len() * width);
            for &j in idx {
                data.extend_from_slice(&a.data()[j * width..(j + 1) * width]);
            }
            let shape = if a.rank() == 1 { vec![idx.len()] } else { vec![idx.len(), width] };
            Tensor::new(shape, data)?
        };
        Ok(self.unary(Op::GatherRows(self.id, idx.to_vec()), v))
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
