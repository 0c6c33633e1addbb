use std::cell::{Ref, RefCell, RefMut};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use super::tensor::{matmul_nt, matmul_raw, matmul_tn, transpose_raw, Tensor};
use crate::error::{Error, Result};

/// A node in a dynamically built computation graph.
///
/// Cloning a `Value` clones the handle, not the payload. Graphs are rebuilt on
/// every forward pass and are single-threaded.
#[derive(Clone)]
pub struct Value(Rc<Node>);

struct Node {
    data: RefCell<Tensor>,
    grad: RefCell<Tensor>,
    requires_grad: bool,
    op: Op,
}

enum Op {
    Leaf,
    MatMul(Value, Value),
    Transpose(Value),
    Add(Value, Value),
    Sub(Value, Value),
    Mul(Value, Value),
    AddBias(Value, Value),
    Relu(Value),
    Sigmoid(Value),
    Abs(Value),
    Scale(Value, f64),
    AddScalar(Value),
    Clamp { input: Value, lo: f64, hi: f64 },
    ScaleBy(Value, Value),
    Sum(Value),
    Mean(Value),
    Softmax { input: Value, scale: f64 },
    Concat(Vec<Value>),
    Row(Value, usize),
    Index(Value, usize),
    Reshape(Value),
    Unfold { input: Value, kernel: usize },
    Outer3(Value, Value, Value),
}

impl Op {
    fn parents(&self) -> Vec<&Value> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddBias(a, b)
            | Op::ScaleBy(a, b) => vec![a, b],
            Op::Transpose(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Abs(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Row(a, _)
            | Op::Index(a, _)
            | Op::Reshape(a) => vec![a],
            Op::Clamp { input, .. } | Op::Softmax { input, .. } | Op::Unfold { input, .. } => {
                vec![input]
            }
            Op::Concat(parts) => parts.iter().collect(),
            Op::Outer3(a, b, c) => vec![a, b, c],
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Value")
            .field("data", &*self.0.data.borrow())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Value {
    fn from_op(data: Tensor, op: Op) -> Value {
        let requires_grad = op.parents().iter().any(|p| p.requires_grad());
        let grad = Tensor::zeros(data.shape());
        // Constant subgraphs keep no history.
        let op = if requires_grad { op } else { Op::Leaf };
        Value(Rc::new(Node {
            data: RefCell::new(data),
            grad: RefCell::new(grad),
            requires_grad,
            op,
        }))
    }

    fn leaf(data: Tensor, requires_grad: bool) -> Value {
        let grad = Tensor::zeros(data.shape());
        Value(Rc::new(Node {
            data: RefCell::new(data),
            grad: RefCell::new(grad),
            requires_grad,
            op: Op::Leaf,
        }))
    }

    /// Trainable leaf.
    pub fn param(data: Tensor) -> Value {
        Self::leaf(data, true)
    }

    /// Leaf that never receives gradient.
    pub fn constant(data: Tensor) -> Value {
        Self::leaf(data, false)
    }

    pub fn scalar(x: f64) -> Value {
        Self::constant(Tensor::scalar(x))
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Tensor> {
        self.0.data.borrow()
    }

    /// Mutable access to the payload. Intended for optimizers and tests that
    /// perturb leaves; mutating an interior node does not re-run its forward.
    pub fn data_mut(&self) -> RefMut<'_, Tensor> {
        self.0.data.borrow_mut()
    }

    pub fn grad(&self) -> Ref<'_, Tensor> {
        self.0.grad.borrow()
    }

    pub fn zero_grad(&self) {
        self.0.grad.borrow_mut().fill(0.0);
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.data.borrow().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.0.data.borrow().numel()
    }

    pub fn item(&self) -> f64 {
        self.0.data.borrow().item()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.borrow().data().to_vec()
    }

    pub fn ptr_eq(&self, other: &Value) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    /// Same payload, no history, no gradient.
    pub fn detach(&self) -> Value {
        Self::constant(self.data().clone())
    }

    pub fn matmul(&self, other: &Value) -> Result<Value> {
        let (a, b) = (self.data(), other.data());
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(Error::dim("matmul", a.shape(), b.shape()));
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let out = Tensor::new(&[m, n], matmul_raw(a.data(), b.data(), m, k, n))?;
        drop((a, b));
        Ok(Self::from_op(out, Op::MatMul(self.clone(), other.clone())))
    }

    pub fn transpose(&self) -> Result<Value> {
        let a = self.data();
        if a.rank() != 2 {
            return Err(Error::dim("transpose", a.shape(), &[]));
        }
        let (r, c) = (a.shape()[0], a.shape()[1]);
        let out = Tensor::new(&[c, r], transpose_raw(a.data(), r, c))?;
        drop(a);
        Ok(Self::from_op(out, Op::Transpose(self.clone())))
    }

    fn zip_with(&self, other: &Value, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (a, b) = (self.data(), other.data());
        if a.shape() != b.shape() {
            return Err(Error::dim(op, a.shape(), b.shape()));
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(a.shape(), data)
    }

    pub fn add(&self, other: &Value) -> Result<Value> {
        let out = self.zip_with(other, "add", |x, y| x + y)?;
        Ok(Self::from_op(out, Op::Add(self.clone(), other.clone())))
    }

    pub fn sub(&self, other: &Value) -> Result<Value> {
        let out = self.zip_with(other, "sub", |x, y| x - y)?;
        Ok(Self::from_op(out, Op::Sub(self.clone(), other.clone())))
    }

    pub fn mul(&self, other: &Value) -> Result<Value> {
        let out = self.zip_with(other, "mul", |x, y| x * y)?;
        Ok(Self::from_op(out, Op::Mul(self.clone(), other.clone())))
    }

    /// Adds a length-`c` bias to every row of an `r×c` matrix.
    pub fn add_bias(&self, bias: &Value) -> Result<Value> {
        let (x, b) = (self.data(), bias.data());
        if x.rank() != 2 || b.rank() != 1 || x.shape()[1] != b.shape()[0] {
            return Err(Error::dim("add_bias", x.shape(), b.shape()));
        }
        let c = x.shape()[1];
        let data = x.data().iter().enumerate().map(|(i, &v)| v + b.data()[i % c]).collect();
        let out = Tensor::new(x.shape(), data)?;
        drop((x, b));
        Ok(Self::from_op(out, Op::AddBias(self.clone(), bias.clone())))
    }

    /// Rectifier; the subgradient at exactly zero is zero.
    pub fn relu(&self) -> Value {
        let out = self.data().map(|x| if x > 0.0 || x.is_nan() { x } else { 0.0 });
        Self::from_op(out, Op::Relu(self.clone()))
    }

    pub fn sigmoid(&self) -> Value {
        let out = self.data().map(stable_sigmoid);
        Self::from_op(out, Op::Sigmoid(self.clone()))
    }

    pub fn abs(&self) -> Value {
        let out = self.data().map(f64::abs);
        Self::from_op(out, Op::Abs(self.clone()))
    }

    pub fn scale(&self, c: f64) -> Value {
        let out = self.data().map(|x| x * c);
        Self::from_op(out, Op::Scale(self.clone(), c))
    }

    pub fn add_scalar(&self, c: f64) -> Value {
        let out = self.data().map(|x| x + c);
        Self::from_op(out, Op::AddScalar(self.clone()))
    }

    /// Clamps into `[lo, hi]`; gradient passes only strictly inside the interval.
    pub fn clamp(&self, lo: f64, hi: f64) -> Value {
        let out = self.data().map(|x| x.clamp(lo, hi));
        Self::from_op(
            out,
            Op::Clamp {
                input: self.clone(),
                lo,
                hi,
            },
        )
    }

    /// Multiplies every element by the one-element value `s`.
    pub fn scale_by(&self, s: &Value) -> Result<Value> {
        if s.numel() != 1 {
            return Err(Error::dim("scale_by", &s.shape(), &[1]));
        }
        let c = s.item();
        let out = self.data().map(|x| x * c);
        Ok(Self::from_op(out, Op::ScaleBy(s.clone(), self.clone())))
    }

    pub fn sum(&self) -> Value {
        let out = Tensor::scalar(self.data().data().iter().sum());
        Self::from_op(out, Op::Sum(self.clone()))
    }

    pub fn mean(&self) -> Value {
        let d = self.data();
        let out = Tensor::scalar(d.data().iter().sum::<f64>() / d.numel() as f64);
        drop(d);
        Self::from_op(out, Op::Mean(self.clone()))
    }

    /// Row-wise `softmax(scale · x)` over the last axis of a rank-1 or rank-2
    /// value, stabilized by subtracting the row maximum.
    pub fn softmax(&self, scale: f64) -> Result<Value> {
        if !(scale > 0.0) {
            return Err(Error::Config(format!("softmax scale must be positive, got {scale}")));
        }
        let x = self.data();
        if x.rank() == 0 || x.rank() > 2 {
            return Err(Error::dim("softmax", x.shape(), &[]));
        }
        let c = x.cols();
        let mut data = Vec::with_capacity(x.numel());
        for row in x.data().chunks(c) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(scale * v));
            let exps: Vec<f64> = row.iter().map(|&v| (scale * v - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            data.extend(exps.into_iter().map(|e| e / total));
        }
        let out = Tensor::new(x.shape(), data)?;
        drop(x);
        Ok(Self::from_op(
            out,
            Op::Softmax {
                input: self.clone(),
                scale,
            },
        ))
    }

    /// Concatenates rank-0 or rank-1 values into one vector.
    pub fn concat(parts: &[Value]) -> Result<Value> {
        if parts.is_empty() {
            return Err(Error::Contract("concat of zero values".into()));
        }
        let mut data = Vec::new();
        for p in parts {
            let d = p.data();
            if d.rank() > 1 {
                return Err(Error::dim("concat", d.shape(), &[]));
            }
            data.extend_from_slice(d.data());
        }
        Ok(Self::from_op(Tensor::vector(data), Op::Concat(parts.to_vec())))
    }

    pub fn row(&self, i: usize) -> Result<Value> {
        let x = self.data();
        if x.rank() != 2 || i >= x.shape()[0] {
            return Err(Error::dim("row", x.shape(), &[i]));
        }
        let out = Tensor::vector(x.row(i).to_vec());
        drop(x);
        Ok(Self::from_op(out, Op::Row(self.clone(), i)))
    }

    pub fn index(&self, i: usize) -> Result<Value> {
        let x = self.data();
        if x.rank() != 1 || i >= x.shape()[0] {
            return Err(Error::dim("index", x.shape(), &[i]));
        }
        let out = Tensor::scalar(x.data()[i]);
        drop(x);
        Ok(Self::from_op(out, Op::Index(self.clone(), i)))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Value> {
        let x = self.data();
        let out = Tensor::new(shape, x.data().to_vec()).map_err(|_| Error::dim("reshape", x.shape(), shape))?;
        drop(x);
        Ok(Self::from_op(out, Op::Reshape(self.clone())))
    }

    /// Same-padded temporal unfolding: row `t` of the `T × (kernel·c)` output
    /// holds input rows `t - p ..= t + p` (zeros outside), `p = (kernel-1)/2`.
    /// Followed by a matmul this is a 1-D convolution.
    pub fn unfold_same(&self, kernel: usize) -> Result<Value> {
        if kernel == 0 || kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel size must be odd, got {kernel}")));
        }
        let x = self.data();
        if x.rank() != 2 {
            return Err(Error::dim("unfold_same", x.shape(), &[]));
        }
        let (t_len, c) = (x.shape()[0], x.shape()[1]);
        let pad = (kernel - 1) / 2;
        let width = kernel * c;
        let mut data = vec![0.0; t_len * width];
        for t in 0..t_len {
            for j in 0..kernel {
                let src = t + j;
                if src < pad || src - pad >= t_len {
                    continue;
                }
                let dst = &mut data[t * width + j * c..t * width + (j + 1) * c];
                dst.copy_from_slice(x.row(src - pad));
            }
        }
        let out = Tensor::new(&[t_len, width], data)?;
        drop(x);
        Ok(Self::from_op(
            out,
            Op::Unfold {
                input: self.clone(),
                kernel,
            },
        ))
    }

    /// Flattened outer product of three vectors, row-major in argument order:
    /// element `(i, j, k)` sits at `i·nb·nc + j·nc + k`.
    pub fn outer3(a: &Value, b: &Value, c: &Value) -> Result<Value> {
        let (x, y, z) = (a.data(), b.data(), c.data());
        for v in [&x, &y, &z] {
            if v.rank() != 1 {
                return Err(Error::dim("outer3", v.shape(), &[]));
            }
        }
        let mut data = Vec::with_capacity(x.numel() * y.numel() * z.numel());
        for &xi in x.data() {
            for &yj in y.data() {
                let xy = xi * yj;
                data.extend(z.data().iter().map(|&zk| xy * zk));
            }
        }
        drop((x, y, z));
        Ok(Self::from_op(
            Tensor::vector(data),
            Op::Outer3(a.clone(), b.clone(), c.clone()),
        ))
    }

    /// Reverse-mode sweep from a one-element value.
    ///
    /// Gradients are added into the `grad` slot of every reachable node that
    /// requires grad; calling this twice without `zero_grad` accumulates.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let index: HashMap<*const Node, usize> = order.iter().enumerate().map(|(i, v)| (Rc::as_ptr(&v.0), i)).collect();
        let mut grads: Vec<Option<Tensor>> = vec![None; order.len()];
        grads[order.len() - 1] = Some(Tensor::new(&self.shape(), vec![1.0])?);

        for i in (0..order.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &order[i].0;
            node.grad.borrow_mut().add_assign(&g);
            let out = node.data.borrow();
            propagate(&node.op, &out, &g, &mut |parent: &Value, pg: Tensor| {
                if !parent.requires_grad() {
                    return;
                }
                let j = index[&Rc::as_ptr(&parent.0)];
                match &mut grads[j] {
                    Some(acc) => acc.add_assign(&pg),
                    slot => *slot = Some(pg),
                }
            });
        }
        Ok(())
    }

    /// Nodes reachable through grad-requiring edges, parents before children.
    fn topo_order(&self) -> Vec<Value> {
        let mut order = Vec::new();
        let mut seen: HashMap<*const Node, ()> = HashMap::new();
        let mut stack: Vec<(Value, bool)> = vec![(self.clone(), false)];
        while let Some((v, expanded)) = stack.pop() {
            let key = Rc::as_ptr(&v.0);
            if expanded {
                order.push(v);
                continue;
            }
            if seen.insert(key, ()).is_some() {
                continue;
            }
            stack.push((v.clone(), true));
            for p in v.0.op.parents() {
                if p.requires_grad() && !seen.contains_key(&Rc::as_ptr(&p.0)) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }
}

pub(crate) fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("shapes checked in forward")
}

fn propagate(op: &Op, out: &Tensor, g: &Tensor, push: &mut dyn FnMut(&Value, Tensor)) {
    match op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (ad, bd) = (a.data(), b.data());
            let (m, k, n) = (ad.shape()[0], ad.shape()[1], bd.shape()[1]);
            let ga = a.requires_grad().then(|| matmul_nt(g.data(), bd.data(), m, n, k));
            let gb = b.requires_grad().then(|| matmul_tn(ad.data(), g.data(), k, m, n));
            drop((ad, bd));
            if let Some(ga) = ga {
                push(a, Tensor::new(&[m, k], ga).unwrap());
            }
            if let Some(gb) = gb {
                push(b, Tensor::new(&[k, n], gb).unwrap());
            }
        }
        Op::Transpose(a) => {
            let (r, c) = (out.shape()[0], out.shape()[1]);
            push(a, Tensor::new(&[c, r], transpose_raw(g.data(), r, c)).unwrap());
        }
        Op::Add(a, b) => {
            push(a, g.clone());
            push(b, g.clone());
        }
        Op::Sub(a, b) => {
            push(a, g.clone());
            push(b, g.map(|x| -x));
        }
        Op::Mul(a, b) => {
            let ga = zip_map(g, &b.data(), |gv, bv| gv * bv);
            let gb = zip_map(g, &a.data(), |gv, av| gv * av);
            push(a, ga);
            push(b, gb);
        }
        Op::AddBias(x, b) => {
            let c = out.shape()[1];
            let mut gb = vec![0.0; c];
            for row in g.data().chunks(c) {
                for (acc, v) in gb.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            push(x, g.clone());
            push(b, Tensor::vector(gb));
        }
        Op::Relu(x) => {
            let gx = zip_map(g, &x.data(), |gv, xv| if xv > 0.0 { gv } else { 0.0 });
            push(x, gx);
        }
        Op::Sigmoid(x) => push(x, zip_map(g, out, |gv, y| gv * y * (1.0 - y))),
        Op::Abs(x) => {
            let gx = zip_map(g, &x.data(), |gv, xv| {
                if xv > 0.0 {
                    gv
                } else if xv < 0.0 {
                    -gv
                } else {
                    0.0
                }
            });
            push(x, gx);
        }
        Op::Scale(x, c) => push(x, g.map(|v| v * c)),
        Op::AddScalar(x) => push(x, g.clone()),
        Op::Clamp { input, lo, hi } => {
            let gx = zip_map(g, &input.data(), |gv, xv| if xv > *lo && xv < *hi { gv } else { 0.0 });
            push(input, gx);
        }
        Op::ScaleBy(s, x) => {
            let gs: f64 = g.data().iter().zip(x.data().data()).map(|(a, b)| a * b).sum();
            let c = s.item();
            push(s, Tensor::new(&s.shape(), vec![gs]).unwrap());
            push(x, g.map(|v| v * c));
        }
        Op::Sum(x) => {
            let mut gx = Tensor::zeros(&x.shape());
            gx.fill(g.item());
            push(x, gx);
        }
        Op::Mean(x) => {
            let mut gx = Tensor::zeros(&x.shape());
            gx.fill(g.item() / gx.numel() as f64);
            push(x, gx);
        }
        Op::Softmax { input, scale } => {
            let c = out.cols();
            let mut gx = Vec::with_capacity(out.numel());
            for (y, gy) in out.data().chunks(c).zip(g.data().chunks(c)) {
                let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                gx.extend(y.iter().zip(gy).map(|(&yi, &gi)| scale * yi * (gi - dot)));
            }
            push(input, Tensor::new(out.shape(), gx).unwrap());
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for p in parts {
                let shape = p.shape();
                let n: usize = shape.iter().product();
                let slice = g.data()[offset..offset + n].to_vec();
                offset += n;
                push(p, Tensor::new(&shape, slice).unwrap());
            }
        }
        Op::Row(x, i) => {
            let mut gx = Tensor::zeros(&x.shape());
            let c = gx.cols();
            gx.data_mut()[i * c..(i + 1) * c].copy_from_slice(g.data());
            push(x, gx);
        }
        Op::Index(x, i) => {
            let mut gx = Tensor::zeros(&x.shape());
            gx.data_mut()[*i] = g.item();
            push(x, gx);
        }
        Op::Reshape(x) => push(x, g.reshaped(&x.shape())),
        Op::Unfold { input, kernel } => {
            let shape = input.shape();
            let (t_len, c) = (shape[0], shape[1]);
            let pad = (kernel - 1) / 2;
            let width = kernel * c;
            let mut gx = Tensor::zeros(&shape);
            let gxd = gx.data_mut();
            for t in 0..t_len {
                for j in 0..*kernel {
                    let src = t + j;
                    if src < pad || src - pad >= t_len {
                        continue;
                    }
                    let row = src - pad;
                    for f in 0..c {
                        gxd[row * c + f] += g.data()[t * width + j * c + f];
                    }
                }
            }
            push(input, gx);
        }
        Op::Outer3(a, b, c) => {
            let (x, y, z) = (a.to_vec(), b.to_vec(), c.to_vec());
            let (nb, nc) = (y.len(), z.len());
            let mut ga = vec![0.0; x.len()];
            let mut gb = vec![0.0; nb];
            let mut gc = vec![0.0; nc];
            let gd = g.data();
            for (i, &xi) in x.iter().enumerate() {
                for (j, &yj) in y.iter().enumerate() {
                    let base = (i * nb + j) * nc;
                    let block = &gd[base..base + nc];
                    let gz: f64 = block.iter().zip(&z).map(|(gv, zk)| gv * zk).sum();
                    ga[i] += yj * gz;
                    gb[j] += xi * gz;
                    let xy = xi * yj;
                    for (acc, gv) in gc.iter_mut().zip(block) {
                        *acc += xy * gv;
                    }
                }
            }
            push(a, Tensor::vector(ga));
            push(b, Tensor::vector(gb));
            push(c, Tensor::vector(gc));
        }
    }
}
