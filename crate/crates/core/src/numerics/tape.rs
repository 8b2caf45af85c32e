//! Append-only computation tape with reverse-mode differentiation.
//!
//! Every operation evaluates eagerly, stores its output on the tape and
//! returns a [`Var`] handle. [`Tape::backward`] walks the records in reverse
//! order and returns the accumulated gradients without modifying the tape, so
//! the same tape can be differentiated from several roots.

use super::{NumericsError, Tensor};

/// Handle to a value recorded on a [`Tape`]. The wrapped index is the tape id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Log(Var),
    Abs(Var),
    Scale(Var, f64),
    Sum(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    Slice { src: Var, start: usize },
    SelectRow { src: Var, row: usize },
    Pick { src: Var, index: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Hadamard(..) => "hadamard",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Log(..) => "log",
            Op::Abs(..) => "abs",
            Op::Scale(..) => "scale",
            Op::Sum(..) => "sum",
            Op::Softmax(..) => "softmax",
            Op::Concat(..) => "concat",
            Op::StackRows(..) => "stack_rows",
            Op::Slice { .. } => "slice",
            Op::SelectRow { .. } => "select_row",
            Op::Pick { .. } => "pick",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward pass, indexed by tape id.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss wrt `var`, or `None` when the loss does not
    /// depend on it (or it does not require gradients).
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but materializes zeros for unreached values.
    pub fn get_or_zeros(&self, var: Var, shape: &[usize]) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

/// The record of operations for one forward computation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

enum Broadcast {
    Same,
    LeftScalar,
    RightScalar,
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

    /// A differentiable input (parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Value of a one-element tensor.
    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.0].value.item()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Name of the operation that produced `var`, for diagnostics.
    pub fn op_name(&self, var: Var) -> &'static str {
        self.nodes[var.0].op.name()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> NumericsError {
        NumericsError::ShapeMismatch {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast, NumericsError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok(Broadcast::Same)
        } else if sa.is_empty() {
            Ok(Broadcast::LeftScalar)
        } else if sb.is_empty() {
            Ok(Broadcast::RightScalar)
        } else {
            Err(self.mismatch(op, a, b))
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NumericsError> {
        let mode = self.broadcast(name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let (shape, data): (Vec<usize>, Vec<f64>) = match mode {
            Broadcast::Same => (
                ta.shape().to_vec(),
                ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect(),
            ),
            Broadcast::LeftScalar => {
                let x = ta.item();
                (tb.shape().to_vec(), tb.data().iter().map(|&y| f(x, y)).collect())
            }
            Broadcast::RightScalar => {
                let y = tb.item();
                (ta.shape().to_vec(), ta.data().iter().map(|&x| f(x, y)).collect())
            }
        };
        let grad = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, op, grad))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("shape preserved");
        let grad = self.any_grad(&[a]);
        self.push(value, op, grad)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary("hadamard", a, b, |x, y| x * y, Op::Hadamard(a, b))
    }

    /// Sum of any number of same-shaped values, folded left to right.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var, NumericsError> {
        let (&first, rest) = vars.split_first().ok_or(NumericsError::EmptyInput("add_all"))?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    /// Matrix product. `a` must be a matrix; `b` may be a matrix or a vector
    /// (matrix-vector product).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || !(tb.rank() == 1 || tb.rank() == 2) || ta.shape()[1] != tb.shape()[0] {
            return Err(self.mismatch("matmul", a, b));
        }
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let n = if tb.rank() == 2 { tb.shape()[1] } else { 1 };
        let mut out = vec![0.0; m * n];
        let (ad, bd) = (ta.data(), tb.data());
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = ad[i * k + p];
                let brow = &bd[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o += aip * bv;
                }
            }
        }
        let shape = if tb.rank() == 2 { vec![m, n] } else { vec![m] };
        let grad = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul(a, b), grad))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumericsError> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(NumericsError::Rank {
                op: "transpose",
                expected: 2,
                shape: t.shape().to_vec(),
            });
        }
        let (m, n) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = t.data()[i * n + j];
            }
        }
        let grad = self.any_grad(&[a]);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Transpose(a), grad))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    /// Natural logarithm; every entry must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var, NumericsError> {
        if let Some(&bad) = self.value(a).data().iter().find(|&&x| !(x > 0.0)) {
            return Err(NumericsError::Domain {
                op: "log",
                value: bad,
            });
        }
        Ok(self.unary(a, f64::ln, Op::Log(a)))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    /// Multiplication by a fixed scalar.
    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.unary(a, |x| x * factor, Op::Scale(a, factor))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let grad = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), grad)
    }

    /// Numerically stable softmax of a non-empty vector.
    pub fn softmax(&mut self, a: Var) -> Result<Var, NumericsError> {
        let t = self.value(a);
        if t.rank() != 1 || t.is_empty() {
            return Err(NumericsError::Rank {
                op: "softmax",
                expected: 1,
                shape: t.shape().to_vec(),
            });
        }
        let out = softmax(t.data());
        let grad = self.any_grad(&[a]);
        Ok(self.push(Tensor::vector(out), Op::Softmax(a), grad))
    }

    /// Concatenation of vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::EmptyInput("concat"));
        }
        let mut out = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 1 {
                return Err(NumericsError::Rank {
                    op: "concat",
                    expected: 1,
                    shape: t.shape().to_vec(),
                });
            }
            out.extend_from_slice(t.data());
        }
        let grad = self.any_grad(parts);
        Ok(self.push(Tensor::vector(out), Op::Concat(parts.to_vec()), grad))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var, NumericsError> {
        let (&first, _) = rows.split_first().ok_or(NumericsError::EmptyInput("stack_rows"))?;
        let width = self.shape(first).to_vec();
        if width.len() != 1 {
            return Err(NumericsError::Rank {
                op: "stack_rows",
                expected: 1,
                shape: width,
            });
        }
        let mut out = Vec::with_capacity(rows.len() * width[0]);
        for &r in rows {
            if self.shape(r) != width.as_slice() {
                return Err(self.mismatch("stack_rows", first, r));
            }
            out.extend_from_slice(self.value(r).data());
        }
        let grad = self.any_grad(rows);
        let value = Tensor::matrix(rows.len(), width[0], out)?;
        Ok(self.push(value, Op::StackRows(rows.to_vec()), grad))
    }

    /// Contiguous sub-vector `[start, start + len)`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let t = self.value(a);
        if t.rank() != 1 || start + len > t.len() {
            return Err(NumericsError::OutOfRange {
                op: "slice",
                index: start + len,
                shape: t.shape().to_vec(),
            });
        }
        let out = t.data()[start..start + len].to_vec();
        let grad = self.any_grad(&[a]);
        Ok(self.push(Tensor::vector(out), Op::Slice { src: a, start }, grad))
    }

    /// Row `row` of a matrix, as a vector.
    pub fn select_row(&mut self, a: Var, row: usize) -> Result<Var, NumericsError> {
        let t = self.value(a);
        if t.rank() != 2 || row >= t.shape()[0] {
            return Err(NumericsError::OutOfRange {
                op: "select_row",
                index: row,
                shape: t.shape().to_vec(),
            });
        }
        let out = t.row(row).to_vec();
        let grad = self.any_grad(&[a]);
        Ok(self.push(Tensor::vector(out), Op::SelectRow { src: a, row }, grad))
    }

    /// Entry `index` of a vector, as a scalar.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var, NumericsError> {
        let t = self.value(a);
        if t.rank() != 1 || index >= t.len() {
            return Err(NumericsError::OutOfRange {
                op: "pick",
                index,
                shape: t.shape().to_vec(),
            });
        }
        let v = t.data()[index];
        let grad = self.any_grad(&[a]);
        Ok(self.push(Tensor::scalar(v), Op::Pick { src: a, index }, grad))
    }

    /// Reverse-mode sweep from a one-element `loss`.
    ///
    /// Contributions are accumulated strictly in reverse tape order, so the
    /// result is bit-identical across runs.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(NumericsError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                grads[id] = None;
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| {
                g.map(|data| {
                    Tensor::new(self.nodes[id].value.shape().to_vec(), data).expect("gradient shape")
                })
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate_broadcast(*a, g, 1.0, grads);
                self.accumulate_broadcast(*b, g, 1.0, grads);
            }
            Op::Sub(a, b) => {
                self.accumulate_broadcast(*a, g, 1.0, grads);
                self.accumulate_broadcast(*b, g, -1.0, grads);
            }
            Op::Hadamard(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    let ga = elementwise_times(g, vb);
                    self.accumulate_broadcast(*a, &ga, 1.0, grads);
                }
                if self.requires_grad(*b) {
                    let gb = elementwise_times(g, va);
                    self.accumulate_broadcast(*b, &gb, 1.0, grads);
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = if tb.rank() == 2 { tb.shape()[1] } else { 1 };
                if self.requires_grad(*a) {
                    // dA = dC · Bᵀ
                    let mut ga = vec![0.0; m * k];
                    let bd = tb.data();
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bd[p * n..(p + 1) * n];
                            ga[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    accumulate(grads, a.0, &ga, 1.0);
                }
                if self.requires_grad(*b) {
                    // dB = Aᵀ · dC
                    let mut gb = vec![0.0; k * n];
                    let ad = ta.data();
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = ad[i * k + p];
                            for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += aip * gv;
                            }
                        }
                    }
                    accumulate(grads, b.0, &gb, 1.0);
                }
            }
            Op::Transpose(a) => {
                let (m, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                let mut ga = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        ga[i * n + j] = g[j * m + i];
                    }
                }
                accumulate(grads, a.0, &ga, 1.0);
            }
            Op::Sigmoid(a) => {
                let ga: Vec<f64> = g.iter().zip(out).map(|(gv, y)| gv * y * (1.0 - y)).collect();
                accumulate(grads, a.0, &ga, 1.0);
            }
            Op::Tanh(a) => {
                let ga: Vec<f64> = g.iter().zip(out).map(|(gv, y)| gv * (1.0 - y * y)).collect();
                accumulate(grads, a.0, &ga, 1.0);
            }
            Op::Log(a) => {
                let ga = elementwise_div(g, self.value(*a));
                accumulate(grads, a.0, &ga, 1.0);
            }
            Op::Abs(a) => {
                let ga: Vec<f64> = g
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(gv, x)| gv * sign(*x))
                    .collect();
                accumulate(grads, a.0, &ga, 1.0);
            }
            Op::Scale(a, factor) => accumulate(grads, a.0, g, *factor),
            Op::Sum(a) => {
                let ga = vec![g[0]; self.value(*a).len()];
                accumulate(grads, a.0, &ga, 1.0);
            }
            Op::Softmax(a) => {
                let dot: f64 = g.iter().zip(out).map(|(x, y)| x * y).sum();
                let ga: Vec<f64> = g.iter().zip(out).map(|(gv, y)| y * (gv - dot)).collect();
                accumulate(grads, a.0, &ga, 1.0);
            }
            Op::Concat(parts) | Op::StackRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    if self.requires_grad(*p) {
                        accumulate(grads, p.0, &g[offset..offset + len], 1.0);
                    }
                    offset += len;
                }
            }
            Op::Slice { src, start } => {
                let mut ga = vec![0.0; self.value(*src).len()];
                ga[*start..*start + g.len()].copy_from_slice(g);
                accumulate(grads, src.0, &ga, 1.0);
            }
            Op::SelectRow { src, row } => {
                let cols = self.shape(*src)[1];
                let mut ga = vec![0.0; self.value(*src).len()];
                ga[row * cols..(row + 1) * cols].copy_from_slice(g);
                accumulate(grads, src.0, &ga, 1.0);
            }
            Op::Pick { src, index } => {
                let mut ga = vec![0.0; self.value(*src).len()];
                ga[*index] = g[0];
                accumulate(grads, src.0, &ga, 1.0);
            }
        }
    }

    /// Accumulates `g` (shaped like the op output) into `target`, reducing to
    /// a single value when `target` was broadcast as a scalar.
    fn accumulate_broadcast(&self, target: Var, g: &[f64], factor: f64, grads: &mut [Option<Vec<f64>>]) {
        if !self.requires_grad(target) {
            return;
        }
        if self.value(target).is_scalar() && g.len() != 1 {
            let total: f64 = g.iter().sum();
            accumulate(grads, target.0, &[total], factor);
        } else {
            accumulate(grads, target.0, g, factor);
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: usize, g: &[f64], factor: f64) {
    match &mut grads[id] {
        Some(existing) => {
            for (e, v) in existing.iter_mut().zip(g) {
                *e += factor * v;
            }
        }
        slot @ None => {
            *slot = Some(g.iter().map(|v| factor * v).collect());
        }
    }
}

/// `g ⊙ other`, where `other` may be a broadcast scalar.
fn elementwise_times(g: &[f64], other: &Tensor) -> Vec<f64> {
    if other.is_scalar() {
        let s = other.item();
        g.iter().map(|x| x * s).collect()
    } else {
        g.iter().zip(other.data()).map(|(x, y)| x * y).collect()
    }
}

fn elementwise_div(g: &[f64], other: &Tensor) -> Vec<f64> {
    g.iter().zip(other.data()).map(|(x, y)| x / y).collect()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax over a slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
