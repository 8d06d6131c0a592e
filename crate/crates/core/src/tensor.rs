//! Dense 64-bit tensors (rank 0, 1 or 2) recorded on a reverse-mode tape.
//!
//! A [`Tape`] owns every value produced during a forward pass. [`Tensor`] is a
//! cheap `Copy` handle into it. Nodes are appended in evaluation order, so the
//! node index is already a topological order and [`Tensor::backward`] walks it
//! in reverse exactly once.
//!
//! ```
//! use ldrld_core::tensor::Tape;
//!
//! let tape = Tape::new();
//! let x = tape.vector(vec![1.0, 2.0], true).unwrap();
//! let loss = x.mul(x).unwrap().sum().unwrap();
//! loss.backward().unwrap();
//! assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
//! ```
//!
//! Every forward op rejects non-finite output, so NaN/Inf never propagates
//! silently. The tape uses interior mutability and is confined to one thread;
//! independent tapes can run on independent threads.

use std::cell::RefCell;
use std::fmt;

use crate::error::{Error, Result};

/// Numeric kernels shared by the tape ops and by no-grad forward passes.
pub mod kernels {
    use crate::error::{Error, Result};

    /// Row-major `[m×k] · [k×n]`.
    pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        debug_assert_eq!(a.len(), m * k);
        debug_assert_eq!(b.len(), k * n);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = a[i * k + p];
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o += aip * bv;
                }
            }
        }
        out
    }

    fn check_mask(len: usize, mask: &[bool], tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidTemperature(tau));
        }
        if mask.len() != len {
            return Err(Error::ShapeMismatch {
                op: "softmax",
                detail: format!("mask length {} vs input length {len}", mask.len()),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyMask);
        }
        Ok(())
    }

    /// Masked max of `z / tau` and the log of the shifted partition sum.
    fn masked_lse(z: &[f64], mask: &[bool], tau: f64) -> (f64, f64) {
        let max = z.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v / tau).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| (v / tau - max).exp()).sum();
        (max, sum.ln())
    }

    /// `exp(z_i/τ) / Σ_mask exp(z_j/τ)` on masked entries, exactly `0.0` elsewhere.
    pub fn softmax_masked(z: &[f64], mask: &[bool], tau: f64) -> Result<Vec<f64>> {
        check_mask(z.len(), mask, tau)?;
        let (max, log_sum) = masked_lse(z, mask, tau);
        let sum = log_sum.exp();
        Ok(z.iter().zip(mask).map(|(&v, &m)| if m { (v / tau - max).exp() / sum } else { 0.0 }).collect())
    }

    /// Log of [`softmax_masked`] on masked entries. Unmasked entries hold `0.0`
    /// as a placeholder; they carry no probability mass and receive no gradient.
    pub fn log_softmax_masked(z: &[f64], mask: &[bool], tau: f64) -> Result<Vec<f64>> {
        check_mask(z.len(), mask, tau)?;
        let (max, log_sum) = masked_lse(z, mask, tau);
        Ok(z.iter().zip(mask).map(|(&v, &m)| if m { v / tau - max - log_sum } else { 0.0 }).collect())
    }

    /// `Σ_mask p·(log p − log q)` with `p = exp(target_log_p)`.
    pub fn kl_from_logs(target_log_p: &[f64], log_q: &[f64], mask: &[bool]) -> f64 {
        target_log_p.iter().zip(log_q).zip(mask).filter(|(_, &m)| m).map(|((&lp, &lq), _)| lp.exp() * (lp - lq)).sum()
    }
}

type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId, m: usize, k: usize, n: usize },
    AddRow { x: NodeId, bias: NodeId, n: usize },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    AddN(Vec<NodeId>),
    Scale { x: NodeId, factor: f64 },
    AddScalar { x: NodeId },
    Relu { x: NodeId },
    Sum { x: NodeId },
    Take { x: NodeId, indices: Vec<usize> },
    SoftmaxMasked { x: NodeId, mask: Vec<bool>, tau: f64 },
    LogSoftmaxMasked { x: NodeId, mask: Vec<bool>, tau: f64 },
    KlDiv { log_q: NodeId, target_log_p: Vec<f64>, mask: Vec<bool> },
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Records forward operations so gradients can be replayed backward.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Vec<Option<Vec<f64>>>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.len()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Creates a leaf tensor. `shape` may be empty for a scalar.
    pub fn leaf(&self, shape: &[usize], data: Vec<f64>, requires_grad: bool) -> Result<Tensor<'_>> {
        if shape.len() > 2 {
            return Err(Error::ShapeMismatch { op: "leaf", detail: format!("rank {} unsupported", shape.len()) });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch {
                op: "leaf",
                detail: format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("leaf"));
        }
        Ok(self.push(shape.to_vec(), data, requires_grad, Op::Leaf))
    }

    pub fn vector(&self, data: Vec<f64>, requires_grad: bool) -> Result<Tensor<'_>> {
        self.leaf(&[data.len()], data, requires_grad)
    }

    pub fn matrix(&self, rows: usize, cols: usize, data: Vec<f64>, requires_grad: bool) -> Result<Tensor<'_>> {
        self.leaf(&[rows, cols], data, requires_grad)
    }

    pub fn scalar(&self, value: f64) -> Result<Tensor<'_>> {
        self.leaf(&[], vec![value], false)
    }

    fn push(&self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: Op) -> Tensor<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { shape, value, requires_grad, op });
        Tensor { tape: self, id: nodes.len() - 1 }
    }

    /// Pushes a derived node after checking its output is finite.
    fn derived(
        &self,
        name: &'static str,
        shape: Vec<usize>,
        value: Vec<f64>,
        inputs: &[NodeId],
        op: Op,
    ) -> Result<Tensor<'_>> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|&i| nodes[i].requires_grad)
        };
        Ok(self.push(shape, value, requires_grad, op))
    }

    fn backward_from(&self, root: NodeId) -> Result<()> {
        let nodes = self.nodes.borrow();
        if nodes[root].value.len() != 1 {
            return Err(Error::NonScalarLoss(nodes[root].shape.clone()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root + 1];
        adj[root] = Some(vec![1.0]);
        let mut leaf_grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];

        for id in (0..=root).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let needs = |i: NodeId| nodes[i].requires_grad;
            match &node.op {
                Op::Leaf => leaf_grads[id] = Some(g),
                &Op::MatMul { a, b, m, k, n } => {
                    let av = &nodes[a].value;
                    let bv = &nodes[b].value;
                    if needs(a) {
                        let mut ga = vec![0.0; m * k];
                        for i in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g[i * n + j] * bv[p * n + j];
                                }
                                ga[i * k + p] = s;
                            }
                        }
                        accumulate(&mut adj, a, ga);
                    }
                    if needs(b) {
                        let mut gb = vec![0.0; k * n];
                        for i in 0..m {
                            for p in 0..k {
                                let aip = av[i * k + p];
                                for j in 0..n {
                                    gb[p * n + j] += aip * g[i * n + j];
                                }
                            }
                        }
                        accumulate(&mut adj, b, gb);
                    }
                }
                &Op::AddRow { x, bias, n } => {
                    if needs(bias) {
                        let mut gb = vec![0.0; n];
                        for row in g.chunks(n) {
                            for (acc, &v) in gb.iter_mut().zip(row) {
                                *acc += v;
                            }
                        }
                        accumulate(&mut adj, bias, gb);
                    }
                    if needs(x) {
                        accumulate(&mut adj, x, g);
                    }
                }
                &Op::Add { a, b } => {
                    if needs(a) {
                        accumulate(&mut adj, a, g.clone());
                    }
                    if needs(b) {
                        accumulate(&mut adj, b, g);
                    }
                }
                &Op::Mul { a, b } => {
                    if needs(a) {
                        let ga = g.iter().zip(&nodes[b].value).map(|(g, v)| g * v).collect();
                        accumulate(&mut adj, a, ga);
                    }
                    if needs(b) {
                        let gb = g.iter().zip(&nodes[a].value).map(|(g, v)| g * v).collect();
                        accumulate(&mut adj, b, gb);
                    }
                }
                Op::AddN(inputs) => {
                    for &i in inputs {
                        if needs(i) {
                            accumulate(&mut adj, i, g.clone());
                        }
                    }
                }
                &Op::Scale { x, factor } => {
                    accumulate(&mut adj, x, g.iter().map(|v| v * factor).collect());
                }
                &Op::AddScalar { x } => accumulate(&mut adj, x, g),
                &Op::Relu { x } => {
                    let gx = g.iter().zip(&node.value).map(|(&g, &y)| if y > 0.0 { g } else { 0.0 }).collect();
                    accumulate(&mut adj, x, gx);
                }
                &Op::Sum { x } => {
                    accumulate(&mut adj, x, vec![g[0]; nodes[x].value.len()]);
                }
                Op::Take { x, indices } => {
                    let mut gx = vec![0.0; nodes[*x].value.len()];
                    for (&idx, &v) in indices.iter().zip(&g) {
                        gx[idx] += v;
                    }
                    accumulate(&mut adj, *x, gx);
                }
                Op::SoftmaxMasked { x, mask, tau } => {
                    let y = &node.value;
                    let dot: f64 = y.iter().zip(&g).map(|(y, g)| y * g).sum();
                    let gx = y
                        .iter()
                        .zip(&g)
                        .zip(mask)
                        .map(|((&y, &g), &m)| if m { y * (g - dot) / tau } else { 0.0 })
                        .collect();
                    accumulate(&mut adj, *x, gx);
                }
                Op::LogSoftmaxMasked { x, mask, tau } => {
                    let total: f64 = g.iter().zip(mask).filter(|(_, &m)| m).map(|(g, _)| g).sum();
                    let gx = node
                        .value
                        .iter()
                        .zip(&g)
                        .zip(mask)
                        .map(|((&ly, &g), &m)| if m { (g - ly.exp() * total) / tau } else { 0.0 })
                        .collect();
                    accumulate(&mut adj, *x, gx);
                }
                Op::KlDiv { log_q, target_log_p, mask } => {
                    let gq =
                        target_log_p.iter().zip(mask).map(|(&lp, &m)| if m { -lp.exp() * g[0] } else { 0.0 }).collect();
                    accumulate(&mut adj, *log_q, gq);
                }
            }
        }

        drop(nodes);
        let nodes = self.nodes.borrow();
        let mut grads = self.grads.borrow_mut();
        grads.clear();
        grads.extend(nodes.iter().enumerate().map(|(id, node)| {
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                Some(leaf_grads[id].take().unwrap_or_else(|| vec![0.0; node.value.len()]))
            } else {
                None
            }
        }));
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], id: NodeId, g: Vec<f64>) {
    match &mut adj[id] {
        Some(existing) => {
            for (e, v) in existing.iter_mut().zip(g) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Tensor<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl fmt::Debug for Tensor<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes = self.tape.nodes.borrow();
        let node = &nodes[self.id];
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("shape", &node.shape)
            .field("requires_grad", &node.requires_grad)
            .finish()
    }
}

impl<'t> Tensor<'t> {
    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.len()
    }

    pub fn value(&self) -> Vec<f64> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        let nodes = self.tape.nodes.borrow();
        let v = &nodes[self.id].value;
        assert_eq!(v.len(), 1, "item() on tensor with {} elements", v.len());
        v[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Gradient from the most recent [`backward`](Self::backward), for leaves
    /// that require grad.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.tape.grads.borrow().get(self.id).cloned().flatten()
    }

    /// Populates the gradient of every grad-requiring leaf with respect to
    /// this scalar.
    pub fn backward(&self) -> Result<()> {
        self.tape.backward_from(self.id)
    }

    fn same_tape(&self, other: &Tensor<'_>, op: &'static str) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { op, detail: "operands live on different tapes".into() })
        }
    }

    pub fn matmul(self, rhs: Tensor<'t>) -> Result<Tensor<'t>> {
        self.same_tape(&rhs, "matmul")?;
        let (ls, rs) = (self.shape(), rhs.shape());
        if ls.len() != 2 || rs.len() != 2 || ls[1] != rs[0] {
            return Err(Error::ShapeMismatch { op: "matmul", detail: format!("{ls:?} x {rs:?}") });
        }
        let (m, k, n) = (ls[0], ls[1], rs[1]);
        let value = {
            let nodes = self.tape.nodes.borrow();
            kernels::matmul(&nodes[self.id].value, &nodes[rhs.id].value, m, k, n)
        };
        self.tape.derived(
            "matmul",
            vec![m, n],
            value,
            &[self.id, rhs.id],
            Op::MatMul { a: self.id, b: rhs.id, m, k, n },
        )
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_row(self, bias: Tensor<'t>) -> Result<Tensor<'t>> {
        self.same_tape(&bias, "add_row")?;
        let (xs, bs) = (self.shape(), bias.shape());
        if xs.len() != 2 || bs.len() != 1 || xs[1] != bs[0] {
            return Err(Error::ShapeMismatch { op: "add_row", detail: format!("{xs:?} + {bs:?}") });
        }
        let n = bs[0];
        let value = {
            let nodes = self.tape.nodes.borrow();
            let b = &nodes[bias.id].value;
            nodes[self.id].value.chunks(n).flat_map(|row| row.iter().zip(b).map(|(x, b)| x + b)).collect()
        };
        self.tape.derived("add_row", xs, value, &[self.id, bias.id], Op::AddRow { x: self.id, bias: bias.id, n })
    }

    fn elementwise(self, rhs: Tensor<'t>, name: &'static str, f: fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        self.same_tape(&rhs, name)?;
        let (ls, rs) = (self.shape(), rhs.shape());
        if ls != rs {
            return Err(Error::ShapeMismatch { op: name, detail: format!("{ls:?} vs {rs:?}") });
        }
        let nodes = self.tape.nodes.borrow();
        Ok(nodes[self.id].value.iter().zip(&nodes[rhs.id].value).map(|(&a, &b)| f(a, b)).collect())
    }

    // fallible on shape mismatch, so not the operator traits
    #[allow(clippy::should_implement_trait)]
    pub fn add(self, rhs: Tensor<'t>) -> Result<Tensor<'t>> {
        let value = self.elementwise(rhs, "add", |a, b| a + b)?;
        self.tape.derived("add", self.shape(), value, &[self.id, rhs.id], Op::Add { a: self.id, b: rhs.id })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, rhs: Tensor<'t>) -> Result<Tensor<'t>> {
        let value = self.elementwise(rhs, "mul", |a, b| a * b)?;
        self.tape.derived("mul", self.shape(), value, &[self.id, rhs.id], Op::Mul { a: self.id, b: rhs.id })
    }

    pub fn scale(self, factor: f64) -> Result<Tensor<'t>> {
        let value = self.value().into_iter().map(|v| v * factor).collect();
        self.tape.derived("scale", self.shape(), value, &[self.id], Op::Scale { x: self.id, factor })
    }

    pub fn add_scalar(self, c: f64) -> Result<Tensor<'t>> {
        let value = self.value().into_iter().map(|v| v + c).collect();
        self.tape.derived("add_scalar", self.shape(), value, &[self.id], Op::AddScalar { x: self.id })
    }

    pub fn relu(self) -> Result<Tensor<'t>> {
        let value = self.value().into_iter().map(|v| v.max(0.0)).collect();
        self.tape.derived("relu", self.shape(), value, &[self.id], Op::Relu { x: self.id })
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(self) -> Result<Tensor<'t>> {
        let value = vec![self.value().iter().sum()];
        self.tape.derived("sum", vec![], value, &[self.id], Op::Sum { x: self.id })
    }

    pub fn mean(self) -> Result<Tensor<'t>> {
        let n = self.numel();
        if n == 0 {
            return Err(Error::ShapeMismatch { op: "mean", detail: "empty tensor".into() });
        }
        self.sum()?.scale(1.0 / n as f64)
    }

    /// Gathers elements by flat index into a new 1-D tensor.
    pub fn take(self, indices: &[usize]) -> Result<Tensor<'t>> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let src = &nodes[self.id].value;
            indices
                .iter()
                .map(|&i| src.get(i).copied().ok_or(Error::IndexOutOfBounds { index: i, len: src.len() }))
                .collect::<Result<Vec<_>>>()?
        };
        self.tape.derived(
            "take",
            vec![indices.len()],
            value,
            &[self.id],
            Op::Take { x: self.id, indices: indices.to_vec() },
        )
    }

    /// Row `r` of a 2-D tensor.
    pub fn row(self, r: usize) -> Result<Tensor<'t>> {
        let shape = self.shape();
        if shape.len() != 2 || r >= shape[0] {
            return Err(Error::ShapeMismatch { op: "row", detail: format!("row {r} of {shape:?}") });
        }
        let cols = shape[1];
        let idx: Vec<usize> = (r * cols..(r + 1) * cols).collect();
        self.take(&idx)
    }

    fn require_vector(&self, op: &'static str) -> Result<()> {
        let shape = self.shape();
        if shape.len() != 1 {
            return Err(Error::ShapeMismatch { op, detail: format!("expected 1-D, got {shape:?}") });
        }
        Ok(())
    }

    /// Temperature softmax normalised over the masked entries only; unmasked
    /// entries are exactly zero.
    pub fn softmax_masked(self, mask: &[bool], tau: f64) -> Result<Tensor<'t>> {
        self.require_vector("softmax_masked")?;
        let value = kernels::softmax_masked(&self.value(), mask, tau)?;
        self.tape.derived(
            "softmax_masked",
            self.shape(),
            value,
            &[self.id],
            Op::SoftmaxMasked { x: self.id, mask: mask.to_vec(), tau },
        )
    }

    /// Log-domain counterpart of [`softmax_masked`](Self::softmax_masked).
    /// Unmasked entries hold a `0.0` placeholder.
    pub fn log_softmax_masked(self, mask: &[bool], tau: f64) -> Result<Tensor<'t>> {
        self.require_vector("log_softmax_masked")?;
        let value = kernels::log_softmax_masked(&self.value(), mask, tau)?;
        self.tape.derived(
            "log_softmax_masked",
            self.shape(),
            value,
            &[self.id],
            Op::LogSoftmaxMasked { x: self.id, mask: mask.to_vec(), tau },
        )
    }

    /// `KL(p ‖ q)` over the masked entries, where `self` holds `log q` and
    /// `target_log_p` is a constant `log p`.
    pub fn kl_div(self, target_log_p: &[f64], mask: &[bool]) -> Result<Tensor<'t>> {
        self.require_vector("kl_div")?;
        let n = self.numel();
        if target_log_p.len() != n || mask.len() != n {
            return Err(Error::ShapeMismatch {
                op: "kl_div",
                detail: format!("target {} / mask {} vs input {n}", target_log_p.len(), mask.len()),
            });
        }
        let value = vec![kernels::kl_from_logs(target_log_p, &self.value(), mask)];
        self.tape.derived(
            "kl_div",
            vec![],
            value,
            &[self.id],
            Op::KlDiv { log_q: self.id, target_log_p: target_log_p.to_vec(), mask: mask.to_vec() },
        )
    }
}

/// Element-wise sum of same-shaped tensors, evaluated left to right.
pub fn add_n<'t>(terms: &[Tensor<'t>]) -> Result<Tensor<'t>> {
    let first = terms.first().ok_or_else(|| Error::ShapeMismatch { op: "add_n", detail: "no operands".into() })?;
    let shape = first.shape();
    let mut value = first.value();
    for t in &terms[1..] {
        first.same_tape(t, "add_n")?;
        if t.shape() != shape {
            return Err(Error::ShapeMismatch { op: "add_n", detail: format!("{shape:?} vs {:?}", t.shape()) });
        }
        for (acc, v) in value.iter_mut().zip(t.value()) {
            *acc += v;
        }
    }
    let ids: Vec<NodeId> = terms.iter().map(|t| t.id).collect();
    first.tape.derived("add_n", shape, value, &ids, Op::AddN(ids.clone()))
}
