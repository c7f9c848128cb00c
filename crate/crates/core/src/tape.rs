//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each operation appends a
//! node holding its value plus whatever it needs for the backward sweep, so
//! nodes are always in topological order. [`Tape::backward`] walks the nodes
//! in reverse and accumulates gradients into the leaves that require them.
//!
//! ```
//! use smn_core::{Tape, ValueGrid};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(ValueGrid::from_rows(&[&[1.0, 2.0]]));
//! let x = tape.constant(ValueGrid::column(&[3.0, 4.0]));
//! let y = tape.matmul(w, x).unwrap();
//! let loss = tape.sum(y);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(w).data(), &[3.0, 4.0]);
//! ```

use crate::error::TensorError;
use crate::kernels;
use crate::tensor::ValueGrid;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Selector for [`Tape::ewise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Mul,
    Sin,
    Square,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    AddBias { x: NodeId, bias: NodeId },
    Affine { w: NodeId, x: NodeId, bias: NodeId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Sin { x: NodeId, freq: f64, cos: ValueGrid },
    Square { x: NodeId },
    Relu { x: NodeId },
    Gauss { x: NodeId, scale: f64 },
    ScaleBy { x: NodeId, factor: NodeId },
    SineMixture {
        v: NodeId,
        amps: NodeId,
        freqs: Vec<f64>,
        sines: Vec<ValueGrid>,
        cosines: Vec<ValueGrid>,
    },
    Sum { x: NodeId },
    Mean { x: NodeId },
    Mse { pred: NodeId, target: NodeId, count: f64 },
}

#[derive(Debug)]
struct Node {
    value: ValueGrid,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &ValueGrid, b: &ValueGrid) -> TensorError {
    TensorError::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
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

    pub fn value(&self, id: NodeId) -> &ValueGrid {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: ValueGrid, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: ValueGrid) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: ValueGrid) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul", av, bv));
        }
        let mut out = ValueGrid::zeros(av.rows(), bv.cols());
        kernels::gemm(av, false, bv, false, &mut out, 0.0);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul { a, b }, rg))
    }

    /// `x + bias`, with the `rows x 1` bias broadcast across columns.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, TensorError> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.shape() != (xv.rows(), 1) {
            return Err(shape_err("add_bias", xv, bv));
        }
        let mut out = xv.clone();
        broadcast_add(&mut out, bv);
        let rg = self.rg(&[x, bias]);
        Ok(self.push(out, Op::AddBias { x, bias }, rg))
    }

    /// Fused `w * x + bias`.
    pub fn affine(&mut self, w: NodeId, x: NodeId, bias: NodeId) -> Result<NodeId, TensorError> {
        let (wv, xv, bv) = (self.value(w), self.value(x), self.value(bias));
        if wv.cols() != xv.rows() {
            return Err(shape_err("affine", wv, xv));
        }
        if bv.shape() != (wv.rows(), 1) {
            return Err(shape_err("affine bias", wv, bv));
        }
        let mut out = ValueGrid::zeros(wv.rows(), xv.cols());
        broadcast_add(&mut out, bv);
        kernels::gemm(wv, false, xv, false, &mut out, 1.0);
        let rg = self.rg(&[w, x, bias]);
        Ok(self.push(out, Op::Affine { w, x, bias }, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        av.same_shape(bv, "add")?;
        let mut out = av.clone();
        out.add_assign(bv);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        av.same_shape(bv, "mul")?;
        let mut out = av.clone();
        for (o, v) in out.data_mut().iter_mut().zip(bv.data()) {
            *o *= v;
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul { a, b }, rg))
    }

    pub fn sin(&mut self, x: NodeId) -> NodeId {
        self.sin_scaled(x, 1.0)
    }

    /// `sin(freq * x)` with a fixed (non-learnable) frequency.
    pub fn sin_scaled(&mut self, x: NodeId, freq: f64) -> NodeId {
        let xv = self.value(x);
        let mut out = ValueGrid::zeros(xv.rows(), xv.cols());
        let mut cos = ValueGrid::zeros(xv.rows(), xv.cols());
        kernels::sin_cos_scaled(xv.data(), freq, out.data_mut(), cos.data_mut());
        let rg = self.rg(&[x]);
        self.push(out, Op::Sin { x, freq, cos }, rg)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(|v| v * v);
        let rg = self.rg(&[x]);
        self.push(out, Op::Square { x }, rg)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(&[x]);
        self.push(out, Op::Relu { x }, rg)
    }

    /// `exp(-(scale * x)^2)`.
    pub fn gauss(&mut self, x: NodeId, scale: f64) -> NodeId {
        let out = self.value(x).map(|v| (-(scale * v) * (scale * v)).exp());
        let rg = self.rg(&[x]);
        self.push(out, Op::Gauss { x, scale }, rg)
    }

    /// `factor * x` for a 1x1 node `factor`.
    pub fn scale_by(&mut self, x: NodeId, factor: NodeId) -> Result<NodeId, TensorError> {
        let (xv, fv) = (self.value(x), self.value(factor));
        if fv.shape() != (1, 1) {
            return Err(shape_err("scale_by", xv, fv));
        }
        let f = fv.item();
        let out = xv.map(|v| f * v);
        let rg = self.rg(&[x, factor]);
        Ok(self.push(out, Op::ScaleBy { x, factor }, rg))
    }

    /// `sum_i amps[i] * sin(freqs[i] * v)`, elementwise in `v`.
    ///
    /// `amps` is a `K x 1` node; the frequencies are fixed.
    pub fn sine_mixture(&mut self, v: NodeId, amps: NodeId, freqs: &[f64]) -> Result<NodeId, TensorError> {
        let (vv, av) = (self.value(v), self.value(amps));
        if av.shape() != (freqs.len(), 1) || freqs.is_empty() {
            return Err(TensorError::Shape {
                op: "sine_mixture",
                left: av.shape(),
                right: (freqs.len(), 1),
            });
        }
        let mut out = ValueGrid::zeros(vv.rows(), vv.cols());
        let mut sines = Vec::with_capacity(freqs.len());
        let mut cosines = Vec::with_capacity(freqs.len());
        for (i, &freq) in freqs.iter().enumerate() {
            let mut s = ValueGrid::zeros(vv.rows(), vv.cols());
            let mut c = ValueGrid::zeros(vv.rows(), vv.cols());
            kernels::sin_cos_scaled(vv.data(), freq, s.data_mut(), c.data_mut());
            out.axpy(av.get(i, 0), &s);
            sines.push(s);
            cosines.push(c);
        }
        let rg = self.rg(&[v, amps]);
        Ok(self.push(
            out,
            Op::SineMixture {
                v,
                amps,
                freqs: freqs.to_vec(),
                sines,
                cosines,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let out = ValueGrid::scalar(self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(out, Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let out = ValueGrid::scalar(xv.sum() / xv.len() as f64);
        let rg = self.rg(&[x]);
        self.push(out, Op::Mean { x }, rg)
    }

    /// Mean over columns (samples) of the squared l2 norm of each column of
    /// `pred - target`.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId, TensorError> {
        let n = self.value(pred).cols().max(1);
        self.mse_over(pred, target, n)
    }

    /// Like [`Tape::mse`] but divides by `count` instead of the column count,
    /// so losses over column chunks of one batch sum to the full-batch loss.
    pub fn mse_over(&mut self, pred: NodeId, target: NodeId, count: usize) -> Result<NodeId, TensorError> {
        let (pv, tv) = (self.value(pred), self.value(target));
        pv.same_shape(tv, "mse")?;
        let count = count.max(1) as f64;
        let total: f64 = pv
            .data()
            .iter()
            .zip(tv.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let rg = self.rg(&[pred, target]);
        Ok(self.push(ValueGrid::scalar(total / count), Op::Mse { pred, target, count }, rg))
    }

    /// Dispatches one of the named elementwise primitives.
    pub fn ewise(&mut self, op: Elementwise, args: &[NodeId]) -> Result<NodeId, TensorError> {
        match (op, args) {
            (Elementwise::Add, &[a, b]) => self.add(a, b),
            (Elementwise::Mul, &[a, b]) => self.mul(a, b),
            (Elementwise::Sin, &[x]) => Ok(self.sin(x)),
            (Elementwise::Square, &[x]) => Ok(self.square(x)),
            _ => Err(TensorError::Shape {
                op: "ewise arity",
                left: (args.len(), 0),
                right: (if matches!(op, Elementwise::Add | Elementwise::Mul) { 2 } else { 1 }, 0),
            }),
        }
    }

    /// Reverse sweep from a scalar node.
    ///
    /// Gradients are retained for leaves only; leaves the loss does not
    /// depend on report zeros through [`Gradients::wrt`].
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, TensorError> {
        let node = self.nodes.get(loss.0).ok_or(TensorError::UnknownNode(loss.0))?;
        let (rows, cols) = node.value.shape();
        if (rows, cols) != (1, 1) {
            return Err(TensorError::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<ValueGrid>> = (0..self.nodes.len()).map(|_| None).collect();
        if node.requires_grad {
            grads[loss.0] = Some(ValueGrid::scalar(1.0));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &ValueGrid, grads: &mut [Option<ValueGrid>]) {
        let val = |id: NodeId| &self.nodes[id.0].value;
        let wants = |id: NodeId| self.nodes[id.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                if wants(*a) {
                    let (slot, beta) = slot_for(grads, *a, val(*a).shape());
                    kernels::gemm(g, false, val(*b), true, slot, beta);
                }
                if wants(*b) {
                    let (slot, beta) = slot_for(grads, *b, val(*b).shape());
                    kernels::gemm(val(*a), true, g, false, slot, beta);
                }
            }
            Op::AddBias { x, bias } => {
                if wants(*bias) {
                    accumulate(grads, *bias, row_sums(g));
                }
                if wants(*x) {
                    accumulate(grads, *x, g.clone());
                }
            }
            Op::Affine { w, x, bias } => {
                if wants(*bias) {
                    accumulate(grads, *bias, row_sums(g));
                }
                if wants(*w) {
                    let (slot, beta) = slot_for(grads, *w, val(*w).shape());
                    kernels::gemm(g, false, val(*x), true, slot, beta);
                }
                if wants(*x) {
                    let (slot, beta) = slot_for(grads, *x, val(*x).shape());
                    kernels::gemm(val(*w), true, g, false, slot, beta);
                }
            }
            Op::Add { a, b } => {
                if wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if wants(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Mul { a, b } => {
                if wants(*a) {
                    accumulate(grads, *a, hadamard(g, val(*b)));
                }
                if wants(*b) {
                    accumulate(grads, *b, hadamard(g, val(*a)));
                }
            }
            Op::Sin { x, freq, cos } => {
                if wants(*x) {
                    let f = *freq;
                    let mut d = hadamard(g, cos);
                    if f != 1.0 {
                        d.scale_in_place(f);
                    }
                    accumulate(grads, *x, d);
                }
            }
            Op::Square { x } => {
                if wants(*x) {
                    let mut d = hadamard(g, val(*x));
                    d.scale_in_place(2.0);
                    accumulate(grads, *x, d);
                }
            }
            Op::Relu { x } => {
                if wants(*x) {
                    let xv = val(*x);
                    let mut d = g.clone();
                    for (o, &v) in d.data_mut().iter_mut().zip(xv.data()) {
                        if v <= 0.0 {
                            *o = 0.0;
                        }
                    }
                    accumulate(grads, *x, d);
                }
            }
            Op::Gauss { x, scale } => {
                if wants(*x) {
                    let s2 = scale * scale;
                    let xv = val(*x);
                    let mut d = g.clone();
                    for ((o, &xi), &yi) in d.data_mut().iter_mut().zip(xv.data()).zip(node.value.data()) {
                        *o *= -2.0 * s2 * xi * yi;
                    }
                    accumulate(grads, *x, d);
                }
            }
            Op::ScaleBy { x, factor } => {
                if wants(*factor) {
                    let dot: f64 = g.data().iter().zip(val(*x).data()).map(|(a, b)| a * b).sum();
                    accumulate(grads, *factor, ValueGrid::scalar(dot));
                }
                if wants(*x) {
                    let f = val(*factor).item();
                    accumulate(grads, *x, g.map(|v| v * f));
                }
            }
            Op::SineMixture {
                v,
                amps,
                freqs,
                sines,
                cosines,
            } => {
                let av = val(*amps);
                if wants(*amps) {
                    let da: Vec<f64> = sines
                        .iter()
                        .map(|s| g.data().iter().zip(s.data()).map(|(a, b)| a * b).sum())
                        .collect();
                    accumulate(grads, *amps, ValueGrid::column(&da));
                }
                if wants(*v) {
                    let mut d = ValueGrid::zeros(g.rows(), g.cols());
                    for (i, c) in cosines.iter().enumerate() {
                        d.axpy(av.get(i, 0) * freqs[i], c);
                    }
                    for (o, gi) in d.data_mut().iter_mut().zip(g.data()) {
                        *o *= gi;
                    }
                    accumulate(grads, *v, d);
                }
            }
            Op::Sum { x } => {
                if wants(*x) {
                    let (r, c) = val(*x).shape();
                    accumulate(grads, *x, ValueGrid::filled(r, c, g.item()));
                }
            }
            Op::Mean { x } => {
                if wants(*x) {
                    let xv = val(*x);
                    let (r, c) = xv.shape();
                    accumulate(grads, *x, ValueGrid::filled(r, c, g.item() / xv.len() as f64));
                }
            }
            Op::Mse { pred, target, count } => {
                let (pv, tv) = (val(*pred), val(*target));
                let k = 2.0 * g.item() / count;
                let mut d = pv.clone();
                for (o, t) in d.data_mut().iter_mut().zip(tv.data()) {
                    *o = k * (*o - t);
                }
                if wants(*target) {
                    accumulate(grads, *target, d.map(|v| -v));
                }
                if wants(*pred) {
                    accumulate(grads, *pred, d);
                }
            }
        }
    }
}

fn broadcast_add(out: &mut ValueGrid, bias: &ValueGrid) {
    let cols = out.cols();
    for (r, row) in out.data_mut().chunks_mut(cols.max(1)).enumerate() {
        let b = bias.get(r, 0);
        for v in row {
            *v += b;
        }
    }
}

fn row_sums(g: &ValueGrid) -> ValueGrid {
    let sums: Vec<f64> = (0..g.rows()).map(|r| g.row(r).iter().sum()).collect();
    ValueGrid::column(&sums)
}

fn hadamard(a: &ValueGrid, b: &ValueGrid) -> ValueGrid {
    let mut out = a.clone();
    for (o, v) in out.data_mut().iter_mut().zip(b.data()) {
        *o *= v;
    }
    out
}

fn accumulate(grads: &mut [Option<ValueGrid>], id: NodeId, contribution: ValueGrid) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&contribution),
        slot @ None => *slot = Some(contribution),
    }
}

/// Gradient slot for `id` plus the GEMM `beta` that accumulates into it.
fn slot_for(grads: &mut [Option<ValueGrid>], id: NodeId, shape: (usize, usize)) -> (&mut ValueGrid, f64) {
    let slot = &mut grads[id.0];
    let beta = if slot.is_some() { 1.0 } else { 0.0 };
    (slot.get_or_insert_with(|| ValueGrid::zeros(shape.0, shape.1)), beta)
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<ValueGrid>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// The accumulated gradient, if any path reached `id`.
    pub fn get(&self, id: NodeId) -> Option<&ValueGrid> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// The gradient of `id`, zero-filled when no path reached it.
    pub fn wrt(&self, id: NodeId) -> ValueGrid {
        match self.get(id) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[id.0];
                ValueGrid::zeros(r, c)
            }
        }
    }

    /// Moves the gradient out, zero-filled when absent.
    pub fn take(&mut self, id: NodeId) -> ValueGrid {
        match self.grads[id.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[id.0];
                ValueGrid::zeros(r, c)
            }
        }
    }
}
