//! Reverse-mode tape.
//!
//! Every operation appends a node holding its output value and enough
//! information to push an output gradient back to its inputs. Nodes are only
//! ever appended, so the tape is topologically ordered by construction and a
//! single reverse sweep visits each node once.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{dims2, validate_shape, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

/// The primitive operations the tape understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    MatMul,
    Add,
    Mul,
    Sigmoid,
    Tanh,
    Relu,
    Concat,
    Slice { start: usize, end: usize },
    Sum,
    Mean,
    SoftmaxRows,
    Log,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    /// `a[m,n] + b[1,n]` with `b` broadcast over rows.
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    /// Column-wise concatenation.
    Concat(Vec<usize>),
    /// Column range `[start, end)`.
    Slice(usize, usize, usize),
    Sum(usize),
    Mean(usize),
    SoftmaxRows(usize),
    Log(usize),
    ClampMin(usize, f64),
    /// One column per row, picked by index.
    SelectCols(usize, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    requires_grad: bool,
    name: Option<String>,
    op: Op,
}

/// Single-owner record of a computation.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    no_grad: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            no_grad: false,
        }
    }

    /// A tape on which nothing requires grad, for pure evaluation.
    pub fn no_grad() -> Self {
        Tape {
            no_grad: true,
            ..Tape::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. It participates in differentiation iff the tensor
    /// requires grad.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        self.push_leaf(tensor, None)
    }

    /// Records a named leaf. Named leaves that require grad appear in
    /// [`Gradients::named`].
    pub fn param(&mut self, name: &str, tensor: &Tensor) -> Var {
        self.push_leaf(tensor, Some(name.to_string()))
    }

    /// Records a constant that never receives a gradient.
    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        validate_shape(&shape)?;
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::Dimension(format!(
                "constant of shape {shape:?} given {} values",
                values.len()
            )));
        }
        check_finite("constant", &values)?;
        Ok(self.push(shape, values, false, Op::Leaf))
    }

    fn push_leaf(&mut self, tensor: &Tensor, name: Option<String>) -> Var {
        let var = self.push(
            tensor.shape().to_vec(),
            tensor.values().to_vec(),
            tensor.requires_grad() && !self.no_grad,
            Op::Leaf,
        );
        self.nodes[var.index].name = name;
        var
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            shape,
            values,
            requires_grad,
            name: None,
            op,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn node(&self, v: Var) -> Result<&Node> {
        if v.tape != self.id {
            return Err(Error::Contract(
                "variable belongs to a different (detached) tape".into(),
            ));
        }
        self.nodes
            .get(v.index)
            .ok_or_else(|| Error::Contract("variable index outside tape".into()))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).expect("foreign variable").values
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).expect("foreign variable").shape
    }

    /// Copies a recorded value out as a detached tensor.
    pub fn tensor(&self, v: Var) -> Result<Tensor> {
        let n = self.node(v)?;
        Tensor::new(n.shape.clone(), n.values.clone())
    }

    fn any_grad(&self, inputs: &[usize]) -> bool {
        inputs.iter().any(|&i| self.nodes[i].requires_grad)
    }

    fn emit(&mut self, what: &str, shape: Vec<usize>, values: Vec<f64>, op: Op) -> Result<Var> {
        check_finite(what, &values)?;
        let inputs = op_inputs(&op);
        let rg = self.any_grad(&inputs);
        Ok(self.push(shape, values, rg, op))
    }

    /// Generic entry point dispatching on [`OpKind`].
    pub fn forward_op(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        let arity = |n: usize| -> Result<()> {
            if inputs.len() != n {
                return Err(Error::Contract(format!(
                    "{kind:?} takes {n} inputs, got {}",
                    inputs.len()
                )));
            }
            Ok(())
        };
        match kind {
            OpKind::MatMul => {
                arity(2)?;
                self.matmul(inputs[0], inputs[1])
            }
            OpKind::Add => {
                arity(2)?;
                self.add(inputs[0], inputs[1])
            }
            OpKind::Mul => {
                arity(2)?;
                self.mul(inputs[0], inputs[1])
            }
            OpKind::Sigmoid => {
                arity(1)?;
                self.sigmoid(inputs[0])
            }
            OpKind::Tanh => {
                arity(1)?;
                self.tanh(inputs[0])
            }
            OpKind::Relu => {
                arity(1)?;
                self.relu(inputs[0])
            }
            OpKind::Concat => self.concat(inputs),
            OpKind::Slice { start, end } => {
                arity(1)?;
                self.slice(inputs[0], start, end)
            }
            OpKind::Sum => {
                arity(1)?;
                self.sum(inputs[0])
            }
            OpKind::Mean => {
                arity(1)?;
                self.mean(inputs[0])
            }
            OpKind::SoftmaxRows => {
                arity(1)?;
                self.softmax_rows(inputs[0])
            }
            OpKind::Log => {
                arity(1)?;
                self.log(inputs[0])
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a)?, self.node(b)?);
        let (m, k) = dims2(&na.shape)?;
        let (k2, n) = dims2(&nb.shape)?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner dims differ: {:?} x {:?}",
                na.shape, nb.shape
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &na.values, false, &nb.values, false, &mut out, 0.0);
        self.emit("matmul", vec![m, n], out, Op::MatMul(a.index, b.index))
    }

    /// Elementwise sum. A `[1, n]` (or `[n]`) right operand broadcasts over
    /// the rows of an `[m, n]` left operand.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a)?, self.node(b)?);
        if na.shape == nb.shape {
            let out = zip(&na.values, &nb.values, |x, y| x + y);
            let shape = na.shape.clone();
            return self.emit("add", shape, out, Op::Add(a.index, b.index));
        }
        let (m, n) = dims2(&na.shape)?;
        let (r, c) = dims2(&nb.shape)?;
        if r != 1 || c != n {
            return Err(Error::Dimension(format!(
                "add shapes do not broadcast: {:?} + {:?}",
                na.shape, nb.shape
            )));
        }
        let mut out = na.values.clone();
        for row in out.chunks_exact_mut(n) {
            for (o, bv) in row.iter_mut().zip(&nb.values) {
                *o += bv;
            }
        }
        let shape = vec![m, n];
        self.emit("add", shape, out, Op::AddRow(a.index, b.index))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a)?, self.node(b)?);
        same_shape("sub", &na.shape, &nb.shape)?;
        let out = zip(&na.values, &nb.values, |x, y| x - y);
        let shape = na.shape.clone();
        self.emit("sub", shape, out, Op::Sub(a.index, b.index))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a)?, self.node(b)?);
        same_shape("mul", &na.shape, &nb.shape)?;
        let out = zip(&na.values, &nb.values, |x, y| x * y);
        let shape = na.shape.clone();
        self.emit("mul", shape, out, Op::Mul(a.index, b.index))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let na = self.node(a)?;
        let out = na.values.iter().map(|x| x * s).collect();
        let shape = na.shape.clone();
        self.emit("scale", shape, out, Op::Scale(a.index, s))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "sigmoid", sigmoid, Op::Sigmoid(a.index))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "tanh", f64::tanh, Op::Tanh(a.index))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "relu", |x| x.max(0.0), Op::Relu(a.index))
    }

    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Result<Var> {
        self.unary(a, "clamp_min", |x| x.max(lo), Op::ClampMin(a.index, lo))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let na = self.node(a)?;
        if let Some(bad) = na.values.iter().find(|&&x| x <= 0.0) {
            return Err(Error::Domain(format!("log of non-positive value {bad}")));
        }
        self.unary(a, "log", f64::ln, Op::Log(a.index))
    }

    fn unary(&mut self, a: Var, what: &str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let na = self.node(a)?;
        let out = na.values.iter().map(|&x| f(x)).collect();
        let shape = na.shape.clone();
        self.emit(what, shape, out, op)
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat of zero tensors".into()));
        }
        let mut dims = Vec::with_capacity(parts.len());
        for &p in parts {
            dims.push(dims2(&self.node(p)?.shape)?);
        }
        let rows = dims[0].0;
        if dims.iter().any(|&(r, _)| r != rows) {
            return Err(Error::Dimension(format!(
                "concat row counts differ: {dims:?}"
            )));
        }
        let cols: usize = dims.iter().map(|&(_, c)| c).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for (&p, &(_, c)) in parts.iter().zip(&dims) {
                out.extend_from_slice(&self.nodes[p.index].values[r * c..(r + 1) * c]);
            }
        }
        let shape = vec![rows, cols];
        let idx = parts.iter().map(|p| p.index).collect();
        self.emit("concat", shape, out, Op::Concat(idx))
    }

    /// Column range `[start, end)` of a matrix.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let na = self.node(a)?;
        let (rows, cols) = dims2(&na.shape)?;
        if start >= end || end > cols {
            return Err(Error::Dimension(format!(
                "slice [{start}, {end}) outside {cols} columns"
            )));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(rows * w);
        for r in 0..rows {
            out.extend_from_slice(&na.values[r * cols + start..r * cols + end]);
        }
        self.emit("slice", vec![rows, w], out, Op::Slice(a.index, start, end))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.node(a)?.values.iter().sum();
        self.emit("sum", vec![1], vec![s], Op::Sum(a.index))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let na = self.node(a)?;
        let s = na.values.iter().sum::<f64>() / na.values.len() as f64;
        self.emit("mean", vec![1], vec![s], Op::Mean(a.index))
    }

    /// Row-wise softmax, stabilised by subtracting the row max.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let na = self.node(a)?;
        let (rows, cols) = dims2(&na.shape)?;
        let mut out = na.values.clone();
        for row in out.chunks_exact_mut(cols) {
            softmax_in_place(row);
        }
        self.emit("softmax_rows", vec![rows, cols], out, Op::SoftmaxRows(a.index))
    }

    /// Picks `a[r, indices[r]]` for every row, giving an `[rows, 1]` column.
    pub fn select_cols(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let na = self.node(a)?;
        let (rows, cols) = dims2(&na.shape)?;
        if indices.len() != rows {
            return Err(Error::Dimension(format!(
                "select_cols got {} indices for {rows} rows",
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= cols) {
            return Err(Error::Contract(format!(
                "column index {bad} out of range for {cols} columns"
            )));
        }
        let out = indices
            .iter()
            .enumerate()
            .map(|(r, &c)| na.values[r * cols + c])
            .collect();
        self.emit(
            "select_cols",
            vec![rows, 1],
            out,
            Op::SelectCols(a.index, indices.to_vec()),
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = self.node(loss)?;
        if root.values.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.index + 1];
        grads[loss.index] = Some(vec![1.0]);

        for i in (0..=loss.index).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let mut named = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Leaf, Some(name), true) = (&node.op, &node.name, node.requires_grad) {
                let g = grads
                    .get(i)
                    .cloned()
                    .flatten()
                    .unwrap_or_else(|| vec![0.0; node.values.len()]);
                named.push((name.clone(), Tensor::new(node.shape.clone(), g)?));
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
            named,
        })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let v = |j: usize| &self.nodes[j].values;
        let wants = |j: usize| self.nodes[j].requires_grad;
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = dims2(&self.nodes[a].shape).unwrap();
                let n = node.shape[1];
                if wants(a) {
                    // dA = dC . B^T
                    let acc = slot(grads, a, m * k);
                    gemm(m, n, k, g, false, v(b), true, acc, 1.0);
                }
                if wants(b) {
                    // dB = A^T . dC
                    let acc = slot(grads, b, k * n);
                    gemm(k, m, n, v(a), true, g, false, acc, 1.0);
                }
            }
            &Op::Add(a, b) => {
                for j in [a, b] {
                    if wants(j) {
                        axpy(slot(grads, j, g.len()), 1.0, g);
                    }
                }
            }
            &Op::AddRow(a, b) => {
                if wants(a) {
                    axpy(slot(grads, a, g.len()), 1.0, g);
                }
                if wants(b) {
                    let n = v(b).len();
                    let acc = slot(grads, b, n);
                    for row in g.chunks_exact(n) {
                        axpy(acc, 1.0, row);
                    }
                }
            }
            &Op::Sub(a, b) => {
                if wants(a) {
                    axpy(slot(grads, a, g.len()), 1.0, g);
                }
                if wants(b) {
                    axpy(slot(grads, b, g.len()), -1.0, g);
                }
            }
            &Op::Mul(a, b) => {
                if wants(a) {
                    let acc = slot(grads, a, g.len());
                    for ((o, gi), bi) in acc.iter_mut().zip(g).zip(v(b)) {
                        *o += gi * bi;
                    }
                }
                if wants(b) {
                    let acc = slot(grads, b, g.len());
                    for ((o, gi), ai) in acc.iter_mut().zip(g).zip(v(a)) {
                        *o += gi * ai;
                    }
                }
            }
            &Op::Scale(a, s) => {
                if wants(a) {
                    axpy(slot(grads, a, g.len()), s, g);
                }
            }
            &Op::Sigmoid(a) => {
                if wants(a) {
                    let acc = slot(grads, a, g.len());
                    for ((o, gi), y) in acc.iter_mut().zip(g).zip(&node.values) {
                        *o += gi * y * (1.0 - y);
                    }
                }
            }
            &Op::Tanh(a) => {
                if wants(a) {
                    let acc = slot(grads, a, g.len());
                    for ((o, gi), y) in acc.iter_mut().zip(g).zip(&node.values) {
                        *o += gi * (1.0 - y * y);
                    }
                }
            }
            &Op::Relu(a) => {
                if wants(a) {
                    let acc = slot(grads, a, g.len());
                    for ((o, gi), x) in acc.iter_mut().zip(g).zip(v(a)) {
                        if *x > 0.0 {
                            *o += gi;
                        }
                    }
                }
            }
            &Op::ClampMin(a, lo) => {
                if wants(a) {
                    let acc = slot(grads, a, g.len());
                    for ((o, gi), x) in acc.iter_mut().zip(g).zip(v(a)) {
                        if *x >= lo {
                            *o += gi;
                        }
                    }
                }
            }
            &Op::Log(a) => {
                if wants(a) {
                    let acc = slot(grads, a, g.len());
                    for ((o, gi), x) in acc.iter_mut().zip(g).zip(v(a)) {
                        *o += gi / x;
                    }
                }
            }
            Op::Concat(parts) => {
                let rows = node.shape[0];
                let cols = node.shape[1];
                let mut offset = 0;
                for &p in parts {
                    let c = dims2(&self.nodes[p].shape).unwrap().1;
                    if wants(p) {
                        let acc = slot(grads, p, rows * c);
                        for r in 0..rows {
                            axpy(
                                &mut acc[r * c..(r + 1) * c],
                                1.0,
                                &g[r * cols + offset..r * cols + offset + c],
                            );
                        }
                    }
                    offset += c;
                }
            }
            &Op::Slice(a, start, end) => {
                if wants(a) {
                    let (rows, cols) = dims2(&self.nodes[a].shape).unwrap();
                    let w = end - start;
                    let acc = slot(grads, a, rows * cols);
                    for r in 0..rows {
                        axpy(
                            &mut acc[r * cols + start..r * cols + end],
                            1.0,
                            &g[r * w..(r + 1) * w],
                        );
                    }
                }
            }
            &Op::Sum(a) => {
                if wants(a) {
                    let n = v(a).len();
                    slot(grads, a, n).iter_mut().for_each(|o| *o += g[0]);
                }
            }
            &Op::Mean(a) => {
                if wants(a) {
                    let n = v(a).len();
                    let d = g[0] / n as f64;
                    slot(grads, a, n).iter_mut().for_each(|o| *o += d);
                }
            }
            &Op::SoftmaxRows(a) => {
                if wants(a) {
                    let cols = node.shape[1];
                    let acc = slot(grads, a, g.len());
                    for ((o, gr), y) in acc
                        .chunks_exact_mut(cols)
                        .zip(g.chunks_exact(cols))
                        .zip(node.values.chunks_exact(cols))
                    {
                        let dot: f64 = gr.iter().zip(y).map(|(p, q)| p * q).sum();
                        for ((oj, gj), yj) in o.iter_mut().zip(gr).zip(y) {
                            *oj += yj * (gj - dot);
                        }
                    }
                }
            }
            Op::SelectCols(a, indices) => {
                let a = *a;
                if wants(a) {
                    let cols = dims2(&self.nodes[a].shape).unwrap().1;
                    let acc = slot(grads, a, v(a).len());
                    for (r, &c) in indices.iter().enumerate() {
                        acc[r * cols + c] += g[r];
                    }
                }
            }
        }
    }
}

/// Result of a reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
    named: Vec<(String, Tensor)>,
}

impl Gradients {
    /// Gradient with respect to any recorded variable, zero-free `None` when
    /// the variable was unreachable from the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_deref())
    }

    /// Gradients of named trainable leaves, in registration order.
    /// Unreachable parameters carry an all-zero gradient.
    pub fn named(&self) -> &[(String, Tensor)] {
        &self.named
    }

    pub fn into_named(self) -> Vec<(String, Tensor)> {
        self.named
    }
}

fn op_inputs(op: &Op) -> Vec<usize> {
    match op {
        Op::Leaf => vec![],
        &Op::MatMul(a, b) | &Op::Add(a, b) | &Op::AddRow(a, b) | &Op::Sub(a, b) | &Op::Mul(a, b) => {
            vec![a, b]
        }
        &Op::Scale(a, _)
        | &Op::Sigmoid(a)
        | &Op::Tanh(a)
        | &Op::Relu(a)
        | &Op::Slice(a, _, _)
        | &Op::Sum(a)
        | &Op::Mean(a)
        | &Op::SoftmaxRows(a)
        | &Op::Log(a)
        | &Op::ClampMin(a, _) => vec![a],
        Op::SelectCols(a, _) => vec![*a],
        Op::Concat(parts) => parts.clone(),
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], j: usize, n: usize) -> &mut [f64] {
    grads[j].get_or_insert_with(|| vec![0.0; n])
}

fn axpy(acc: &mut [f64], s: f64, x: &[f64]) {
    for (o, xi) in acc.iter_mut().zip(x) {
        *o += s * xi;
    }
}

fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn same_shape(what: &str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{what} shapes differ: {a:?} vs {b:?}")));
    }
    Ok(())
}

fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{what} produced a non-finite value")));
    }
    Ok(())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

/// `c = beta * c + op(a) . op(b)` for row-major operands, where `op(a)` is
/// `m x k` and `op(b)` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: strides describe exactly the slices checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn param(tape: &mut Tape, name: &str, shape: Vec<usize>, values: Vec<f64>) -> Var {
        let t = Tensor::new(shape, values).unwrap().with_grad(true);
        tape.param(name, &t)
    }

    #[test]
    fn softmax_of_uniform_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1, 3], vec![0.0; 3]).unwrap();
        let y = tape.forward_op(OpKind::SoftmaxRows, &[x]).unwrap();
        for &p in tape.value(y) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape
            .constant(vec![2, 4], vec![1.0, -3.0, 700.0, 2.0, 0.1, 0.2, 0.3, -50.0])
            .unwrap();
        let y = tape.softmax_rows(x).unwrap();
        for row in tape.value(y).chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn add_zeros_is_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![2, 2], vec![1.5, -2.0, 3.0, 0.25]).unwrap();
        let z = tape.constant(vec![2, 2], vec![0.0; 4]).unwrap();
        let y = tape.forward_op(OpKind::Add, &[x, z]).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn matmul_by_identity() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let eye = tape.leaf(&Tensor::identity(2).unwrap());
        let c = tape.forward_op(OpKind::MatMul, &[a, eye]).unwrap();
        assert_eq!(tape.value(c), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![2, 3], vec![1.0; 6]).unwrap();
        let b = tape.constant(vec![2, 2], vec![1.0; 4]).unwrap();
        assert!(matches!(tape.matmul(a, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn log_of_non_positive_is_domain_error() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![2], vec![1.0, 0.0]).unwrap();
        assert!(matches!(tape.log(a), Err(Error::Domain(_))));
        let b = tape.constant(vec![1], vec![-2.0]).unwrap();
        assert!(matches!(tape.log(b), Err(Error::Domain(_))));
    }

    #[test]
    fn overflow_is_domain_error() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![1], vec![1e300]).unwrap();
        assert!(matches!(tape.scale(a, 1e300), Err(Error::Domain(_))));
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = param(&mut tape, "x", vec![1], vec![3.0]);
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.named()[0].1.values(), &[6.0]);
    }

    #[test]
    fn unreachable_parameter_gets_zero_grad() {
        let mut tape = Tape::new();
        let x = param(&mut tape, "x", vec![1], vec![2.0]);
        let _p = param(&mut tape, "p", vec![2], vec![1.0, 1.0]);
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        let (name, grad) = &g.named()[1];
        assert_eq!(name, "p");
        assert_eq!(grad.values(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let mut tape = Tape::new();
        let x = param(&mut tape, "x", vec![2], vec![1.0, 2.0]);
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn detached_tape_is_contract_error() {
        let mut a = Tape::new();
        let b = Tape::new();
        let x = param(&mut a, "x", vec![1], vec![1.0]);
        assert!(matches!(b.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn broadcast_bias_gradient_sums_rows() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![3, 2], vec![0.0; 6]).unwrap();
        let b = param(&mut tape, "b", vec![1, 2], vec![0.5, -0.5]);
        let y = tape.add(x, b).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.named()[0].1.values(), &[3.0, 3.0]);
    }

    #[test]
    fn concat_and_slice_round_trip_gradient() {
        let mut tape = Tape::new();
        let a = param(&mut tape, "a", vec![2, 1], vec![1.0, 2.0]);
        let b = param(&mut tape, "b", vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]);
        let c = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.value(c), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let s = tape.slice(c, 1, 2).unwrap();
        assert_eq!(tape.value(s), &[3.0, 5.0]);
        let l = tape.sum(s).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.named()[0].1.values(), &[0.0, 0.0]);
        assert_eq!(g.named()[1].1.values(), &[1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn select_cols_rejects_out_of_range() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![2, 2], vec![0.5; 4]).unwrap();
        assert!(matches!(
            tape.select_cols(a, &[0, 2]),
            Err(Error::Contract(_))
        ));
    }

    /// Gradient of `a * sum(tanh(W x)) + b * sum(sigmoid(W x))` w.r.t. `W`.
    fn mixed_grad(w: &[f64], x: &[f64], a: f64, b: f64) -> Vec<f64> {
        let mut tape = Tape::new();
        let wv = param(&mut tape, "w", vec![2, 3], w.to_vec());
        let xv = tape.constant(vec![3, 1], x.to_vec()).unwrap();
        let z = tape.matmul(wv, xv).unwrap();
        let t = tape.tanh(z).unwrap();
        let sg = tape.sigmoid(z).unwrap();
        let (ft, fs) = (tape.sum(t).unwrap(), tape.sum(sg).unwrap());
        let (ft, fs) = (tape.scale(ft, a).unwrap(), tape.scale(fs, b).unwrap());
        let y = tape.add(ft, fs).unwrap();
        tape.backward(y).unwrap().named()[0].1.values().to_vec()
    }

    proptest! {
        #[test]
        fn backward_is_linear_and_deterministic(
            w in prop::collection::vec(-2.0f64..2.0, 6),
            x in prop::collection::vec(-2.0f64..2.0, 3),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let both = mixed_grad(&w, &x, a, b);
            let (gt, gs) = (mixed_grad(&w, &x, 1.0, 0.0), mixed_grad(&w, &x, 0.0, 1.0));
            for i in 0..6 {
                prop_assert!((both[i] - (a * gt[i] + b * gs[i])).abs() < 1e-12);
            }
            let again = mixed_grad(&w, &x, a, b);
            prop_assert_eq!(
                both.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                again.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
