//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its nodes. Calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and returns
//! the gradient of that scalar with respect to every trainable leaf.

use super::kernels::{self, accumulate_row};
use super::{Float, NeuralError, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Mul(usize, usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Softmax(usize),
    Conv {
        x: usize,
        kernel: usize,
        dilation: usize,
    },
    Embed {
        table: usize,
        indices: Vec<usize>,
    },
    Upsample {
        x: usize,
        hop: usize,
    },
    ConcatCols(Vec<usize>),
    SliceCols {
        x: usize,
        start: usize,
    },
    SliceRows {
        x: usize,
        start: usize,
    },
    StackRows(Vec<usize>),
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        weights: Vec<T>,
        probs: Vec<T>,
    },
    Sum(usize),
    Scale(usize, T),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of one backward pass, indexed by leaf [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Float> Gradients<T> {
    /// `None` for constants and for leaves that the loss does not reach.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape_err(op: &str, detail: String) -> NeuralError {
    NeuralError::Shape(format!("{op}: {detail}"))
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Non-trainable leaf; gradients never flow into it.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    fn dims2(&self, v: Var, op: &str) -> Result<(usize, usize), NeuralError> {
        let s = self.nodes[v.0].value.shape();
        if s.len() != 2 {
            return Err(shape_err(op, format!("expected a matrix, got shape {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (n, k) = self.dims2(a, "matmul")?;
        let (k2, m) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", format!("inner dims {k} vs {k2}")));
        }
        let out = kernels::matmul(self.value(a).data(), n, k, self.value(b).data(), m);
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(
            Tensor::from_parts(vec![n, m], out),
            Op::MatMul(a.0, b.0),
            rg,
        ))
    }

    /// Adds a length-`cols` bias to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, NeuralError> {
        let (n, m) = self.dims2(x, "add_bias")?;
        let b = self.value(bias);
        if b.len() != m {
            return Err(shape_err(
                "add_bias",
                format!("bias length {} vs {m} columns", b.len()),
            ));
        }
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(m.max(1)) {
            kernels::add_bias_row(row, b.data());
        }
        let rg = self.rg(&[x.0, bias.0]);
        Ok(self.push(
            Tensor::from_parts(vec![n, m], out),
            Op::AddBias(x.0, bias.0),
            rg,
        ))
    }

    /// `x · w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NeuralError> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    fn binary(&mut self, a: Var, b: Var, name: &str) -> Result<(Vec<usize>, bool), NeuralError> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        if sa != sb {
            return Err(shape_err(name, format!("{sa:?} vs {sb:?}")));
        }
        Ok((sa.to_vec(), self.rg(&[a.0, b.0])))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (shape, rg) = self.binary(a, b, "add")?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        Ok(self.push(Tensor::from_parts(shape, out), Op::Add(a.0, b.0), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (shape, rg) = self.binary(a, b, "mul")?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        Ok(self.push(Tensor::from_parts(shape, out), Op::Mul(a.0, b.0), rg))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let t = self.value(x);
        let out = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect());
        let rg = self.nodes[x.0].requires_grad;
        self.push(out, op, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, kernels::sigmoid, Op::Sigmoid(x.0))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh(x.0))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| if v > T::zero() { v } else { T::zero() },
            Op::Relu(x.0),
        )
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x.0, c))
    }

    /// Row-wise softmax (a vector is treated as a single row).
    pub fn softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.cols().max(1);
        let mut out = vec![T::zero(); t.len()];
        for (o, r) in out.chunks_mut(m).zip(t.data().chunks(m)) {
            kernels::softmax_row(r, o);
        }
        let shape = t.shape().to_vec();
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::from_parts(shape, out), Op::Softmax(x.0), rg)
    }

    /// Dilated causal convolution. `x` is `[T, c_in]`, `kernel` is
    /// `[taps, c_in, c_out]`. Tap `k` reads `x[t - (taps-1-k)·dilation]`, with
    /// implicit zeros before the start, so output row `t` only sees rows `≤ t`.
    pub fn conv1d_causal(
        &mut self,
        x: Var,
        kernel: Var,
        dilation: usize,
    ) -> Result<Var, NeuralError> {
        if dilation < 1 {
            return Err(NeuralError::InvalidArgument(format!(
                "dilation must be >= 1, got {dilation}"
            )));
        }
        let (t_len, cin) = self.dims2(x, "conv1d_causal")?;
        let ks = self.value(kernel).shape().to_vec();
        if ks.len() != 3 || ks[1] != cin {
            return Err(shape_err(
                "conv1d_causal",
                format!("kernel {ks:?} for {cin} input channels"),
            ));
        }
        let (taps, cout) = (ks[0], ks[2]);
        let xv = self.value(x).data();
        let kv = self.value(kernel).data();
        let mut out = vec![T::zero(); t_len * cout];
        for k in 0..taps {
            let lag = (taps - 1 - k) * dilation;
            if lag >= t_len {
                continue;
            }
            let w = &kv[k * cin * cout..(k + 1) * cin * cout];
            kernels::matmul_acc(
                &xv[..(t_len - lag) * cin],
                t_len - lag,
                cin,
                w,
                cout,
                &mut out[lag * cout..],
            );
        }
        let rg = self.rg(&[x.0, kernel.0]);
        Ok(self.push(
            Tensor::from_parts(vec![t_len, cout], out),
            Op::Conv {
                x: x.0,
                kernel: kernel.0,
                dilation,
            },
            rg,
        ))
    }

    /// Row lookup: output row `t` is `table[indices[t]]`. Equivalent to a
    /// one-hot input multiplied by `table`.
    pub fn embed(&mut self, table: Var, indices: &[usize]) -> Result<Var, NeuralError> {
        let (rows, cols) = self.dims2(table, "embed")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(shape_err(
                "embed",
                format!("index {bad} out of range for {rows} rows"),
            ));
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            out.extend_from_slice(tv.row(i));
        }
        let rg = self.nodes[table.0].requires_grad;
        Ok(self.push(
            Tensor::from_parts(vec![indices.len(), cols], out),
            Op::Embed {
                table: table.0,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Nearest-neighbour upsampling: every row repeated `hop` times.
    pub fn upsample(&mut self, x: Var, hop: usize) -> Result<Var, NeuralError> {
        if hop < 1 {
            return Err(NeuralError::InvalidArgument(format!(
                "hop size must be >= 1, got {hop}"
            )));
        }
        let (n, m) = self.dims2(x, "upsample")?;
        let xv = self.value(x);
        let mut out = Vec::with_capacity(n * hop * m);
        for i in 0..n {
            for _ in 0..hop {
                out.extend_from_slice(xv.row(i));
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(
            Tensor::from_parts(vec![n * hop, m], out),
            Op::Upsample { x: x.0, hop },
            rg,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NeuralError> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat_cols", "no inputs".into()))?;
        let (n, _) = self.dims2(*first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p, "concat_cols")?;
            if r != n {
                return Err(shape_err("concat_cols", format!("row counts {n} vs {r}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.rg(&ids);
        Ok(self.push(
            Tensor::from_parts(vec![n, total], out),
            Op::ConcatCols(ids),
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NeuralError> {
        let (n, m) = self.dims2(x, "slice_cols")?;
        if start + len > m {
            return Err(shape_err(
                "slice_cols",
                format!("{start}..{} of {m} columns", start + len),
            ));
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(n * len);
        for i in 0..n {
            out.extend_from_slice(&xv.row(i)[start..start + len]);
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(
            Tensor::from_parts(vec![n, len], out),
            Op::SliceCols { x: x.0, start },
            rg,
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NeuralError> {
        let (n, m) = self.dims2(x, "slice_rows")?;
        if start + len > n {
            return Err(shape_err(
                "slice_rows",
                format!("{start}..{} of {n} rows", start + len),
            ));
        }
        let out = self.value(x).data()[start * m..(start + len) * m].to_vec();
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(
            Tensor::from_parts(vec![len, m], out),
            Op::SliceRows { x: x.0, start },
            rg,
        ))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var, NeuralError> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("stack_rows", "no inputs".into()))?;
        let (_, m) = self.dims2(*first, "stack_rows")?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.dims2(p, "stack_rows")?;
            if c != m {
                return Err(shape_err("stack_rows", format!("column counts {m} vs {c}")));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.rg(&ids);
        Ok(self.push(
            Tensor::from_parts(vec![rows, m], out),
            Op::StackRows(ids),
            rg,
        ))
    }

    /// Weighted mean cross-entropy of row-wise softmax(logits) against integer
    /// targets. `weights = None` weights every row equally. Rows with zero
    /// weight contribute neither loss nor gradient.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        weights: Option<&[T]>,
    ) -> Result<Var, NeuralError> {
        let (n, m) = self.dims2(logits, "cross_entropy")?;
        if targets.len() != n {
            return Err(shape_err(
                "cross_entropy",
                format!("{} targets for {n} rows", targets.len()),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= m) {
            return Err(shape_err(
                "cross_entropy",
                format!("target {bad} out of range for {m} classes"),
            ));
        }
        let weights: Vec<T> = match weights {
            Some(w) if w.len() != n => {
                return Err(shape_err(
                    "cross_entropy",
                    format!("{} weights for {n} rows", w.len()),
                ))
            }
            Some(w) => w.to_vec(),
            None => vec![T::one(); n],
        };
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(NeuralError::InvalidArgument(
                "cross_entropy weights sum to zero".into(),
            ));
        }
        let lv = self.value(logits).data();
        let mut probs = vec![T::zero(); n * m];
        let mut loss = T::zero();
        for i in 0..n {
            if weights[i] == T::zero() {
                continue;
            }
            let row = &lv[i * m..(i + 1) * m];
            let lse = kernels::log_sum_exp(row);
            loss += weights[i] * (lse - row[targets[i]]);
            for (p, &v) in probs[i * m..(i + 1) * m].iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
        }
        let rg = self.nodes[logits.0].requires_grad;
        Ok(self.push(
            Tensor::scalar(loss / total),
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                weights,
                probs,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::scalar(s), Op::Sum(x.0), rg)
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, NeuralError> {
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(NeuralError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let n = &self.nodes[i];
                match (&n.op, g) {
                    (Op::Leaf, Some(g)) if n.requires_grad => {
                        Some(Tensor::from_parts(n.value.shape().to_vec(), g))
                    }
                    _ => None,
                }
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Vec<T>>], id: usize) -> Option<&'a mut Vec<T>> {
        if !self.nodes[id].requires_grad {
            return None;
        }
        let len = self.nodes[id].value.len();
        Some(grads[id].get_or_insert_with(|| vec![T::zero(); len]))
    }

    fn propagate(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        let val = |i: usize| self.nodes[i].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = (
                    self.nodes[*a].value.shape()[0],
                    self.nodes[*a].value.shape()[1],
                );
                let m = self.nodes[*b].value.shape()[1];
                if let Some(ga) = self.slot(grads, *a) {
                    kernels::matmul_a_bt_acc(g, n, m, val(*b), k, ga);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    kernels::matmul_at_b_acc(val(*a), n, k, g, m, gb);
                }
            }
            Op::AddBias(x, b) => {
                let m = self.nodes[*b].value.len();
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(gx, g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for row in g.chunks(m.max(1)) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Add(a, b) => {
                for i in [*a, *b] {
                    if let Some(gi) = self.slot(grads, i) {
                        add_into(gi, g);
                    }
                }
            }
            Op::Mul(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, &gv), &bv) in ga.iter_mut().zip(g).zip(val(*b)) {
                        *o += gv * bv;
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for ((o, &gv), &av) in gb.iter_mut().zip(g).zip(val(*a)) {
                        *o += gv * av;
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                if let Some(gx) = self.slot(grads, *x) {
                    for ((o, &gv), &yv) in gx.iter_mut().zip(g).zip(y) {
                        *o += gv * yv * (T::one() - yv);
                    }
                }
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                if let Some(gx) = self.slot(grads, *x) {
                    for ((o, &gv), &yv) in gx.iter_mut().zip(g).zip(y) {
                        *o += gv * (T::one() - yv * yv);
                    }
                }
            }
            Op::Relu(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((o, &gv), &xv) in gx.iter_mut().zip(g).zip(val(*x)) {
                        if xv > T::zero() {
                            *o += gv;
                        }
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for (o, &gv) in gx.iter_mut().zip(g) {
                        *o += gv * *c;
                    }
                }
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let m = node.value.cols().max(1);
                if let Some(gx) = self.slot(grads, *x) {
                    for ((o, gr), yr) in gx.chunks_mut(m).zip(g.chunks(m)).zip(y.chunks(m)) {
                        let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                        for ((ov, &gv), &yv) in o.iter_mut().zip(gr).zip(yr) {
                            *ov += yv * (gv - dot);
                        }
                    }
                }
            }
            Op::Conv {
                x,
                kernel,
                dilation,
            } => {
                let (t_len, cin) = (
                    self.nodes[*x].value.shape()[0],
                    self.nodes[*x].value.shape()[1],
                );
                let ks = self.nodes[*kernel].value.shape();
                let (taps, cout) = (ks[0], ks[2]);
                let xv = val(*x);
                let kv = val(*kernel);
                if let Some(gx) = self.slot(grads, *x) {
                    for k in 0..taps {
                        let lag = (taps - 1 - k) * dilation;
                        if lag >= t_len {
                            continue;
                        }
                        let w = &kv[k * cin * cout..(k + 1) * cin * cout];
                        kernels::matmul_a_bt_acc(
                            &g[lag * cout..],
                            t_len - lag,
                            cout,
                            w,
                            cin,
                            &mut gx[..(t_len - lag) * cin],
                        );
                    }
                }
                if let Some(gk) = self.slot(grads, *kernel) {
                    for k in 0..taps {
                        let lag = (taps - 1 - k) * dilation;
                        if lag >= t_len {
                            continue;
                        }
                        let gw = &mut gk[k * cin * cout..(k + 1) * cin * cout];
                        kernels::matmul_at_b_acc(
                            &xv[..(t_len - lag) * cin],
                            t_len - lag,
                            cin,
                            &g[lag * cout..],
                            cout,
                            gw,
                        );
                    }
                }
            }
            Op::Embed { table, indices } => {
                let m = self.nodes[*table].value.cols();
                if let Some(gt) = self.slot(grads, *table) {
                    for (t, &i) in indices.iter().enumerate() {
                        add_into(&mut gt[i * m..(i + 1) * m], &g[t * m..(t + 1) * m]);
                    }
                }
            }
            Op::Upsample { x, hop } => {
                let m = self.nodes[*x].value.cols();
                if let Some(gx) = self.slot(grads, *x) {
                    for (t, row) in g.chunks(m.max(1)).enumerate() {
                        let f = t / hop;
                        add_into(&mut gx[f * m..(f + 1) * m], row);
                    }
                }
            }
            Op::ConcatCols(ids) => {
                let total = node.value.cols();
                let mut offset = 0;
                for &p in ids {
                    let w = self.nodes[p].value.cols();
                    if let Some(gp) = self.slot(grads, p) {
                        for (dst, src) in gp.chunks_mut(w.max(1)).zip(g.chunks(total.max(1))) {
                            add_into(dst, &src[offset..offset + w]);
                        }
                    }
                    offset += w;
                }
            }
            Op::SliceCols { x, start } => {
                let m = self.nodes[*x].value.cols();
                let w = node.value.cols();
                if let Some(gx) = self.slot(grads, *x) {
                    for (dst, src) in gx.chunks_mut(m.max(1)).zip(g.chunks(w.max(1))) {
                        add_into(&mut dst[*start..*start + w], src);
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let m = self.nodes[*x].value.cols();
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(&mut gx[start * m..start * m + g.len()], g);
                }
            }
            Op::StackRows(ids) => {
                let mut offset = 0;
                for &p in ids {
                    let len = self.nodes[p].value.len();
                    if let Some(gp) = self.slot(grads, p) {
                        add_into(gp, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                let m = self.nodes[*logits].value.cols();
                let total: T = weights.iter().copied().sum();
                if let Some(gl) = self.slot(grads, *logits) {
                    for (i, &w) in weights.iter().enumerate() {
                        if w == T::zero() {
                            continue;
                        }
                        let scale = g[0] * w / total;
                        let row = &mut gl[i * m..(i + 1) * m];
                        for (o, &p) in row.iter_mut().zip(&probs[i * m..(i + 1) * m]) {
                            *o += scale * p;
                        }
                        row[targets[i]] = row[targets[i]] - scale;
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for o in gx.iter_mut() {
                        *o += g[0];
                    }
                }
            }
        }
    }
}

#[inline]
fn add_into<T: Float>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Forward-only helper used by inference code: `out_row = x_row · w + b`.
pub fn affine_row<T: Float>(x_row: &[T], w: &[T], b: &[T], out_row: &mut [T]) {
    out_row.iter_mut().for_each(|v| *v = T::zero());
    accumulate_row(x_row, w, b.len(), out_row);
    kernels::add_bias_row(out_row, b);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::matrix(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn conv_with_dilation_two() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(m(4, 1, &[1.0, 2.0, 3.0, 4.0]));
        let k = g.constant(Tensor::new(vec![2, 1, 1], vec![1.0, 1.0]).unwrap());
        let y = g.conv1d_causal(x, k, 2).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn conv_rejects_zero_dilation() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(m(4, 1, &[1.0, 2.0, 3.0, 4.0]));
        let k = g.constant(Tensor::new(vec![2, 1, 1], vec![1.0, 1.0]).unwrap());
        assert!(matches!(
            g.conv1d_causal(x, k, 0),
            Err(NeuralError::InvalidArgument(_))
        ));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(m(2, 3, &[0.0; 6]));
        let b = g.constant(m(2, 3, &[0.0; 6]));
        assert!(matches!(g.matmul(a, b), Err(NeuralError::Shape(_))));
    }

    #[test]
    fn softmax_uniform() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(m(1, 2, &[0.0, 0.0]));
        let y = g.softmax(x);
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn cross_entropy_of_uniform_logits_is_log_bins() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[3, 1024]));
        let l = g.cross_entropy(x, &[0, 511, 1023], None).unwrap();
        assert!((g.value(l).data()[0] - 1024f64.ln()).abs() < 1e-12);
        assert!((g.value(l).data()[0] - 6.9315).abs() < 1e-4);
    }

    #[test]
    fn identity_affine_gradient_is_all_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.param(m(1, 3, &[0.3, -1.0, 2.0]));
        let w = g.constant(m(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
        let b = g.constant(Tensor::zeros(&[3]));
        let y = g.affine(x, w, b).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
        assert!(grads.get(w).is_none());
    }

    #[test]
    fn constant_path_has_no_gradient() {
        let mut g = Graph::<f64>::new();
        let c = g.constant(m(1, 2, &[1.0, 2.0]));
        let p = g.param(m(1, 2, &[0.5, 0.5]));
        let y = g.tanh(c);
        let z = g.mul(y, p).unwrap();
        let s = g.sum(z);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(c).is_none());
        assert!(grads.get(p).is_some());
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::<f64>::new();
        let x = g.param(m(1, 2, &[1.0, 2.0]));
        let y = g.tanh(x);
        assert!(matches!(g.backward(y), Err(NeuralError::NonScalarLoss(_))));
    }

    #[test]
    fn zero_weight_rows_get_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(m(2, 3, &[0.1, 0.2, 0.3, 1.0, -1.0, 0.5]));
        let l = g.cross_entropy(x, &[0, 2], Some(&[1.0, 0.0])).unwrap();
        let grads = g.backward(l).unwrap();
        assert_eq!(&grads.get(x).unwrap().data()[3..], &[0.0, 0.0, 0.0]);
    }
}
