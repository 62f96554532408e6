//! Recorded computation graph with reverse-mode gradient computation.
//!
//! A [`Tape`] records every primitive application during a forward pass:
//! the operation, its input node ids and the produced value. Calling
//! [`Tape::backward`] on a scalar loss node walks the record in reverse and
//! accumulates vector-Jacobian products into every registered parameter.
//! Values are computed eagerly in a fixed order, so replaying a record on
//! the same inputs reproduces every value bit for bit.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numcore::ops;
use crate::numcore::tensor::{bitwise_eq, Tensor};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Leaf holding data that does not receive a gradient slot.
    Input,
    /// Leaf registered as a named trainable parameter.
    Param(String),
    /// x [N,C,L] * k [O,C,kl] + b [O] -> [N,O,L-kl+1]
    Conv1d,
    Relu,
    /// [N,C,L] -> [N,C]; first maximal index per row wins ties.
    MaxPoolTime { argmax: Vec<usize> },
    /// [G*group, d] -> [G, d]; argmax holds the winning source row per (g, j).
    MaxPoolRows { group: usize, argmax: Vec<usize> },
    /// x [rows,n] @ w [m,n]^T (+ b) -> [rows,m]
    Dense { bias: bool },
    /// a [B,m,k] @ b [B,n,k]^T -> [B,m,n]
    BmmNT,
    /// a [B,m,k] @ b [B,k,n] -> [B,m,n]
    BmmNN,
    /// [B,m,n] -> [B,n,m]
    TransposeLast2,
    /// Softmax over the last axis.
    SoftmaxLast,
    Scale(f64),
    /// Elementwise sum of two same-shape tensors.
    Add,
    /// x [N,d] + t[row % S] per row, with N = B*S.
    AddTiledRows,
    /// Horizontal concatenation of [N, w_i] blocks.
    ConcatCols,
    /// Elementwise multiply by a recorded mask.
    Dropout { mask: Vec<f64> },
    Reshape,
    /// Mean squared error of (pred, target) vectors -> scalar.
    Mse,
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Tensor,
}

/// Gradients keyed by parameter name, in name order.
#[derive(Debug, Clone, Default)]
pub struct Gradients(pub BTreeMap<String, Tensor>);

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.0.iter()
    }
}

/// The recorded forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, usize>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, value: Tensor) -> ValueId {
        self.nodes.push(Node { op, inputs, value });
        ValueId(self.nodes.len() - 1)
    }

    /// Leaf input (no gradient slot).
    pub fn input(&mut self, value: Tensor) -> ValueId {
        self.push(Op::Input, vec![], value)
    }

    /// Leaf registered as a trainable parameter. Names must be unique.
    pub fn param(&mut self, name: &str, value: Tensor) -> Result<ValueId> {
        if self.params.contains_key(name) {
            return Err(Error::Shape(format!("duplicate parameter slot {name:?}")));
        }
        let id = self.push(Op::Param(name.to_string()), vec![], value);
        self.params.insert(name.to_string(), id.0);
        Ok(id)
    }

    pub fn conv1d(&mut self, x: ValueId, k: ValueId, b: ValueId) -> Result<ValueId> {
        let (xs, ks, bs) = (
            self.value(x).shape().to_vec(),
            self.value(k).shape().to_vec(),
            self.value(b).shape().to_vec(),
        );
        if xs.len() != 3 {
            return Err(Error::Shape(format!("tape conv1d expects [N,C,L], got {xs:?}")));
        }
        let (n, ci, l, co, kl) = ops::conv1d_check(&xs, &ks, &bs)?;
        let out = ops::conv1d_fwd(
            self.value(x).data(),
            n,
            ci,
            l,
            self.value(k).data(),
            co,
            kl,
            self.value(b).data(),
        );
        let value = Tensor::new(vec![n, co, l - kl + 1], out)?;
        Ok(self.push(Op::Conv1d, vec![x.0, k.0, b.0], value))
    }

    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let value = ops::relu(self.value(x));
        self.push(Op::Relu, vec![x.0], value)
    }

    pub fn maxpool_time(&mut self, x: ValueId) -> Result<ValueId> {
        let shape = self.value(x).shape().to_vec();
        let [n, c, l] = shape[..] else {
            return Err(Error::Shape(format!(
                "maxpool_time expects [N,C,L], got {shape:?}"
            )));
        };
        let (out, argmax) = ops::maxpool_time_fwd(self.value(x).data(), n * c, l);
        let value = Tensor::new(vec![n, c], out)?;
        Ok(self.push(Op::MaxPoolTime { argmax }, vec![x.0], value))
    }

    /// Elementwise max over consecutive groups of `group` rows.
    pub fn maxpool_rows(&mut self, x: ValueId, group: usize) -> Result<ValueId> {
        let shape = self.value(x).shape().to_vec();
        let [n, d] = shape[..] else {
            return Err(Error::Shape(format!(
                "maxpool_rows expects [N,d], got {shape:?}"
            )));
        };
        if group == 0 || n % group != 0 {
            return Err(Error::Shape(format!(
                "maxpool_rows group {group} does not divide row count {n}"
            )));
        }
        let groups = n / group;
        let data = self.value(x).data();
        let mut out = vec![0.0; groups * d];
        let mut argmax = vec![0usize; groups * d];
        for g in 0..groups {
            for j in 0..d {
                let mut best = data[(g * group) * d + j];
                let mut bi = g * group;
                for r in g * group + 1..(g + 1) * group {
                    let v = data[r * d + j];
                    if v > best {
                        best = v;
                        bi = r;
                    }
                }
                out[g * d + j] = best;
                argmax[g * d + j] = bi;
            }
        }
        let value = Tensor::new(vec![groups, d], out)?;
        Ok(self.push(Op::MaxPoolRows { group, argmax }, vec![x.0], value))
    }

    /// `x [rows,n] @ w [m,n]^T + b`.
    pub fn dense(&mut self, x: ValueId, w: ValueId, b: Option<ValueId>) -> Result<ValueId> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let ([rows, n], [m, wn]) = (&xs[..], &ws[..]) else {
            return Err(Error::Shape(format!(
                "dense expects x [rows,n] and w [m,n], got {xs:?} and {ws:?}"
            )));
        };
        if wn != n {
            return Err(Error::Shape(format!(
                "dense contraction mismatch: x {xs:?} vs w {ws:?}"
            )));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [*m] {
                return Err(Error::Shape(format!(
                    "dense bias must be [{m}], got {:?}",
                    self.value(b).shape()
                )));
            }
        }
        let out = ops::dense_fwd(
            self.value(x).data(),
            *rows,
            *n,
            self.value(w).data(),
            *m,
            b.map(|b| self.value(b).data()),
        );
        let value = Tensor::new(vec![*rows, *m], out)?;
        let mut inputs = vec![x.0, w.0];
        if let Some(b) = b {
            inputs.push(b.0);
        }
        Ok(self.push(Op::Dense { bias: b.is_some() }, inputs, value))
    }

    fn batch_dims(t: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
        match t.shape() {
            [b, m, k] => Ok((*b, *m, *k)),
            other => Err(Error::Shape(format!("{what} expects [B,m,k], got {other:?}"))),
        }
    }

    /// Batched `a [B,m,k] @ b [B,n,k]^T -> [B,m,n]`.
    pub fn bmm_nt(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ba, m, k) = Self::batch_dims(self.value(a), "bmm_nt lhs")?;
        let (bb, n, kb) = Self::batch_dims(self.value(b), "bmm_nt rhs")?;
        if ba != bb || k != kb {
            return Err(Error::Shape(format!(
                "bmm_nt mismatch: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = vec![0.0; ba * m * n];
        for i in 0..ba {
            let av = &self.value(a).data()[i * m * k..][..m * k];
            let bv = &self.value(b).data()[i * n * k..][..n * k];
            out[i * m * n..][..m * n].copy_from_slice(&ops::matmul_nt(av, m, k, bv, n));
        }
        let value = Tensor::new(vec![ba, m, n], out)?;
        Ok(self.push(Op::BmmNT, vec![a.0, b.0], value))
    }

    /// Batched `a [B,m,k] @ b [B,k,n] -> [B,m,n]`.
    pub fn bmm_nn(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ba, m, k) = Self::batch_dims(self.value(a), "bmm_nn lhs")?;
        let (bb, kb, n) = Self::batch_dims(self.value(b), "bmm_nn rhs")?;
        if ba != bb || k != kb {
            return Err(Error::Shape(format!(
                "bmm_nn mismatch: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = vec![0.0; ba * m * n];
        for i in 0..ba {
            let av = &self.value(a).data()[i * m * k..][..m * k];
            let bv = &self.value(b).data()[i * k * n..][..k * n];
            out[i * m * n..][..m * n].copy_from_slice(&ops::matmul_nn(av, m, k, bv, n));
        }
        let value = Tensor::new(vec![ba, m, n], out)?;
        Ok(self.push(Op::BmmNN, vec![a.0, b.0], value))
    }

    pub fn transpose_last2(&mut self, x: ValueId) -> Result<ValueId> {
        let (b, m, n) = Self::batch_dims(self.value(x), "transpose_last2")?;
        let data = self.value(x).data();
        let mut out = vec![0.0; b * m * n];
        for i in 0..b {
            for r in 0..m {
                for c in 0..n {
                    out[i * m * n + c * m + r] = data[i * m * n + r * n + c];
                }
            }
        }
        let value = Tensor::new(vec![b, n, m], out)?;
        Ok(self.push(Op::TransposeLast2, vec![x.0], value))
    }

    /// Softmax over the last axis of any tensor with rank >= 1.
    pub fn softmax_last(&mut self, x: ValueId) -> Result<ValueId> {
        let shape = self.value(x).shape().to_vec();
        let Some(&w) = shape.last() else {
            return Err(Error::Shape("softmax_last on scalar".into()));
        };
        self.value(x).check_finite("softmax input")?;
        let rows = self.value(x).len() / w;
        let out = ops::softmax_rows_fwd(self.value(x).data(), rows, w);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(Op::SoftmaxLast, vec![x.0], value))
    }

    pub fn scale(&mut self, x: ValueId, c: f64) -> ValueId {
        let value = Tensor::new(
            self.value(x).shape().to_vec(),
            self.value(x).data().iter().map(|v| v * c).collect(),
        )
        .expect("same shape");
        self.push(Op::Scale(c), vec![x.0], value)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape(format!(
                "add shape mismatch: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let value = Tensor::new(
            self.value(a).shape().to_vec(),
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(x, y)| x + y)
                .collect(),
        )?;
        Ok(self.push(Op::Add, vec![a.0, b.0], value))
    }

    /// `x [N,d] + t[row % S]` per row; `t` is `[S,d]` and `S` divides `N`.
    pub fn add_tiled_rows(&mut self, x: ValueId, t: ValueId) -> Result<ValueId> {
        let xs = self.value(x).shape().to_vec();
        let ts = self.value(t).shape().to_vec();
        let ([n, d], [s, td]) = (&xs[..], &ts[..]) else {
            return Err(Error::Shape(format!(
                "add_tiled_rows expects [N,d] and [S,d], got {xs:?} and {ts:?}"
            )));
        };
        if td != d || *s == 0 || n % s != 0 {
            return Err(Error::Shape(format!(
                "add_tiled_rows mismatch: x {xs:?}, tiles {ts:?}"
            )));
        }
        let tdat = self.value(t).data();
        let mut out = self.value(x).data().to_vec();
        for (r, row) in out.chunks_exact_mut(*d).enumerate() {
            let tile = &tdat[(r % s) * d..][..*d];
            for (o, v) in row.iter_mut().zip(tile) {
                *o += v;
            }
        }
        let value = Tensor::new(vec![*n, *d], out)?;
        Ok(self.push(Op::AddTiledRows, vec![x.0, t.0], value))
    }

    /// Concatenate `[N, w_i]` blocks along columns.
    pub fn concat_cols(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_cols of zero blocks".into()));
        }
        let n = match self.value(parts[0]).shape() {
            [n, _] => *n,
            other => {
                return Err(Error::Shape(format!(
                    "concat_cols expects [N,w] blocks, got {other:?}"
                )))
            }
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            match self.value(p).shape() {
                [pn, w] if *pn == n => widths.push(*w),
                other => {
                    return Err(Error::Shape(format!(
                        "concat_cols block {other:?} incompatible with {n} rows"
                    )))
                }
            }
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; n * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let data = self.value(p).data();
            for r in 0..n {
                out[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&data[r * w..][..w]);
            }
            offset += w;
        }
        let value = Tensor::new(vec![n, total], out)?;
        Ok(self.push(Op::ConcatCols, parts.iter().map(|p| p.0).collect(), value))
    }

    /// Elementwise multiply by a dropout mask produced at record time.
    pub fn dropout(&mut self, x: ValueId, mask: Vec<f64>) -> Result<ValueId> {
        if mask.len() != self.value(x).len() {
            return Err(Error::Shape(format!(
                "dropout mask length {} vs tensor {}",
                mask.len(),
                self.value(x).len()
            )));
        }
        let value = Tensor::new(
            self.value(x).shape().to_vec(),
            self.value(x)
                .data()
                .iter()
                .zip(&mask)
                .map(|(v, m)| v * m)
                .collect(),
        )?;
        Ok(self.push(Op::Dropout { mask }, vec![x.0], value))
    }

    pub fn reshape(&mut self, x: ValueId, shape: Vec<usize>) -> Result<ValueId> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(Op::Reshape, vec![x.0], value))
    }

    /// Mean squared error between prediction and target vectors.
    pub fn mse(&mut self, pred: ValueId, target: ValueId) -> Result<ValueId> {
        let loss = ops::mse_loss(self.value(pred), self.value(target))?;
        Ok(self.push(Op::Mse, vec![pred.0, target.0], Tensor::scalar(loss)))
    }

    /// Reverse pass from a scalar loss node. Every registered parameter
    /// receives a gradient tensor of its own shape (zero when the loss does
    /// not depend on it).
    pub fn backward(&mut self, loss: ValueId) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(dout) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            let ins = node.inputs.clone();
            let add_grad = |grads: &mut Vec<Option<Vec<f64>>>, id: usize, delta: Vec<f64>| {
                match &mut grads[id] {
                    Some(g) => {
                        for (a, b) in g.iter_mut().zip(&delta) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Input | Op::Param(_) => {
                    grads[id] = Some(dout); // keep for collection below
                }
                Op::Conv1d => {
                    let (xs, ks) = (
                        self.nodes[ins[0]].value.shape(),
                        self.nodes[ins[1]].value.shape(),
                    );
                    let (n, ci, l) = (xs[0], xs[1], xs[2]);
                    let (co, kl) = (ks[0], ks[2]);
                    let (dx, dk, db) = ops::conv1d_bwd(
                        self.nodes[ins[0]].value.data(),
                        n,
                        ci,
                        l,
                        self.nodes[ins[1]].value.data(),
                        co,
                        kl,
                        &dout,
                    );
                    add_grad(&mut grads, ins[0], dx);
                    add_grad(&mut grads, ins[1], dk);
                    add_grad(&mut grads, ins[2], db);
                }
                Op::Relu => {
                    let x = self.nodes[ins[0]].value.data();
                    let dx = x
                        .iter()
                        .zip(&dout)
                        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                        .collect();
                    add_grad(&mut grads, ins[0], dx);
                }
                Op::MaxPoolTime { argmax } => {
                    let xs = self.nodes[ins[0]].value.shape();
                    let (rows, l) = (xs[0] * xs[1], xs[2]);
                    let mut dx = vec![0.0; rows * l];
                    for r in 0..rows {
                        dx[r * l + argmax[r]] = dout[r];
                    }
                    add_grad(&mut grads, ins[0], dx);
                }
                Op::MaxPoolRows { argmax, .. } => {
                    let xs = self.nodes[ins[0]].value.shape();
                    let (n, d) = (xs[0], xs[1]);
                    let mut dx = vec![0.0; n * d];
                    for (gj, &src_row) in argmax.iter().enumerate() {
                        let j = gj % d;
                        dx[src_row * d + j] += dout[gj];
                    }
                    add_grad(&mut grads, ins[0], dx);
                }
                Op::Dense { bias } => {
                    let xs = self.nodes[ins[0]].value.shape();
                    let ws = self.nodes[ins[1]].value.shape();
                    let (rows, n, m) = (xs[0], xs[1], ws[0]);
                    let (dx, dw, db) = ops::dense_bwd(
                        self.nodes[ins[0]].value.data(),
                        rows,
                        n,
                        self.nodes[ins[1]].value.data(),
                        m,
                        &dout,
                        *bias,
                    );
                    add_grad(&mut grads, ins[0], dx);
                    add_grad(&mut grads, ins[1], dw);
                    if *bias {
                        add_grad(&mut grads, ins[2], db);
                    }
                }
                Op::BmmNT => {
                    // out[b] = A[b] @ B[b]^T; dA[b] = dout[b] @ B[b]; dB[b] = dout[b]^T @ A[b]
                    let ash = self.nodes[ins[0]].value.shape().to_vec();
                    let bsh = self.nodes[ins[1]].value.shape().to_vec();
                    let (bt, m, k, n) = (ash[0], ash[1], ash[2], bsh[1]);
                    let a = self.nodes[ins[0]].value.data();
                    let b = self.nodes[ins[1]].value.data();
                    let mut da = vec![0.0; a.len()];
                    let mut db = vec![0.0; b.len()];
                    for i in 0..bt {
                        let dov = &dout[i * m * n..][..m * n];
                        let av = &a[i * m * k..][..m * k];
                        let bv = &b[i * n * k..][..n * k];
                        da[i * m * k..][..m * k].copy_from_slice(&ops::matmul_nn(dov, m, n, bv, k));
                        db[i * n * k..][..n * k].copy_from_slice(&ops::matmul_tn(dov, m, n, av, k));
                    }
                    add_grad(&mut grads, ins[0], da);
                    add_grad(&mut grads, ins[1], db);
                }
                Op::BmmNN => {
                    // out[b] = A[b] @ B[b]; dA[b] = dout[b] @ B[b]^T; dB[b] = A[b]^T @ dout[b]
                    let ash = self.nodes[ins[0]].value.shape().to_vec();
                    let bsh = self.nodes[ins[1]].value.shape().to_vec();
                    let (bt, m, k, n) = (ash[0], ash[1], ash[2], bsh[2]);
                    let a = self.nodes[ins[0]].value.data();
                    let b = self.nodes[ins[1]].value.data();
                    let mut da = vec![0.0; a.len()];
                    let mut db = vec![0.0; b.len()];
                    for i in 0..bt {
                        let dov = &dout[i * m * n..][..m * n];
                        let av = &a[i * m * k..][..m * k];
                        let bv = &b[i * k * n..][..k * n];
                        da[i * m * k..][..m * k].copy_from_slice(&ops::matmul_nt(dov, m, n, bv, k));
                        db[i * k * n..][..k * n].copy_from_slice(&ops::matmul_tn(av, m, k, dov, n));
                    }
                    add_grad(&mut grads, ins[0], da);
                    add_grad(&mut grads, ins[1], db);
                }
                Op::TransposeLast2 => {
                    let vs = node.value.shape().to_vec(); // [B, n, m]
                    let (b, n, m) = (vs[0], vs[1], vs[2]);
                    let mut dx = vec![0.0; dout.len()];
                    for i in 0..b {
                        for r in 0..n {
                            for c in 0..m {
                                dx[i * n * m + c * n + r] = dout[i * n * m + r * m + c];
                            }
                        }
                    }
                    add_grad(&mut grads, ins[0], dx);
                }
                Op::SoftmaxLast => {
                    let w = *node.value.shape().last().expect("rank >= 1");
                    let rows = node.value.len() / w;
                    let dx = ops::softmax_rows_bwd(node.value.data(), &dout, rows, w);
                    add_grad(&mut grads, ins[0], dx);
                }
                Op::Scale(c) => {
                    let c = *c;
                    add_grad(&mut grads, ins[0], dout.iter().map(|g| g * c).collect());
                }
                Op::Add => {
                    add_grad(&mut grads, ins[0], dout.clone());
                    add_grad(&mut grads, ins[1], dout);
                }
                Op::AddTiledRows => {
                    let ts = self.nodes[ins[1]].value.shape();
                    let (s, d) = (ts[0], ts[1]);
                    let mut dt = vec![0.0; s * d];
                    for (r, row) in dout.chunks_exact(d).enumerate() {
                        let tile = &mut dt[(r % s) * d..][..d];
                        for (t, g) in tile.iter_mut().zip(row) {
                            *t += g;
                        }
                    }
                    add_grad(&mut grads, ins[0], dout);
                    add_grad(&mut grads, ins[1], dt);
                }
                Op::ConcatCols => {
                    let total = node.value.shape()[1];
                    let rows = node.value.shape()[0];
                    let mut offset = 0;
                    for &inp in &ins {
                        let w = self.nodes[inp].value.shape()[1];
                        let mut dx = vec![0.0; rows * w];
                        for r in 0..rows {
                            dx[r * w..][..w]
                                .copy_from_slice(&dout[r * total + offset..][..w]);
                        }
                        add_grad(&mut grads, inp, dx);
                        offset += w;
                    }
                }
                Op::Dropout { mask } => {
                    let dx = dout.iter().zip(mask).map(|(g, m)| g * m).collect();
                    add_grad(&mut grads, ins[0], dx);
                }
                Op::Reshape => {
                    add_grad(&mut grads, ins[0], dout);
                }
                Op::Mse => {
                    let p = self.nodes[ins[0]].value.data();
                    let t = self.nodes[ins[1]].value.data();
                    let n = p.len() as f64;
                    let g = dout[0];
                    let dp: Vec<f64> = p
                        .iter()
                        .zip(t)
                        .map(|(pv, tv)| g * 2.0 * (pv - tv) / n)
                        .collect();
                    let dt: Vec<f64> = dp.iter().map(|v| -v).collect();
                    add_grad(&mut grads, ins[0], dp);
                    add_grad(&mut grads, ins[1], dt);
                }
            }
        }

        let mut out = BTreeMap::new();
        for (name, &id) in &self.params {
            let shape = self.nodes[id].value.shape().to_vec();
            let g = match grads[id].take() {
                Some(g) => Tensor::new(shape, g)?,
                None => Tensor::zeros(&shape),
            };
            out.insert(name.clone(), g);
        }
        Ok(Gradients(out))
    }

    /// Recompute every node from its leaves and verify the stored values
    /// bit for bit. Used by tests to assert replay determinism.
    pub fn replay_check(&self) -> Result<()> {
        let mut replayed = Tape::new();
        for node in &self.nodes {
            let ins: Vec<ValueId> = node.inputs.iter().map(|&i| ValueId(i)).collect();
            let id = match &node.op {
                Op::Input => replayed.input(node.value.clone()),
                Op::Param(name) => replayed.param(name, node.value.clone())?,
                Op::Conv1d => replayed.conv1d(ins[0], ins[1], ins[2])?,
                Op::Relu => replayed.relu(ins[0]),
                Op::MaxPoolTime { .. } => replayed.maxpool_time(ins[0])?,
                Op::MaxPoolRows { group, .. } => replayed.maxpool_rows(ins[0], *group)?,
                Op::Dense { bias } => {
                    replayed.dense(ins[0], ins[1], bias.then(|| ins[2]))?
                }
                Op::BmmNT => replayed.bmm_nt(ins[0], ins[1])?,
                Op::BmmNN => replayed.bmm_nn(ins[0], ins[1])?,
                Op::TransposeLast2 => replayed.transpose_last2(ins[0])?,
                Op::SoftmaxLast => replayed.softmax_last(ins[0])?,
                Op::Scale(c) => replayed.scale(ins[0], *c),
                Op::Add => replayed.add(ins[0], ins[1])?,
                Op::AddTiledRows => replayed.add_tiled_rows(ins[0], ins[1])?,
                Op::ConcatCols => replayed.concat_cols(&ins)?,
                Op::Dropout { mask } => replayed.dropout(ins[0], mask.clone())?,
                Op::Reshape => replayed.reshape(ins[0], node.value.shape().to_vec())?,
                Op::Mse => replayed.mse(ins[0], ins[1])?,
            };
            if !bitwise_eq(replayed.value(id), &node.value) {
                return Err(Error::Numeric(format!(
                    "record replay mismatch at node {}",
                    id.0
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::rng::RngStream;

    /// Central finite differences of a scalar-valued closure with respect to
    /// one tensor argument.
    pub(crate) fn numeric_grad<F>(f: F, at: &Tensor, h: f64) -> Vec<f64>
    where
        F: Fn(&Tensor) -> f64,
    {
        let mut g = vec![0.0; at.len()];
        for i in 0..at.len() {
            let mut plus = at.clone();
            plus.data_mut()[i] += h;
            let mut minus = at.clone();
            minus.data_mut()[i] -= h;
            g[i] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        g
    }

    fn assert_grads_close(analytic: &[f64], numeric: &[f64]) {
        for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
            let err = (a - n).abs();
            let tol = 1e-4 * a.abs().max(n.abs()) + 1e-8;
            assert!(err <= tol, "grad[{i}]: analytic {a} vs numeric {n}");
        }
    }

    fn rand_tensor(rng: &mut RngStream, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_example() {
        // loss = w * x with x = 3: dL/dw = 3
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![1, 1], vec![3.0]).unwrap());
        let w = tape.param("w", Tensor::new(vec![1, 1], vec![2.0]).unwrap()).unwrap();
        let y = tape.dense(x, w, None).unwrap();
        let yv = tape.reshape(y, vec![1]).unwrap();
        let target = tape.input(Tensor::from_vec(vec![0.0]));
        // mse((wx), 0) = (wx)^2, d/dw = 2wx^2 = 2*2*9 = 36; use plain product instead:
        // take loss = w*x directly via reshape to scalar
        let loss = tape.reshape(yv, vec![]).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get("w").unwrap().data(), &[3.0]);
        drop(target);
    }

    #[test]
    fn constant_loss_gives_zero_grads() {
        let mut tape = Tape::new();
        let _w = tape.param("w", Tensor::from_vec(vec![1.0, 2.0])).unwrap();
        let c = tape.input(Tensor::scalar(5.0));
        let grads = tape.backward(c).unwrap();
        assert_eq!(grads.get("w").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::new();
        let v = tape.input(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(tape.backward(v).is_err());
    }

    #[test]
    fn dense_gradcheck() {
        let mut rng = RngStream::new(21, "gradcheck/dense");
        let x0 = rand_tensor(&mut rng, &[3, 4]);
        let w0 = rand_tensor(&mut rng, &[5, 4]);
        let b0 = rand_tensor(&mut rng, &[5]);
        let t0 = rand_tensor(&mut rng, &[15]);

        let run = |x: &Tensor, w: &Tensor, b: &Tensor| -> (f64, Gradients) {
            let mut tape = Tape::new();
            let xi = tape.param("x", x.clone()).unwrap();
            let wi = tape.param("w", w.clone()).unwrap();
            let bi = tape.param("b", b.clone()).unwrap();
            let y = tape.dense(xi, wi, Some(bi)).unwrap();
            let yr = tape.relu(y);
            let flat = tape.reshape(yr, vec![15]).unwrap();
            let tt = tape.input(t0.clone());
            let loss = tape.mse(flat, tt).unwrap();
            let l = tape.value(loss).item().unwrap();
            let g = tape.backward(loss).unwrap();
            (l, g)
        };

        let (_, grads) = run(&x0, &w0, &b0);
        let nx = numeric_grad(|x| run(x, &w0, &b0).0, &x0, 1e-5);
        let nw = numeric_grad(|w| run(&x0, w, &b0).0, &w0, 1e-5);
        let nb = numeric_grad(|b| run(&x0, &w0, b).0, &b0, 1e-5);
        assert_grads_close(grads.get("x").unwrap().data(), &nx);
        assert_grads_close(grads.get("w").unwrap().data(), &nw);
        assert_grads_close(grads.get("b").unwrap().data(), &nb);
    }

    #[test]
    fn conv_pool_gradcheck() {
        let mut rng = RngStream::new(22, "gradcheck/conv");
        let x0 = rand_tensor(&mut rng, &[2, 3, 6]);
        let k0 = rand_tensor(&mut rng, &[4, 3, 2]);
        let b0 = rand_tensor(&mut rng, &[4]);
        let t0 = rand_tensor(&mut rng, &[8]);

        let run = |x: &Tensor, k: &Tensor, b: &Tensor| -> (f64, Gradients) {
            let mut tape = Tape::new();
            let xi = tape.param("x", x.clone()).unwrap();
            let ki = tape.param("k", k.clone()).unwrap();
            let bi = tape.param("b", b.clone()).unwrap();
            let c = tape.conv1d(xi, ki, bi).unwrap();
            let r = tape.relu(c);
            let p = tape.maxpool_time(r).unwrap();
            let flat = tape.reshape(p, vec![8]).unwrap();
            let tt = tape.input(t0.clone());
            let loss = tape.mse(flat, tt).unwrap();
            (tape.value(loss).item().unwrap(), tape.backward(loss).unwrap())
        };

        let (_, grads) = run(&x0, &k0, &b0);
        assert_grads_close(
            grads.get("x").unwrap().data(),
            &numeric_grad(|x| run(x, &k0, &b0).0, &x0, 1e-5),
        );
        assert_grads_close(
            grads.get("k").unwrap().data(),
            &numeric_grad(|k| run(&x0, k, &b0).0, &k0, 1e-5),
        );
        assert_grads_close(
            grads.get("b").unwrap().data(),
            &numeric_grad(|b| run(&x0, &k0, b).0, &b0, 1e-5),
        );
    }

    #[test]
    fn attention_shape_ops_gradcheck() {
        // Chains bmm_nt, softmax, bmm_nn, transpose, concat and tiled add.
        let mut rng = RngStream::new(23, "gradcheck/attn");
        let q0 = rand_tensor(&mut rng, &[2, 3, 4]); // [B,S,d]
        let y0 = rand_tensor(&mut rng, &[2, 4, 5]); // [B,d_w=4? no: B, d, T]
        let t0 = rand_tensor(&mut rng, &[2 * 3 * 4]);

        let run = |q: &Tensor, y: &Tensor| -> (f64, Gradients) {
            let mut tape = Tape::new();
            let qi = tape.param("q", q.clone()).unwrap();
            let yi = tape.param("y", y.clone()).unwrap();
            let ys = tape.transpose_last2(yi).unwrap(); // [B,T=5,d=4]
            let scores = tape.bmm_nt(qi, ys).unwrap(); // [B,S,T]
            let scaled = tape.scale(scores, 0.5);
            let alpha = tape.softmax_last(scaled).unwrap();
            let ctx = tape.bmm_nn(alpha, ys).unwrap(); // [B,S,d]
            let flat = tape.reshape(ctx, vec![6, 4]).unwrap();
            let tiles = tape.input(Tensor::new(vec![3, 4], vec![0.25; 12]).unwrap());
            let tiled = tape.add_tiled_rows(flat, tiles).unwrap();
            let both = tape.concat_cols(&[tiled, flat]).unwrap();
            let pooled = tape.maxpool_rows(both, 3).unwrap();
            let flat2 = tape.reshape(tiled, vec![24]).unwrap();
            let tt = tape.input(t0.clone());
            let loss = tape.mse(flat2, tt).unwrap();
            drop(pooled);
            (tape.value(loss).item().unwrap(), tape.backward(loss).unwrap())
        };

        let (_, grads) = run(&q0, &y0);
        assert_grads_close(
            grads.get("q").unwrap().data(),
            &numeric_grad(|q| run(q, &y0).0, &q0, 1e-5),
        );
        assert_grads_close(
            grads.get("y").unwrap().data(),
            &numeric_grad(|y| run(&q0, y).0, &y0, 1e-5),
        );
    }

    #[test]
    fn maxpool_rows_gradcheck() {
        let mut rng = RngStream::new(24, "gradcheck/maxrows");
        let x0 = rand_tensor(&mut rng, &[6, 3]);
        let t0 = rand_tensor(&mut rng, &[6]);
        let run = |x: &Tensor| -> (f64, Gradients) {
            let mut tape = Tape::new();
            let xi = tape.param("x", x.clone()).unwrap();
            let p = tape.maxpool_rows(xi, 3).unwrap(); // [2,3]
            let flat = tape.reshape(p, vec![6]).unwrap();
            let tt = tape.input(t0.clone());
            let loss = tape.mse(flat, tt).unwrap();
            (tape.value(loss).item().unwrap(), tape.backward(loss).unwrap())
        };
        let (_, grads) = run(&x0);
        assert_grads_close(
            grads.get("x").unwrap().data(),
            &numeric_grad(|x| run(x).0, &x0, 1e-5),
        );
    }

    #[test]
    fn replay_reproduces_bitwise() {
        let mut rng = RngStream::new(25, "replay");
        let x = rand_tensor(&mut rng, &[2, 3, 7]);
        let k = rand_tensor(&mut rng, &[4, 3, 3]);
        let b = rand_tensor(&mut rng, &[4]);
        let mut tape = Tape::new();
        let xi = tape.input(x);
        let ki = tape.param("k", k).unwrap();
        let bi = tape.param("b", b).unwrap();
        let c = tape.conv1d(xi, ki, bi).unwrap();
        let r = tape.relu(c);
        let p = tape.maxpool_time(r).unwrap();
        let s = tape.softmax_last(p).unwrap();
        let _ = s;
        tape.replay_check().unwrap();
    }

    #[test]
    fn duplicate_param_rejected() {
        let mut tape = Tape::new();
        tape.param("w", Tensor::scalar(1.0)).unwrap();
        assert!(tape.param("w", Tensor::scalar(2.0)).is_err());
    }
}
