//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is an append-only tape. Every operation evaluates eagerly,
//! stores its result as a new node and records its parents. Node ids are
//! handed out as [`Var`] handles, so creation order is a topological order
//! and [`Graph::backward`] simply walks the tape in reverse.
//!
//! Graphs are single-use: build one per loss evaluation, call `backward`
//! (repeat calls accumulate into leaf gradients), read gradients, drop it.
//!
//! Broadcasting is limited to scalar-by-tensor ([`Graph::scale`]). Row
//! broadcasts are written as outer products, e.g. `matmul(ones[n×1], μ[1×d])`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    Scale(Var, Var),
    Exp(Var),
    Log(Var, f64),
    Sigmoid(Var),
    Relu(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Concat(Vec<Var>, Axis),
    Slice(Var, Axis, usize),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    SoftmaxRows(Var),
    L2Norm(Var),
    L2NormRows(Var),
    BatchMean(Var),
    BatchVar(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// The tape.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// `c[m×n] += a[m×k] · b[k×n]`.
fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

fn transpose_data(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if `backward` reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("shape preserved");
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        same_shape(name, av, bv)?;
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar(x))
    }

    pub fn mul_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::MulScalar(x, c))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.mul_scalar(x, -1.0)
    }

    /// `x * s` where `s` is a one-element node.
    pub fn scale(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = &self.nodes[s.0].value;
        if sv.len() != 1 {
            return Err(Error::Rank {
                op: "scale",
                expected: 0,
                shape: sv.shape().to_vec(),
            });
        }
        let c = sv.item();
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|v| v * c).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(value, Op::Scale(x, s), rg))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, math::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.log_floored(x, 0.0)
    }

    /// `log(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn log_floored(&mut self, x: Var, floor: f64) -> Var {
        self.unary(x, |v| math::ln(v.max(floor)), Op::Log(x, floor))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, math::sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(x))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = av.dims2("matmul")?;
        let (k2, n) = bv.dims2("matmul")?;
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(av.data(), bv.data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (r, c) = xv.dims2("transpose")?;
        let data = transpose_data(xv.data(), r, c);
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(c, r, data)?, Op::Transpose(x), rg))
    }

    /// Concatenates matrices along `axis`.
    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = parts.first().ok_or(Error::Rank {
            op: "concat",
            expected: 2,
            shape: Vec::new(),
        })?;
        let (r0, c0) = self.nodes[first.0].value.dims2("concat")?;
        let mut dims = Vec::with_capacity(parts.len());
        for p in parts {
            let v = &self.nodes[p.0].value;
            let (r, c) = v.dims2("concat")?;
            let ok = match axis {
                Axis::Rows => c == c0,
                Axis::Cols => r == r0,
            };
            if !ok {
                return Err(Error::Dimension {
                    op: "concat",
                    left: vec![r0, c0],
                    right: vec![r, c],
                });
            }
            dims.push((r, c));
        }
        let (out, shape) = match axis {
            Axis::Rows => {
                let rows: usize = dims.iter().map(|d| d.0).sum();
                let mut out = Vec::with_capacity(rows * c0);
                for p in parts {
                    out.extend_from_slice(self.nodes[p.0].value.data());
                }
                (out, [rows, c0])
            }
            Axis::Cols => {
                let cols: usize = dims.iter().map(|d| d.1).sum();
                let mut out = Vec::with_capacity(r0 * cols);
                for r in 0..r0 {
                    for p in parts {
                        out.extend_from_slice(self.nodes[p.0].value.row_slice(r));
                    }
                }
                (out, [r0, cols])
            }
        };
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(
            Tensor::new(shape.to_vec(), out)?,
            Op::Concat(parts.to_vec(), axis),
            rg,
        ))
    }

    /// `len` rows (or columns) of a matrix starting at `start`.
    pub fn slice(&mut self, x: Var, axis: Axis, start: usize, len: usize) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (r, c) = xv.dims2("slice")?;
        let limit = match axis {
            Axis::Rows => r,
            Axis::Cols => c,
        };
        if start + len > limit || len == 0 {
            return Err(Error::Dimension {
                op: "slice",
                left: vec![r, c],
                right: vec![start, len],
            });
        }
        let (data, shape) = match axis {
            Axis::Rows => (xv.data()[start * c..(start + len) * c].to_vec(), [len, c]),
            Axis::Cols => {
                let mut out = Vec::with_capacity(r * len);
                for row in 0..r {
                    out.extend_from_slice(&xv.row_slice(row)[start..start + len]);
                }
                (out, [r, len])
            }
        };
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(shape.to_vec(), data)?,
            Op::Slice(x, axis, start),
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.nodes[x.0].value.reshaped(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let s: f64 = xv.data().iter().sum();
        let m = s / xv.len() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    /// Column means of an `m × n` matrix as a `1 × n` row.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (r, c) = xv.dims2("mean_rows")?;
        let mut out = vec![0.0; c];
        for row in 0..r {
            for (o, v) in out.iter_mut().zip(xv.row_slice(row)) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::row(out), Op::MeanRows(x), rg))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (r, c) = xv.dims2("softmax_rows")?;
        let mut out = Vec::with_capacity(r * c);
        for row in 0..r {
            let vals = xv.row_slice(row);
            let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let start = out.len();
            let mut total = 0.0;
            for &v in vals {
                let e = math::exp(v - max);
                total += e;
                out.push(e);
            }
            for o in &mut out[start..] {
                *o /= total;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::SoftmaxRows(x), rg))
    }

    /// Euclidean norm of all entries. The gradient at zero is defined as zero.
    pub fn l2_norm(&mut self, x: Var) -> Var {
        let n = math::sqrt(self.nodes[x.0].value.data().iter().map(|v| v * v).sum());
        let rg = self.rg(x);
        self.push(Tensor::scalar(n), Op::L2Norm(x), rg)
    }

    /// Per-row Euclidean norms of an `m × n` matrix as an `m × 1` column.
    pub fn l2_norm_rows(&mut self, x: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (r, _) = xv.dims2("l2_norm_rows")?;
        let out = (0..r)
            .map(|row| math::sqrt(xv.row_slice(row).iter().map(|v| v * v).sum()))
            .collect();
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(r, 1, out)?, Op::L2NormRows(x), rg))
    }

    /// Per-column mean and biased (divide-by-n) variance of an `n × d`
    /// batch, each returned with shape `[d]`.
    pub fn batch_stats(&mut self, x: Var) -> Result<(Var, Var)> {
        let xv = &self.nodes[x.0].value;
        let (n, d) = xv.dims2("batch_stats")?;
        if n < 2 {
            return Err(Error::InsufficientBatch {
                op: "batch_stats",
                rows: n,
            });
        }
        let (mean, var) = column_moments(xv.data(), n, d);
        let rg = self.rg(x);
        let m = self.push(Tensor::vector(mean), Op::BatchMean(x), rg);
        let v = self.push(Tensor::vector(var), Op::BatchVar(x), rg);
        Ok((m, v))
    }

    /// Reverse pass from a one-element `loss`, accumulating into every
    /// gradient-tracking leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(Error::Rank {
                op: "backward",
                expected: 0,
                shape: lv.shape().to_vec(),
            });
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match &mut self.grads[i] {
                    Some(acc) => {
                        for (a, v) in acc.data_mut().iter_mut().zip(&g) {
                            *a += v;
                        }
                    }
                    slot @ None => {
                        *slot = Some(Tensor::new(node.value.shape().to_vec(), g)?);
                    }
                }
                continue;
            }
            self.propagate(i, &g, &mut adj)?;
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) -> Result<()> {
        let nodes = &self.nodes;
        let node = &nodes[i];
        let y = node.value.data();

        // Adds `f(k)` into the adjoint of `v` for every element k.
        let mut acc = |v: Var, f: &dyn Fn(usize) -> f64| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let n = nodes[v.0].value.len();
            let slot = adj[v.0].get_or_insert_with(|| vec![0.0; n]);
            for (k, s) in slot.iter_mut().enumerate() {
                *s += f(k);
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &|k| g[k]);
                acc(*b, &|k| g[k]);
            }
            Op::Sub(a, b) => {
                acc(*a, &|k| g[k]);
                acc(*b, &|k| -g[k]);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                acc(*a, &|k| g[k] * bv[k]);
                acc(*b, &|k| g[k] * av[k]);
            }
            Op::AddScalar(x) => acc(*x, &|k| g[k]),
            Op::MulScalar(x, c) => acc(*x, &|k| g[k] * c),
            Op::Scale(x, s) => {
                let c = nodes[s.0].value.item();
                let xv = nodes[x.0].value.data();
                acc(*x, &|k| g[k] * c);
                let ds: f64 = g.iter().zip(xv).map(|(a, b)| a * b).sum();
                acc(*s, &|_| ds);
            }
            Op::Exp(x) => acc(*x, &|k| g[k] * y[k]),
            Op::Log(x, floor) => {
                let xv = nodes[x.0].value.data();
                acc(*x, &|k| if xv[k] >= *floor { g[k] / xv[k] } else { 0.0 });
            }
            Op::Sigmoid(x) => acc(*x, &|k| g[k] * y[k] * (1.0 - y[k])),
            Op::Relu(x) => {
                let xv = nodes[x.0].value.data();
                acc(*x, &|k| if xv[k] > 0.0 { g[k] } else { 0.0 });
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, kk) = av.dims2("matmul")?;
                let n = bv.shape()[1];
                if nodes[a.0].requires_grad {
                    // dA = G · Bᵀ
                    let bt = transpose_data(bv.data(), kk, n);
                    let mut da = vec![0.0; m * kk];
                    gemm_acc(g, &bt, &mut da, m, n, kk);
                    acc(*a, &|k| da[k]);
                }
                if nodes[b.0].requires_grad {
                    // dB = Aᵀ · G
                    let at = transpose_data(av.data(), m, kk);
                    let mut db = vec![0.0; kk * n];
                    gemm_acc(&at, g, &mut db, kk, m, n);
                    acc(*b, &|k| db[k]);
                }
            }
            Op::Transpose(x) => {
                let (r, c) = nodes[x.0].value.dims2("transpose")?;
                let gt = transpose_data(g, c, r);
                acc(*x, &|k| gt[k]);
            }
            Op::Concat(parts, axis) => {
                let (_, total_cols) = node.value.dims2("concat")?;
                let mut offset = 0;
                for p in parts {
                    let (r, c) = nodes[p.0].value.dims2("concat")?;
                    match axis {
                        Axis::Rows => {
                            let base = offset * total_cols;
                            acc(*p, &|k| g[base + k]);
                            offset += r;
                        }
                        Axis::Cols => {
                            let off = offset;
                            acc(*p, &|k| g[(k / c) * total_cols + off + k % c]);
                            offset += c;
                        }
                    }
                }
            }
            Op::Slice(x, axis, start) => {
                let (r, c) = nodes[x.0].value.dims2("slice")?;
                let (sr, sc) = node.value.dims2("slice")?;
                let start = *start;
                match axis {
                    Axis::Rows => acc(*x, &|k| {
                        let row = k / c;
                        if row >= start && row < start + sr {
                            g[k - start * c]
                        } else {
                            0.0
                        }
                    }),
                    Axis::Cols => acc(*x, &|k| {
                        let (row, col) = (k / c, k % c);
                        if col >= start && col < start + sc {
                            g[row * sc + col - start]
                        } else {
                            0.0
                        }
                    }),
                }
                let _ = r;
            }
            Op::Reshape(x) => acc(*x, &|k| g[k]),
            Op::Sum(x) => acc(*x, &|_| g[0]),
            Op::Mean(x) => {
                let n = nodes[x.0].value.len() as f64;
                acc(*x, &|_| g[0] / n);
            }
            Op::MeanRows(x) => {
                let (r, c) = nodes[x.0].value.dims2("mean_rows")?;
                acc(*x, &|k| g[k % c] / r as f64);
            }
            Op::SoftmaxRows(x) => {
                let (_, c) = node.value.dims2("softmax_rows")?;
                let dots: Vec<f64> = y
                    .chunks(c)
                    .zip(g.chunks(c))
                    .map(|(yr, gr)| yr.iter().zip(gr).map(|(a, b)| a * b).sum())
                    .collect();
                acc(*x, &|k| y[k] * (g[k] - dots[k / c]));
            }
            Op::L2Norm(x) => {
                let norm = y[0];
                let xv = nodes[x.0].value.data();
                acc(*x, &|k| if norm > 0.0 { g[0] * xv[k] / norm } else { 0.0 });
            }
            Op::L2NormRows(x) => {
                let (_, c) = nodes[x.0].value.dims2("l2_norm_rows")?;
                let xv = nodes[x.0].value.data();
                acc(*x, &|k| {
                    let norm = y[k / c];
                    if norm > 0.0 {
                        g[k / c] * xv[k] / norm
                    } else {
                        0.0
                    }
                });
            }
            Op::BatchMean(x) => {
                let (n, d) = nodes[x.0].value.dims2("batch_stats")?;
                acc(*x, &|k| g[k % d] / n as f64);
            }
            Op::BatchVar(x) => {
                let xv = &nodes[x.0].value;
                let (n, d) = xv.dims2("batch_stats")?;
                let (mean, _) = column_moments(xv.data(), n, d);
                let xd = xv.data();
                acc(*x, &|k| {
                    let j = k % d;
                    2.0 * g[j] * (xd[k] - mean[j]) / n as f64
                });
            }
        }
        Ok(())
    }
}

/// Per-column mean and biased variance of a row-major `n × d` block,
/// accumulated row by row in a fixed order.
pub(crate) fn column_moments(x: &[f64], n: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; d];
    for row in x.chunks(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for row in x.chunks(d) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let dv = v - m;
            *s += dv * dv;
        }
    }
    for s in &mut var {
        *s /= n as f64;
    }
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn matmul_identity_and_dot() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::identity(2));
        let m = g.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let p = g.matmul(i, m).unwrap();
        assert_eq!(g.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);

        let a = g.constant(Tensor::row(vec![1.0, 2.0]));
        let b = g.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            Error::Dimension {
                op: "matmul",
                left: vec![2, 3],
                right: vec![2, 3]
            }
        );
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(2, 3, vec![0.0, 0.0, 0.0, 1000.0, 0.0, 0.0]).unwrap());
        let s = g.softmax_rows(x).unwrap();
        let v = g.value(s).data();
        for k in 0..3 {
            assert!((v[k] - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((v[3] - 1.0).abs() < 1e-15);
        assert!(v[4] < 1e-300 && v[5] < 1e-300);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn l2_norm_values_and_zero_subgradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![3.0, 4.0]));
        let n = g.l2_norm(x);
        assert_eq!(g.value(n).item(), 5.0);

        let z = g.param(Tensor::vector(vec![0.0, 0.0]));
        let nz = g.l2_norm(z);
        assert_eq!(g.value(nz).item(), 0.0);
        g.backward(nz).unwrap();
        assert_eq!(g.grad(z).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn batch_stats_small_cases() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(2, 2, vec![0.0, 0.0, 2.0, 2.0]).unwrap());
        let (m, v) = g.batch_stats(x).unwrap();
        assert_eq!(g.value(m).data(), &[1.0, 1.0]);
        assert_eq!(g.value(v).data(), &[1.0, 1.0]);

        let c = g.constant(Tensor::full(&[5, 3], 2.5));
        let (_, v) = g.batch_stats(c).unwrap();
        assert_eq!(g.value(v).data(), &[0.0, 0.0, 0.0]);

        let one = g.constant(Tensor::zeros(&[1, 3]));
        assert_eq!(
            g.batch_stats(one).unwrap_err(),
            Error::InsufficientBatch {
                op: "batch_stats",
                rows: 1
            }
        );
    }

    #[test]
    fn backward_simple_rules() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0]);

        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0]);
        // A second call accumulates.
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[4.0, 8.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Rank { .. })));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let x = g.param(Tensor::vector(vec![3.0, 4.0]));
        let p = g.mul(c, x).unwrap();
        let s = g.sum(p);
        g.backward(s).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 2.0]);
    }
}
