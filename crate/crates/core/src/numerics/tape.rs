//! Define-by-run reverse-mode differentiation.
//!
//! Every operation appends a node to the [`Tape`]; nodes only reference
//! earlier nodes, so the tape order is already a topological order and
//! [`Tape::backward`] is a single reverse sweep that visits each node once.

use std::sync::Arc;

use rand::Rng;

use super::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout {
        x: Var,
        keep: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    MeanRows {
        x: Var,
        rows: Vec<usize>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        gold: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn as_matrix(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
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

    /// A differentiable input (parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated by the last [`Tape::backward`]; zeros when the
    /// node was not reached.
    pub fn grad(&self, v: Var) -> Tensor {
        let shape = self.nodes[v.0].value.shape().to_vec();
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::new(shape, g.clone()).expect("grad shape"),
            None => Tensor::zeros(shape),
        }
    }

    fn matrix_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let t = &self.nodes[v.0].value;
        if t.shape().len() != 2 {
            return Err(Error::shape(op, t.shape(), &[0, 0]));
        }
        Ok(as_matrix(t))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, p) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * p];
        gemm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, p);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::matrix(m, p, out)?, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims("matmul_nt", a)?;
        let (p, k2) = self.matrix_dims("matmul_nt", b)?;
        if k != k2 {
            return Err(Error::shape("matmul_nt", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * p];
        gemm_nt(self.value(a).data(), self.value(b).data(), &mut out, m, k, p);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::matrix(m, p, out)?, Op::MatMulNT(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("add", self.shape(a), self.shape(b)));
        }
        let out: Vec<f64> = (self.value(a).data().iter())
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Adds the vector `bias` to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("add_row", x)?;
        if self.value(bias).len() != n {
            return Err(Error::shape("add_row", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(n.max(1)).take(m) {
            for (o, bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push(value, Op::AddRow(x, bias), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("mul", self.shape(a), self.shape(b)));
        }
        let out: Vec<f64> = (self.value(a).data().iter())
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).map(|v| v * s);
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Scale(x, s), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Sum(x), rg)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(gelu);
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Gelu(x), rg)
    }

    /// Row-wise softmax, stabilized by the row maximum.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, None)
    }

    /// Row-wise softmax where entry `(i, j)` takes part only if
    /// `allowed[i * cols + j]`. Excluded entries behave as a score of −∞ and
    /// get probability exactly zero.
    pub fn masked_softmax_rows(&mut self, x: Var, allowed: &Arc<[bool]>) -> Result<Var> {
        self.softmax_impl(x, Some(allowed))
    }

    fn softmax_impl(&mut self, x: Var, allowed: Option<&Arc<[bool]>>) -> Result<Var> {
        let (m, n) = self.matrix_dims("softmax_rows", x)?;
        if let Some(mask) = allowed {
            if mask.len() != m * n {
                return Err(Error::shape("masked_softmax_rows", &[m, n], &[mask.len()]));
            }
        }
        let src = self.value(x).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let keep = |j: usize| allowed.is_none_or(|mask| mask[i * n + j]);
            let row = &src[i * n..(i + 1) * n];
            let max = (0..n)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if !(0..n).any(keep) {
                return Err(Error::Graph(format!("softmax row {i} has no admissible entry")));
            }
            let dst = &mut out[i * n..(i + 1) * n];
            let mut total = 0.0;
            for j in 0..n {
                if keep(j) {
                    dst[j] = (row[j] - max).exp();
                    total += dst[j];
                }
            }
            for v in dst.iter_mut() {
                *v /= total;
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Softmax(x), rg))
    }

    /// Row-wise layer normalization with learned `gain` and `bias` vectors.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let (m, h) = self.matrix_dims("layer_norm", x)?;
        if self.value(gain).len() != h {
            return Err(Error::shape("layer_norm", self.shape(x), self.shape(gain)));
        }
        if self.value(bias).len() != h {
            return Err(Error::shape("layer_norm", self.shape(x), self.shape(bias)));
        }
        let src = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![0.0; m * h];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * h];
        for i in 0..m {
            let row = &src[i * h..(i + 1) * h];
            let mean = row.iter().sum::<f64>() / h as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[i] = inv;
            for j in 0..h {
                let n = (row[j] - mean) * inv;
                xhat[i * h + j] = n;
                out[i * h + j] = g[j] * n + b[j];
            }
        }
        let value = Tensor::matrix(m, h, out)?;
        let rg = self.any_grad(&[x, gain, bias]);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Inverted dropout. Rate 0 returns `x` itself.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - rate);
        let keep: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() >= rate { scale } else { 0.0 })
            .collect();
        let out: Vec<f64> = (self.value(x).data().iter())
            .zip(&keep)
            .map(|(v, k)| v * k)
            .collect();
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Dropout { x, keep }, rg))
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Config("concat_cols of nothing".into()))?;
        let m = self.matrix_dims("concat_cols", first)?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix_dims("concat_cols", p)?;
            if r != m {
                return Err(Error::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; m * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for i in 0..m {
                out[i * total + offset..i * total + offset + w]
                    .copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let value = Tensor::matrix(m, total, out)?;
        let rg = self.any_grad(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Config("concat_rows of nothing".into()))?;
        let n = self.matrix_dims("concat_rows", first)?.1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.matrix_dims("concat_rows", p)?;
            if c != n {
                return Err(Error::shape("concat_rows", self.shape(first), self.shape(p)));
            }
            out.extend_from_slice(self.value(p).data());
            rows += r;
        }
        let value = Tensor::matrix(rows, n, out)?;
        let rg = self.any_grad(parts);
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Columns `[start, start + width)` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims("slice_cols", x)?;
        if start + width > n {
            return Err(Error::shape("slice_cols", self.shape(x), &[start, start + width]));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * width);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + width]);
        }
        let value = Tensor::matrix(m, width, out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::SliceCols { x, start }, rg))
    }

    /// Mean of the listed rows, as a `1×n` matrix. Repeated indices count
    /// with multiplicity.
    pub fn mean_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (m, n) = self.matrix_dims("mean_rows", x)?;
        if rows.is_empty() {
            return Err(Error::Config("mean over an empty row subset".into()));
        }
        let src = self.value(x).data();
        let mut out = vec![0.0; n];
        for &r in rows {
            if r >= m {
                return Err(Error::Index {
                    what: "mean_rows row",
                    index: r,
                    len: m,
                });
            }
            for (o, v) in out.iter_mut().zip(&src[r * n..(r + 1) * n]) {
                *o += v;
            }
        }
        let count = rows.len() as f64;
        for o in &mut out {
            *o /= count;
        }
        let value = Tensor::matrix(1, n, out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(
            value,
            Op::MeanRows {
                x,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (m, n) = self.matrix_dims("gather_rows", table)?;
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * n);
        for &id in ids {
            if id >= m {
                return Err(Error::Index {
                    what: "gather_rows id",
                    index: id,
                    len: m,
                });
            }
            out.extend_from_slice(&src[id * n..(id + 1) * n]);
        }
        let value = Tensor::matrix(ids.len(), n, out)?;
        let rg = self.any_grad(&[table]);
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Mean negative log-likelihood of `gold` under row-wise softmax of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, gold: &[usize]) -> Result<Var> {
        let (b, l) = self.matrix_dims("cross_entropy", logits)?;
        if gold.len() != b {
            return Err(Error::shape("cross_entropy", self.shape(logits), &[gold.len()]));
        }
        if b == 0 {
            return Err(Error::Config("cross_entropy over an empty batch".into()));
        }
        let src = self.value(logits).data();
        let mut probs = vec![0.0; b * l];
        let mut loss = 0.0;
        for (i, &g) in gold.iter().enumerate() {
            if g >= l {
                return Err(Error::Index {
                    what: "gold label",
                    index: g,
                    len: l,
                });
            }
            let row = &src[i * l..(i + 1) * l];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + total.ln();
            for j in 0..l {
                probs[i * l + j] = (row[j] - log_z).exp();
            }
            loss += log_z - row[g];
        }
        let value = Tensor::scalar(loss / b as f64);
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                gold: gold.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar node, seeding its gradient with 1.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        self.backward_scaled(root, 1.0)
    }

    /// Reverse sweep from a scalar node with gradient seed `seed`.
    pub fn backward_scaled(&mut self, root: Var, seed: f64) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::shape("backward", self.shape(root), &[1]));
        }
        self.grads = vec![None; self.nodes.len()];
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        self.grads[root.0] = Some(vec![seed]);
        for i in (0..=root.0).rev() {
            let (before, rest) = self.grads.split_at_mut(i);
            let Some(g) = rest[0].as_deref() else {
                continue;
            };
            propagate(&self.nodes, i, g, before);
        }
        Ok(())
    }
}

/// Grad buffer of `v`, created on first use; `None` when `v` needs no gradient.
fn slot<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut [f64]> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
}

fn propagate(nodes: &[Node], i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[i];
    let val = |v: Var| &nodes[v.0].value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = as_matrix(val(*a));
            let p = val(*b).cols();
            if let Some(da) = slot(nodes, grads, *a) {
                gemm_nt(g, val(*b).data(), da, m, p, k);
            }
            if let Some(db) = slot(nodes, grads, *b) {
                gemm_tn(val(*a).data(), g, db, m, k, p);
            }
        }
        Op::MatMulNT(a, b) => {
            let (m, k) = as_matrix(val(*a));
            let p = val(*b).rows();
            if let Some(da) = slot(nodes, grads, *a) {
                gemm_nn(g, val(*b).data(), da, m, p, k);
            }
            if let Some(db) = slot(nodes, grads, *b) {
                gemm_tn(g, val(*a).data(), db, m, p, k);
            }
        }
        Op::Add(a, b) => {
            for v in [a, b] {
                if let Some(d) = slot(nodes, grads, *v) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
            }
        }
        Op::AddRow(x, bias) => {
            if let Some(dx) = slot(nodes, grads, *x) {
                dx.iter_mut().zip(g).for_each(|(d, g)| *d += g);
            }
            if let Some(db) = slot(nodes, grads, *bias) {
                let n = db.len();
                for row in g.chunks(n.max(1)) {
                    db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                }
            }
        }
        Op::Mul(a, b) => {
            if let Some(da) = slot(nodes, grads, *a) {
                for ((d, g), y) in da.iter_mut().zip(g).zip(val(*b).data()) {
                    *d += g * y;
                }
            }
            if let Some(db) = slot(nodes, grads, *b) {
                for ((d, g), x) in db.iter_mut().zip(g).zip(val(*a).data()) {
                    *d += g * x;
                }
            }
        }
        Op::Scale(x, s) => {
            if let Some(dx) = slot(nodes, grads, *x) {
                dx.iter_mut().zip(g).for_each(|(d, g)| *d += s * g);
            }
        }
        Op::Sum(x) => {
            if let Some(dx) = slot(nodes, grads, *x) {
                dx.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Gelu(x) => {
            if let Some(dx) = slot(nodes, grads, *x) {
                for ((d, g), v) in dx.iter_mut().zip(g).zip(val(*x).data()) {
                    *d += g * gelu_grad(*v);
                }
            }
        }
        Op::Softmax(x) => {
            if let Some(dx) = slot(nodes, grads, *x) {
                let y = node.value.data();
                let n = node.value.cols();
                for i in 0..node.value.rows() {
                    let ys = &y[i * n..(i + 1) * n];
                    let gs = &g[i * n..(i + 1) * n];
                    let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        dx[i * n + j] += ys[j] * (gs[j] - dot);
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let h = node.value.cols();
            let m = node.value.rows();
            if let Some(dgain) = slot(nodes, grads, *gain) {
                for i in 0..m {
                    for j in 0..h {
                        dgain[j] += g[i * h + j] * xhat[i * h + j];
                    }
                }
            }
            if let Some(dbias) = slot(nodes, grads, *bias) {
                for row in g.chunks(h.max(1)) {
                    dbias.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                }
            }
            if let Some(dx) = slot(nodes, grads, *x) {
                let gamma = val(*gain).data();
                let hf = h as f64;
                let mut dxhat = vec![0.0; h];
                for i in 0..m {
                    let xh = &xhat[i * h..(i + 1) * h];
                    for j in 0..h {
                        dxhat[j] = g[i * h + j] * gamma[j];
                    }
                    let sum: f64 = dxhat.iter().sum();
                    let dot: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
                    for j in 0..h {
                        dx[i * h + j] += inv_std[i] / hf * (hf * dxhat[j] - sum - xh[j] * dot);
                    }
                }
            }
        }
        Op::Dropout { x, keep } => {
            if let Some(dx) = slot(nodes, grads, *x) {
                for ((d, g), k) in dx.iter_mut().zip(g).zip(keep) {
                    *d += g * k;
                }
            }
        }
        Op::ConcatCols(parts) => {
            let total = node.value.cols();
            let m = node.value.rows();
            let mut offset = 0;
            for p in parts {
                let w = val(*p).cols();
                if let Some(dp) = slot(nodes, grads, *p) {
                    for i in 0..m {
                        let src = &g[i * total + offset..i * total + offset + w];
                        dp[i * w..(i + 1) * w]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, g)| *d += g);
                    }
                }
                offset += w;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for p in parts {
                let len = val(*p).len();
                if let Some(dp) = slot(nodes, grads, *p) {
                    dp.iter_mut()
                        .zip(&g[offset..offset + len])
                        .for_each(|(d, g)| *d += g);
                }
                offset += len;
            }
        }
        Op::SliceCols { x, start } => {
            let n = val(*x).cols();
            let w = node.value.cols();
            if let Some(dx) = slot(nodes, grads, *x) {
                for i in 0..node.value.rows() {
                    dx[i * n + start..i * n + start + w]
                        .iter_mut()
                        .zip(&g[i * w..(i + 1) * w])
                        .for_each(|(d, g)| *d += g);
                }
            }
        }
        Op::MeanRows { x, rows } => {
            let n = node.value.cols();
            let scale = 1.0 / rows.len() as f64;
            if let Some(dx) = slot(nodes, grads, *x) {
                for &r in rows {
                    dx[r * n..(r + 1) * n]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(d, g)| *d += g * scale);
                }
            }
        }
        Op::Gather { table, ids } => {
            let n = node.value.cols();
            if let Some(dt) = slot(nodes, grads, *table) {
                for (t, &id) in ids.iter().enumerate() {
                    dt[id * n..(id + 1) * n]
                        .iter_mut()
                        .zip(&g[t * n..(t + 1) * n])
                        .for_each(|(d, g)| *d += g);
                }
            }
        }
        Op::CrossEntropy {
            logits,
            gold,
            probs,
        } => {
            if let Some(dl) = slot(nodes, grads, *logits) {
                let l = val(*logits).cols();
                let scale = g[0] / gold.len() as f64;
                for (i, &gi) in gold.iter().enumerate() {
                    for j in 0..l {
                        let onehot = if j == gi { 1.0 } else { 0.0 };
                        dl[i * l + j] += scale * (probs[i * l + j] - onehot);
                    }
                }
            }
        }
    }
}
