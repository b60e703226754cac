//! Tape-based reverse-mode differentiation over 2-D tensors.
//!
//! Every node is a `rows × cols` matrix; vectors are `1 × n` and scalars
//! `1 × 1`. Shapes are checked when an op is recorded, never during
//! `backward`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{self, Tensor};
use crate::error::{Error, Result};
use crate::math;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// matrix + row vector broadcast over rows
    AddRow(Var, Var),
    /// matrix ⊙ row vector broadcast over rows
    MulRow(Var, Var),
    /// row vector repeated `n` times
    RepeatRows(Var),
    Scale(Var, f64),
    /// matrix · scalar node
    ScaleBy(Var, Var),
    Sum(Var),
    Mean(Var),
    Square(Var),
    Exp(Var),
    Relu(Var),
    Gelu(Var),
    Silu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    LogSoftmax(Var),
    /// standardise each row; cached inverse std per row
    Normalize(Var, Vec<f64>),
    /// `x / ‖x‖` per row; cached norms
    L2Rows(Var, Vec<f64>),
    /// weighted mean over rows, weights sum cached
    MaskedMean(Var, Vec<f64>, f64),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Transpose(Var),
    Diag(Var),
    /// `out[i][j] = table[head][clip(i − j) + max_dist]`
    RelBias {
        table: Var,
        head: usize,
        max_dist: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamId>,
}

/// Recorded computation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)

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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// Constant input (no gradient is collected for it).
    pub fn constant(&mut self, t: Tensor) -> Var {
        let (r, c) = (t.rows(), t.cols());
        let t = Tensor::matrix(r, c, t.into_data()).expect("rows·cols = len");
        self.push(t, Op::Leaf)
    }

    pub fn matrix(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        Ok(self.constant(Tensor::matrix(rows, cols, data)?))
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.param_nodes.len() <= id.0 {
            self.param_nodes.resize(id.0 + 1, None);
        }
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let t = store.get(id);
        let value = Tensor::matrix(t.rows(), t.cols(), t.data().to_vec()).expect("param shape");
        let v = self.push(value, Op::Leaf);
        self.nodes[v.0].param = Some(id);
        self.param_nodes[id.0] = Some(v);
        v
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(Error::Shape(format!("{what}: {da:?} vs {db:?}")));
        }
        Ok(da)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.dims(a);
        let data = self.data(a).iter().map(|x| f(*x)).collect();
        self.push(Tensor::matrix(r, c, data).expect("shape"), op)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, what: &str) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, what)?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        Ok(self.push(Tensor::matrix(r, c, data)?, op))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (k2, n)) = (self.dims(a), self.dims(b));
        if k != k2 {
            return Err(Error::Shape(format!("matmul {m}×{k} · {k2}×{n}")));
        }
        let out = tensor::matmul(self.data(a), self.data(b), m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (n, k2)) = (self.dims(a), self.dims(b));
        if k != k2 {
            return Err(Error::Shape(format!("matmul_bt {m}×{k} · ({n}×{k2})ᵀ")));
        }
        let out = tensor::matmul_bt(self.data(a), self.data(b), m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulBt(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    fn row_broadcast(&self, a: Var, row: Var, what: &str) -> Result<(usize, usize)> {
        let ((r, c), (rr, rc)) = (self.dims(a), self.dims(row));
        if rr != 1 || rc != c {
            return Err(Error::Shape(format!("{what}: {r}×{c} with row {rr}×{rc}")));
        }
        Ok((r, c))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.row_broadcast(a, row, "add_row")?;
        let b = self.data(row);
        let data = self
            .data(a)
            .chunks(c)
            .flat_map(|chunk| chunk.iter().zip(b).map(|(x, y)| x + y))
            .collect();
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::AddRow(a, row)))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.row_broadcast(a, row, "mul_row")?;
        let b = self.data(row);
        let data = self
            .data(a)
            .chunks(c)
            .flat_map(|chunk| chunk.iter().zip(b).map(|(x, y)| x * y))
            .collect();
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::MulRow(a, row)))
    }

    pub fn repeat_rows(&mut self, row: Var, n: usize) -> Result<Var> {
        let (rr, c) = self.dims(row);
        if rr != 1 {
            return Err(Error::Shape(format!("repeat_rows needs a row vector, got {rr}×{c}")));
        }
        let data = self.data(row).repeat(n);
        Ok(self.push(Tensor::matrix(n, c, data)?, Op::RepeatRows(row)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.dims(s) != (1, 1) {
            return Err(Error::Shape(format!("scale_by needs a scalar, got {:?}", self.dims(s))));
        }
        let k = self.data(s)[0];
        Ok(self.map(a, |x| x * k, Op::ScaleBy(a, s)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = math::pairwise_sum(self.data(a));
        self.push(Tensor::scalar_matrix(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let d = self.data(a);
        let s = math::pairwise_sum(d) / d.len() as f64;
        self.push(Tensor::scalar_matrix(s), Op::Mean(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, math::exp, Op::Exp(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        self.map(
            a,
            |x| 0.5 * x * (1.0 + math::tanh(GELU_C * (x + 0.044715 * x * x * x))),
            Op::Gelu(a),
        )
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.map(a, |x| x * math::sigmoid(x), Op::Silu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, math::sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, math::tanh, Op::Tanh(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let mut out = Vec::with_capacity(r * c);
        for row in self.data(a).chunks(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = out.len();
            let mut z = 0.0;
            for x in row {
                let e = math::exp(x - m);
                z += e;
                out.push(e);
            }
            for v in &mut out[start..] {
                *v /= z;
            }
        }
        self.push(Tensor::matrix(r, c, out).expect("shape"), Op::Softmax(a))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let mut out = Vec::with_capacity(r * c);
        for row in self.data(a).chunks(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_z = math::ln(row.iter().map(|x| math::exp(x - m)).sum::<f64>());
            // shift first so equal logits give exactly −ln(c)
            out.extend(row.iter().map(|x| (x - m) - log_z));
        }
        self.push(Tensor::matrix(r, c, out).expect("shape"), Op::LogSoftmax(a))
    }

    /// `(x − mean) / sqrt(var + eps)` per row (no affine part).
    pub fn normalize_rows(&mut self, a: Var, eps: f64) -> Var {
        let (r, c) = self.dims(a);
        let mut out = Vec::with_capacity(r * c);
        let mut inv = Vec::with_capacity(r);
        for row in self.data(a).chunks(c) {
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / c as f64;
            let is = 1.0 / math::sqrt(var + eps);
            inv.push(is);
            out.extend(row.iter().map(|x| (x - mu) * is));
        }
        self.push(Tensor::matrix(r, c, out).expect("shape"), Op::Normalize(a, inv))
    }

    /// Unit L2 norm per row.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let mut out = Vec::with_capacity(r * c);
        let mut norms = Vec::with_capacity(r);
        for row in self.data(a).chunks(c) {
            let n = math::sqrt(row.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
            norms.push(n);
            out.extend(row.iter().map(|x| x / n));
        }
        self.push(Tensor::matrix(r, c, out).expect("shape"), Op::L2Rows(a, norms))
    }

    /// `Σ_t w_t x_t / Σ_t w_t` over rows, giving a `1 × cols` row.
    pub fn masked_mean_rows(&mut self, a: Var, weights: &[f64]) -> Result<Var> {
        let (r, c) = self.dims(a);
        if weights.len() != r {
            return Err(Error::Shape(format!("{} weights for {r} rows", weights.len())));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Empty("masked mean over no valid rows"));
        }
        let mut out = vec![0.0; c];
        for (row, w) in self.data(a).chunks(c).zip(weights) {
            if *w == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(row) {
                *o += w * x;
            }
        }
        for o in out.iter_mut() {
            *o /= total;
        }
        Ok(self.push(
            Tensor::matrix(1, c, out)?,
            Op::MaskedMean(a, weights.to_vec(), total),
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if start + len > c || len == 0 {
            return Err(Error::Shape(format!("columns {start}..{} of {c}", start + len)));
        }
        let data = self
            .data(a)
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        Ok(self.push(Tensor::matrix(r, len, data)?, Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = parts
            .first()
            .map(|p| self.dims(*p).0)
            .ok_or(Error::Empty("concat of nothing"))?;
        let mut c = 0;
        for p in parts {
            let (pr, pc) = self.dims(*p);
            if pr != r {
                return Err(Error::Shape(format!("concat rows {pr} vs {r}")));
            }
            c += pc;
        }
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for p in parts {
                let pc = self.dims(*p).1;
                data.extend_from_slice(&self.data(*p)[i * pc..(i + 1) * pc]);
            }
        }
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = parts
            .first()
            .map(|p| self.dims(*p).1)
            .ok_or(Error::Empty("concat of nothing"))?;
        let mut data = Vec::new();
        let mut r = 0;
        for p in parts {
            let (pr, pc) = self.dims(*p);
            if pc != c {
                return Err(Error::Shape(format!("concat cols {pc} vs {c}")));
            }
            data.extend_from_slice(self.data(*p));
            r += pr;
        }
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::ConcatRows(parts.to_vec())))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let src = self.data(a);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        self.push(Tensor::matrix(c, r, data).expect("shape"), Op::Transpose(a))
    }

    /// Diagonal of a square matrix as a `1 × n` row.
    pub fn diag(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a);
        if r != c {
            return Err(Error::Shape(format!("diag of {r}×{c}")));
        }
        let data = (0..r).map(|i| self.data(a)[i * c + i]).collect();
        Ok(self.push(Tensor::matrix(1, r, data)?, Op::Diag(a)))
    }

    /// `len × len` bias matrix read from row `head` of a `heads × (2·max_dist+1)`
    /// table at the clipped relative offset `i − j`.
    pub fn relative_bias(&mut self, table: Var, head: usize, max_dist: usize, len: usize) -> Result<Var> {
        let (h, w) = self.dims(table);
        if head >= h || w != 2 * max_dist + 1 {
            return Err(Error::Shape(format!(
                "bias table {h}×{w} for head {head}, max distance {max_dist}"
            )));
        }
        let row = &self.data(table)[head * w..(head + 1) * w];
        let mut data = Vec::with_capacity(len * len);
        for i in 0..len {
            for j in 0..len {
                data.push(row[rel_index(i, j, max_dist)]);
            }
        }
        Ok(self.push(
            Tensor::matrix(len, len, data)?,
            Op::RelBias {
                table,
                head,
                max_dist,
            },
        ))
    }

    /// Reverse sweep from a scalar output; returns gradients for every parameter leaf.
    pub fn backward(&self, output: Var, store: &ParamStore) -> Result<Gradients> {
        if self.dims(output) != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got {:?}",
                self.dims(output)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=output.0).map(|_| None).collect();
        grads[output.0] = Some(vec![1.0]);
        for idx in (0..=output.0).rev() {
            if matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
        }
        let mut out = Gradients::zeros_like(store);
        for (idx, slot) in grads.into_iter().enumerate() {
            if let (Some(g), Some(pid)) = (slot, self.nodes[idx].param) {
                out.accumulate(pid, &g);
            }
        }
        Ok(out)
    }

    /// Gradient with respect to arbitrary leaves (used by gradient checks on inputs).
    pub fn backward_to(&self, output: Var, leaves: &[Var]) -> Vec<Tensor> {
        let mut grads: Vec<Option<Vec<f64>>> = (0..=output.0).map(|_| None).collect();
        grads[output.0] = Some(vec![1.0]);
        let mut keep: Vec<Option<Vec<f64>>> = vec![None; leaves.len()];
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if let Some(k) = leaves.iter().position(|l| l.0 == idx) {
                keep[k] = Some(g.clone());
            }
            self.propagate(idx, &g, &mut grads);
        }
        leaves
            .iter()
            .zip(keep)
            .map(|(l, g)| {
                let (r, c) = self.dims(*l);
                Tensor::matrix(r, c, g.unwrap_or_else(|| vec![0.0; r * c])).expect("shape")
            })
            .collect()
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let y = node.value.data();
        let (r, c) = (node.value.rows(), node.value.cols());
        let mut acc = |v: Var, delta: Vec<f64>| match &mut grads[v.0] {
            Some(existing) => {
                for (e, d) in existing.iter_mut().zip(delta) {
                    *e += d;
                }
            }
            slot @ None => *slot = Some(delta),
        };
        let elementwise = |x: Var, f: &dyn Fn(f64, f64, f64) -> f64| -> Vec<f64> {
            self.data(x)
                .iter()
                .zip(y)
                .zip(g)
                .map(|((x, y), g)| f(*x, *y, *g))
                .collect()
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                acc(*a, tensor::matmul_bt(g, self.data(*b), m, n, k));
                acc(*b, tensor::matmul_at(self.data(*a), g, m, k, n));
            }
            Op::MatMulBt(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).0;
                acc(*a, tensor::matmul(g, self.data(*b), m, n, k));
                acc(*b, tensor::matmul_at(g, self.data(*a), m, n, k));
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.data(*a), self.data(*b));
                acc(*a, g.iter().zip(db).map(|(g, b)| g * b).collect());
                acc(*b, g.iter().zip(da).map(|(g, a)| g * a).collect());
            }
            Op::AddRow(a, row) => {
                acc(*a, g.to_vec());
                let mut gr = vec![0.0; c];
                for chunk in g.chunks(c) {
                    for (o, v) in gr.iter_mut().zip(chunk) {
                        *o += v;
                    }
                }
                acc(*row, gr);
            }
            Op::MulRow(a, row) => {
                let b = self.data(*row);
                let x = self.data(*a);
                let mut ga = Vec::with_capacity(r * c);
                let mut gr = vec![0.0; c];
                for (gc, xc) in g.chunks(c).zip(x.chunks(c)) {
                    for j in 0..c {
                        ga.push(gc[j] * b[j]);
                        gr[j] += gc[j] * xc[j];
                    }
                }
                acc(*a, ga);
                acc(*row, gr);
            }
            Op::RepeatRows(row) => {
                let mut gr = vec![0.0; c];
                for chunk in g.chunks(c) {
                    for (o, v) in gr.iter_mut().zip(chunk) {
                        *o += v;
                    }
                }
                acc(*row, gr);
            }
            Op::Scale(a, s) => acc(*a, g.iter().map(|v| v * s).collect()),
            Op::ScaleBy(a, s) => {
                let k = self.data(*s)[0];
                acc(*a, g.iter().map(|v| v * k).collect());
                let ds = g.iter().zip(self.data(*a)).map(|(g, x)| g * x).sum();
                acc(*s, vec![ds]);
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                acc(*a, vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                acc(*a, vec![g[0] / n as f64; n]);
            }
            Op::Square(a) => acc(*a, elementwise(*a, &|x, _, g| 2.0 * x * g)),
            Op::Exp(a) => acc(*a, elementwise(*a, &|_, y, g| y * g)),
            Op::Relu(a) => acc(*a, elementwise(*a, &|x, _, g| if x > 0.0 { g } else { 0.0 })),
            Op::Gelu(a) => acc(
                *a,
                elementwise(*a, &|x, _, g| {
                    let u = GELU_C * (x + 0.044715 * x * x * x);
                    let t = math::tanh(u);
                    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                    g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                }),
            ),
            Op::Silu(a) => acc(
                *a,
                elementwise(*a, &|x, _, g| {
                    let s = math::sigmoid(x);
                    g * (s + x * s * (1.0 - s))
                }),
            ),
            Op::Sigmoid(a) => acc(*a, elementwise(*a, &|_, y, g| g * y * (1.0 - y))),
            Op::Tanh(a) => acc(*a, elementwise(*a, &|_, y, g| g * (1.0 - y * y))),
            Op::Softmax(a) => {
                let mut ga = Vec::with_capacity(r * c);
                for (yc, gc) in y.chunks(c).zip(g.chunks(c)) {
                    let dot: f64 = yc.iter().zip(gc).map(|(a, b)| a * b).sum();
                    ga.extend(yc.iter().zip(gc).map(|(y, g)| y * (g - dot)));
                }
                acc(*a, ga);
            }
            Op::LogSoftmax(a) => {
                let mut ga = Vec::with_capacity(r * c);
                for (yc, gc) in y.chunks(c).zip(g.chunks(c)) {
                    let s: f64 = gc.iter().sum();
                    ga.extend(yc.iter().zip(gc).map(|(y, g)| g - math::exp(*y) * s));
                }
                acc(*a, ga);
            }
            Op::Normalize(a, inv) => {
                let mut ga = Vec::with_capacity(r * c);
                for ((yc, gc), is) in y.chunks(c).zip(g.chunks(c)).zip(inv) {
                    let mg = gc.iter().sum::<f64>() / c as f64;
                    let mgy = gc.iter().zip(yc).map(|(g, y)| g * y).sum::<f64>() / c as f64;
                    ga.extend(yc.iter().zip(gc).map(|(y, g)| is * (g - mg - y * mgy)));
                }
                acc(*a, ga);
            }
            Op::L2Rows(a, norms) => {
                let mut ga = Vec::with_capacity(r * c);
                for ((yc, gc), n) in y.chunks(c).zip(g.chunks(c)).zip(norms) {
                    let dot: f64 = yc.iter().zip(gc).map(|(a, b)| a * b).sum();
                    ga.extend(yc.iter().zip(gc).map(|(y, g)| (g - y * dot) / n));
                }
                acc(*a, ga);
            }
            Op::MaskedMean(a, w, total) => {
                let (ar, ac) = self.dims(*a);
                let mut ga = Vec::with_capacity(ar * ac);
                for wt in w {
                    ga.extend(g.iter().map(|gv| gv * wt / total));
                }
                acc(*a, ga);
            }
            Op::SliceCols(a, start) => {
                let (ar, ac) = self.dims(*a);
                let mut ga = vec![0.0; ar * ac];
                for (i, gc) in g.chunks(c).enumerate() {
                    ga[i * ac + start..i * ac + start + c].copy_from_slice(gc);
                }
                acc(*a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let pc = self.dims(*p).1;
                    let mut gp = Vec::with_capacity(r * pc);
                    for gc in g.chunks(c) {
                        gp.extend_from_slice(&gc[off..off + pc]);
                    }
                    acc(*p, gp);
                    off += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    acc(*p, g[off..off + n].to_vec());
                    off += n;
                }
            }
            Op::Transpose(a) => {
                let mut ga = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        ga[j * r + i] = g[i * c + j];
                    }
                }
                acc(*a, ga);
            }
            Op::Diag(a) => {
                let n = c;
                let mut ga = vec![0.0; n * n];
                for i in 0..n {
                    ga[i * n + i] = g[i];
                }
                acc(*a, ga);
            }
            Op::RelBias {
                table,
                head,
                max_dist,
            } => {
                let (h, w) = self.dims(*table);
                let mut gt = vec![0.0; h * w];
                for i in 0..r {
                    for j in 0..c {
                        gt[head * w + rel_index(i, j, *max_dist)] += g[i * c + j];
                    }
                }
                acc(*table, gt);
            }
        }
    }
}

fn rel_index(i: usize, j: usize, max_dist: usize) -> usize {
    let d = (i as i64 - j as i64).clamp(-(max_dist as i64), max_dist as i64);
    (d + max_dist as i64) as usize
}

impl Tensor {
    pub(crate) fn scalar_matrix(v: f64) -> Tensor {
        Tensor::matrix(1, 1, vec![v]).expect("1×1")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let sq = g.square(x);
        let s = g.sum(sq);
        let grads = g.backward_to(s, &[x]);
        assert_eq!(grads[0].data(), &[2.0, 4.0]);
    }

    #[test]
    fn cross_entropy_at_uniform_logits() {
        // loss = −log_softmax(z)[target]; gradient = softmax − onehot
        let mut g = Graph::new();
        let z = g.matrix(1, 4, vec![0.0; 4]).unwrap();
        let ls = g.log_softmax(z);
        let onehot = g.matrix(1, 4, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let picked = g.mul(ls, onehot).unwrap();
        let s = g.sum(picked);
        let loss = g.scale(s, -1.0);
        let grad = g.backward_to(loss, &[z]);
        let want = [0.25, 0.25, -0.75, 0.25];
        for (a, b) in grad[0].data().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((g.value(loss).item() - math::ln(4.0)).abs() < 1e-12);
    }

    #[test]
    fn shape_errors_at_construction() {
        let mut g = Graph::new();
        let a = g.matrix(2, 3, vec![0.0; 6]).unwrap();
        let b = g.matrix(2, 3, vec![0.0; 6]).unwrap();
        assert!(g.matmul(a, b).is_err());
        let c = g.matrix(3, 2, vec![0.0; 6]).unwrap();
        assert!(g.add(a, c).is_err());
        assert!(g.slice_cols(a, 2, 2).is_err());
        assert!(g.backward(a, &ParamStore::default()).is_err());
    }

    #[test]
    fn relative_bias_layout() {
        let mut g = Graph::new();
        let table = g.matrix(1, 5, vec![-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        let b = g.relative_bias(table, 0, 2, 4).unwrap();
        let v = g.value(b).data().to_vec();
        // i − j clipped to ±2
        assert_eq!(&v[0..4], &[0.0, -1.0, -2.0, -2.0]);
        assert_eq!(&v[12..16], &[2.0, 2.0, 1.0, 0.0]);
    }
}
