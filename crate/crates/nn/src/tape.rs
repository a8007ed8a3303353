//! Reverse-mode automatic differentiation over dense row-major `f64` buffers.
//!
//! A [`Graph`] records one forward pass. Parameters live in a [`ParamStore`]
//! that the graph borrows; [`Graph::backward`] returns gradients for every
//! parameter, zero for those off the loss path.

use std::collections::HashMap;

use crate::error::{NnError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::Shape(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Named parameter tensors in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, t: Tensor) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.index.insert(name.to_string(), self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Zero-filled buffers shaped like every parameter.
    pub fn zeros_like(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| vec![0.0; t.len()]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Attention geometry for the fused attention ops.
#[derive(Debug, Clone)]
pub struct AttnShape {
    pub batch: usize,
    pub len: usize,
    pub heads: usize,
    pub embed: usize,
}

impl AttnShape {
    fn head_dim(&self) -> usize {
        self.embed / self.heads
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scatter { parts: Vec<(Var, Vec<usize>)> },
    Gather { src: Var, idx: Vec<usize> },
    LayerNorm { x: Var, g: Var, b: Var, mean: Vec<f64>, rstd: Vec<f64> },
    Gelu(Var),
    Tanh(Var),
    Sigmoid(Var),
    AttnLogits { qkv: Var, shape: AttnShape, scale: f64 },
    CausalSoftmax { x: Var, rows: usize, len: usize },
    AttnApply { probs: Var, qkv: Var, shape: AttnShape },
    Dropout { x: Var, mask: Vec<f64> },
    Mse { pred: Var, target: Vec<f64>, w: Vec<f64> },
    Bce { prob: Var, target: Vec<f64>, w: Vec<f64> },
    AddScaled { a: Var, b: Var, alpha: f64 },
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

pub const BCE_EPS: f64 = 1e-7;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const LN_EPS: f64 = 1e-5;

/// `C = alpha * A B + beta * C` on strided row/column layouts.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |r: usize, rs: usize, cc: usize, cs: usize| (r - 1) * rs + (cc - 1) * cs;
    if k > 0 {
        assert!(a.len() > last(m, rsa, k, csa) && b.len() > last(k, rsb, n, csb));
    }
    assert!(c.len() > last(m, rsc, n, csc));
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph { params, nodes: Vec::new() }
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].op {
            Op::Param(id) => &self.params.get(*id).data,
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { shape, value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        let s = &self.nodes[v.0].shape;
        match s.len() {
            1 => (1, s[0]),
            2 => (s[0], s[1]),
            _ => (s[..s.len() - 1].iter().product(), s[s.len() - 1]),
        }
    }

    /// A constant input (no gradient).
    pub fn input(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t.shape, t.data, Op::Leaf, false))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let shape = self.params.get(id).shape.clone();
        self.push(shape, Vec::new(), Op::Param(id), true)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a);
        let (k2, n) = self.dims2(b);
        if k != k2 {
            return Err(NnError::Shape(format!("matmul inner dimensions {k} and {k2}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, 1.0, self.value(a), k, 1, self.value(b), n, 1, 0.0, &mut out, n, 1);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), ng))
    }

    /// Adds a length-`n` bias to every row of an `[m, n]` matrix.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (_, n) = self.dims2(x);
        if self.value(b).len() != n {
            return Err(NnError::Shape(format!("bias of length {} for width {n}", self.value(b).len())));
        }
        let mut out = self.value(x).to_vec();
        let bv = self.value(b);
        for row in out.chunks_mut(n) {
            for (o, bb) in row.iter_mut().zip(bv) {
                *o += bb;
            }
        }
        let ng = self.ng(x) || self.ng(b);
        let shape = self.nodes[x.0].shape.clone();
        Ok(self.push(shape, out, Op::AddBias(x, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(NnError::Shape(format!("add of {:?} and {:?}", self.shape(a), self.shape(b))));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let ng = self.ng(a) || self.ng(b);
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(shape, out, Op::Add(a, b), ng))
    }

    /// Builds an `[rows, width]` matrix whose row `idx[i]` is row `i` of the
    /// matching part. Uncovered rows are zero.
    pub fn scatter_rows(&mut self, parts: Vec<(Var, Vec<usize>)>, rows: usize, width: usize) -> Result<Var> {
        let mut out = vec![0.0; rows * width];
        let mut seen = vec![false; rows];
        for (v, idx) in &parts {
            let (m, n) = self.dims2(*v);
            if n != width || m != idx.len() {
                return Err(NnError::Shape(format!("scatter part [{m}, {n}] with {} indices", idx.len())));
            }
            let val = self.value(*v);
            for (i, &r) in idx.iter().enumerate() {
                if r >= rows || std::mem::replace(&mut seen[r], true) {
                    return Err(NnError::Shape(format!("scatter row {r} out of range or repeated")));
                }
                out[r * width..(r + 1) * width].copy_from_slice(&val[i * width..(i + 1) * width]);
            }
        }
        let ng = parts.iter().any(|(v, _)| self.ng(*v));
        Ok(self.push(vec![rows, width], out, Op::Scatter { parts }, ng))
    }

    /// Rows `idx` of an `[m, n]` matrix, in order; repeats allowed.
    pub fn gather_rows(&mut self, src: Var, idx: Vec<usize>) -> Result<Var> {
        let (m, n) = self.dims2(src);
        if let Some(&bad) = idx.iter().find(|&&r| r >= m) {
            return Err(NnError::Shape(format!("gather row {bad} of {m}")));
        }
        let val = self.value(src);
        let mut out = Vec::with_capacity(idx.len() * n);
        for &r in &idx {
            out.extend_from_slice(&val[r * n..(r + 1) * n]);
        }
        let ng = self.ng(src);
        Ok(self.push(vec![idx.len(), n], out, Op::Gather { src, idx }, ng))
    }

    /// Row-wise layer normalisation with gain `g` and shift `b`.
    pub fn layer_norm(&mut self, x: Var, g: Var, b: Var) -> Result<Var> {
        let (m, n) = self.dims2(x);
        if self.value(g).len() != n || self.value(b).len() != n {
            return Err(NnError::Shape("layer norm parameters do not match width".into()));
        }
        let (xv, gv, bv) = (self.value(x), self.value(g), self.value(b));
        let mut out = vec![0.0; m * n];
        let mut mean = vec![0.0; m];
        let mut rstd = vec![0.0; m];
        for r in 0..m {
            let row = &xv[r * n..(r + 1) * n];
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            for c in 0..n {
                out[r * n + c] = (row[c] - mu) * rs * gv[c] + bv[c];
            }
            mean[r] = mu;
            rstd[r] = rs;
        }
        let ng = self.ng(x) || self.ng(g) || self.ng(b);
        let shape = self.nodes[x.0].shape.clone();
        Ok(self.push(shape, out, Op::LayerNorm { x, g, b, mean, rstd }, ng))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).iter().map(|&v| f(v)).collect();
        let ng = self.ng(x);
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, out, op, ng)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, |v| 0.5 * v * (1.0 + (GELU_C * (v + 0.044715 * v * v * v)).tanh()), Op::Gelu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    /// Attention logits `[batch, heads, len, len]` from a fused `[batch*len, 3*embed]`
    /// query/key/value matrix: `scale * q.k`, plus `boost` on every key column
    /// `j < prompt_len[b]`. No masking happens here.
    pub fn attn_logits(&mut self, qkv: Var, shape: AttnShape, scale: f64, prompt_len: &[usize], boost: f64) -> Result<Var> {
        let AttnShape { batch, len, heads, embed } = shape;
        let hd = shape.head_dim();
        if self.dims2(qkv) != (batch * len, 3 * embed) || embed % heads != 0 || prompt_len.len() != batch {
            return Err(NnError::Shape("attention logits input has the wrong shape".into()));
        }
        let q = self.value(qkv);
        let mut out = vec![0.0; batch * heads * len * len];
        for b in 0..batch {
            for h in 0..heads {
                let base = b * len * 3 * embed + h * hd;
                let dst = &mut out[(b * heads + h) * len * len..][..len * len];
                gemm(len, hd, len, scale, &q[base..], 3 * embed, 1, &q[base + embed..], 1, 3 * embed, 0.0, dst, len, 1);
                if boost != 0.0 {
                    let p = prompt_len[b].min(len);
                    for i in 0..len {
                        for v in &mut dst[i * len..i * len + p] {
                            *v += boost;
                        }
                    }
                }
            }
        }
        let ng = self.ng(qkv);
        Ok(self.push(vec![batch, heads, len, len], out, Op::AttnLogits { qkv, shape, scale }, ng))
    }

    /// Softmax over the last axis with a causal mask: in row `i` (position
    /// within each `len x len` block) only columns `j <= i` get weight, and the
    /// rest are exactly zero.
    pub fn causal_softmax(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let len = *s.last().ok_or_else(|| NnError::Shape("softmax of a scalar".into()))?;
        if s.len() < 2 || s[s.len() - 2] != len {
            return Err(NnError::Shape("causal softmax needs square trailing blocks".into()));
        }
        let rows = self.value(x).len() / len;
        let xv = self.value(x);
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let i = r % len;
            let row = &xv[r * len..r * len + i + 1];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let o = &mut out[r * len..r * len + i + 1];
            let mut sum = 0.0;
            for (oj, &v) in o.iter_mut().zip(row) {
                *oj = (v - mx).exp();
                sum += *oj;
            }
            for oj in o.iter_mut() {
                *oj /= sum;
            }
        }
        let ng = self.ng(x);
        Ok(self.push(s, out, Op::CausalSoftmax { x, rows, len }, ng))
    }

    /// Weighted sum of value vectors: `[batch*len, embed]`, heads concatenated.
    pub fn attn_apply(&mut self, probs: Var, qkv: Var, shape: AttnShape) -> Result<Var> {
        let AttnShape { batch, len, heads, embed } = shape;
        let hd = shape.head_dim();
        if self.shape(probs) != [batch, heads, len, len] || self.dims2(qkv) != (batch * len, 3 * embed) {
            return Err(NnError::Shape("attention apply inputs have the wrong shape".into()));
        }
        let (p, q) = (self.value(probs), self.value(qkv));
        let mut out = vec![0.0; batch * len * embed];
        for b in 0..batch {
            for h in 0..heads {
                let pb = &p[(b * heads + h) * len * len..][..len * len];
                let v = &q[b * len * 3 * embed + 2 * embed + h * hd..];
                let dst = &mut out[b * len * embed + h * hd..];
                gemm(len, len, hd, 1.0, pb, len, 1, v, 3 * embed, 1, 0.0, dst, embed, 1);
            }
        }
        let ng = self.ng(probs) || self.ng(qkv);
        Ok(self.push(vec![batch * len, embed], out, Op::AttnApply { probs, qkv, shape }, ng))
    }

    /// Inverted dropout with a caller-supplied keep mask (`true` = keep).
    pub fn dropout(&mut self, x: Var, keep: &[bool], p: f64) -> Result<Var> {
        if keep.len() != self.value(x).len() || !(0.0..1.0).contains(&p) {
            return Err(NnError::Shape("dropout mask length or rate invalid".into()));
        }
        let s = 1.0 / (1.0 - p);
        let mask: Vec<f64> = keep.iter().map(|&k| if k { s } else { 0.0 }).collect();
        let out = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let ng = self.ng(x);
        let shape = self.nodes[x.0].shape.clone();
        Ok(self.push(shape, out, Op::Dropout { x, mask }, ng))
    }

    /// Weighted mean squared error: `sum_r w[r] * mean_c (pred[r, c] - target[r, c])^2`.
    /// `None` weighs every row `1 / rows`, i.e. the plain mean over all elements.
    pub fn mse(&mut self, pred: Var, target: Vec<f64>, row_weights: Option<Vec<f64>>) -> Result<Var> {
        let (rows, cols) = self.dims2(pred);
        let w = Self::row_weights(rows, row_weights)?;
        let pv = self.value(pred);
        if pv.len() != target.len() || pv.is_empty() {
            return Err(NnError::Shape(format!("mse of {} predictions and {} targets", pv.len(), target.len())));
        }
        let mut l = 0.0;
        for r in 0..rows {
            let s: f64 = (0..cols).map(|c| (pv[r * cols + c] - target[r * cols + c]).powi(2)).sum();
            l += w[r] * s / cols as f64;
        }
        let ng = self.ng(pred);
        Ok(self.push(vec![], vec![l], Op::Mse { pred, target, w }, ng))
    }

    fn row_weights(rows: usize, w: Option<Vec<f64>>) -> Result<Vec<f64>> {
        match w {
            None => Ok(vec![1.0 / rows as f64; rows]),
            Some(w) if w.len() == rows => Ok(w),
            Some(w) => Err(NnError::Shape(format!("{} row weights for {rows} rows", w.len()))),
        }
    }

    /// Weighted binary cross entropy of probabilities clamped to
    /// `[BCE_EPS, 1 - BCE_EPS]`; row weights as in [`Graph::mse`].
    pub fn bce(&mut self, prob: Var, target: Vec<f64>, row_weights: Option<Vec<f64>>) -> Result<Var> {
        let (rows, cols) = self.dims2(prob);
        let pv = self.value(prob);
        if pv.len() != target.len() || pv.is_empty() || cols != 1 {
            return Err(NnError::Shape(format!("bce of {} predictions and {} targets", pv.len(), target.len())));
        }
        let w = Self::row_weights(rows, row_weights)?;
        let l = -pv
            .iter()
            .zip(&target)
            .zip(&w)
            .map(|((&p, &t), &w)| {
                let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                w * (t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum::<f64>();
        let ng = self.ng(prob);
        Ok(self.push(vec![], vec![l], Op::Bce { prob, target, w }, ng))
    }

    /// `a + alpha * b` for scalars.
    pub fn add_scaled(&mut self, a: Var, b: Var, alpha: f64) -> Result<Var> {
        if self.value(a).len() != 1 || self.value(b).len() != 1 {
            return Err(NnError::Shape("add_scaled expects scalars".into()));
        }
        let v = self.value(a)[0] + alpha * self.value(b)[0];
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(vec![], vec![v], Op::AddScaled { a, b, alpha }, ng))
    }

    /// Gradients of scalar `loss` with respect to every parameter in the store.
    pub fn backward(&self, loss: Var) -> Result<Vec<Vec<f64>>> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(NnError::State("backward called without a recorded forward pass".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(NnError::State("backward needs a scalar loss".into()));
        }
        let mut pgrads = self.params.zeros_like();
        let mut grads: Vec<Vec<f64>> = (0..=loss.0).map(|_| Vec::new()).collect();
        grads[loss.0] = vec![1.0];
        for i in (0..=loss.0).rev() {
            if grads[i].is_empty() || !self.nodes[i].needs_grad {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            self.backward_node(i, &g, &mut grads, &mut pgrads);
        }
        Ok(pgrads)
    }

    fn backward_node(&self, i: usize, g: &[f64], grads: &mut [Vec<f64>], pgrads: &mut [Vec<f64>]) {
        // Gradient buffer of input `v`, allocated on first use; None when not needed.
        fn buf<'a>(nodes: &[Node], grads: &'a mut [Vec<f64>], v: Var, len: usize) -> Option<&'a mut Vec<f64>> {
            if !nodes[v.0].needs_grad {
                return None;
            }
            let b = &mut grads[v.0];
            if b.is_empty() {
                *b = vec![0.0; len];
            }
            Some(b)
        }
        let nodes = &self.nodes;
        let len_of = |v: Var| self.value(v).len();
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Param(id) => {
                for (p, gv) in pgrads[id.0].iter_mut().zip(g) {
                    *p += gv;
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = self.dims2(*a);
                let (_, n) = self.dims2(*b);
                if let Some(da) = buf(nodes, grads, *a, m * k) {
                    gemm(m, n, k, 1.0, g, n, 1, self.value(*b), 1, n, 1.0, da, k, 1);
                }
                if let Some(db) = buf(nodes, grads, *b, k * n) {
                    gemm(k, m, n, 1.0, self.value(*a), 1, k, g, n, 1, 1.0, db, n, 1);
                }
            }
            Op::AddBias(x, b) => {
                let n = len_of(*b);
                if let Some(dx) = buf(nodes, grads, *x, g.len()) {
                    dx.iter_mut().zip(g).for_each(|(d, v)| *d += v);
                }
                if let Some(db) = buf(nodes, grads, *b, n) {
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(d) = buf(nodes, grads, *v, g.len()) {
                        d.iter_mut().zip(g).for_each(|(d, v)| *d += v);
                    }
                }
            }
            Op::Scatter { parts } => {
                let width = nodes[i].shape[1];
                for (v, idx) in parts {
                    if let Some(d) = buf(nodes, grads, *v, idx.len() * width) {
                        for (k, &r) in idx.iter().enumerate() {
                            d[k * width..(k + 1) * width]
                                .iter_mut()
                                .zip(&g[r * width..(r + 1) * width])
                                .for_each(|(d, v)| *d += v);
                        }
                    }
                }
            }
            Op::Gather { src, idx } => {
                let (m, n) = self.dims2(*src);
                if let Some(d) = buf(nodes, grads, *src, m * n) {
                    for (k, &r) in idx.iter().enumerate() {
                        d[r * n..(r + 1) * n].iter_mut().zip(&g[k * n..(k + 1) * n]).for_each(|(d, v)| *d += v);
                    }
                }
            }
            Op::LayerNorm { x, g: gain, b, mean, rstd } => {
                let (m, n) = self.dims2(*x);
                let xv = self.value(*x);
                let gv = self.value(*gain);
                if let Some(db) = buf(nodes, grads, *b, n) {
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                }
                if let Some(dg) = buf(nodes, grads, *gain, n) {
                    for r in 0..m {
                        for c in 0..n {
                            dg[c] += g[r * n + c] * (xv[r * n + c] - mean[r]) * rstd[r];
                        }
                    }
                }
                if let Some(dx) = buf(nodes, grads, *x, m * n) {
                    let mut dxhat = vec![0.0; n];
                    for r in 0..m {
                        let (mut s1, mut s2) = (0.0, 0.0);
                        for c in 0..n {
                            let xhat = (xv[r * n + c] - mean[r]) * rstd[r];
                            dxhat[c] = g[r * n + c] * gv[c];
                            s1 += dxhat[c];
                            s2 += dxhat[c] * xhat;
                        }
                        let (s1, s2) = (s1 / n as f64, s2 / n as f64);
                        for c in 0..n {
                            let xhat = (xv[r * n + c] - mean[r]) * rstd[r];
                            dx[r * n + c] += rstd[r] * (dxhat[c] - s1 - xhat * s2);
                        }
                    }
                }
            }
            Op::Gelu(x) => {
                let xv = self.value(*x);
                if let Some(dx) = buf(nodes, grads, *x, xv.len()) {
                    for ((d, &v), gv) in dx.iter_mut().zip(xv).zip(g) {
                        let t = (GELU_C * (v + 0.044715 * v * v * v)).tanh();
                        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
                        *d += gv * (0.5 * (1.0 + t) + 0.5 * v * dt);
                    }
                }
            }
            Op::Tanh(x) => {
                let y = &nodes[i].value;
                if let Some(dx) = buf(nodes, grads, *x, y.len()) {
                    for ((d, yv), gv) in dx.iter_mut().zip(y).zip(g) {
                        *d += gv * (1.0 - yv * yv);
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = &nodes[i].value;
                if let Some(dx) = buf(nodes, grads, *x, y.len()) {
                    for ((d, yv), gv) in dx.iter_mut().zip(y).zip(g) {
                        *d += gv * yv * (1.0 - yv);
                    }
                }
            }
            Op::AttnLogits { qkv, shape, scale } => {
                let AttnShape { batch, len, heads, embed } = *shape;
                let hd = shape.head_dim();
                let q = self.value(*qkv);
                if let Some(dq) = buf(nodes, grads, *qkv, q.len()) {
                    for b in 0..batch {
                        for h in 0..heads {
                            let gl = &g[(b * heads + h) * len * len..][..len * len];
                            let base = b * len * 3 * embed + h * hd;
                            // dQ = scale * dL K ; dK = scale * dL^T Q
                            gemm(len, len, hd, *scale, gl, len, 1, &q[base + embed..], 3 * embed, 1, 1.0, &mut dq[base..], 3 * embed, 1);
                            gemm(len, len, hd, *scale, gl, 1, len, &q[base..], 3 * embed, 1, 1.0, &mut dq[base + embed..], 3 * embed, 1);
                        }
                    }
                }
            }
            Op::CausalSoftmax { x, rows, len } => {
                let y = &nodes[i].value;
                if let Some(dx) = buf(nodes, grads, *x, y.len()) {
                    for r in 0..*rows {
                        let k = r % len + 1;
                        let (yr, gr) = (&y[r * len..r * len + k], &g[r * len..r * len + k]);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..k {
                            dx[r * len + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::AttnApply { probs, qkv, shape } => {
                let AttnShape { batch, len, heads, embed } = *shape;
                let hd = shape.head_dim();
                let (p, q) = (self.value(*probs), self.value(*qkv));
                if let Some(dp) = buf(nodes, grads, *probs, p.len()) {
                    for b in 0..batch {
                        for h in 0..heads {
                            let go = &g[b * len * embed + h * hd..];
                            let v = &q[b * len * 3 * embed + 2 * embed + h * hd..];
                            let dst = &mut dp[(b * heads + h) * len * len..][..len * len];
                            gemm(len, hd, len, 1.0, go, embed, 1, v, 1, 3 * embed, 1.0, dst, len, 1);
                        }
                    }
                }
                if let Some(dq) = buf(nodes, grads, *qkv, q.len()) {
                    for b in 0..batch {
                        for h in 0..heads {
                            let pb = &p[(b * heads + h) * len * len..][..len * len];
                            let go = &g[b * len * embed + h * hd..];
                            let dst = &mut dq[b * len * 3 * embed + 2 * embed + h * hd..];
                            gemm(len, len, hd, 1.0, pb, 1, len, go, embed, 1, 1.0, dst, 3 * embed, 1);
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(dx) = buf(nodes, grads, *x, mask.len()) {
                    for ((d, m), gv) in dx.iter_mut().zip(mask).zip(g) {
                        *d += gv * m;
                    }
                }
            }
            Op::Mse { pred, target, w } => {
                let pv = self.value(*pred);
                let cols = pv.len() / w.len();
                if let Some(d) = buf(nodes, grads, *pred, pv.len()) {
                    for (k, (d, (p, t))) in d.iter_mut().zip(pv.iter().zip(target)).enumerate() {
                        *d += 2.0 * g[0] * w[k / cols] / cols as f64 * (p - t);
                    }
                }
            }
            Op::Bce { prob, target, w } => {
                let pv = self.value(*prob);
                if let Some(d) = buf(nodes, grads, *prob, pv.len()) {
                    for (((d, &p), &t), &w) in d.iter_mut().zip(pv).zip(target).zip(w) {
                        if (BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
                            *d += -g[0] * w * (t / p - (1.0 - t) / (1.0 - p));
                        }
                    }
                }
            }
            Op::AddScaled { a, b, alpha } => {
                if let Some(d) = buf(nodes, grads, *a, 1) {
                    d[0] += g[0];
                }
                if let Some(d) = buf(nodes, grads, *b, 1) {
                    d[0] += alpha * g[0];
                }
            }
        }
    }
}
