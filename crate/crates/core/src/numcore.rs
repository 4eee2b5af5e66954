//! Dense 2-D tensors with reverse-mode differentiation, covering exactly
//! the operations the repair model needs. Tapes are single-threaded;
//! reductions run in fixed left-to-right order so forward passes are
//! bitwise reproducible.

use crate::{Error, Result};
use std::cell::RefCell;

/// Row-major 2-D value. Gradients live on the tape, keyed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "data length {} does not fill {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Tanh(NodeId),
    Ln(NodeId),
    ConcatRows(NodeId, NodeId),
    SliceRows { x: NodeId, start: usize },
    Reshape(NodeId),
    Transpose(NodeId),
    Pick { x: NodeId, row: usize, col: usize },
    SumAll(NodeId),
    GatherRows { x: NodeId, idx: Vec<usize> },
    MaskedSoftmax { x: NodeId, mask: Vec<bool> },
    RmsNorm { x: NodeId, gain: NodeId, eps: f64 },
    /// Fused multi-head scaled-dot-product core over already-projected
    /// q/k/v; `probs` saves the softmax matrices head-major for backward.
    Attention { q: NodeId, k: NodeId, v: NodeId, heads: usize, probs: Vec<f64> },
}

struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

struct TapeInner {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
    /// Multiply-add count of matmul and attention cores; instruments the
    /// linear-in-m complexity assertion, not wall time.
    flops: u64,
}

/// Operation record for one forward pass. Create one per sample; drop it
/// after reading gradients.
pub struct Tape {
    inner: RefCell<TapeInner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn matmul_raw(a: &[f64], ar: usize, ac: usize, b: &[f64], bc: usize) -> Vec<f64> {
    let mut out = vec![0.0; ar * bc];
    for i in 0..ar {
        for kk in 0..ac {
            let aik = a[i * ac + kk];
            let brow = &b[kk * bc..(kk + 1) * bc];
            let orow = &mut out[i * bc..(i + 1) * bc];
            for j in 0..bc {
                orow[j] += aik * brow[j];
            }
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape { inner: RefCell::new(TapeInner { nodes: Vec::new(), grads: Vec::new(), flops: 0 }) }
    }

    fn push(&self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> NodeId {
        debug_assert_eq!(value.len(), rows * cols);
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node { rows, cols, value, op });
        inner.grads.push(Vec::new());
        NodeId(inner.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let inner = self.inner.borrow();
        (inner.nodes[id.0].rows, inner.nodes[id.0].cols)
    }

    pub fn value(&self, id: NodeId) -> Tensor {
        let inner = self.inner.borrow();
        let n = &inner.nodes[id.0];
        Tensor { rows: n.rows, cols: n.cols, data: n.value.clone() }
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        let inner = self.inner.borrow();
        let n = &inner.nodes[id.0];
        if (n.rows, n.cols) != (1, 1) {
            return Err(Error::shape(format!("expected 1x1, got {}x{}", n.rows, n.cols)));
        }
        Ok(n.value[0])
    }

    /// Gradient of the last backward pass; zeros if the node was unreached.
    pub fn grad(&self, id: NodeId) -> Tensor {
        let inner = self.inner.borrow();
        let n = &inner.nodes[id.0];
        let data = if inner.grads[id.0].is_empty() {
            vec![0.0; n.rows * n.cols]
        } else {
            inner.grads[id.0].clone()
        };
        Tensor { rows: n.rows, cols: n.cols, data }
    }

    pub fn flops(&self) -> u64 {
        self.inner.borrow().flops
    }

    pub fn leaf(&self, t: &Tensor) -> NodeId {
        self.push(t.rows, t.cols, t.data.clone(), Op::Leaf)
    }

    pub fn leaf_owned(&self, t: Tensor) -> NodeId {
        self.push(t.rows, t.cols, t.data, Op::Leaf)
    }

    pub fn matmul(&self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(Error::shape(format!("matmul lhs {ar}x{ac} rhs {br}x{bc}")));
        }
        let value = {
            let mut inner = self.inner.borrow_mut();
            inner.flops += (ar * ac * bc) as u64;
            let (av, bv) = (&inner.nodes[a.0].value, &inner.nodes[b.0].value);
            matmul_raw(av, ar, ac, bv, bc)
        };
        Ok(self.push(ar, bc, value, Op::Matmul(a, b)))
    }

    pub fn add(&self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if (ar, ac) != (br, bc) {
            return Err(Error::shape(format!("add lhs {ar}x{ac} rhs {br}x{bc}")));
        }
        let value = {
            let inner = self.inner.borrow();
            let (av, bv) = (&inner.nodes[a.0].value, &inner.nodes[b.0].value);
            av.iter().zip(bv).map(|(x, y)| x + y).collect()
        };
        Ok(self.push(ar, ac, value, Op::Add(a, b)))
    }

    /// Adds a 1xC bias row to every row of a.
    pub fn add_bias(&self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(bias);
        if br != 1 || bc != ac {
            return Err(Error::shape(format!("add_bias lhs {ar}x{ac} bias {br}x{bc}")));
        }
        let value = {
            let inner = self.inner.borrow();
            let (av, bv) = (&inner.nodes[a.0].value, &inner.nodes[bias.0].value);
            let mut out = av.clone();
            for i in 0..ar {
                for j in 0..ac {
                    out[i * ac + j] += bv[j];
                }
            }
            out
        };
        Ok(self.push(ar, ac, value, Op::AddBias(a, bias)))
    }

    pub fn scale(&self, a: NodeId, s: f64) -> NodeId {
        let (ar, ac) = self.shape(a);
        let value = {
            let inner = self.inner.borrow();
            inner.nodes[a.0].value.iter().map(|x| x * s).collect()
        };
        self.push(ar, ac, value, Op::Scale(a, s))
    }

    pub fn relu(&self, a: NodeId) -> NodeId {
        let (ar, ac) = self.shape(a);
        let value = {
            let inner = self.inner.borrow();
            inner.nodes[a.0].value.iter().map(|&x| x.max(0.0)).collect()
        };
        self.push(ar, ac, value, Op::Relu(a))
    }

    pub fn tanh(&self, a: NodeId) -> NodeId {
        let (ar, ac) = self.shape(a);
        let value = {
            let inner = self.inner.borrow();
            inner.nodes[a.0].value.iter().map(|x| x.tanh()).collect()
        };
        self.push(ar, ac, value, Op::Tanh(a))
    }

    pub fn ln(&self, a: NodeId) -> NodeId {
        let (ar, ac) = self.shape(a);
        let value = {
            let inner = self.inner.borrow();
            inner.nodes[a.0].value.iter().map(|x| x.ln()).collect()
        };
        self.push(ar, ac, value, Op::Ln(a))
    }

    pub fn concat_rows(&self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != bc {
            return Err(Error::shape(format!("concat_rows lhs {ar}x{ac} rhs {br}x{bc}")));
        }
        let value = {
            let inner = self.inner.borrow();
            let mut out = inner.nodes[a.0].value.clone();
            out.extend_from_slice(&inner.nodes[b.0].value);
            out
        };
        Ok(self.push(ar + br, ac, value, Op::ConcatRows(a, b)))
    }

    /// Rows [start, end) of a.
    pub fn slice_rows(&self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        if start >= end || end > ar {
            return Err(Error::shape(format!("slice_rows [{start}, {end}) of {ar}x{ac}")));
        }
        let value = {
            let inner = self.inner.borrow();
            inner.nodes[a.0].value[start * ac..end * ac].to_vec()
        };
        Ok(self.push(end - start, ac, value, Op::SliceRows { x: a, start }))
    }

    pub fn reshape(&self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        if ar * ac != rows * cols {
            return Err(Error::shape(format!("reshape {ar}x{ac} to {rows}x{cols}")));
        }
        let value = self.inner.borrow().nodes[a.0].value.clone();
        Ok(self.push(rows, cols, value, Op::Reshape(a)))
    }

    pub fn transpose(&self, a: NodeId) -> NodeId {
        let (ar, ac) = self.shape(a);
        let value = {
            let inner = self.inner.borrow();
            let av = &inner.nodes[a.0].value;
            let mut out = vec![0.0; ar * ac];
            for i in 0..ar {
                for j in 0..ac {
                    out[j * ar + i] = av[i * ac + j];
                }
            }
            out
        };
        self.push(ac, ar, value, Op::Transpose(a))
    }

    /// 1x1 view of entry (row, col).
    pub fn pick(&self, a: NodeId, row: usize, col: usize) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        if row >= ar || col >= ac {
            return Err(Error::Index { index: row * ac + col, len: ar * ac });
        }
        let v = self.inner.borrow().nodes[a.0].value[row * ac + col];
        Ok(self.push(1, 1, vec![v], Op::Pick { x: a, row, col }))
    }

    pub fn sum_all(&self, a: NodeId) -> NodeId {
        let v = {
            let inner = self.inner.borrow();
            inner.nodes[a.0].value.iter().sum()
        };
        self.push(1, 1, vec![v], Op::SumAll(a))
    }

    /// Selects rows by index, in the given order; indices may repeat.
    pub fn gather_rows(&self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        if idx.is_empty() {
            return Err(Error::shape("gather_rows with no indices"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= ar) {
            return Err(Error::Index { index: bad, len: ar });
        }
        let value = {
            let inner = self.inner.borrow();
            let av = &inner.nodes[a.0].value;
            let mut out = Vec::with_capacity(idx.len() * ac);
            for &i in idx {
                out.extend_from_slice(&av[i * ac..(i + 1) * ac]);
            }
            out
        };
        Ok(self.push(idx.len(), ac, value, Op::GatherRows { x: a, idx: idx.to_vec() }))
    }

    /// Row-wise softmax with one shared column mask; masked entries get
    /// probability exactly 0. Stabilized by row-max subtraction.
    pub fn masked_softmax(&self, a: NodeId, mask: &[bool]) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        if mask.len() != ac {
            return Err(Error::shape(format!("mask length {} for {ar}x{ac}", mask.len())));
        }
        if !mask.iter().any(|&b| b) {
            return Err(Error::Infeasible("softmax mask excludes every column".into()));
        }
        let value = {
            let inner = self.inner.borrow();
            let av = &inner.nodes[a.0].value;
            let mut out = vec![0.0; ar * ac];
            for i in 0..ar {
                let row = &av[i * ac..(i + 1) * ac];
                let mut mx = f64::NEG_INFINITY;
                for j in 0..ac {
                    if mask[j] && row[j] > mx {
                        mx = row[j];
                    }
                }
                let mut sum = 0.0;
                for j in 0..ac {
                    if mask[j] {
                        let e = (row[j] - mx).exp();
                        out[i * ac + j] = e;
                        sum += e;
                    }
                }
                for j in 0..ac {
                    if mask[j] {
                        out[i * ac + j] /= sum;
                    }
                }
            }
            out
        };
        Ok(self.push(ar, ac, value, Op::MaskedSoftmax { x: a, mask: mask.to_vec() }))
    }

    pub fn softmax(&self, a: NodeId) -> Result<NodeId> {
        let (_, ac) = self.shape(a);
        self.masked_softmax(a, &vec![true; ac])
    }

    /// Row-wise root-mean-square normalization with a 1xC learnable gain:
    /// y_ij = gain_j * x_ij / sqrt(mean_j(x_ij^2) + eps).
    pub fn rms_norm(&self, x: NodeId, gain: NodeId, eps: f64) -> Result<NodeId> {
        let (xr, xc) = self.shape(x);
        let (gr, gc) = self.shape(gain);
        if gr != 1 || gc != xc {
            return Err(Error::shape(format!("rms_norm x {xr}x{xc} gain {gr}x{gc}")));
        }
        let value = {
            let inner = self.inner.borrow();
            let xv = &inner.nodes[x.0].value;
            let gv = &inner.nodes[gain.0].value;
            let mut out = vec![0.0; xr * xc];
            for i in 0..xr {
                let row = &xv[i * xc..(i + 1) * xc];
                let ms: f64 = row.iter().map(|v| v * v).sum::<f64>() / xc as f64;
                let r = (ms + eps).sqrt();
                for j in 0..xc {
                    out[i * xc + j] = gv[j] * row[j] / r;
                }
            }
            out
        };
        Ok(self.push(xr, xc, value, Op::RmsNorm { x, gain, eps }))
    }

    /// Multi-head scaled dot-product over already-projected q/k/v: per
    /// head, softmax(q_h k_h^T / sqrt(d_head)) v_h; heads re-concatenate to
    /// the input width. Output projection is a separate matmul.
    pub fn attention(&self, q: NodeId, k: NodeId, v: NodeId, heads: usize) -> Result<NodeId> {
        let (nq, d) = self.shape(q);
        let (nk, kd) = self.shape(k);
        let (nv, vd) = self.shape(v);
        if kd != d || vd != d || nv != nk {
            return Err(Error::shape(format!(
                "attention q {nq}x{d} k {nk}x{kd} v {nv}x{vd}"
            )));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::config(format!("width {d} not divisible into {heads} heads")));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (value, probs) = {
            let mut inner = self.inner.borrow_mut();
            inner.flops += (2 * heads * nq * nk * dh) as u64;
            let qv = &inner.nodes[q.0].value;
            let kv = &inner.nodes[k.0].value;
            let vv = &inner.nodes[v.0].value;
            let mut out = vec![0.0; nq * d];
            let mut probs = vec![0.0; heads * nq * nk];
            let mut s = vec![0.0; nk];
            for h in 0..heads {
                let off = h * dh;
                for i in 0..nq {
                    let qrow = &qv[i * d + off..i * d + off + dh];
                    for (j, sj) in s.iter_mut().enumerate() {
                        let krow = &kv[j * d + off..j * d + off + dh];
                        let mut dot = 0.0;
                        for t in 0..dh {
                            dot += qrow[t] * krow[t];
                        }
                        *sj = dot * scale;
                    }
                    let mx = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for sj in s.iter_mut() {
                        *sj = (*sj - mx).exp();
                        sum += *sj;
                    }
                    let pbase = h * nq * nk + i * nk;
                    for (j, &e) in s.iter().enumerate() {
                        let p = e / sum;
                        probs[pbase + j] = p;
                        let vrow = &vv[j * d + off..j * d + off + dh];
                        let orow = &mut out[i * d + off..i * d + off + dh];
                        for t in 0..dh {
                            orow[t] += p * vrow[t];
                        }
                    }
                }
            }
            (out, probs)
        };
        Ok(self.push(nq, d, value, Op::Attention { q, k, v, heads, probs }))
    }

    /// Reverse pass from a scalar loss; fills gradients for every node
    /// that feeds it. Resets previous gradients.
    pub fn backward(&self, loss: NodeId) -> Result<()> {
        {
            let inner = self.inner.borrow();
            let n = &inner.nodes[loss.0];
            if (n.rows, n.cols) != (1, 1) {
                return Err(Error::shape(format!(
                    "backward needs a scalar, got {}x{}",
                    n.rows, n.cols
                )));
            }
        }
        let mut inner = self.inner.borrow_mut();
        let TapeInner { nodes, grads, .. } = &mut *inner;
        for (g, n) in grads.iter_mut().zip(nodes.iter()) {
            g.clear();
            g.resize(n.rows * n.cols, 0.0);
        }
        grads[loss.0][0] = 1.0;
        for idx in (0..nodes.len()).rev() {
            let gout = std::mem::take(&mut grads[idx]);
            if gout.iter().all(|&g| g == 0.0) {
                grads[idx] = gout;
                continue;
            }
            let node = &nodes[idx];
            let (rows, cols) = (node.rows, node.cols);
            match &node.op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let (ar, ac) = (nodes[a.0].rows, nodes[a.0].cols);
                    let bc = nodes[b.0].cols;
                    // dA = G B^T, dB = A^T G
                    let bv = &nodes[b.0].value;
                    let av = &nodes[a.0].value;
                    {
                        let ga = &mut grads[a.0];
                        for i in 0..ar {
                            for j in 0..ac {
                                let mut acc = 0.0;
                                for t in 0..bc {
                                    acc += gout[i * bc + t] * bv[j * bc + t];
                                }
                                ga[i * ac + j] += acc;
                            }
                        }
                    }
                    {
                        let gb = &mut grads[b.0];
                        for i in 0..ac {
                            for j in 0..bc {
                                let mut acc = 0.0;
                                for t in 0..ar {
                                    acc += av[t * ac + i] * gout[t * bc + j];
                                }
                                gb[i * bc + j] += acc;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (g, &d) in grads[a.0].iter_mut().zip(&gout) {
                        *g += d;
                    }
                    for (g, &d) in grads[b.0].iter_mut().zip(&gout) {
                        *g += d;
                    }
                }
                Op::AddBias(a, bias) => {
                    for (g, &d) in grads[a.0].iter_mut().zip(&gout) {
                        *g += d;
                    }
                    let gb = &mut grads[bias.0];
                    for i in 0..rows {
                        for j in 0..cols {
                            gb[j] += gout[i * cols + j];
                        }
                    }
                }
                Op::Scale(a, s) => {
                    for (g, &d) in grads[a.0].iter_mut().zip(&gout) {
                        *g += d * s;
                    }
                }
                Op::Relu(a) => {
                    let av = &nodes[a.0].value;
                    for ((g, &d), &x) in grads[a.0].iter_mut().zip(&gout).zip(av) {
                        if x > 0.0 {
                            *g += d;
                        }
                    }
                }
                Op::Tanh(a) => {
                    for ((g, &d), &y) in grads[a.0].iter_mut().zip(&gout).zip(&node.value) {
                        *g += d * (1.0 - y * y);
                    }
                }
                Op::Ln(a) => {
                    let av = &nodes[a.0].value;
                    for ((g, &d), &x) in grads[a.0].iter_mut().zip(&gout).zip(av) {
                        *g += d / x;
                    }
                }
                Op::ConcatRows(a, b) => {
                    let asz = grads[a.0].len();
                    for (g, &d) in grads[a.0].iter_mut().zip(&gout[..asz]) {
                        *g += d;
                    }
                    for (g, &d) in grads[b.0].iter_mut().zip(&gout[asz..]) {
                        *g += d;
                    }
                }
                Op::SliceRows { x, start } => {
                    let xc = nodes[x.0].cols;
                    let gx = &mut grads[x.0];
                    for (off, &d) in gout.iter().enumerate() {
                        gx[start * xc + off] += d;
                    }
                }
                Op::Reshape(a) => {
                    for (g, &d) in grads[a.0].iter_mut().zip(&gout) {
                        *g += d;
                    }
                }
                Op::Transpose(a) => {
                    // node is cols(a) x rows(a)
                    let ga = &mut grads[a.0];
                    let (ar, ac) = (nodes[a.0].rows, nodes[a.0].cols);
                    for i in 0..ar {
                        for j in 0..ac {
                            ga[i * ac + j] += gout[j * ar + i];
                        }
                    }
                }
                Op::Pick { x, row, col } => {
                    let xc = nodes[x.0].cols;
                    grads[x.0][row * xc + col] += gout[0];
                }
                Op::SumAll(a) => {
                    for g in grads[a.0].iter_mut() {
                        *g += gout[0];
                    }
                }
                Op::GatherRows { x, idx } => {
                    let gx = &mut grads[x.0];
                    for (pos, &src) in idx.iter().enumerate() {
                        for j in 0..cols {
                            gx[src * cols + j] += gout[pos * cols + j];
                        }
                    }
                }
                Op::MaskedSoftmax { x, mask } => {
                    let p = &node.value;
                    let gx = &mut grads[x.0];
                    for i in 0..rows {
                        let prow = &p[i * cols..(i + 1) * cols];
                        let grow = &gout[i * cols..(i + 1) * cols];
                        let mut dot = 0.0;
                        for j in 0..cols {
                            dot += grow[j] * prow[j];
                        }
                        for j in 0..cols {
                            if mask[j] {
                                gx[i * cols + j] += prow[j] * (grow[j] - dot);
                            }
                        }
                    }
                }
                Op::RmsNorm { x, gain, eps } => {
                    let xv = &nodes[x.0].value;
                    let gv = &nodes[gain.0].value;
                    let d = cols as f64;
                    // split borrow: write x and gain grads in two passes
                    for i in 0..rows {
                        let xrow = &xv[i * cols..(i + 1) * cols];
                        let grow = &gout[i * cols..(i + 1) * cols];
                        let ms: f64 = xrow.iter().map(|v| v * v).sum::<f64>() / d;
                        let r = (ms + eps).sqrt();
                        let mut s = 0.0;
                        for j in 0..cols {
                            s += grow[j] * gv[j] * xrow[j];
                        }
                        let gx = &mut grads[x.0];
                        for j in 0..cols {
                            gx[i * cols + j] +=
                                grow[j] * gv[j] / r - xrow[j] * s / (d * r * r * r);
                        }
                        let gg = &mut grads[gain.0];
                        for j in 0..cols {
                            gg[j] += grow[j] * xrow[j] / r;
                        }
                    }
                }
                Op::Attention { q, k, v, heads, probs } => {
                    let d = cols;
                    let nq = rows;
                    let nk = nodes[k.0].rows;
                    let dh = d / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let qv = &nodes[q.0].value;
                    let kv = &nodes[k.0].value;
                    let vv = &nodes[v.0].value;
                    let mut dp = vec![0.0; nk];
                    let mut ds = vec![0.0; nk];
                    for h in 0..*heads {
                        let off = h * dh;
                        for i in 0..nq {
                            let grow = &gout[i * d + off..i * d + off + dh];
                            let prow = &probs[h * nq * nk + i * nk..h * nq * nk + (i + 1) * nk];
                            // dP = G V^T, dV += P^T G
                            for j in 0..nk {
                                let vrow = &vv[j * d + off..j * d + off + dh];
                                let mut acc = 0.0;
                                for t in 0..dh {
                                    acc += grow[t] * vrow[t];
                                }
                                dp[j] = acc;
                            }
                            {
                                let gv_ = &mut grads[v.0];
                                for j in 0..nk {
                                    let p = prow[j];
                                    if p != 0.0 {
                                        let gvrow = &mut gv_[j * d + off..j * d + off + dh];
                                        for t in 0..dh {
                                            gvrow[t] += p * grow[t];
                                        }
                                    }
                                }
                            }
                            // softmax jacobian, then scaled projections
                            let mut dot = 0.0;
                            for j in 0..nk {
                                dot += dp[j] * prow[j];
                            }
                            for j in 0..nk {
                                ds[j] = prow[j] * (dp[j] - dot) * scale;
                            }
                            {
                                let gq = &mut grads[q.0];
                                let gqrow = &mut gq[i * d + off..i * d + off + dh];
                                for j in 0..nk {
                                    let krow = &kv[j * d + off..j * d + off + dh];
                                    for t in 0..dh {
                                        gqrow[t] += ds[j] * krow[t];
                                    }
                                }
                            }
                            {
                                let gk = &mut grads[k.0];
                                let qrow = &qv[i * d + off..i * d + off + dh];
                                for j in 0..nk {
                                    let gkrow = &mut gk[j * d + off..j * d + off + dh];
                                    for t in 0..dh {
                                        gkrow[t] += ds[j] * qrow[t];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            grads[idx] = gout;
        }
        Ok(())
    }
}

/// First/second-moment buffers for Adam, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect(),
            t: 0,
        }
    }
}

/// Bias-corrected Adam update for a single tensor; `t` is the 1-based
/// global step shared by the whole parameter set.
pub fn adam_update(
    p: &mut Tensor,
    g: &Tensor,
    m: &mut Tensor,
    v: &mut Tensor,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if (p.rows, p.cols) != (g.rows, g.cols) {
        return Err(Error::shape(format!(
            "adam param {}x{} grad {}x{}",
            p.rows, p.cols, g.rows, g.cols
        )));
    }
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    for i in 0..p.data.len() {
        let gi = g.data[i];
        m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * gi;
        v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * gi * gi;
        let mhat = m.data[i] / c1;
        let vhat = v.data[i] / c2;
        p.data[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}

/// Standard bias-corrected Adam update, applied in place.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(format!(
            "adam_step params {} grads {} state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        adam_update(p, g, m, v, state.t, lr, beta1, beta2, eps)?;
    }
    Ok(())
}

/// Per-epoch learning rate: lr0 * decay^epoch.
pub fn lr_schedule(lr0: f64, decay: f64, epoch: u32) -> f64 {
    lr0 * decay.powi(epoch as i32)
}
