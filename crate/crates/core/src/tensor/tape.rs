use rand::Rng;

use super::gemm::{gemm, MatRef};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul { a: Var, b: Var },
    Linear { x: Var, w: Var, b: Option<Var> },
    Add { a: Var, b: Var },
    AddTiled { x: Var, y: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, s: f64 },
    Elu { x: Var },
    Sigmoid { x: Var },
    Relu { x: Var },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout { x: Var, mask: Vec<f64> },
    Softmax { x: Var },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        seq_len: usize,
        probs: Vec<f64>,
    },
    MeanGroups { x: Var, group: usize },
    Reshape { x: Var },
    Sum { x: Var },
    Mean { x: Var },
    BceWithLogits { z: Var, targets: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    requires_grad: bool,
    op: Op,
}

/// Dynamic reverse-mode tape. Built fresh for every forward pass; nodes are
/// appended in evaluation order, so the node list is already topologically
/// sorted.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
}

fn last_dim(shape: &[usize]) -> usize {
    *shape.last().expect("non-empty shape")
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            requires_grad,
            op,
        });
        self.values.push(value);
        self.grads.push(Vec::new());
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copies a tensor onto the tape. Its `requires_grad` flag is kept.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), t.requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t.shape().to_vec(), t.data, false, Op::Leaf))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        let g = &self.grads[v.0];
        (!g.is_empty()).then_some(g.as_slice())
    }

    /// Adds this node's gradient into `t.grad` (zeros when unreached).
    pub fn accumulate_grad(&self, v: Var, t: &mut Tensor) {
        let n = t.len();
        let dst = t.grad.get_or_insert_with(|| vec![0.0; n]);
        if let Some(g) = self.grad(v) {
            for (d, s) in dst.iter_mut().zip(g) {
                *d += s;
            }
        }
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v), self.value(v).to_vec()).expect("tape shapes are valid")
    }

    // ---------------------------------------------------------------- ops

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            MatRef::new(self.value(a), m, k),
            MatRef::new(self.value(b), k, n),
            &mut out,
            0.0,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, rg, Op::Matmul { a, b }))
    }

    /// `x W^T + b` over the last axis of `x`; `W` is `[out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sw.len() != 2 || last_dim(&sx) != sw[1] {
            return Err(Error::Shape {
                op: "linear",
                lhs: sx,
                rhs: sw,
            });
        }
        let (fan_out, fan_in) = (sw[0], sw[1]);
        if let Some(b) = b {
            if self.shape(b) != [fan_out] {
                return Err(Error::Shape {
                    op: "linear bias",
                    lhs: sw,
                    rhs: self.shape(b).to_vec(),
                });
            }
        }
        let rows = self.value(x).len() / fan_in;
        let mut out = vec![0.0; rows * fan_out];
        if let Some(b) = b {
            let bias = self.value(b);
            for row in out.chunks_exact_mut(fan_out) {
                row.copy_from_slice(bias);
            }
        }
        gemm(
            MatRef::new(self.value(x), rows, fan_in),
            MatRef::new(self.value(w), fan_out, fan_in).t(),
            &mut out,
            if b.is_some() { 1.0 } else { 0.0 },
        );
        let mut shape = sx;
        *shape.last_mut().unwrap() = fan_out;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(shape, out, rg, Op::Linear { x, w, b }))
    }

    fn binary_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("add", a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), out, rg, Op::Add { a, b }))
    }

    /// `x[i, :] + y[i mod r, :]` for `x: [n, d]`, `y: [r, d]`, `r | n`.
    pub fn add_tiled(&mut self, x: Var, y: Var) -> Result<Var> {
        let (sx, sy) = (self.shape(x).to_vec(), self.shape(y).to_vec());
        let (lx, ly) = (self.value(x).len(), self.value(y).len());
        if last_dim(&sx) != last_dim(&sy) || ly == 0 || lx % ly != 0 {
            return Err(Error::Shape {
                op: "add_tiled",
                lhs: sx,
                rhs: sy,
            });
        }
        let yv = self.value(y);
        let out = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, v)| v + yv[i % ly])
            .collect();
        let rg = self.rg(x) || self.rg(y);
        Ok(self.push(sx, out, rg, Op::AddTiled { x, y }))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("mul", a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), out, rg, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).iter().map(|v| v * s).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), out, rg, Op::Scale { x, s })
    }

    /// ELU with alpha = 1.
    pub fn elu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| elu(v)).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), out, rg, Op::Elu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), out, rg, Op::Sigmoid { x })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), out, rg, Op::Relu { x })
    }

    /// Standardizes the last axis, then applies `gain * xhat + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let d = last_dim(&sx);
        if d < 2 {
            return Err(Error::DegenerateAxis(format!(
                "layer_norm needs last axis >= 2, got {sx:?}"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::Config(format!("layer_norm eps must be > 0, got {eps}")));
        }
        for p in [gain, bias] {
            if self.shape(p) != [d] {
                return Err(Error::Shape {
                    op: "layer_norm affine",
                    lhs: sx,
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let xv = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        let rows = xv.len() / d;
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..d {
                let h = (row[c] - mean) * is;
                xhat[r * d + c] = h;
                out[r * d + c] = g[c] * h + b[c];
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            sx,
            out,
            rg,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// Inverted dropout. Identity (the same handle) at inference or `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, training: bool, rng: &mut SeededRng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout p must be in [0, 1), got {p}")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let out = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let rg = self.rg(x);
        Ok(self.push(self.shape(x).to_vec(), out, rg, Op::Dropout { x, mask }))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let d = last_dim(self.shape(x));
        let mut out = self.value(x).to_vec();
        for row in out.chunks_exact_mut(d) {
            softmax_in_place(row);
        }
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), out, rg, Op::Softmax { x })
    }

    /// Multi-head scaled dot-product self-attention core.
    ///
    /// `q`, `k`, `v` are `[batch * seq_len, d]` with the heads laid out as
    /// contiguous column blocks of width `d / heads`. Returns the concatenated
    /// per-head outputs, same shape as `q`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, seq_len: usize) -> Result<Var> {
        let sq = self.shape(q).to_vec();
        for other in [k, v] {
            if self.shape(other) != sq.as_slice() {
                return Err(Error::Shape {
                    op: "attention",
                    lhs: sq,
                    rhs: self.shape(other).to_vec(),
                });
            }
        }
        let d = last_dim(&sq);
        let rows = self.value(q).len() / d;
        if heads == 0 || d % heads != 0 || seq_len == 0 || rows % seq_len != 0 {
            return Err(Error::Shape {
                op: "attention heads/seq_len",
                lhs: sq,
                rhs: vec![heads, seq_len],
            });
        }
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let dh = d / heads;
        let t = seq_len;
        let batch = rows / t;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut probs = vec![0.0; batch * heads * t * t];
        let mut out = vec![0.0; rows * d];
        for b in 0..batch {
            for h in 0..heads {
                let off = h * dh;
                let pbase = (b * heads + h) * t * t;
                for i in 0..t {
                    let qi = &qv[(b * t + i) * d + off..][..dh];
                    let prow = &mut probs[pbase + i * t..pbase + (i + 1) * t];
                    for (j, p) in prow.iter_mut().enumerate() {
                        let kj = &kv[(b * t + j) * d + off..][..dh];
                        *p = scale * dot4(qi, kj);
                    }
                    softmax_in_place(prow);
                    let orow = &mut out[(b * t + i) * d + off..][..dh];
                    for (j, &p) in prow.iter().enumerate() {
                        let vj = &vv[(b * t + j) * d + off..][..dh];
                        for (o, x) in orow.iter_mut().zip(vj) {
                            *o += p * x;
                        }
                    }
                }
            }
        }
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        Ok(self.push(
            sq,
            out,
            rg,
            Op::Attention {
                q,
                k,
                v,
                heads,
                seq_len,
                probs,
            },
        ))
    }

    /// Averages consecutive groups of `group` rows: `[b * group, d] -> [b, d]`.
    pub fn mean_groups(&mut self, x: Var, group: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let d = last_dim(&sx);
        let rows = self.value(x).len() / d;
        if group == 0 || rows % group != 0 {
            return Err(Error::Shape {
                op: "mean_groups",
                lhs: sx,
                rhs: vec![group],
            });
        }
        let n = rows / group;
        let xv = self.value(x);
        let mut out = vec![0.0; n * d];
        for (r, row) in xv.chunks_exact(d).enumerate() {
            let o = &mut out[(r / group) * d..][..d];
            for (a, b) in o.iter_mut().zip(row) {
                *a += b;
            }
        }
        let inv = 1.0 / group as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let rg = self.rg(x);
        Ok(self.push(vec![n, d], out, rg, Op::MeanGroups { x, group }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let out = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape.to_vec(), out, rg, Op::Reshape { x }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.rg(x);
        self.push(vec![1], vec![s], rg, Op::Sum { x })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(x);
        self.push(vec![1], vec![s], rg, Op::Mean { x })
    }

    /// Mean binary cross-entropy on logits, computed in the stable
    /// `max(z, 0) - z y + ln(1 + e^{-|z|})` form.
    pub fn bce_with_logits(&mut self, z: Var, targets: &[f64]) -> Result<Var> {
        let zv = self.value(z);
        if zv.len() != targets.len() || targets.is_empty() {
            return Err(Error::Shape {
                op: "bce_with_logits",
                lhs: self.shape(z).to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let loss = zv
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / targets.len() as f64;
        let rg = self.rg(z);
        Ok(self.push(
            vec![1],
            vec![loss],
            rg,
            Op::BceWithLogits {
                z,
                targets: targets.to_vec(),
            },
        ))
    }

    // ----------------------------------------------------------- backward

    fn ensure_grad(grads: &mut [Vec<f64>], values: &[Vec<f64>], v: Var) {
        if grads[v.0].is_empty() {
            grads[v.0] = vec![0.0; values[v.0].len()];
        }
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Interior-node gradients are recomputed on every call while leaf
    /// gradients accumulate, so calling twice without a fresh tape doubles
    /// the leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Contract("loss is not on this tape".into()));
        }
        if self.values[loss.0].len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for (node, g) in self.nodes.iter().zip(self.grads.iter_mut()) {
            if !matches!(node.op, Op::Leaf) {
                g.clear();
            }
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        Self::ensure_grad(&mut self.grads, &self.values, loss);
        self.grads[loss.0][0] += 1.0;

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad || self.grads[idx].is_empty() {
                continue;
            }
            if matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let g = std::mem::take(&mut self.grads[idx]);
            self.backward_node(idx, &g);
            self.grads[idx] = g;
        }
        Ok(())
    }

    fn backward_node(&mut self, idx: usize, g: &[f64]) {
        let nodes = &self.nodes;
        let values = &self.values;
        let grads = &mut self.grads;
        let rg = |v: Var| nodes[v.0].requires_grad;
        let out = &values[idx];

        match &nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
                let n = nodes[b.0].shape[1];
                let gm = MatRef::new(g, m, n);
                if rg(*a) {
                    Self::ensure_grad(grads, values, *a);
                    let bv = MatRef::new(&values[b.0], k, n);
                    gemm(gm, bv.t(), &mut grads[a.0], 1.0);
                }
                if rg(*b) {
                    Self::ensure_grad(grads, values, *b);
                    let av = MatRef::new(&values[a.0], m, k);
                    gemm(av.t(), gm, &mut grads[b.0], 1.0);
                }
            }
            Op::Linear { x, w, b } => {
                let (fan_out, fan_in) = (nodes[w.0].shape[0], nodes[w.0].shape[1]);
                let rows = values[x.0].len() / fan_in;
                let gm = MatRef::new(g, rows, fan_out);
                if rg(*x) {
                    Self::ensure_grad(grads, values, *x);
                    let wv = MatRef::new(&values[w.0], fan_out, fan_in);
                    gemm(gm, wv, &mut grads[x.0], 1.0);
                }
                if rg(*w) {
                    Self::ensure_grad(grads, values, *w);
                    let xv = MatRef::new(&values[x.0], rows, fan_in);
                    gemm(gm.t(), xv, &mut grads[w.0], 1.0);
                }
                if let Some(b) = b.filter(|b| rg(*b)) {
                    Self::ensure_grad(grads, values, b);
                    let gb = &mut grads[b.0];
                    for row in g.chunks_exact(fan_out) {
                        for (d, s) in gb.iter_mut().zip(row) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if rg(v) {
                        Self::ensure_grad(grads, values, v);
                        for (d, s) in grads[v.0].iter_mut().zip(g) {
                            *d += s;
                        }
                    }
                }
            }
            Op::AddTiled { x, y } => {
                if rg(*x) {
                    Self::ensure_grad(grads, values, *x);
                    for (d, s) in grads[x.0].iter_mut().zip(g) {
                        *d += s;
                    }
                }
                if rg(*y) {
                    Self::ensure_grad(grads, values, *y);
                    let ly = values[y.0].len();
                    let gy = &mut grads[y.0];
                    for (i, s) in g.iter().enumerate() {
                        gy[i % ly] += s;
                    }
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (&values[a.0], &values[b.0]);
                if rg(*a) {
                    Self::ensure_grad(grads, values, *a);
                    for ((d, s), o) in grads[a.0].iter_mut().zip(g).zip(bv) {
                        *d += s * o;
                    }
                }
                if rg(*b) {
                    Self::ensure_grad(grads, values, *b);
                    for ((d, s), o) in grads[b.0].iter_mut().zip(g).zip(av) {
                        *d += s * o;
                    }
                }
            }
            Op::Scale { x, s } => {
                Self::ensure_grad(grads, values, *x);
                for (d, gi) in grads[x.0].iter_mut().zip(g) {
                    *d += gi * s;
                }
            }
            Op::Elu { x } => {
                Self::ensure_grad(grads, values, *x);
                let xv = &values[x.0];
                for ((d, gi), (&xi, &yi)) in grads[x.0].iter_mut().zip(g).zip(xv.iter().zip(out)) {
                    *d += gi * if xi > 0.0 { 1.0 } else { yi + 1.0 };
                }
            }
            Op::Sigmoid { x } => {
                Self::ensure_grad(grads, values, *x);
                for ((d, gi), &y) in grads[x.0].iter_mut().zip(g).zip(out) {
                    *d += gi * y * (1.0 - y);
                }
            }
            Op::Relu { x } => {
                Self::ensure_grad(grads, values, *x);
                let xv = &values[x.0];
                for ((d, gi), &xi) in grads[x.0].iter_mut().zip(g).zip(xv) {
                    if xi > 0.0 {
                        *d += gi;
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
                let d = *nodes[idx].shape.last().unwrap();
                if rg(*gain) {
                    Self::ensure_grad(grads, values, *gain);
                    let gg = &mut grads[gain.0];
                    for (grow, hrow) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for c in 0..d {
                            gg[c] += grow[c] * hrow[c];
                        }
                    }
                }
                if rg(*bias) {
                    Self::ensure_grad(grads, values, *bias);
                    let gb = &mut grads[bias.0];
                    for grow in g.chunks_exact(d) {
                        for c in 0..d {
                            gb[c] += grow[c];
                        }
                    }
                }
                if rg(*x) {
                    Self::ensure_grad(grads, values, *x);
                    let gain_v = &values[gain.0];
                    let gx = &mut grads[x.0];
                    let mut dxhat = vec![0.0; d];
                    for r in 0..inv_std.len() {
                        let grow = &g[r * d..(r + 1) * d];
                        let hrow = &xhat[r * d..(r + 1) * d];
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for c in 0..d {
                            dxhat[c] = grow[c] * gain_v[c];
                            s1 += dxhat[c];
                            s2 += dxhat[c] * hrow[c];
                        }
                        let k = inv_std[r] / d as f64;
                        for c in 0..d {
                            gx[r * d + c] += k * (d as f64 * dxhat[c] - s1 - hrow[c] * s2);
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                Self::ensure_grad(grads, values, *x);
                for ((d, gi), m) in grads[x.0].iter_mut().zip(g).zip(mask) {
                    *d += gi * m;
                }
            }
            Op::Softmax { x } => {
                Self::ensure_grad(grads, values, *x);
                let d = *nodes[idx].shape.last().unwrap();
                let gx = &mut grads[x.0];
                for (r, (grow, yrow)) in g.chunks_exact(d).zip(out.chunks_exact(d)).enumerate() {
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for c in 0..d {
                        gx[r * d + c] += yrow[c] * (grow[c] - dot);
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                seq_len,
                probs,
            } => {
                let d = *nodes[idx].shape.last().unwrap();
                let (heads, t) = (*heads, *seq_len);
                let dh = d / heads;
                let batch = values[q.0].len() / d / t;
                let scale = 1.0 / (dh as f64).sqrt();
                let mut dq = vec![0.0; values[q.0].len()];
                let mut dk = vec![0.0; dq.len()];
                let mut dv = vec![0.0; dq.len()];
                let (qv, kv, vv) = (&values[q.0], &values[k.0], &values[v.0]);
                let mut ds = vec![0.0; t];
                for b in 0..batch {
                    for h in 0..heads {
                        let off = h * dh;
                        let pbase = (b * heads + h) * t * t;
                        for i in 0..t {
                            let prow = &probs[pbase + i * t..pbase + (i + 1) * t];
                            let go = &g[(b * t + i) * d + off..][..dh];
                            let mut dot = 0.0;
                            for j in 0..t {
                                let vj = &vv[(b * t + j) * d + off..][..dh];
                                let dp = dot4(go, vj);
                                ds[j] = dp;
                                dot += dp * prow[j];
                                let dvj = &mut dv[(b * t + j) * d + off..][..dh];
                                for (x, y) in dvj.iter_mut().zip(go) {
                                    *x += prow[j] * y;
                                }
                            }
                            for j in 0..t {
                                ds[j] = prow[j] * (ds[j] - dot) * scale;
                            }
                            let qi = &qv[(b * t + i) * d + off..][..dh];
                            for j in 0..t {
                                let kj = &kv[(b * t + j) * d + off..][..dh];
                                let dqi = &mut dq[(b * t + i) * d + off..][..dh];
                                for (x, y) in dqi.iter_mut().zip(kj) {
                                    *x += ds[j] * y;
                                }
                                let dkj = &mut dk[(b * t + j) * d + off..][..dh];
                                for (x, y) in dkj.iter_mut().zip(qi) {
                                    *x += ds[j] * y;
                                }
                            }
                        }
                    }
                }
                for (var, local) in [(*q, dq), (*k, dk), (*v, dv)] {
                    if rg(var) {
                        Self::ensure_grad(grads, values, var);
                        for (d, s) in grads[var.0].iter_mut().zip(&local) {
                            *d += s;
                        }
                    }
                }
            }
            Op::MeanGroups { x, group } => {
                Self::ensure_grad(grads, values, *x);
                let d = *nodes[idx].shape.last().unwrap();
                let inv = 1.0 / *group as f64;
                let gx = &mut grads[x.0];
                for (r, row) in gx.chunks_exact_mut(d).enumerate() {
                    let src = &g[(r / group) * d..][..d];
                    for (a, b) in row.iter_mut().zip(src) {
                        *a += b * inv;
                    }
                }
            }
            Op::Reshape { x } => {
                Self::ensure_grad(grads, values, *x);
                for (d, s) in grads[x.0].iter_mut().zip(g) {
                    *d += s;
                }
            }
            Op::Sum { x } => {
                Self::ensure_grad(grads, values, *x);
                grads[x.0].iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Mean { x } => {
                Self::ensure_grad(grads, values, *x);
                let n = values[x.0].len() as f64;
                grads[x.0].iter_mut().for_each(|d| *d += g[0] / n);
            }
            Op::BceWithLogits { z, targets } => {
                Self::ensure_grad(grads, values, *z);
                let n = targets.len() as f64;
                let zv = &values[z.0];
                for ((d, &zi), &y) in grads[z.0].iter_mut().zip(zv).zip(targets) {
                    *d += g[0] * (sigmoid(zi) - y) / n;
                }
            }
        }
    }
}

/// Dot product with four independent accumulators so it vectorizes.
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
