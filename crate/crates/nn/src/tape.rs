//! Eager reverse-mode tape.
//!
//! Every operation computes its value immediately and records just enough
//! state to run its adjoint later. Gradients flow back into a flat vector
//! aligned with the [`ParamLayout`](crate::ParamLayout) the parameters came
//! from, and optionally into nodes created with [`Tape::input`].
//!
//! Image activations use a channel-major layout `[C, B, H, W]` so that a
//! convolution is a single `[O, C·k·k] x [C·k·k, B·H·W]` product.

use crate::gemm::{gemm, Layout};
use crate::params::ParamSpec;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ConvGeom {
    cin: usize,
    cout: usize,
    batch: usize,
    h: usize,
    w: usize,
    k: usize,
}

#[derive(Debug)]
enum Op {
    Constant,
    Input,
    Param { offset: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddTiled(Var, Var),
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Silu(Var),
    Gelu(Var),
    Sigmoid(Var),
    Tanh(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom, cols: Option<Vec<f64>> },
    AvgPool2 { x: Var, c: usize, b: usize, h: usize, w: usize },
    Upsample2 { x: Var, c: usize, b: usize, h: usize, w: usize },
    ConcatRows(Vec<Var>),
    AddChannel { x: Var, e: Var, c: usize, b: usize, plane: usize },
    Attention { q: Var, k: Var, v: Var, batch: usize, seq: usize, heads: usize, probs: Vec<f64> },
    SquaredError { pred: Var, target: Vec<f64>, scale: f64 },
    BceWithLogits { logits: Var, labels: Vec<f64> },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    shape: Vec<usize>,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    /// Gradient with respect to the flat parameter vector.
    pub params: Vec<f64>,
    nodes: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to an [`Tape::input`] node, if it was reached.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.nodes.get(v.0).and_then(|g| g.as_deref())
    }
}

/// A single forward pass. Cheap to create; drop it after `backward`.
pub struct Tape<'p> {
    params: &'p [f64],
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.len(), 1, "scalar() on a node with {} elements", val.len());
        val[0]
    }

    pub fn into_value(mut self, v: Var) -> Vec<f64> {
        std::mem::take(&mut self.nodes[v.0].value)
    }

    fn push(&mut self, value: Vec<f64>, shape: Vec<usize>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        self.nodes.push(Node {
            value,
            shape,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Leaf without gradient tracking.
    pub fn constant(&mut self, value: Vec<f64>, shape: &[usize]) -> Var {
        assert_eq!(value.len(), shape.iter().product::<usize>(), "constant shape mismatch");
        self.push(value, shape.to_vec(), Op::Constant, false)
    }

    /// Leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn input(&mut self, value: Vec<f64>, shape: &[usize]) -> Var {
        assert_eq!(value.len(), shape.iter().product::<usize>(), "input shape mismatch");
        self.push(value, shape.to_vec(), Op::Input, true)
    }

    pub fn param(&mut self, spec: &ParamSpec) -> Var {
        let value = self.params[spec.range()].to_vec();
        self.push(
            value,
            spec.shape.clone(),
            Op::Param {
                offset: spec.offset,
            },
            true,
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.len(), vb.len(), "add: length mismatch");
        let value = va.iter().zip(vb).map(|(x, y)| x + y).collect();
        let ng = self.ng(a) || self.ng(b);
        let shape = self.shape(a).to_vec();
        self.push(value, shape, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.len(), vb.len(), "sub: length mismatch");
        let value = va.iter().zip(vb).map(|(x, y)| x - y).collect();
        let ng = self.ng(a) || self.ng(b);
        let shape = self.shape(a).to_vec();
        self.push(value, shape, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.len(), vb.len(), "mul: length mismatch");
        let value = va.iter().zip(vb).map(|(x, y)| x * y).collect();
        let ng = self.ng(a) || self.ng(b);
        let shape = self.shape(a).to_vec();
        self.push(value, shape, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).iter().map(|x| x * s).collect();
        let ng = self.ng(a);
        let shape = self.shape(a).to_vec();
        self.push(value, shape, Op::Scale(a, s), ng)
    }

    /// `x[i] + p[i mod p.len()]`: row bias (`p` of shape `[c]`) or a tiled
    /// block such as a positional table (`p` of shape `[L, d]`).
    pub fn add_tiled(&mut self, x: Var, p: Var) -> Var {
        let (vx, vp) = (self.value(x), self.value(p));
        assert!(
            !vp.is_empty() && vx.len() % vp.len() == 0,
            "add_tiled: {} is not a multiple of {}",
            vx.len(),
            vp.len()
        );
        let value = vx
            .chunks(vp.len())
            .flat_map(|row| row.iter().zip(vp).map(|(a, b)| a + b))
            .collect();
        let ng = self.ng(x) || self.ng(p);
        let shape = self.shape(x).to_vec();
        self.push(value, shape, Op::AddTiled(x, p), ng)
    }

    /// `[m, k] x [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert!(sa.len() == 2 && sb.len() == 2 && sa[1] == sb[0], "matmul: {sa:?} x {sb:?}");
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            1.0,
            self.value(a),
            Layout::row_major(k),
            self.value(b),
            Layout::row_major(n),
            0.0,
            &mut out,
            Layout::row_major(n),
        );
        let ng = self.ng(a) || self.ng(b);
        self.push(out, vec![m, n], Op::MatMul { a, b, m, k, n }, ng)
    }

    /// `x · w + b` for `x: [n, in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_tiled(y, b)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).iter().map(|&v| f(v)).collect();
        let ng = self.ng(x);
        let shape = self.shape(x).to_vec();
        self.push(value, shape, op, ng)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * sigmoid(v), Op::Silu(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, gelu, Op::Gelu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    /// Normalizes each row of `x: [n, d]`, then applies `gamma`, `beta` of shape `[d]`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().expect("layer_norm on scalar");
        let (vx, g, bt) = (self.value(x), self.value(gamma), self.value(beta));
        assert!(g.len() == d && bt.len() == d, "layer_norm: affine size mismatch");
        let rows = vx.len() / d;
        let mut xhat = vec![0.0; vx.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; vx.len()];
        for r in 0..rows {
            let row = &vx[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let xh = (row[j] - mean) * rs;
                xhat[r * d + j] = xh;
                out[r * d + j] = xh * g[j] + bt[j];
            }
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(
            out,
            shape,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            ng,
        )
    }

    /// Stride-1 "same" convolution. `x: [C, B, H, W]`, `w: [O, C, k, k]` with
    /// odd `k`, `b: [O]`; output `[O, B, H, W]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        assert!(sx.len() == 4 && sw.len() == 4, "conv2d: expected 4-d tensors");
        assert_eq!(sx[0], sw[1], "conv2d: channel mismatch");
        assert!(sw[2] == sw[3] && sw[2] % 2 == 1, "conv2d: kernel must be square and odd");
        let geom = ConvGeom {
            cin: sx[0],
            cout: sw[0],
            batch: sx[1],
            h: sx[2],
            w: sx[3],
            k: sw[2],
        };
        assert_eq!(self.value(b).len(), geom.cout, "conv2d: bias size");
        let n = geom.batch * geom.h * geom.w;
        let kk = geom.cin * geom.k * geom.k;
        let cols = if geom.k == 1 {
            None
        } else {
            Some(im2col(self.value(x), &geom))
        };
        let mut out = vec![0.0; geom.cout * n];
        {
            let src = cols.as_deref().unwrap_or_else(|| self.value(x));
            gemm(
                geom.cout,
                kk,
                n,
                1.0,
                self.value(w),
                Layout::row_major(kk),
                src,
                Layout::row_major(n),
                0.0,
                &mut out,
                Layout::row_major(n),
            );
        }
        for (row, &bias) in out.chunks_mut(n).zip(self.value(b)) {
            row.iter_mut().for_each(|v| *v += bias);
        }
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(
            out,
            vec![geom.cout, geom.batch, geom.h, geom.w],
            Op::Conv2d { x, w, b, geom, cols },
            ng,
        )
    }

    /// 2x2 mean pooling on `[C, B, H, W]` with even `H`, `W`.
    pub fn avg_pool2(&mut self, x: Var) -> Var {
        let s = self.shape(x).to_vec();
        let (c, b, h, w) = (s[0], s[1], s[2], s[3]);
        assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2: odd spatial size {h}x{w}");
        let (ho, wo) = (h / 2, w / 2);
        let vx = self.value(x);
        let mut out = vec![0.0; c * b * ho * wo];
        for p in 0..c * b {
            let src = &vx[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
            for y in 0..ho {
                for xx in 0..wo {
                    let i = 2 * y * w + 2 * xx;
                    dst[y * wo + xx] = 0.25 * (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]);
                }
            }
        }
        let ng = self.ng(x);
        self.push(out, vec![c, b, ho, wo], Op::AvgPool2 { x, c, b, h, w }, ng)
    }

    /// Nearest-neighbour 2x upsampling on `[C, B, H, W]`.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let s = self.shape(x).to_vec();
        let (c, b, h, w) = (s[0], s[1], s[2], s[3]);
        let (ho, wo) = (2 * h, 2 * w);
        let vx = self.value(x);
        let mut out = vec![0.0; c * b * ho * wo];
        for p in 0..c * b {
            let src = &vx[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
            for y in 0..ho {
                for xx in 0..wo {
                    dst[y * wo + xx] = src[(y / 2) * w + xx / 2];
                }
            }
        }
        let ng = self.ng(x);
        self.push(out, vec![c, b, ho, wo], Op::Upsample2 { x, c, b, h, w }, ng)
    }

    /// Concatenates along the leading axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: no inputs");
        let tail = self.shape(parts[0])[1..].to_vec();
        let mut lead = 0;
        let mut value = Vec::new();
        for &p in parts {
            assert_eq!(&self.shape(p)[1..], tail.as_slice(), "concat_rows: trailing shape mismatch");
            lead += self.shape(p)[0];
            value.extend_from_slice(self.value(p));
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        let mut shape = vec![lead];
        shape.extend(tail);
        self.push(value, shape, Op::ConcatRows(parts.to_vec()), ng)
    }

    /// Adds a per-(batch, channel) offset `e: [B, C]` to every spatial cell of
    /// `x: [C, B, H, W]`.
    pub fn add_channel(&mut self, x: Var, e: Var) -> Var {
        let s = self.shape(x).to_vec();
        let (c, b) = (s[0], s[1]);
        let plane: usize = s[2..].iter().product();
        assert_eq!(self.shape(e), &[b, c], "add_channel: embedding shape");
        let ve = self.value(e);
        let mut value = self.value(x).to_vec();
        for ci in 0..c {
            for bi in 0..b {
                let off = (ci * b + bi) * plane;
                let add = ve[bi * c + ci];
                value[off..off + plane].iter_mut().for_each(|v| *v += add);
            }
        }
        let ng = self.ng(x) || self.ng(e);
        self.push(value, s, Op::AddChannel { x, e, c, b, plane }, ng)
    }

    /// Multi-head scaled dot-product self-attention over `batch` sequences of
    /// length `seq`. `q`, `k`, `v` are `[batch·seq, d]` with heads occupying
    /// contiguous column blocks of width `d / heads`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, batch: usize, seq: usize, heads: usize) -> Var {
        let shape = self.shape(q).to_vec();
        assert_eq!(shape.len(), 2, "attention: expected [batch*seq, d]");
        assert_eq!(shape[0], batch * seq, "attention: row count");
        assert!(self.shape(k) == shape.as_slice() && self.shape(v) == shape.as_slice());
        let d = shape[1];
        assert_eq!(d % heads, 0, "attention: d not divisible by heads");
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        let mut probs = vec![0.0; batch * heads * seq * seq];
        let mut out = vec![0.0; batch * seq * d];
        for bi in 0..batch {
            for hi in 0..heads {
                let p = &mut probs[(bi * heads + hi) * seq * seq..][..seq * seq];
                let col = hi * dk;
                for i in 0..seq {
                    let qi = &vq[(bi * seq + i) * d + col..][..dk];
                    let row = &mut p[i * seq..(i + 1) * seq];
                    let mut max = f64::NEG_INFINITY;
                    for (j, r) in row.iter_mut().enumerate() {
                        let kj = &vk[(bi * seq + j) * d + col..][..dk];
                        *r = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                        max = max.max(*r);
                    }
                    let mut z = 0.0;
                    for r in row.iter_mut() {
                        *r = (*r - max).exp();
                        z += *r;
                    }
                    row.iter_mut().for_each(|r| *r /= z);
                    let oi = &mut out[(bi * seq + i) * d + col..][..dk];
                    for (j, &pij) in row.iter().enumerate() {
                        let vj = &vv[(bi * seq + j) * d + col..][..dk];
                        oi.iter_mut().zip(vj).for_each(|(o, x)| *o += pij * x);
                    }
                }
            }
        }
        let ng = self.ng(q) || self.ng(k) || self.ng(v);
        self.push(
            out,
            shape,
            Op::Attention {
                q,
                k,
                v,
                batch,
                seq,
                heads,
                probs,
            },
            ng,
        )
    }

    /// `scale · Σ (pred − target)²` as a scalar node.
    pub fn squared_error(&mut self, pred: Var, target: Vec<f64>, scale: f64) -> Var {
        let vp = self.value(pred);
        assert_eq!(vp.len(), target.len(), "squared_error: length mismatch");
        let s: f64 = vp.iter().zip(&target).map(|(p, t)| (p - t) * (p - t)).sum();
        let ng = self.ng(pred);
        self.push(vec![scale * s], vec![1], Op::SquaredError { pred, target, scale }, ng)
    }

    /// Mean binary cross-entropy of `logits` against 0/1 `labels`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: Vec<f64>) -> Var {
        let vl = self.value(logits);
        assert_eq!(vl.len(), labels.len(), "bce_with_logits: length mismatch");
        let n = vl.len() as f64;
        // max(z,0) - z*y + ln(1 + e^{-|z|})
        let s: f64 = vl
            .iter()
            .zip(&labels)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let ng = self.ng(logits);
        self.push(vec![s / n], vec![1], Op::BceWithLogits { logits, labels }, ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let ng = self.ng(x);
        self.push(vec![s], vec![1], Op::Sum(x), ng)
    }

    /// Back-propagates from a scalar node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward: root must be scalar");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params = vec![0.0; self.params.len()];
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads, &mut params);
            if matches!(node.op, Op::Input) {
                grads[idx] = Some(g);
            }
        }
        Gradients {
            params,
            nodes: grads,
        }
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>], params: &mut [f64]) {
        match &node.op {
            Op::Constant | Op::Input => {}
            Op::Param { offset } => {
                params[*offset..*offset + g.len()]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(p, d)| *p += d);
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, d)| *x += d);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(x, d)| *x += d);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, d)| *x += d);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(x, d)| *x -= d);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * vb[i];
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for i in 0..g.len() {
                        gb[i] += g[i] * va[i];
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, d)| *x += s * d);
                }
            }
            Op::AddTiled(x, p) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, d)| *a += d);
                }
                if let Some(gp) = self.acc(grads, *p) {
                    let n = gp.len();
                    for row in g.chunks(n) {
                        gp.iter_mut().zip(row).for_each(|(a, d)| *a += d);
                    }
                }
            }
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let (va, vb) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.acc(grads, *a) {
                    // dA = dC · Bᵀ
                    gemm(
                        m,
                        n,
                        k,
                        1.0,
                        g,
                        Layout::row_major(n),
                        vb,
                        Layout::transposed(n),
                        1.0,
                        ga,
                        Layout::row_major(k),
                    );
                }
                if let Some(gb) = self.acc(grads, *b) {
                    // dB = Aᵀ · dC
                    gemm(
                        k,
                        m,
                        n,
                        1.0,
                        va,
                        Layout::transposed(k),
                        g,
                        Layout::row_major(n),
                        1.0,
                        gb,
                        Layout::row_major(n),
                    );
                }
            }
            Op::Silu(x) => {
                let vx = self.value(*x);
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.len() {
                        let s = sigmoid(vx[i]);
                        gx[i] += g[i] * (s + vx[i] * s * (1.0 - s));
                    }
                }
            }
            Op::Gelu(x) => {
                let vx = self.value(*x);
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * gelu_grad(vx[i]);
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                }
            }
            Op::Tanh(x) => {
                let y = &node.value;
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let d = self.value(*gamma).len();
                let gm = self.value(*gamma);
                if let Some(gg) = self.acc(grads, *gamma) {
                    for (row_g, row_x) in g.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            gg[j] += row_g[j] * row_x[j];
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *beta) {
                    for row_g in g.chunks(d) {
                        gb.iter_mut().zip(row_g).for_each(|(a, b)| *a += b);
                    }
                }
                if let Some(gx) = self.acc(grads, *x) {
                    let mut dxhat = vec![0.0; d];
                    for (r, &rs) in rstd.iter().enumerate() {
                        let row_g = &g[r * d..(r + 1) * d];
                        let row_x = &xhat[r * d..(r + 1) * d];
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..d {
                            dxhat[j] = row_g[j] * gm[j];
                            mean_d += dxhat[j];
                            mean_dx += dxhat[j] * row_x[j];
                        }
                        mean_d /= d as f64;
                        mean_dx /= d as f64;
                        let out = &mut gx[r * d..(r + 1) * d];
                        for j in 0..d {
                            out[j] += rs * (dxhat[j] - mean_d - row_x[j] * mean_dx);
                        }
                    }
                }
            }
            Op::Conv2d { x, w, b, geom, cols } => {
                let n = geom.batch * geom.h * geom.w;
                let kk = geom.cin * geom.k * geom.k;
                let src = cols.as_deref().unwrap_or_else(|| self.value(*x));
                if let Some(gw) = self.acc(grads, *w) {
                    gemm(
                        geom.cout,
                        n,
                        kk,
                        1.0,
                        g,
                        Layout::row_major(n),
                        src,
                        Layout::transposed(n),
                        1.0,
                        gw,
                        Layout::row_major(kk),
                    );
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (o, row) in g.chunks(n).enumerate() {
                        gb[o] += row.iter().sum::<f64>();
                    }
                }
                if self.nodes[x.0].needs_grad {
                    let mut dcols = vec![0.0; kk * n];
                    gemm(
                        kk,
                        geom.cout,
                        n,
                        1.0,
                        self.value(*w),
                        Layout::transposed(kk),
                        g,
                        Layout::row_major(n),
                        0.0,
                        &mut dcols,
                        Layout::row_major(n),
                    );
                    let gx = self.acc(grads, *x).expect("needs_grad checked");
                    if geom.k == 1 {
                        gx.iter_mut().zip(&dcols).for_each(|(a, d)| *a += d);
                    } else {
                        col2im_add(&dcols, geom, gx);
                    }
                }
            }
            Op::AvgPool2 { x, c, b, h, w } => {
                if let Some(gx) = self.acc(grads, *x) {
                    let (ho, wo) = (h / 2, w / 2);
                    for p in 0..c * b {
                        let src = &g[p * ho * wo..(p + 1) * ho * wo];
                        let dst = &mut gx[p * h * w..(p + 1) * h * w];
                        for y in 0..ho {
                            for xx in 0..wo {
                                let d = 0.25 * src[y * wo + xx];
                                let i = 2 * y * w + 2 * xx;
                                dst[i] += d;
                                dst[i + 1] += d;
                                dst[i + w] += d;
                                dst[i + w + 1] += d;
                            }
                        }
                    }
                }
            }
            Op::Upsample2 { x, c, b, h, w } => {
                if let Some(gx) = self.acc(grads, *x) {
                    let (ho, wo) = (2 * h, 2 * w);
                    for p in 0..c * b {
                        let src = &g[p * ho * wo..(p + 1) * ho * wo];
                        let dst = &mut gx[p * h * w..(p + 1) * h * w];
                        for y in 0..ho {
                            for xx in 0..wo {
                                dst[(y / 2) * w + xx / 2] += src[y * wo + xx];
                            }
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.len();
                    if let Some(gp) = self.acc(grads, p) {
                        gp.iter_mut().zip(&g[off..off + len]).for_each(|(a, d)| *a += d);
                    }
                    off += len;
                }
            }
            Op::AddChannel { x, e, c, b, plane } => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, d)| *a += d);
                }
                if let Some(ge) = self.acc(grads, *e) {
                    for ci in 0..*c {
                        for bi in 0..*b {
                            let off = (ci * b + bi) * plane;
                            ge[bi * c + ci] += g[off..off + plane].iter().sum::<f64>();
                        }
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                batch,
                seq,
                heads,
                probs,
            } => self.attention_backward(g, grads, (*q, *k, *v), (*batch, *seq, *heads), probs),
            Op::SquaredError { pred, target, scale } => {
                let vp = self.value(*pred);
                if let Some(gp) = self.acc(grads, *pred) {
                    for i in 0..vp.len() {
                        gp[i] += g[0] * scale * 2.0 * (vp[i] - target[i]);
                    }
                }
            }
            Op::BceWithLogits { logits, labels } => {
                let vl = self.value(*logits);
                let n = vl.len() as f64;
                if let Some(gl) = self.acc(grads, *logits) {
                    for i in 0..vl.len() {
                        gl[i] += g[0] * (sigmoid(vl[i]) - labels[i]) / n;
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().for_each(|a| *a += g[0]);
                }
            }
        }
    }

    fn attention_backward(
        &self,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        (q, k, v): (Var, Var, Var),
        (batch, seq, heads): (usize, usize, usize),
        probs: &[f64],
    ) {
        let d = self.shape(q)[1];
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        let mut dq = vec![0.0; vq.len()];
        let mut dkey = vec![0.0; vk.len()];
        let mut dv = vec![0.0; vv.len()];
        let mut dp = vec![0.0; seq];
        for bi in 0..batch {
            for hi in 0..heads {
                let p = &probs[(bi * heads + hi) * seq * seq..][..seq * seq];
                let col = hi * dk;
                for i in 0..seq {
                    let go = &g[(bi * seq + i) * d + col..][..dk];
                    let prow = &p[i * seq..(i + 1) * seq];
                    // dP_ij = dO_i · V_j ; dV_j += P_ij dO_i
                    let mut dot = 0.0;
                    for j in 0..seq {
                        let vj = &vv[(bi * seq + j) * d + col..][..dk];
                        dp[j] = go.iter().zip(vj).map(|(a, b)| a * b).sum();
                        dot += dp[j] * prow[j];
                        let dvj = &mut dv[(bi * seq + j) * d + col..][..dk];
                        dvj.iter_mut().zip(go).for_each(|(a, b)| *a += prow[j] * b);
                    }
                    let qi_off = (bi * seq + i) * d + col;
                    for j in 0..seq {
                        let ds = prow[j] * (dp[j] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let kj_off = (bi * seq + j) * d + col;
                        for c in 0..dk {
                            dq[qi_off + c] += ds * vk[kj_off + c];
                            dkey[kj_off + c] += ds * vq[qi_off + c];
                        }
                    }
                }
            }
        }
        for (var, d) in [(q, dq), (k, dkey), (v, dv)] {
            if let Some(gv) = self.acc(grads, var) {
                gv.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
            }
        }
    }
}

fn im2col(x: &[f64], geom: &ConvGeom) -> Vec<f64> {
    let ConvGeom {
        cin,
        batch,
        h,
        w,
        k,
        ..
    } = *geom;
    let pad = k / 2;
    let n = batch * h * w;
    let mut cols = vec![0.0; cin * k * k * n];
    for c in 0..cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * n;
                for b in 0..batch {
                    let src = &x[(c * batch + b) * h * w..][..h * w];
                    let dst = &mut cols[row + b * h * w..][..h * w];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        for xx in 0..w {
                            let sx = xx as isize + kx as isize - pad as isize;
                            if sx >= 0 && sx < w as isize {
                                dst[y * w + xx] = src[sy * w + sx as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im_add(dcols: &[f64], geom: &ConvGeom, gx: &mut [f64]) {
    let ConvGeom {
        cin,
        batch,
        h,
        w,
        k,
        ..
    } = *geom;
    let pad = k / 2;
    let n = batch * h * w;
    for c in 0..cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * n;
                for b in 0..batch {
                    let src = &dcols[row + b * h * w..][..h * w];
                    let dst = &mut gx[(c * batch + b) * h * w..][..h * w];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        for xx in 0..w {
                            let sx = xx as isize + kx as isize - pad as isize;
                            if sx >= 0 && sx < w as isize {
                                dst[sy * w + sx as usize] += src[y * w + xx];
                            }
                        }
                    }
                }
            }
        }
    }
}
