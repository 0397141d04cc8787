//! Define-by-run reverse-mode autodiff over dense tensors.
//!
//! A [`Graph`] records every operation as it executes; [`Graph::backward`]
//! then walks the tape in reverse and accumulates gradients for every node,
//! leaves included. Build a fresh graph (or [`Graph::reset`] one) per
//! training step; parameters live outside the graph and re-enter as leaves.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use super::tensor::{mm_nn, mm_nt, mm_tn, Tensor};
use crate::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Train mode samples dropout masks; eval mode makes dropout the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    /// x[..., d] + v[d]
    AddVec(usize, usize),
    /// x[..., d] * v[d]
    MulVec(usize, usize),
    Matmul(usize, usize),
    Transpose(usize),
    Relu(usize),
    Sigmoid(usize),
    SoftmaxRows(usize),
    Conv2d {
        x: usize,
        w: usize,
        b: usize,
        stride: usize,
        pad: usize,
        /// im2col buffer per batch item, kept for the backward pass.
        cols: Vec<Vec<f64>>,
    },
    MaxPool2d {
        x: usize,
        /// winning input index per output element
        argmax: Vec<usize>,
    },
    Dropout {
        x: usize,
        /// 0 or 1/(1-p) per element (inverted scaling)
        mask: Vec<f64>,
    },
    Reshape(usize),
    SliceCols {
        x: usize,
        start: usize,
    },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    IndexBatch {
        x: usize,
        item: usize,
    },
    StackRows(Vec<usize>),
    MeanRows(usize),
    Gap2d(usize),
    GatherCols {
        x: usize,
        idx: Vec<usize>,
    },
    SoftmaxXent {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    MseTo {
        pred: usize,
        target: Vec<f64>,
    },
    SumAll(usize),
    MeanAll(usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded computation tape.
pub struct Graph {
    nodes: Vec<Node>,
    mode: Mode,
}

impl Graph {
    pub fn new(mode: Mode) -> Self {
        Graph { nodes: Vec::new(), mode }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Drop all recorded nodes so the graph can record a new pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.0 >= self.nodes.len() {
            return Err(Error::NoGraph);
        }
        Ok(v.0)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Insert a tensor as a leaf (input or parameter).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape != tb.shape {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {} vs {}",
                ta.shape_string(),
                tb.shape_string()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        self.same_shape(a, b, "add")?;
        let data = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.nodes[a.0].value.shape.clone();
        Ok(self.push(Tensor::new(shape, data), Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        self.same_shape(a, b, "sub")?;
        let data = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.nodes[a.0].value.shape.clone();
        Ok(self.push(Tensor::new(shape, data), Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        self.same_shape(a, b, "mul")?;
        let data = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.nodes[a.0].value.shape.clone();
        Ok(self.push(Tensor::new(shape, data), Op::Mul(a.0, b.0)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.check(a)?;
        let data = self.nodes[a.0].value.data.iter().map(|x| x * c).collect();
        let shape = self.nodes[a.0].value.shape.clone();
        Ok(self.push(Tensor::new(shape, data), Op::Scale(a.0, c)))
    }

    /// Broadcast-add a vector over the last axis.
    pub fn add_vec(&mut self, x: Var, v: Var) -> Result<Var> {
        self.check(x)?;
        self.check(v)?;
        let d = *self.nodes[x.0].value.shape.last().unwrap_or(&0);
        let vd = self.nodes[v.0].value.numel();
        if d != vd || self.nodes[v.0].value.rank() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "add_vec: last dim {d} vs vector length {vd}"
            )));
        }
        let vdata = &self.nodes[v.0].value.data;
        let data = self.nodes[x.0]
            .value
            .data
            .iter()
            .enumerate()
            .map(|(i, x)| x + vdata[i % d])
            .collect();
        let shape = self.nodes[x.0].value.shape.clone();
        Ok(self.push(Tensor::new(shape, data), Op::AddVec(x.0, v.0)))
    }

    /// Broadcast-multiply a vector over the last axis (per-channel gate).
    pub fn mul_vec(&mut self, x: Var, v: Var) -> Result<Var> {
        self.check(x)?;
        self.check(v)?;
        let d = *self.nodes[x.0].value.shape.last().unwrap_or(&0);
        let vd = self.nodes[v.0].value.numel();
        if d != vd || self.nodes[v.0].value.rank() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "mul_vec: last dim {d} vs vector length {vd}"
            )));
        }
        let vdata = &self.nodes[v.0].value.data;
        let data = self.nodes[x.0]
            .value
            .data
            .iter()
            .enumerate()
            .map(|(i, x)| x * vdata[i % d])
            .collect();
        let shape = self.nodes[x.0].value.shape.clone();
        Ok(self.push(Tensor::new(shape, data), Op::MulVec(x.0, v.0)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0) {
            return Err(Error::ShapeMismatch(format!(
                "matmul: {} x {}",
                ta.shape_string(),
                tb.shape_string()
            )));
        }
        let (m, k, n) = (ta.dim(0), ta.dim(1), tb.dim(1));
        let mut out = vec![0.0; m * n];
        mm_nn(&ta.data, &tb.data, m, k, n, &mut out);
        Ok(self.push(Tensor::new(vec![m, n], out), Op::Matmul(a.0, b.0)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let t = &self.nodes[a.0].value;
        if t.rank() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "transpose needs rank 2, got {}",
                t.shape_string()
            )));
        }
        let (m, n) = (t.dim(0), t.dim(1));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = t.data[i * n + j];
            }
        }
        Ok(self.push(Tensor::new(vec![n, m], out), Op::Transpose(a.0)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let data = self.nodes[a.0].value.data.iter().map(|&x| x.max(0.0)).collect();
        let shape = self.nodes[a.0].value.shape.clone();
        Ok(self.push(Tensor::new(shape, data), Op::Relu(a.0)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let data = self.nodes[a.0]
            .value
            .data
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let shape = self.nodes[a.0].value.shape.clone();
        Ok(self.push(Tensor::new(shape, data), Op::Sigmoid(a.0)))
    }

    /// Row-wise softmax of a 2-D tensor, max-subtracted for stability.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let t = &self.nodes[a.0].value;
        if t.rank() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "softmax_rows needs rank 2, got {}",
                t.shape_string()
            )));
        }
        let (m, n) = (t.dim(0), t.dim(1));
        let mut data = vec![0.0; m * n];
        for r in 0..m {
            let row = &t.data[r * n..(r + 1) * n];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let e = (x - mx).exp();
                data[r * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                data[r * n + j] /= sum;
            }
        }
        Ok(self.push(Tensor::new(vec![m, n], data), Op::SoftmaxRows(a.0)))
    }

    /// 2-D cross-correlation of x[N,C,H,W] with w[F,C,kh,kw] plus bias b[F].
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        self.check(x)?;
        self.check(w)?;
        self.check(b)?;
        let (tx, tw, tb) = (
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
        );
        if tx.rank() != 4 || tw.rank() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "conv2d: x {} w {}",
                tx.shape_string(),
                tw.shape_string()
            )));
        }
        let (nb, c, h, wd) = (tx.dim(0), tx.dim(1), tx.dim(2), tx.dim(3));
        let (f, wc, kh, kw) = (tw.dim(0), tw.dim(1), tw.dim(2), tw.dim(3));
        if wc != c || tb.numel() != f || stride == 0 {
            return Err(Error::ShapeMismatch(format!(
                "conv2d: {} channels vs kernel {}, bias {}",
                c,
                wc,
                tb.numel()
            )));
        }
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(Error::ShapeMismatch(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {h}x{wd}+{pad}"
            )));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        let ckk = c * kh * kw;
        let mut out = vec![0.0; nb * f * oh * ow];
        let mut cols_cache = Vec::with_capacity(nb);
        for n in 0..nb {
            let img = &tx.data[n * c * h * wd..(n + 1) * c * h * wd];
            let mut cols = vec![0.0; ckk * oh * ow];
            im2col(img, c, h, wd, kh, kw, stride, pad, oh, ow, &mut cols);
            let dst = &mut out[n * f * oh * ow..(n + 1) * f * oh * ow];
            mm_nn(&tw.data, &cols, f, ckk, oh * ow, dst);
            for fi in 0..f {
                let bias = tb.data[fi];
                for v in dst[fi * oh * ow..(fi + 1) * oh * ow].iter_mut() {
                    *v += bias;
                }
            }
            cols_cache.push(cols);
        }
        Ok(self.push(
            Tensor::new(vec![nb, f, oh, ow], out),
            Op::Conv2d {
                x: x.0,
                w: w.0,
                b: b.0,
                stride,
                pad,
                cols: cols_cache,
            },
        ))
    }

    /// Max pooling over x[N,C,H,W]; padding cells count as -inf.
    pub fn maxpool2d(&mut self, x: Var, kernel: usize, stride: usize, pad: usize) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.0].value;
        if tx.rank() != 4 || kernel == 0 || stride == 0 {
            return Err(Error::ShapeMismatch(format!(
                "maxpool2d on {}",
                tx.shape_string()
            )));
        }
        let (nb, c, h, w) = (tx.dim(0), tx.dim(1), tx.dim(2), tx.dim(3));
        if h + 2 * pad < kernel || w + 2 * pad < kernel {
            return Err(Error::ShapeMismatch(format!(
                "maxpool2d: kernel {kernel} larger than padded input {h}x{w}"
            )));
        }
        let oh = (h + 2 * pad - kernel) / stride + 1;
        let ow = (w + 2 * pad - kernel) / stride + 1;
        let mut out = vec![0.0; nb * c * oh * ow];
        let mut argmax = vec![usize::MAX; nb * c * oh * ow];
        for n in 0..nb {
            for ch in 0..c {
                let base = (n * c + ch) * h * w;
                for i in 0..oh {
                    for j in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = usize::MAX;
                        for ki in 0..kernel {
                            let y = (i * stride + ki) as isize - pad as isize;
                            if y < 0 || y as usize >= h {
                                continue;
                            }
                            for kj in 0..kernel {
                                let xx = (j * stride + kj) as isize - pad as isize;
                                if xx < 0 || xx as usize >= w {
                                    continue;
                                }
                                let idx = base + y as usize * w + xx as usize;
                                let v = tx.data[idx];
                                if v > best {
                                    best = v;
                                    best_idx = idx;
                                }
                            }
                        }
                        let o = ((n * c + ch) * oh + i) * ow + j;
                        out[o] = best;
                        argmax[o] = best_idx;
                    }
                }
            }
        }
        Ok(self.push(
            Tensor::new(vec![nb, c, oh, ow], out),
            Op::MaxPool2d { x: x.0, argmax },
        ))
    }

    /// Inverted-scaling dropout: identity in eval mode, mask of
    /// 0 or 1/(1-p) in train mode.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut impl Rng) -> Result<Var> {
        self.check(x)?;
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidParams(format!("dropout p {p} outside [0,1)")));
        }
        if self.mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - p;
        let inv = 1.0 / keep;
        let tx = &self.nodes[x.0].value;
        let mask: Vec<f64> = (0..tx.numel())
            .map(|_| if rng.gen::<f64>() < keep { inv } else { 0.0 })
            .collect();
        let data = tx.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = tx.shape.clone();
        Ok(self.push(Tensor::new(shape, data), Op::Dropout { x: x.0, mask }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.0].value;
        if shape.iter().product::<usize>() != tx.numel() {
            return Err(Error::ShapeMismatch(format!(
                "reshape {} to {:?}",
                tx.shape_string(),
                shape
            )));
        }
        let data = tx.data.clone();
        Ok(self.push(Tensor::new(shape, data), Op::Reshape(x.0)))
    }

    /// Columns [start, end) of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.0].value;
        if tx.rank() != 2 || start >= end || end > tx.dim(1) {
            return Err(Error::ShapeMismatch(format!(
                "slice_cols {start}..{end} of {}",
                tx.shape_string()
            )));
        }
        let (m, n) = (tx.dim(0), tx.dim(1));
        let w = end - start;
        let mut data = vec![0.0; m * w];
        for r in 0..m {
            data[r * w..(r + 1) * w].copy_from_slice(&tx.data[r * n + start..r * n + end]);
        }
        Ok(self.push(Tensor::new(vec![m, w], data), Op::SliceCols { x: x.0, start }))
    }

    /// Horizontal concatenation of 2-D tensors with equal row counts.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::ShapeMismatch("concat_cols of nothing".into()));
        }
        for &v in xs {
            self.check(v)?;
        }
        let m = self.nodes[xs[0].0].value.dim(0);
        let mut total = 0;
        for &v in xs {
            let t = &self.nodes[v.0].value;
            if t.rank() != 2 || t.dim(0) != m {
                return Err(Error::ShapeMismatch(format!(
                    "concat_cols: {} rows vs {}",
                    t.dim(0),
                    m
                )));
            }
            total += t.dim(1);
        }
        let mut data = vec![0.0; m * total];
        let mut off = 0;
        for &v in xs {
            let t = &self.nodes[v.0].value;
            let n = t.dim(1);
            for r in 0..m {
                data[r * total + off..r * total + off + n]
                    .copy_from_slice(&t.data[r * n..(r + 1) * n]);
            }
            off += n;
        }
        Ok(self.push(
            Tensor::new(vec![m, total], data),
            Op::ConcatCols(xs.iter().map(|v| v.0).collect()),
        ))
    }

    /// Vertical concatenation of 2-D tensors with equal column counts.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::ShapeMismatch("concat_rows of nothing".into()));
        }
        for &v in xs {
            self.check(v)?;
        }
        let n = self.nodes[xs[0].0].value.dim(1);
        let mut rows = 0;
        for &v in xs {
            let t = &self.nodes[v.0].value;
            if t.rank() != 2 || t.dim(1) != n {
                return Err(Error::ShapeMismatch(format!(
                    "concat_rows: {} cols vs {}",
                    t.dim(1),
                    n
                )));
            }
            rows += t.dim(0);
        }
        let mut data = Vec::with_capacity(rows * n);
        for &v in xs {
            data.extend_from_slice(&self.nodes[v.0].value.data);
        }
        Ok(self.push(
            Tensor::new(vec![rows, n], data),
            Op::ConcatRows(xs.iter().map(|v| v.0).collect()),
        ))
    }

    /// Select one item of the leading batch axis: [N, ...] -> [...].
    pub fn index_batch(&mut self, x: Var, item: usize) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.0].value;
        let nb = tx.dim(0);
        if tx.rank() < 2 || item >= nb {
            return Err(Error::ShapeMismatch(format!(
                "index_batch {item} of {}",
                tx.shape_string()
            )));
        }
        let rest: usize = tx.shape[1..].iter().product();
        let data = tx.data[item * rest..(item + 1) * rest].to_vec();
        Ok(self.push(
            Tensor::new(tx.shape[1..].to_vec(), data),
            Op::IndexBatch { x: x.0, item },
        ))
    }

    /// Stack rank-1 tensors of equal length into a matrix.
    pub fn stack_rows(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::ShapeMismatch("stack_rows of nothing".into()));
        }
        for &v in xs {
            self.check(v)?;
        }
        let d = self.nodes[xs[0].0].value.numel();
        let mut data = Vec::with_capacity(xs.len() * d);
        for &v in xs {
            let t = &self.nodes[v.0].value;
            if t.rank() != 1 || t.numel() != d {
                return Err(Error::ShapeMismatch(format!(
                    "stack_rows: {} vs length {d}",
                    t.shape_string()
                )));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(self.push(
            Tensor::new(vec![xs.len(), d], data),
            Op::StackRows(xs.iter().map(|v| v.0).collect()),
        ))
    }

    /// Mean over rows: [m,n] -> [n]. This is the global average pool over
    /// token positions.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.0].value;
        if tx.rank() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "mean_rows needs rank 2, got {}",
                tx.shape_string()
            )));
        }
        let (m, n) = (tx.dim(0), tx.dim(1));
        let mut data = vec![0.0; n];
        for r in 0..m {
            for j in 0..n {
                data[j] += tx.data[r * n + j];
            }
        }
        for v in data.iter_mut() {
            *v /= m as f64;
        }
        Ok(self.push(Tensor::new(vec![n], data), Op::MeanRows(x.0)))
    }

    /// Global average pool over spatial dims: [N,C,H,W] -> [N,C].
    pub fn gap2d(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.0].value;
        if tx.rank() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "gap2d needs rank 4, got {}",
                tx.shape_string()
            )));
        }
        let (nb, c, h, w) = (tx.dim(0), tx.dim(1), tx.dim(2), tx.dim(3));
        let hw = (h * w) as f64;
        let mut data = vec![0.0; nb * c];
        for n in 0..nb {
            for ch in 0..c {
                let base = (n * c + ch) * h * w;
                data[n * c + ch] = tx.data[base..base + h * w].iter().sum::<f64>() / hw;
            }
        }
        Ok(self.push(Tensor::new(vec![nb, c], data), Op::Gap2d(x.0)))
    }

    /// Pick one column per row: x[N,A], idx[N] -> [N].
    pub fn gather_cols(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        self.check(x)?;
        let tx = &self.nodes[x.0].value;
        let (m, n) = (tx.dim(0), tx.dim(1));
        if tx.rank() != 2 || idx.len() != m || idx.iter().any(|&i| i >= n) {
            return Err(Error::ShapeMismatch(format!(
                "gather_cols: {} with {} indices",
                tx.shape_string(),
                idx.len()
            )));
        }
        let data = idx
            .iter()
            .enumerate()
            .map(|(r, &j)| tx.data[r * n + j])
            .collect();
        Ok(self.push(
            Tensor::new(vec![m], data),
            Op::GatherCols { x: x.0, idx: idx.to_vec() },
        ))
    }

    /// Mean softmax cross-entropy over the batch; max-subtracted softmax.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check(logits)?;
        let tl = &self.nodes[logits.0].value;
        if tl.rank() != 2 || tl.dim(0) != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "softmax_xent: {} vs {} labels",
                tl.shape_string(),
                labels.len()
            )));
        }
        let (m, k) = (tl.dim(0), tl.dim(1));
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidLabel(bad));
        }
        let mut probs = vec![0.0; m * k];
        let mut loss = 0.0;
        for r in 0..m {
            let row = &tl.data[r * k..(r + 1) * k];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let e = (x - mx).exp();
                probs[r * k + j] = e;
                sum += e;
            }
            for j in 0..k {
                probs[r * k + j] /= sum;
            }
            loss -= probs[r * k + labels[r]].max(f64::MIN_POSITIVE).ln();
        }
        loss /= m as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits: logits.0,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Mean squared error of a vector against fixed (detached) targets.
    pub fn mse_to(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        self.check(pred)?;
        let tp = &self.nodes[pred.0].value;
        if tp.numel() != target.len() || target.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "mse_to: {} vs {} targets",
                tp.numel(),
                target.len()
            )));
        }
        let loss = tp
            .data
            .iter()
            .zip(target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / target.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::MseTo {
                pred: pred.0,
                target: target.to_vec(),
            },
        ))
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let s = self.nodes[x.0].value.data.iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::SumAll(x.0)))
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let t = &self.nodes[x.0].value;
        let s = t.data.iter().sum::<f64>() / t.numel() as f64;
        Ok(self.push(Tensor::scalar(s), Op::MeanAll(x.0)))
    }

    /// Reverse-mode gradient accumulation from a scalar loss. Returns the
    /// per-node gradients; read them through [`GradStore::grad`].
    pub fn backward(&mut self, loss: Var) -> Result<GradStore> {
        let idx = self.check(loss)?;
        if self.nodes.is_empty() {
            return Err(Error::NoGraph);
        }
        if !self.nodes[idx].value.is_scalar() {
            return Err(Error::ShapeMismatch(format!(
                "backward needs a scalar loss, got {}",
                self.nodes[idx].value.shape_string()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[idx] = Some(vec![1.0]);
        for i in (0..=idx).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.accumulate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(GradStore { grads })
    }

    fn ensure<'a>(
        grads: &'a mut [Option<Vec<f64>>],
        idx: usize,
        len: usize,
    ) -> &'a mut Vec<f64> {
        grads[idx].get_or_insert_with(|| vec![0.0; len])
    }

    fn accumulate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let numel = |idx: usize| self.nodes[idx].value.numel();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                let ga = Self::ensure(grads, *a, numel(*a));
                for (x, y) in ga.iter_mut().zip(g) {
                    *x += y;
                }
                let gb = Self::ensure(grads, *b, numel(*b));
                for (x, y) in gb.iter_mut().zip(g) {
                    *x += y;
                }
            }
            Op::Sub(a, b) => {
                let ga = Self::ensure(grads, *a, numel(*a));
                for (x, y) in ga.iter_mut().zip(g) {
                    *x += y;
                }
                let gb = Self::ensure(grads, *b, numel(*b));
                for (x, y) in gb.iter_mut().zip(g) {
                    *x -= y;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&self.nodes[*a].value.data, &self.nodes[*b].value.data);
                {
                    let ga = Self::ensure(grads, *a, numel(*a));
                    for ((x, y), b) in ga.iter_mut().zip(g).zip(bv) {
                        *x += y * b;
                    }
                }
                let gb = Self::ensure(grads, *b, numel(*b));
                for ((x, y), a) in gb.iter_mut().zip(g).zip(av) {
                    *x += y * a;
                }
            }
            Op::Scale(a, c) => {
                let ga = Self::ensure(grads, *a, numel(*a));
                for (x, y) in ga.iter_mut().zip(g) {
                    *x += y * c;
                }
            }
            Op::AddVec(x, v) => {
                let d = numel(*v);
                {
                    let gx = Self::ensure(grads, *x, numel(*x));
                    for (a, y) in gx.iter_mut().zip(g) {
                        *a += y;
                    }
                }
                let gv = Self::ensure(grads, *v, d);
                for (i, y) in g.iter().enumerate() {
                    gv[i % d] += y;
                }
            }
            Op::MulVec(x, v) => {
                let d = numel(*v);
                let xv = &self.nodes[*x].value.data;
                let vv = &self.nodes[*v].value.data;
                {
                    let gx = Self::ensure(grads, *x, numel(*x));
                    for (i, y) in g.iter().enumerate() {
                        gx[i] += y * vv[i % d];
                    }
                }
                let gv = Self::ensure(grads, *v, d);
                for (i, y) in g.iter().enumerate() {
                    gv[i % d] += y * xv[i];
                }
            }
            Op::Matmul(a, b) => {
                let ta = &self.nodes[*a].value;
                let tb = &self.nodes[*b].value;
                let (m, k, n) = (ta.dim(0), ta.dim(1), tb.dim(1));
                {
                    let ga = Self::ensure(grads, *a, m * k);
                    mm_nt(g, &tb.data, m, n, k, ga);
                }
                let gb = Self::ensure(grads, *b, k * n);
                mm_tn(&ta.data, g, k, m, n, gb);
            }
            Op::Transpose(a) => {
                let ta = &self.nodes[*a].value;
                let (m, n) = (ta.dim(0), ta.dim(1));
                let ga = Self::ensure(grads, *a, m * n);
                // g has shape [n, m]
                for j in 0..n {
                    for i in 0..m {
                        ga[i * n + j] += g[j * m + i];
                    }
                }
            }
            Op::Relu(a) => {
                let av = &self.nodes[*a].value.data;
                let ga = Self::ensure(grads, *a, numel(*a));
                for ((x, y), v) in ga.iter_mut().zip(g).zip(av) {
                    if *v > 0.0 {
                        *x += y;
                    }
                }
            }
            Op::Sigmoid(a) => {
                let yv = &self.nodes[i].value.data;
                let ga = Self::ensure(grads, *a, numel(*a));
                for ((x, gy), y) in ga.iter_mut().zip(g).zip(yv) {
                    *x += gy * y * (1.0 - y);
                }
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let (m, n) = (y.dim(0), y.dim(1));
                let ga = Self::ensure(grads, *a, m * n);
                for r in 0..m {
                    let yr = &y.data[r * n..(r + 1) * n];
                    let gr = &g[r * n..(r + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        ga[r * n + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::Conv2d { x, w, b, stride, pad, cols } => {
                let tx = &self.nodes[*x].value;
                let tw = &self.nodes[*w].value;
                let ty = &self.nodes[i].value;
                let (nb, c, h, wd) = (tx.dim(0), tx.dim(1), tx.dim(2), tx.dim(3));
                let (f, _, kh, kw) = (tw.dim(0), tw.dim(1), tw.dim(2), tw.dim(3));
                let (oh, ow) = (ty.dim(2), ty.dim(3));
                let ckk = c * kh * kw;
                {
                    let gw = Self::ensure(grads, *w, f * ckk);
                    for n in 0..nb {
                        let gout = &g[n * f * oh * ow..(n + 1) * f * oh * ow];
                        // dW += dY * cols^T
                        mm_nt(gout, &cols[n], f, oh * ow, ckk, gw);
                    }
                }
                {
                    let gb = Self::ensure(grads, *b, f);
                    for n in 0..nb {
                        for fi in 0..f {
                            let s: f64 = g[(n * f + fi) * oh * ow..(n * f + fi + 1) * oh * ow]
                                .iter()
                                .sum();
                            gb[fi] += s;
                        }
                    }
                }
                let gx = Self::ensure(grads, *x, nb * c * h * wd);
                let mut gcols = vec![0.0; ckk * oh * ow];
                for n in 0..nb {
                    for v in gcols.iter_mut() {
                        *v = 0.0;
                    }
                    let gout = &g[n * f * oh * ow..(n + 1) * f * oh * ow];
                    // dcols = W^T * dY
                    mm_tn(&tw.data, gout, ckk, f, oh * ow, &mut gcols);
                    col2im_add(
                        &gcols,
                        c,
                        h,
                        wd,
                        kh,
                        kw,
                        *stride,
                        *pad,
                        oh,
                        ow,
                        &mut gx[n * c * h * wd..(n + 1) * c * h * wd],
                    );
                }
            }
            Op::MaxPool2d { x, argmax, .. } => {
                let gx = Self::ensure(grads, *x, numel(*x));
                for (o, &src) in argmax.iter().enumerate() {
                    if src != usize::MAX {
                        gx[src] += g[o];
                    }
                }
            }
            Op::Dropout { x, mask } => {
                let gx = Self::ensure(grads, *x, numel(*x));
                for ((a, y), m) in gx.iter_mut().zip(g).zip(mask) {
                    *a += y * m;
                }
            }
            Op::Reshape(x) => {
                let gx = Self::ensure(grads, *x, numel(*x));
                for (a, y) in gx.iter_mut().zip(g) {
                    *a += y;
                }
            }
            Op::SliceCols { x, start } => {
                let tx = &self.nodes[*x].value;
                let (m, n) = (tx.dim(0), tx.dim(1));
                let w = self.nodes[i].value.dim(1);
                let gx = Self::ensure(grads, *x, m * n);
                for r in 0..m {
                    for j in 0..w {
                        gx[r * n + start + j] += g[r * w + j];
                    }
                }
            }
            Op::ConcatCols(xs) => {
                let m = self.nodes[i].value.dim(0);
                let total = self.nodes[i].value.dim(1);
                let mut off = 0;
                for &xi in xs {
                    let n = self.nodes[xi].value.dim(1);
                    let gx = Self::ensure(grads, xi, m * n);
                    for r in 0..m {
                        for j in 0..n {
                            gx[r * n + j] += g[r * total + off + j];
                        }
                    }
                    off += n;
                }
            }
            Op::ConcatRows(xs) => {
                let mut off = 0;
                for &xi in xs {
                    let cnt = numel(xi);
                    let gx = Self::ensure(grads, xi, cnt);
                    for (a, y) in gx.iter_mut().zip(&g[off..off + cnt]) {
                        *a += y;
                    }
                    off += cnt;
                }
            }
            Op::IndexBatch { x, item } => {
                let rest = numel(i);
                let gx = Self::ensure(grads, *x, numel(*x));
                for (a, y) in gx[item * rest..(item + 1) * rest].iter_mut().zip(g) {
                    *a += y;
                }
            }
            Op::StackRows(xs) => {
                let d = self.nodes[i].value.dim(1);
                for (r, &xi) in xs.iter().enumerate() {
                    let gx = Self::ensure(grads, xi, d);
                    for (a, y) in gx.iter_mut().zip(&g[r * d..(r + 1) * d]) {
                        *a += y;
                    }
                }
            }
            Op::MeanRows(x) => {
                let tx = &self.nodes[*x].value;
                let (m, n) = (tx.dim(0), tx.dim(1));
                let gx = Self::ensure(grads, *x, m * n);
                let inv = 1.0 / m as f64;
                for r in 0..m {
                    for j in 0..n {
                        gx[r * n + j] += g[j] * inv;
                    }
                }
            }
            Op::Gap2d(x) => {
                let tx = &self.nodes[*x].value;
                let (nb, c, h, w) = (tx.dim(0), tx.dim(1), tx.dim(2), tx.dim(3));
                let inv = 1.0 / (h * w) as f64;
                let gx = Self::ensure(grads, *x, nb * c * h * w);
                for n in 0..nb {
                    for ch in 0..c {
                        let gy = g[n * c + ch] * inv;
                        let base = (n * c + ch) * h * w;
                        for a in gx[base..base + h * w].iter_mut() {
                            *a += gy;
                        }
                    }
                }
            }
            Op::GatherCols { x, idx } => {
                let n = self.nodes[*x].value.dim(1);
                let gx = Self::ensure(grads, *x, numel(*x));
                for (r, &j) in idx.iter().enumerate() {
                    gx[r * n + j] += g[r];
                }
            }
            Op::SoftmaxXent { logits, labels, probs } => {
                let k = self.nodes[*logits].value.dim(1);
                let m = labels.len();
                let scale = g[0] / m as f64;
                let gl = Self::ensure(grads, *logits, m * k);
                for r in 0..m {
                    for j in 0..k {
                        let onehot = if labels[r] == j { 1.0 } else { 0.0 };
                        gl[r * k + j] += scale * (probs[r * k + j] - onehot);
                    }
                }
            }
            Op::MseTo { pred, target } => {
                let pv = &self.nodes[*pred].value.data;
                let scale = g[0] * 2.0 / target.len() as f64;
                let gp = Self::ensure(grads, *pred, target.len());
                for ((a, p), t) in gp.iter_mut().zip(pv).zip(target) {
                    *a += scale * (p - t);
                }
            }
            Op::SumAll(x) => {
                let gx = Self::ensure(grads, *x, numel(*x));
                for a in gx.iter_mut() {
                    *a += g[0];
                }
            }
            Op::MeanAll(x) => {
                let n = numel(*x);
                let gx = Self::ensure(grads, *x, n);
                let gy = g[0] / n as f64;
                for a in gx.iter_mut() {
                    *a += gy;
                }
            }
        }
    }
}

/// Gradients produced by one backward pass.
pub struct GradStore {
    grads: Vec<Option<Vec<f64>>>,
}

impl GradStore {
    /// Gradient of the loss with respect to `v`, if `v` influenced it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Copy the gradient for `v` into the tensor's grad slot (zeros if the
    /// node did not influence the loss).
    pub fn write_to(&self, v: Var, t: &mut Tensor) {
        let n = t.numel();
        match self.grad(v) {
            Some(g) => t.grad = Some(g.to_vec()),
            None => t.grad = Some(vec![0.0; n]),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    img: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    cols: &mut [f64],
) {
    // cols[(c*kh*kw) x (oh*ow)]
    for ch in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ch * kh + ki) * kw + kj;
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for i in 0..oh {
                    let y = (i * stride + ki) as isize - pad as isize;
                    if y < 0 || y as usize >= h {
                        continue;
                    }
                    let src_base = ch * h * w + y as usize * w;
                    for j in 0..ow {
                        let x = (j * stride + kj) as isize - pad as isize;
                        if x < 0 || x as usize >= w {
                            continue;
                        }
                        dst[i * ow + j] = img[src_base + x as usize];
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im_add(
    cols: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    img: &mut [f64],
) {
    for ch in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ch * kh + ki) * kw + kj;
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for i in 0..oh {
                    let y = (i * stride + ki) as isize - pad as isize;
                    if y < 0 || y as usize >= h {
                        continue;
                    }
                    let dst_base = ch * h * w + y as usize * w;
                    for j in 0..ow {
                        let x = (j * stride + kj) as isize - pad as isize;
                        if x < 0 || x as usize >= w {
                            continue;
                        }
                        img[dst_base + x as usize] += src[i * ow + j];
                    }
                }
            }
        }
    }
}
