//! Minimal dense-tensor engine with reverse-mode gradients.
//!
//! [`graph::Graph`] records forward operations on [`tensor::Tensor`] values
//! and replays the tape backwards for gradients; [`optim::Adam`] updates a
//! [`ParamSet`]; [`gradcheck`] verifies every op against central finite
//! differences. Attention and channel gating are composites of tape
//! primitives so their gradients come for free.

pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod tensor;

pub use graph::{GradStore, Graph, Mode, Var};
pub use optim::Adam;
pub use tensor::Tensor;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Named parameter registry. Order is fixed at construction, which keeps
/// checkpoints and optimizer state aligned.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.entries.push((name.into(), t));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    /// Register every parameter as a leaf of `g`, in order.
    pub fn leaves(&self, g: &mut Graph) -> Vec<Var> {
        self.entries.iter().map(|(_, t)| g.leaf(t.clone())).collect()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Scaled dot-product multi-head attention over token matrices.
///
/// `q`: [Tq, D], `k`/`v`: [Tk, D] with D divisible by `heads`. Each head
/// attends with softmax(Q K^T / sqrt(d_head)) V; head outputs are
/// concatenated and passed through the output projection `w_out` [D, D].
/// Cross-modal use passes Q from one modality and K, V from the other.
pub fn multi_head_attention(
    g: &mut Graph,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    w_out: Var,
) -> Result<Var> {
    let d = g.value(q).dim(1);
    if heads == 0 || d % heads != 0 {
        return Err(Error::ShapeMismatch(format!(
            "width {d} not divisible by {heads} heads"
        )));
    }
    if g.value(k).dim(1) != d || g.value(v).dim(1) != d || g.value(k).dim(0) != g.value(v).dim(0) {
        return Err(Error::ShapeMismatch(format!(
            "attention shapes: q {}, k {}, v {}",
            g.value(q).shape_string(),
            g.value(k).shape_string(),
            g.value(v).shape_string()
        )));
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut head_outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = g.slice_cols(q, lo, hi)?;
        let kh = g.slice_cols(k, lo, hi)?;
        let vh = g.slice_cols(v, lo, hi)?;
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let scaled = g.scale(scores, scale)?;
        let attn = g.softmax_rows(scaled)?;
        head_outputs.push(g.matmul(attn, vh)?);
    }
    let concat = g.concat_cols(&head_outputs)?;
    g.matmul(concat, w_out)
}

/// Channel gate: scale features `f` [T, D] per channel by
/// sigmoid(mean over tokens of `a` [T', D]).
pub fn channel_gate(g: &mut Graph, a: Var, f: Var) -> Result<Var> {
    if g.value(a).dim(1) != g.value(f).dim(1) {
        return Err(Error::ShapeMismatch(format!(
            "channel_gate: {} vs {}",
            g.value(a).shape_string(),
            g.value(f).shape_string()
        )));
    }
    let pooled = g.mean_rows(a)?;
    let gate = g.sigmoid(pooled)?;
    g.mul_vec(f, gate)
}

/// Fully connected layer: x [N, in] * w [in, out] + b [out].
pub fn linear(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.matmul(x, w)?;
    g.add_vec(y, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use alloc::vec;
    use rand::Rng;

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = seeds::rng_from_seed(seed);
        let n: usize = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn conv_identity_kernel_passes_input_through() {
        let mut g = Graph::new(Mode::Eval);
        let x = g.leaf(rand_tensor(&[1, 1, 4, 4], 1));
        let w = g.leaf(Tensor::new(vec![1, 1, 1, 1], vec![1.0]));
        let b = g.leaf(Tensor::zeros(vec![1]));
        let y = g.conv2d(x, w, b, 1, 0).unwrap();
        assert_eq!(g.value(y).data, g.value(x).data);
    }

    #[test]
    fn conv_all_ones_counts_window() {
        let mut g = Graph::new(Mode::Eval);
        let x = g.leaf(Tensor::new(vec![1, 1, 5, 5], vec![1.0; 25]));
        let w = g.leaf(Tensor::new(vec![1, 1, 3, 3], vec![1.0; 9]));
        let b = g.leaf(Tensor::zeros(vec![1]));
        let y = g.conv2d(x, w, b, 1, 0).unwrap();
        assert_eq!(g.value(y).shape, vec![1, 1, 3, 3]);
        assert!(g.value(y).data.iter().all(|&v| v == 9.0));
    }

    #[test]
    fn conv_matches_quadruple_loop_oracle() {
        let x = rand_tensor(&[1, 2, 5, 5], 2);
        let w = rand_tensor(&[3, 2, 3, 3], 3);
        let b = rand_tensor(&[3], 4);
        let mut g = Graph::new(Mode::Eval);
        let (xv, wv, bv) = (g.leaf(x.clone()), g.leaf(w.clone()), g.leaf(b.clone()));
        let y = g.conv2d(xv, wv, bv, 1, 0).unwrap();
        let out = g.value(y);
        assert_eq!(out.shape, vec![1, 3, 3, 3]);
        for f in 0..3 {
            for oi in 0..3 {
                for oj in 0..3 {
                    let mut acc = b.data[f];
                    for c in 0..2 {
                        for ki in 0..3 {
                            for kj in 0..3 {
                                acc += x.data[(c * 5 + oi + ki) * 5 + oj + kj]
                                    * w.data[((f * 2 + c) * 3 + ki) * 3 + kj];
                            }
                        }
                    }
                    let got = out.data[(f * 3 + oi) * 3 + oj];
                    assert!((got - acc).abs() < 1e-10, "{got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut g = Graph::new(Mode::Eval);
        let x = g.leaf(rand_tensor(&[3, 4], 5));
        let loss = g.sum_all(x).unwrap();
        let store = g.backward(loss).unwrap();
        assert!(store.grad(x).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn backward_half_square_gives_input() {
        let t = rand_tensor(&[4, 4], 6);
        let mut g = Graph::new(Mode::Eval);
        let x = g.leaf(t.clone());
        let sq = g.mul(x, x).unwrap();
        let s = g.sum_all(sq).unwrap();
        let loss = g.scale(s, 0.5).unwrap();
        let store = g.backward(loss).unwrap();
        for (a, b) in store.grad(x).unwrap().iter().zip(&t.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_without_graph_errors() {
        let mut g = Graph::new(Mode::Eval);
        let x = g.leaf(Tensor::scalar(1.0));
        g.reset();
        assert!(matches!(g.backward(x), Err(Error::NoGraph)));
    }

    #[test]
    fn graph_reusable_after_reset() {
        let mut g = Graph::new(Mode::Eval);
        let x = g.leaf(Tensor::scalar(2.0));
        let y = g.mul(x, x).unwrap();
        let _ = g.backward(y).unwrap();
        g.reset();
        let x2 = g.leaf(Tensor::scalar(3.0));
        let y2 = g.mul(x2, x2).unwrap();
        assert_eq!(g.value(y2).item(), 9.0);
    }

    #[test]
    fn attention_single_key_value_is_projected_v() {
        // Softmax over one item is 1, so output = V * W_out.
        let v_row = rand_tensor(&[1, 8], 7);
        let wo = rand_tensor(&[8, 8], 8);
        let mut g = Graph::new(Mode::Eval);
        let q = g.leaf(rand_tensor(&[3, 8], 9));
        let k = g.leaf(rand_tensor(&[1, 8], 10));
        let v = g.leaf(v_row.clone());
        let w = g.leaf(wo.clone());
        let y = multi_head_attention(&mut g, q, k, v, 2, w).unwrap();
        let mut expected = vec![0.0; 8];
        for j in 0..8 {
            for p in 0..8 {
                expected[j] += v_row.data[p] * wo.data[p * 8 + j];
            }
        }
        for r in 0..3 {
            for j in 0..8 {
                let got = g.value(y).data[r * 8 + j];
                assert!((got - expected[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_orthogonal_query_averages_values() {
        // Zero scores -> uniform weights -> pre-projection output is the
        // mean of V rows; identity projection exposes it.
        let mut g = Graph::new(Mode::Eval);
        let q = g.leaf(Tensor::zeros(vec![2, 4]));
        let k = g.leaf(rand_tensor(&[5, 4], 11));
        let v_t = rand_tensor(&[5, 4], 12);
        let v = g.leaf(v_t.clone());
        let mut eye = Tensor::zeros(vec![4, 4]);
        for i in 0..4 {
            eye.data[i * 4 + i] = 1.0;
        }
        let w = g.leaf(eye);
        let y = multi_head_attention(&mut g, q, k, v, 2, w).unwrap();
        for j in 0..4 {
            let mean: f64 = (0..5).map(|r| v_t.data[r * 4 + j]).sum::<f64>() / 5.0;
            for r in 0..2 {
                let got = g.value(y).data[r * 4 + j];
                assert!((got - mean).abs() < 1e-12, "{got} vs {mean}");
            }
        }
    }

    #[test]
    fn attention_matches_per_head_loop_oracle() {
        let heads = 2;
        let (tq, tk, d) = (3, 4, 8);
        let dh = d / heads;
        let qt = rand_tensor(&[tq, d], 13);
        let kt = rand_tensor(&[tk, d], 14);
        let vt = rand_tensor(&[tk, d], 15);
        let wo = rand_tensor(&[d, d], 16);
        let mut g = Graph::new(Mode::Eval);
        let (q, k, v, w) = (
            g.leaf(qt.clone()),
            g.leaf(kt.clone()),
            g.leaf(vt.clone()),
            g.leaf(wo.clone()),
        );
        let y = multi_head_attention(&mut g, q, k, v, heads, w).unwrap();

        // Direct formula, one head at a time.
        let mut concat = vec![0.0; tq * d];
        for h in 0..heads {
            for i in 0..tq {
                let mut scores = vec![0.0; tk];
                for (j, s) in scores.iter_mut().enumerate() {
                    let mut dot = 0.0;
                    for e in 0..dh {
                        dot += qt.data[i * d + h * dh + e] * kt.data[j * d + h * dh + e];
                    }
                    *s = dot / (dh as f64).sqrt();
                }
                let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: vec::Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
                let sum: f64 = exps.iter().sum();
                for e in 0..dh {
                    let mut acc = 0.0;
                    for j in 0..tk {
                        acc += exps[j] / sum * vt.data[j * d + h * dh + e];
                    }
                    concat[i * d + h * dh + e] = acc;
                }
            }
        }
        for i in 0..tq {
            for j in 0..d {
                let mut acc = 0.0;
                for p in 0..d {
                    acc += concat[i * d + p] * wo.data[p * d + j];
                }
                let got = g.value(y).data[i * d + j];
                assert!((got - acc).abs() < 1e-10, "({i},{j}): {got} vs {acc}");
            }
        }
    }

    #[test]
    fn channel_gate_zero_attention_halves_features() {
        let f_t = rand_tensor(&[4, 6], 17);
        let mut g = Graph::new(Mode::Eval);
        let a = g.leaf(Tensor::zeros(vec![4, 6]));
        let f = g.leaf(f_t.clone());
        let y = channel_gate(&mut g, a, f).unwrap();
        for (got, x) in g.value(y).data.iter().zip(&f_t.data) {
            assert!((got - 0.5 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_gate_saturates_to_identity() {
        let f_t = rand_tensor(&[4, 6], 18);
        let mut g = Graph::new(Mode::Eval);
        let a = g.leaf(Tensor::new(vec![4, 6], vec![50.0; 24]));
        let f = g.leaf(f_t.clone());
        let y = channel_gate(&mut g, a, f).unwrap();
        for (got, x) in g.value(y).data.iter().zip(&f_t.data) {
            assert!((got - x).abs() < 1e-6 * x.abs().max(1.0));
        }
    }

    #[test]
    fn channel_gate_matches_scalar_loop() {
        let a_t = rand_tensor(&[3, 5], 19);
        let f_t = rand_tensor(&[7, 5], 20);
        let mut g = Graph::new(Mode::Eval);
        let a = g.leaf(a_t.clone());
        let f = g.leaf(f_t.clone());
        let y = channel_gate(&mut g, a, f).unwrap();
        for d in 0..5 {
            let mean: f64 = (0..3).map(|r| a_t.data[r * 5 + d]).sum::<f64>() / 3.0;
            let gate = 1.0 / (1.0 + (-mean).exp());
            for r in 0..7 {
                let got = g.value(y).data[r * 5 + d];
                let want = gate * f_t.data[r * 5 + d];
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn channel_gate_scales_linearly_with_features() {
        // The gate depends only on A, so scaling F scales the output exactly.
        let a_t = rand_tensor(&[3, 5], 21);
        let f_t = rand_tensor(&[4, 5], 22);
        let kscale = 4.0; // power of two keeps the scaling bit-exact
        let mut g = Graph::new(Mode::Eval);
        let a = g.leaf(a_t.clone());
        let f = g.leaf(f_t.clone());
        let y1 = channel_gate(&mut g, a, f).unwrap();
        let fs = g.scale(f, kscale).unwrap();
        let y2 = channel_gate(&mut g, a, fs).unwrap();
        for (v1, v2) in g.value(y1).data.iter().zip(&g.value(y2).data) {
            assert_eq!(v1 * kscale, *v2);
        }
    }

    #[test]
    fn relu_examples_and_grad_mask() {
        let mut g = Graph::new(Mode::Eval);
        let x = g.leaf(Tensor::new(vec![2], vec![-1.0, 3.0]));
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data, vec![0.0, 3.0]);
        let s = g.sum_all(y).unwrap();
        let store = g.backward(s).unwrap();
        assert_eq!(store.grad(x).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn softmax_xent_equal_logits_is_ln3() {
        let mut g = Graph::new(Mode::Eval);
        let logits = g.leaf(Tensor::new(vec![2, 3], vec![0.7; 6]));
        let loss = g.softmax_xent(logits, &[0, 2]).unwrap();
        assert!((g.value(loss).item() - (3.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_xent_saturates_with_large_margin() {
        let mut g = Graph::new(Mode::Eval);
        let logits = g.leaf(Tensor::new(vec![1, 3], vec![30.0, 0.0, 0.0]));
        let loss = g.softmax_xent(logits, &[0]).unwrap();
        assert!(g.value(loss).item() < 1e-12);
    }

    #[test]
    fn softmax_xent_gradient_is_probs_minus_onehot() {
        let t = rand_tensor(&[4, 3], 23);
        let labels = [2usize, 0, 1, 1];
        let mut g = Graph::new(Mode::Eval);
        let logits = g.leaf(t.clone());
        let probs_var = g.softmax_rows(logits).unwrap();
        let probs = g.value(probs_var).data.clone();
        let loss = g.softmax_xent(logits, &labels).unwrap();
        let store = g.backward(loss).unwrap();
        let grad = store.grad(logits).unwrap();
        for r in 0..4 {
            for j in 0..3 {
                let onehot = if labels[r] == j { 1.0 } else { 0.0 };
                let want = (probs[r * 3 + j] - onehot) / 4.0;
                assert!((grad[r * 3 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new(Mode::Eval);
        let x = g.leaf(rand_tensor(&[6, 5], 24));
        let y = g.softmax_rows(x).unwrap();
        for r in 0..6 {
            let s: f64 = g.value(y).data[r * 5..(r + 1) * 5].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_label_is_rejected() {
        let mut g = Graph::new(Mode::Eval);
        let logits = g.leaf(Tensor::new(vec![1, 3], vec![0.0, 0.0, 0.0]));
        assert!(matches!(
            g.softmax_xent(logits, &[5]),
            Err(Error::InvalidLabel(5))
        ));
    }

    #[test]
    fn dropout_eval_is_identity_train_preserves_mean() {
        let t = rand_tensor(&[100], 25);
        let mut g = Graph::new(Mode::Eval);
        let x = g.leaf(t.clone());
        let mut rng = seeds::rng_from_seed(1);
        let y = g.dropout(x, 0.5, &mut rng).unwrap();
        assert_eq!(g.value(y).data, t.data);

        // Inverted scaling keeps the expected value: average many masks.
        let input_mean: f64 = t.data.iter().sum::<f64>() / t.numel() as f64;
        let mut acc = 0.0;
        let draws = 1000; // 1000 masks x 100 elements = 1e5 samples
        let mut g = Graph::new(Mode::Train);
        let x = g.leaf(t.clone());
        for _ in 0..draws {
            let y = g.dropout(x, 0.4, &mut rng).unwrap();
            acc += g.value(y).data.iter().sum::<f64>() / t.numel() as f64;
        }
        let mean = acc / draws as f64;
        assert!(
            (mean - input_mean).abs() <= 0.01 * input_mean.abs(),
            "{mean} vs {input_mean}"
        );
    }

    #[test]
    fn finite_differences_validate_every_op() {
        let reports = gradcheck::standard_op_suite(2024, 25).unwrap();
        assert!(reports.len() >= 25, "suite should cover the full op set");
        for r in &reports {
            assert!(
                r.max_rel_err < 1e-3,
                "{}: rel err {} over {} samples",
                r.op,
                r.max_rel_err,
                r.checked
            );
        }
    }

    #[test]
    fn adam_descends_on_a_quadratic() {
        let mut params = ParamSet::new();
        let id = params.push("x", Tensor::new(vec![3], vec![2.0, -3.0, 1.5]));
        let mut adam = Adam::new(&params, 0.05);
        for _ in 0..500 {
            let mut g = Graph::new(Mode::Train);
            let vars = params.leaves(&mut g);
            let sq = g.mul(vars[id], vars[id]).unwrap();
            let loss = g.sum_all(sq).unwrap();
            let store = g.backward(loss).unwrap();
            adam.step(&mut params, &store, &vars);
        }
        for v in &params.tensor(id).data {
            assert!(v.abs() < 1e-2, "{v}");
        }
    }
}
