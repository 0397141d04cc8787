//! Central finite-difference verification of the autodiff engine.
//!
//! Each check builds a scalar loss from leaf tensors through a
//! deterministic closure, reads the analytic gradients from one backward
//! pass, then perturbs sampled coordinates by +-eps and compares.

use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use super::graph::{Graph, Mode, Var};
use super::tensor::Tensor;
use crate::seeds;
use crate::Result;

/// Outcome of one operation's finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub op: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Check `build` (a deterministic map from leaves to a scalar loss) against
/// central finite differences on up to `samples` coordinates.
pub fn check_loss<F>(
    op: &str,
    inputs: &[Tensor],
    build: F,
    samples: usize,
    eps: f64,
    seed: u64,
) -> Result<GradReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor]| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::new(Mode::Train);
        let vars: Vec<Var> = tensors.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &vars)?;
        let value = g.value(loss).item();
        let store = g.backward(loss)?;
        let grads = vars
            .iter()
            .zip(tensors)
            .map(|(v, t)| {
                store
                    .grad(*v)
                    .map(|s| s.to_vec())
                    .unwrap_or_else(|| alloc::vec![0.0; t.numel()])
            })
            .collect();
        Ok((value, grads))
    };

    let (_, analytic) = eval(inputs)?;
    let total: usize = inputs.iter().map(|t| t.numel()).sum();
    let mut rng = seeds::rng_from_seed(seed);
    // Sampled with replacement so every op gets the full sample count even
    // when its inputs are small.
    let n_checks = samples;
    let mut max_err = 0.0f64;
    for _ in 0..n_checks {
        let mut flat = rng.gen_range(0..total);
        let mut which = 0usize;
        while flat >= inputs[which].numel() {
            flat -= inputs[which].numel();
            which += 1;
        }
        let mut plus = inputs.to_vec();
        plus[which].data[flat] += eps;
        let mut minus = inputs.to_vec();
        minus[which].data[flat] -= eps;
        let (lp, _) = eval(&plus)?;
        let (lm, _) = eval(&minus)?;
        let numeric = (lp - lm) / (2.0 * eps);
        max_err = max_err.max(rel_err(analytic[which][flat], numeric));
    }
    Ok(GradReport {
        op: String::from(op),
        checked: n_checks,
        max_rel_err: max_err,
    })
}

fn rand_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data)
}

/// Random tensor bounded away from zero (for kink-free relu/maxpool checks).
fn rand_tensor_offset(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// Finite-difference sweep over every differentiable operation in the
/// engine. Returns one report per op; all should come in well under the
/// 1e-3 relative-error bar.
pub fn standard_op_suite(seed: u64, samples: usize) -> Result<Vec<GradReport>> {
    let mut rng = seeds::rng_from_seed(seed);
    let eps = 1e-4;
    let mut reports = Vec::new();

    // Weighted sum reduces any output to a scalar without hiding structure.
    macro_rules! reduce {
        ($g:expr, $y:expr, $w:expr) => {{
            let w = $g.leaf($w.clone());
            let prod = $g.mul($y, w)?;
            $g.sum_all(prod)
        }};
    }

    {
        let a = rand_tensor(&[4, 5], &mut rng);
        let b = rand_tensor(&[4, 5], &mut rng);
        let w = rand_tensor(&[4, 5], &mut rng);
        reports.push(check_loss(
            "add",
            &[a, b],
            |g, v| {
                let y = g.add(v[0], v[1])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 1,
        )?);
    }
    {
        let a = rand_tensor(&[4, 5], &mut rng);
        let b = rand_tensor(&[4, 5], &mut rng);
        let w = rand_tensor(&[4, 5], &mut rng);
        reports.push(check_loss(
            "sub",
            &[a, b],
            |g, v| {
                let y = g.sub(v[0], v[1])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 2,
        )?);
    }
    {
        let a = rand_tensor(&[4, 5], &mut rng);
        let b = rand_tensor(&[4, 5], &mut rng);
        let w = rand_tensor(&[4, 5], &mut rng);
        reports.push(check_loss(
            "mul",
            &[a, b],
            |g, v| {
                let y = g.mul(v[0], v[1])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 3,
        )?);
    }
    {
        let a = rand_tensor(&[4, 5], &mut rng);
        let w = rand_tensor(&[4, 5], &mut rng);
        reports.push(check_loss(
            "scale",
            &[a],
            |g, v| {
                let y = g.scale(v[0], -1.7)?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 4,
        )?);
    }
    {
        let x = rand_tensor(&[6, 4], &mut rng);
        let b = rand_tensor(&[4], &mut rng);
        let w = rand_tensor(&[6, 4], &mut rng);
        reports.push(check_loss(
            "add_vec",
            &[x, b],
            |g, v| {
                let y = g.add_vec(v[0], v[1])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 5,
        )?);
    }
    {
        let x = rand_tensor(&[6, 4], &mut rng);
        let b = rand_tensor(&[4], &mut rng);
        let w = rand_tensor(&[6, 4], &mut rng);
        reports.push(check_loss(
            "mul_vec",
            &[x, b],
            |g, v| {
                let y = g.mul_vec(v[0], v[1])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 6,
        )?);
    }
    {
        let a = rand_tensor(&[4, 6], &mut rng);
        let b = rand_tensor(&[6, 3], &mut rng);
        let w = rand_tensor(&[4, 3], &mut rng);
        reports.push(check_loss(
            "matmul",
            &[a, b],
            |g, v| {
                let y = g.matmul(v[0], v[1])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 7,
        )?);
    }
    {
        let a = rand_tensor(&[4, 6], &mut rng);
        let w = rand_tensor(&[6, 4], &mut rng);
        reports.push(check_loss(
            "transpose",
            &[a],
            |g, v| {
                let y = g.transpose(v[0])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 8,
        )?);
    }
    {
        let a = rand_tensor_offset(&[5, 5], &mut rng);
        let w = rand_tensor(&[5, 5], &mut rng);
        reports.push(check_loss(
            "relu",
            &[a],
            |g, v| {
                let y = g.relu(v[0])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 9,
        )?);
    }
    {
        let a = rand_tensor(&[5, 5], &mut rng);
        let w = rand_tensor(&[5, 5], &mut rng);
        reports.push(check_loss(
            "sigmoid",
            &[a],
            |g, v| {
                let y = g.sigmoid(v[0])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 10,
        )?);
    }
    {
        let a = rand_tensor(&[4, 5], &mut rng);
        let w = rand_tensor(&[4, 5], &mut rng);
        reports.push(check_loss(
            "softmax_rows",
            &[a],
            |g, v| {
                let y = g.softmax_rows(v[0])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 11,
        )?);
    }
    {
        let x = rand_tensor(&[2, 2, 5, 5], &mut rng);
        let k = rand_tensor(&[3, 2, 3, 3], &mut rng);
        let b = rand_tensor(&[3], &mut rng);
        let w = rand_tensor(&[2, 3, 3, 3], &mut rng);
        reports.push(check_loss(
            "conv2d",
            &[x, k, b],
            |g, v| {
                let y = g.conv2d(v[0], v[1], v[2], 2, 1)?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 12,
        )?);
    }
    {
        let x = rand_tensor_offset(&[2, 2, 6, 6], &mut rng);
        let w = rand_tensor(&[2, 2, 3, 3], &mut rng);
        reports.push(check_loss(
            "maxpool2d",
            &[x],
            |g, v| {
                let y = g.maxpool2d(v[0], 3, 2, 1)?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 13,
        )?);
    }
    {
        let x = rand_tensor(&[6, 6], &mut rng);
        let w = rand_tensor(&[6, 6], &mut rng);
        let mask_seed = seed ^ 0xd0;
        reports.push(check_loss(
            "dropout",
            &[x],
            move |g, v| {
                // Fixed mask seed keeps the loss deterministic across the
                // finite-difference evaluations.
                let mut mask_rng = seeds::rng_from_seed(mask_seed);
                let y = g.dropout(v[0], 0.4, &mut mask_rng)?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 14,
        )?);
    }
    {
        let x = rand_tensor(&[3, 8], &mut rng);
        let w = rand_tensor(&[4, 6], &mut rng);
        reports.push(check_loss(
            "reshape",
            &[x],
            |g, v| {
                let y = g.reshape(v[0], alloc::vec![4, 6])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 15,
        )?);
    }
    {
        let x = rand_tensor(&[5, 8], &mut rng);
        let w = rand_tensor(&[5, 3], &mut rng);
        reports.push(check_loss(
            "slice_cols",
            &[x],
            |g, v| {
                let y = g.slice_cols(v[0], 2, 5)?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 16,
        )?);
    }
    {
        let a = rand_tensor(&[4, 3], &mut rng);
        let b = rand_tensor(&[4, 2], &mut rng);
        let w = rand_tensor(&[4, 5], &mut rng);
        reports.push(check_loss(
            "concat_cols",
            &[a, b],
            |g, v| {
                let y = g.concat_cols(&[v[0], v[1]])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 17,
        )?);
    }
    {
        let a = rand_tensor(&[2, 4], &mut rng);
        let b = rand_tensor(&[3, 4], &mut rng);
        let w = rand_tensor(&[5, 4], &mut rng);
        reports.push(check_loss(
            "concat_rows",
            &[a, b],
            |g, v| {
                let y = g.concat_rows(&[v[0], v[1]])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 18,
        )?);
    }
    {
        let x = rand_tensor(&[3, 2, 4, 4], &mut rng);
        let w = rand_tensor(&[2, 4, 4], &mut rng);
        reports.push(check_loss(
            "index_batch",
            &[x],
            |g, v| {
                let y = g.index_batch(v[0], 1)?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 19,
        )?);
    }
    {
        let a = rand_tensor(&[6], &mut rng);
        let b = rand_tensor(&[6], &mut rng);
        let w = rand_tensor(&[2, 6], &mut rng);
        reports.push(check_loss(
            "stack_rows",
            &[a, b],
            |g, v| {
                let y = g.stack_rows(&[v[0], v[1]])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 20,
        )?);
    }
    {
        let x = rand_tensor(&[5, 7], &mut rng);
        let w = rand_tensor(&[7], &mut rng);
        reports.push(check_loss(
            "mean_rows",
            &[x],
            |g, v| {
                let y = g.mean_rows(v[0])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 21,
        )?);
    }
    {
        let x = rand_tensor(&[2, 3, 4, 4], &mut rng);
        let w = rand_tensor(&[2, 3], &mut rng);
        reports.push(check_loss(
            "gap2d",
            &[x],
            |g, v| {
                let y = g.gap2d(v[0])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 22,
        )?);
    }
    {
        let x = rand_tensor(&[5, 4], &mut rng);
        let w = rand_tensor(&[5], &mut rng);
        reports.push(check_loss(
            "gather_cols",
            &[x],
            |g, v| {
                let y = g.gather_cols(v[0], &[0, 3, 1, 2, 0])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 23,
        )?);
    }
    {
        let logits = rand_tensor(&[6, 3], &mut rng);
        reports.push(check_loss(
            "softmax_xent",
            &[logits],
            |g, v| g.softmax_xent(v[0], &[0, 1, 2, 0, 1, 2]),
            samples,
            eps,
            seed ^ 24,
        )?);
    }
    {
        let pred = rand_tensor(&[8], &mut rng);
        let target: Vec<f64> = (0..8).map(|i| 0.3 * i as f64 - 1.0).collect();
        reports.push(check_loss(
            "mse_to",
            &[pred],
            move |g, v| g.mse_to(v[0], &target),
            samples,
            eps,
            seed ^ 25,
        )?);
    }
    {
        let x = rand_tensor(&[4, 4], &mut rng);
        reports.push(check_loss("sum_all", &[x], |g, v| g.sum_all(v[0]), samples, eps, seed ^ 26)?);
    }
    {
        let x = rand_tensor(&[4, 4], &mut rng);
        reports.push(check_loss("mean_all", &[x], |g, v| g.mean_all(v[0]), samples, eps, seed ^ 27)?);
    }
    {
        // Multi-head attention as a whole (two heads over toy tokens).
        let q = rand_tensor(&[3, 8], &mut rng);
        let k = rand_tensor(&[4, 8], &mut rng);
        let v = rand_tensor(&[4, 8], &mut rng);
        let wo = rand_tensor(&[8, 8], &mut rng);
        let w = rand_tensor(&[3, 8], &mut rng);
        reports.push(check_loss(
            "multi_head_attention",
            &[q, k, v, wo],
            |g, vars| {
                let y = super::multi_head_attention(g, vars[0], vars[1], vars[2], 2, vars[3])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 28,
        )?);
    }
    {
        // Channel gate (sigmoid of pooled attention scaling the features).
        let a = rand_tensor(&[5, 6], &mut rng);
        let f = rand_tensor(&[5, 6], &mut rng);
        let w = rand_tensor(&[5, 6], &mut rng);
        reports.push(check_loss(
            "channel_gate",
            &[a, f],
            |g, vars| {
                let y = super::channel_gate(g, vars[0], vars[1])?;
                reduce!(g, y, w)
            },
            samples,
            eps,
            seed ^ 29,
        )?);
    }

    Ok(reports)
}
