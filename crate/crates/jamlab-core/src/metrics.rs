//! Evaluation metrics: confusion-matrix classification scores and
//! reward-curve convergence/stability statistics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Square confusion matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<u64>,
    pub classes: usize,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![0; classes * classes],
            classes,
        }
    }

    pub fn from_rows(rows: &[&[u64]]) -> Self {
        let classes = rows.len();
        let mut cm = ConfusionMatrix::new(classes);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), classes);
            for (j, &v) in row.iter().enumerate() {
                cm.counts[i * classes + j] = v;
            }
        }
        cm
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class * self.classes + predicted] += 1;
    }

    pub fn from_pairs(pairs: &[(usize, usize)], classes: usize) -> Self {
        let mut cm = ConfusionMatrix::new(classes);
        for &(t, p) in pairs {
            cm.record(t, p);
        }
        cm
    }

    pub fn get(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        (0..self.classes).map(|j| self.get(i, j)).sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, j)).sum()
    }
}

/// Per-class and overall classification scores. A class with no denominator
/// (no true or no predicted samples) scores 0 and raises its warning flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationMetrics {
    pub overall_accuracy: f64,
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    pub f1: Vec<f64>,
    pub zero_denominator: Vec<bool>,
}

/// Overall accuracy, per-class recall/precision/F1 from a confusion matrix.
pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let k = cm.classes;
    let mut recall = vec![0.0; k];
    let mut precision = vec![0.0; k];
    let mut f1 = vec![0.0; k];
    let mut warn = vec![false; k];
    let mut trace = 0u64;
    for j in 0..k {
        let tp = cm.get(j, j);
        trace += tp;
        let actual = cm.row_sum(j);
        let predicted = cm.col_sum(j);
        if actual == 0 || predicted == 0 {
            warn[j] = true;
        }
        recall[j] = if actual > 0 {
            tp as f64 / actual as f64
        } else {
            0.0
        };
        precision[j] = if predicted > 0 {
            tp as f64 / predicted as f64
        } else {
            0.0
        };
        f1[j] = if precision[j] + recall[j] > 0.0 {
            2.0 * precision[j] * recall[j] / (precision[j] + recall[j])
        } else {
            0.0
        };
    }
    Ok(ClassificationMetrics {
        overall_accuracy: trace as f64 / total as f64,
        recall,
        precision,
        f1,
        zero_denominator: warn,
    })
}

/// Moving average with a full window: output index j covers
/// trace[j ..= j+window-1], i.e. it describes episode j + window - 1.
pub fn moving_average(trace: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window > trace.len() {
        return Err(Error::InvalidWindow(format!(
            "window {window} over {} episodes",
            trace.len()
        )));
    }
    let inv = 1.0 / window as f64;
    let mut out = Vec::with_capacity(trace.len() - window + 1);
    let mut acc: f64 = trace[..window].iter().sum();
    out.push(acc * inv);
    for i in window..trace.len() {
        acc += trace[i] - trace[i - window];
        out.push(acc * inv);
    }
    Ok(out)
}

/// First episode index whose moving average reaches `threshold`, if any.
pub fn first_crossing(trace: &[f64], window: usize, threshold: f64) -> Result<Option<usize>> {
    let ma = moving_average(trace, window)?;
    Ok(ma
        .iter()
        .position(|&v| v >= threshold)
        .map(|j| j + window - 1))
}

/// Convergence speed: first episode where the moving average reaches
/// `theta` times the maximum achievable episode reward (taken as the trace
/// maximum). Returns the episode index, or None if never reached.
pub fn convergence_speed(trace: &[f64], window: usize, theta: f64) -> Result<Option<usize>> {
    if !(0.0 < theta && theta <= 1.0) {
        return Err(Error::InvalidWindow(format!("theta {theta} outside (0,1]")));
    }
    let peak = trace.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    first_crossing(trace, window, theta * peak)
}

/// Stability: population standard deviation of the last `tail`
/// moving-average values.
pub fn stability(trace: &[f64], window: usize, tail: usize) -> Result<f64> {
    let ma = moving_average(trace, window)?;
    if tail == 0 || tail > ma.len() {
        return Err(Error::InvalidWindow(format!(
            "tail {tail} over {} moving-average points",
            ma.len()
        )));
    }
    let slice = &ma[ma.len() - tail..];
    let mean = slice.iter().sum::<f64>() / tail as f64;
    let var = slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / tail as f64;
    Ok(var.sqrt())
}

/// Policy-trace encoding: the integer part is the jammer type, the
/// fractional part is the normalized action divided by two (so a maximal
/// action cannot spill into the next integer).
pub fn encode_policy_point(jammer_type: usize, action_index: usize, n_actions: usize) -> f64 {
    let norm = if n_actions > 1 {
        action_index as f64 / (n_actions - 1) as f64
    } else {
        0.0
    };
    jammer_type as f64 + norm / 2.0
}
