//! Report assembly: recompute metrics and reward-curve statistics from a
//! run directory's artifacts and emit the report CSVs.

use std::path::Path;

use jamlab_core::metrics::{
    classification_metrics, first_crossing, stability, ConfusionMatrix,
};

use crate::csvio;
use crate::CmdResult;

pub const CLASS_NAMES: [&str; 3] = ["AJ", "RFTJ", "RDFTJ"];
pub const MA_WINDOW: usize = 50;
pub const STABILITY_TAIL: usize = 100;

/// Reward-curve statistics for one algorithm's trace file.
pub fn trace_summary(
    name: &str,
    trace_path: &Path,
    max_episode_reward: f64,
) -> CmdResult<Vec<(String, String)>> {
    let rewards = csvio::read_trace_rewards(trace_path)?;
    let mut rows = Vec::new();
    if rewards.len() >= MA_WINDOW {
        let threshold = 0.9 * max_episode_reward;
        let conv = first_crossing(&rewards, MA_WINDOW, threshold)?;
        rows.push((
            format!("{name}_convergence_episode"),
            conv.map(|e| e.to_string()).unwrap_or_else(|| "none".into()),
        ));
        let tail = STABILITY_TAIL.min(rewards.len() - MA_WINDOW + 1);
        let stab = stability(&rewards, MA_WINDOW, tail)?;
        rows.push((format!("{name}_tail_stability"), stab.to_string()));
    } else {
        rows.push((format!("{name}_convergence_episode"), "none".into()));
    }
    rows.push((
        format!("{name}_final_reward"),
        rewards.last().map(|v| v.to_string()).unwrap_or_default(),
    ));
    Ok(rows)
}

/// Rebuild classification outputs from a saved predictions file.
pub fn classification_report(predictions_path: &Path, out_dir: &Path) -> CmdResult<f64> {
    let rows = csvio::read_predictions(predictions_path)?;
    let pairs: Vec<(usize, usize)> = rows.iter().map(|(_, t, p)| (*t, *p)).collect();
    let cm = ConfusionMatrix::from_pairs(&pairs, 3);
    let metrics = classification_metrics(&cm).map_err(crate::CmdError::from)?;
    csvio::write_confusion(&out_dir.join("confusion.csv"), &cm, &CLASS_NAMES)?;
    csvio::write_metrics(&out_dir.join("metrics.csv"), &metrics, &CLASS_NAMES)?;
    Ok(metrics.overall_accuracy)
}
