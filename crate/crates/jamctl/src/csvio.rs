//! CSV emission and parsing. All outputs carry a header row; floats are
//! written with Rust's shortest-roundtrip formatting, which keeps
//! re-runs byte-identical.

use std::io::Write;
use std::path::Path;

use jamlab_core::agent::{EpisodeStats, StepLog};
use jamlab_core::metrics::{encode_policy_point, ClassificationMetrics, ConfusionMatrix};
use jamlab_core::recognizer::EpochStats;

use crate::{CmdError, CmdResult};

fn create(path: &Path) -> CmdResult<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Training history: one row per epoch.
pub fn write_history(path: &Path, history: &[EpochStats]) -> CmdResult<()> {
    let mut f = create(path)?;
    writeln!(f, "epoch,train_loss,val_oa")?;
    for h in history {
        writeln!(f, "{},{},{}", h.epoch, h.train_loss, h.val_oa)?;
    }
    Ok(())
}

/// Reward trace: one row per episode.
pub fn write_trace(path: &Path, trace: &[EpisodeStats]) -> CmdResult<()> {
    let mut f = create(path)?;
    writeln!(f, "episode,total_reward,epsilon,loss_mean")?;
    for e in trace {
        writeln!(f, "{},{},{},{}", e.episode, e.total_reward, e.epsilon, e.loss_mean)?;
    }
    Ok(())
}

/// Episode log: one row per environment step.
pub fn write_episode_log(path: &Path, steps: &[StepLog]) -> CmdResult<()> {
    let mut f = create(path)?;
    writeln!(f, "episode,step,cpi,jammer_type,action_kind,channel,reward,sinr_db")?;
    for s in steps {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            s.episode,
            s.step,
            s.cpi,
            s.jammer_type.name(),
            s.action_kind,
            s.channel,
            s.reward,
            s.sinr_db
        )?;
    }
    Ok(())
}

/// Policy trace: the jammer type is the integer part, the normalized
/// action divided by two is the fractional part.
pub fn write_policy_trace(path: &Path, steps: &[StepLog], n_actions: usize) -> CmdResult<()> {
    let mut f = create(path)?;
    writeln!(f, "episode,step,jammer_type,encoded")?;
    for s in steps {
        let encoded = encode_policy_point(s.jammer_type.label(), s.action_index, n_actions);
        writeln!(f, "{},{},{},{}", s.episode, s.step, s.jammer_type.label(), encoded)?;
    }
    Ok(())
}

/// Confusion matrix counts with class-name header and row labels.
pub fn write_confusion(path: &Path, cm: &ConfusionMatrix, names: &[&str]) -> CmdResult<()> {
    let mut f = create(path)?;
    writeln!(f, "true\\pred,{}", names.join(","))?;
    for i in 0..cm.classes {
        let row: Vec<String> = (0..cm.classes).map(|j| cm.get(i, j).to_string()).collect();
        writeln!(f, "{},{}", names[i], row.join(","))?;
    }
    Ok(())
}

/// Per-class metrics plus the overall accuracy row.
pub fn write_metrics(
    path: &Path,
    m: &ClassificationMetrics,
    names: &[&str],
) -> CmdResult<()> {
    let mut f = create(path)?;
    writeln!(f, "class,recall,precision,f1,zero_denominator")?;
    for (j, name) in names.iter().enumerate() {
        writeln!(
            f,
            "{},{},{},{},{}",
            name, m.recall[j], m.precision[j], m.f1[j], m.zero_denominator[j]
        )?;
    }
    writeln!(f, "overall_accuracy,{},,,", m.overall_accuracy)?;
    Ok(())
}

/// Test-set predictions for later recomputation.
pub fn write_predictions(path: &Path, rows: &[(usize, usize, usize)]) -> CmdResult<()> {
    let mut f = create(path)?;
    writeln!(f, "scene_id,true_label,predicted_label")?;
    for (id, t, p) in rows {
        writeln!(f, "{id},{t},{p}")?;
    }
    Ok(())
}

/// Convergence/stability summary rows: (name, value-or-empty).
pub fn write_summary(path: &Path, rows: &[(String, String)]) -> CmdResult<()> {
    let mut f = create(path)?;
    writeln!(f, "metric,value")?;
    for (k, v) in rows {
        writeln!(f, "{k},{v}")?;
    }
    Ok(())
}

/// Parse a reward-trace CSV back into per-episode totals.
pub fn read_trace_rewards(path: &Path) -> CmdResult<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(CmdError::Io(format!("bad trace row: {line}")));
        }
        let v: f64 = fields[1]
            .parse()
            .map_err(|e| CmdError::Io(format!("bad reward '{}': {e}", fields[1])))?;
        out.push(v);
    }
    Ok(out)
}

/// Parse a predictions CSV back into (id, true, predicted) rows.
pub fn read_predictions(path: &Path) -> CmdResult<Vec<(usize, usize, usize)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(CmdError::Io(format!("bad prediction row: {line}")));
        }
        let parse = |s: &str| -> CmdResult<usize> {
            s.parse().map_err(|e| CmdError::Io(format!("bad field '{s}': {e}")))
        };
        out.push((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
    }
    Ok(out)
}
