//! Subcommand implementations. Each command is reproducible from
//! (config file, seed) alone; the config is echoed into the output
//! directory and all randomness derives from the run seed.

use std::path::{Path, PathBuf};

use jamlab_core::agent::{train_dqn, train_sarsa, ObservationFilter, OracleLabels, TrainRun};
use jamlab_core::metrics::{classification_metrics, ConfusionMatrix};
use jamlab_core::recognizer::{train_recognizer, Recognizer, SceneFeatures};
use jamlab_core::seeds;
use jamlab_core::signal::SampleRanges;
use jamlab_core::env::Env;

use crate::config::{echo_config, load_config, RunConfig};
use crate::loop_filter::RecognizerFilter;
use crate::report::{self, CLASS_NAMES};
use crate::{checkpoint, csvio, dataset, CmdError, CmdResult};

fn load_with_seed(config_path: &Path, seed: Option<u64>) -> CmdResult<RunConfig> {
    let mut cfg = load_config(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir))
}

/// Outcome summary of `gen-data`.
pub struct GenDataReport {
    pub dir: PathBuf,
    pub scenes: usize,
    pub histogram: [usize; 3],
}

pub fn cmd_gen_data(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
) -> CmdResult<GenDataReport> {
    let cfg = load_with_seed(config_path, seed)?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.dataset.dir));
    let radar = cfg.radar.to_params();
    let dc = cfg.dataset.to_config(radar, cfg.seed)?;
    let fp = cfg.recognizer.feature_params();
    let preview = cfg.dataset.pgm_preview;
    let manifest = dataset::write_dataset(
        &dc,
        &dir,
        if preview > 0 { Some(&fp) } else { None },
        preview,
    )?;
    echo_config(config_path, &dir)?;
    Ok(GenDataReport {
        dir,
        scenes: manifest.scenes.len(),
        histogram: manifest.class_histogram(),
    })
}

/// Outcome summary of `train-recognizer`.
pub struct TrainRecognizerReport {
    pub out_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub epochs_run: usize,
    pub final_val_oa: f64,
    pub test_oa: f64,
}

pub fn cmd_train_recognizer(
    config_path: &Path,
    seed: Option<u64>,
    dataset_dir: Option<&Path>,
    out: Option<&Path>,
) -> CmdResult<TrainRecognizerReport> {
    let cfg = load_with_seed(config_path, seed)?;
    let data_dir = dataset_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.dataset.dir));
    let out_dir = out_dir(&cfg, out);
    std::fs::create_dir_all(&out_dir)?;
    echo_config(config_path, &out_dir)?;

    let fp = cfg.recognizer.feature_params();
    let loaded = dataset::load_feature_dataset(&data_dir, &fp)?;
    let opts = cfg.recognizer.train_options(cfg.seed);
    let (model, history) =
        train_recognizer(cfg.recognizer.model_config(), &loaded.data, &opts)
            .map_err(CmdError::from)?;
    if history.iter().any(|h| !h.train_loss.is_finite()) {
        return Err(CmdError::Numeric("NaN training loss".into()));
    }
    csvio::write_history(&out_dir.join("history.csv"), &history)?;

    let ckpt_path = out_dir.join(&cfg.recognizer.checkpoint);
    checkpoint::save_params(&ckpt_path, &model.params)?;

    // Test-split predictions, then metrics recomputed from the saved rows.
    let features: Vec<SceneFeatures> =
        loaded.data.test.iter().map(|(f, _)| f.clone()).collect();
    let mut rows = Vec::new();
    let mut cm = ConfusionMatrix::new(3);
    if !features.is_empty() {
        let preds = model.predict(&features).map_err(CmdError::from)?;
        for ((id, (_, label)), pred) in loaded
            .test_ids
            .iter()
            .zip(loaded.data.test.iter())
            .zip(&preds)
        {
            rows.push((*id, *label, *pred));
            cm.record(*label, *pred);
        }
    }
    csvio::write_predictions(&out_dir.join("predictions.csv"), &rows)?;
    let test_oa = if rows.is_empty() {
        0.0
    } else {
        let m = classification_metrics(&cm).map_err(CmdError::from)?;
        csvio::write_confusion(&out_dir.join("confusion.csv"), &cm, &CLASS_NAMES)?;
        csvio::write_metrics(&out_dir.join("metrics.csv"), &m, &CLASS_NAMES)?;
        m.overall_accuracy
    };
    Ok(TrainRecognizerReport {
        out_dir,
        checkpoint: ckpt_path,
        epochs_run: history.len(),
        final_val_oa: history.last().map(|h| h.val_oa).unwrap_or(0.0),
        test_oa,
    })
}

/// Outcome summary of an RL run (oracle or closed loop).
pub struct RlReport {
    pub out_dir: PathBuf,
    pub dqn_final_ma: f64,
    pub sarsa_final_ma: f64,
    pub summary: Vec<(String, String)>,
}

fn check_finite(run: &TrainRun, name: &str) -> CmdResult<()> {
    if run
        .trace
        .iter()
        .any(|e| !e.total_reward.is_finite() || !e.loss_mean.is_finite())
    {
        return Err(CmdError::Numeric(format!("NaN in {name} trace")));
    }
    Ok(())
}

fn final_moving_average(rewards: &[f64], window: usize) -> f64 {
    if rewards.is_empty() {
        return 0.0;
    }
    let w = window.min(rewards.len());
    rewards[rewards.len() - w..].iter().sum::<f64>() / w as f64
}

fn build_filter(
    cfg: &RunConfig,
    oracle_labels: bool,
    checkpoint_path: Option<&Path>,
    stream: u64,
) -> CmdResult<Box<dyn ObservationFilter>> {
    if oracle_labels {
        return Ok(Box::new(OracleLabels));
    }
    let path = checkpoint_path.ok_or_else(|| {
        CmdError::Config("closed loop needs --checkpoint or --oracle-labels".into())
    })?;
    let mut model = Recognizer::new(cfg.recognizer.model_config(), 0).map_err(CmdError::from)?;
    checkpoint::load_into(path, &mut model.params)?;
    Ok(Box::new(RecognizerFilter::new(
        model,
        cfg.recognizer.feature_params(),
        cfg.radar.to_params(),
        SampleRanges::default(),
        seeds::child_seed(cfg.seed, 0xf117, stream),
    )))
}

#[allow(clippy::too_many_arguments)]
pub fn run_rl(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
    strategy_override: Option<&str>,
    oracle_labels: bool,
    checkpoint_path: Option<&Path>,
) -> CmdResult<RlReport> {
    let cfg = load_with_seed(config_path, seed)?;
    let out_dir = out_dir(&cfg, out);
    std::fs::create_dir_all(&out_dir)?;
    echo_config(config_path, &out_dir)?;

    let radar = cfg.radar.to_params();
    let env_cfg = cfg.env.to_config(&radar, strategy_override)?;
    let agent_cfg = cfg.agent.to_config();
    let episodes = cfg.env.episodes;
    let n_actions = env_cfg.action_count();

    let mut dqn_filter = build_filter(&cfg, oracle_labels, checkpoint_path, 0)?;
    let mut env = Env::new(env_cfg.clone(), seeds::child_seed(cfg.seed, 0xe0, 0))
        .map_err(CmdError::from)?;
    let dqn = train_dqn(
        &mut env,
        &agent_cfg,
        episodes,
        seeds::child_seed(cfg.seed, 0xd0, 0),
        dqn_filter.as_mut(),
    )
    .map_err(CmdError::from)?;
    check_finite(&dqn.run, "dqn")?;

    let mut sarsa_filter = build_filter(&cfg, oracle_labels, checkpoint_path, 1)?;
    let mut env = Env::new(env_cfg.clone(), seeds::child_seed(cfg.seed, 0xe0, 0))
        .map_err(CmdError::from)?;
    let sarsa = train_sarsa(
        &mut env,
        &agent_cfg,
        episodes,
        seeds::child_seed(cfg.seed, 0x5a, 0),
        sarsa_filter.as_mut(),
    )
    .map_err(CmdError::from)?;
    check_finite(&sarsa.run, "sarsa")?;

    csvio::write_trace(&out_dir.join("dqn_trace.csv"), &dqn.run.trace)?;
    csvio::write_trace(&out_dir.join("sarsa_trace.csv"), &sarsa.run.trace)?;
    csvio::write_episode_log(&out_dir.join("dqn_episodes.csv"), &dqn.run.steps)?;
    csvio::write_episode_log(&out_dir.join("sarsa_episodes.csv"), &sarsa.run.steps)?;
    csvio::write_policy_trace(&out_dir.join("dqn_policy_trace.csv"), &dqn.run.steps, n_actions)?;
    csvio::write_policy_trace(
        &out_dir.join("sarsa_policy_trace.csv"),
        &sarsa.run.steps,
        n_actions,
    )?;
    checkpoint::save_params(&out_dir.join("dqn_policy.fnet"), &dqn.net.params)?;

    let max_reward = env_cfg.max_episode_reward();
    let mut summary = Vec::new();
    summary.extend(report::trace_summary(
        "dqn",
        &out_dir.join("dqn_trace.csv"),
        max_reward,
    )?);
    summary.extend(report::trace_summary(
        "sarsa",
        &out_dir.join("sarsa_trace.csv"),
        max_reward,
    )?);
    csvio::write_summary(&out_dir.join("summary.csv"), &summary)?;

    let dqn_rewards: Vec<f64> = dqn.run.trace.iter().map(|e| e.total_reward).collect();
    let sarsa_rewards: Vec<f64> = sarsa.run.trace.iter().map(|e| e.total_reward).collect();
    Ok(RlReport {
        out_dir,
        dqn_final_ma: final_moving_average(&dqn_rewards, report::MA_WINDOW),
        sarsa_final_ma: final_moving_average(&sarsa_rewards, report::MA_WINDOW),
        summary,
    })
}

/// Outcome summary of `report`.
pub struct ReportOutput {
    pub out_dir: PathBuf,
    pub rows: Vec<(String, String)>,
    pub test_oa: Option<f64>,
}

pub fn cmd_report(
    config_path: &Path,
    run_dir: Option<&Path>,
    out: Option<&Path>,
) -> CmdResult<ReportOutput> {
    let cfg = load_config(config_path)?;
    let run = run_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| run.clone());
    std::fs::create_dir_all(&out_dir)?;
    let max_reward = 30.0 * cfg.env.steps_per_episode as f64;
    let mut rows = Vec::new();
    for name in ["dqn", "sarsa"] {
        let path = run.join(format!("{name}_trace.csv"));
        if path.exists() {
            rows.extend(report::trace_summary(name, &path, max_reward)?);
        }
    }
    let mut test_oa = None;
    let preds = run.join("predictions.csv");
    if preds.exists() {
        test_oa = Some(report::classification_report(&preds, &out_dir)?);
    }
    csvio::write_summary(&out_dir.join("report_summary.csv"), &rows)?;
    Ok(ReportOutput {
        out_dir,
        rows,
        test_oa,
    })
}
