//! Run configuration: one TOML file per run, echoed verbatim into the
//! output directory for provenance. Every field has a default, so a
//! minimal config is just a seed.

use serde::{Deserialize, Serialize};
use std::path::Path;

use jamlab_core::agent::AgentConfig;
use jamlab_core::env::{EnvConfig, FreqGrid, JammerMode, PowerBudget, Strategy};
use jamlab_core::recognizer::{FeatureParams, RecognizerConfig, TrainOptions};
use jamlab_core::signal::{
    DatasetConfig, JammingKind, RadarParams, SampleRanges, SplitFractions,
};
use jamlab_core::tf::{SpwvdParams, StftParams};

use crate::{CmdError, CmdResult};

fn default_seed() -> u64 {
    0
}

fn default_out_dir() -> String {
    "runs/out".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default)]
    pub radar: RadarSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub recognizer: RecognizerSection,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub agent: AgentSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: default_seed(),
            out_dir: default_out_dir(),
            radar: RadarSection::default(),
            dataset: DatasetSection::default(),
            recognizer: RecognizerSection::default(),
            env: EnvSection::default(),
            agent: AgentSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadarSection {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub pulse_width_s: f64,
    pub pri_s: f64,
    pub sample_rate_hz: f64,
    pub snr_db: f64,
}

impl Default for RadarSection {
    fn default() -> Self {
        let p = RadarParams::default();
        RadarSection {
            carrier_hz: p.carrier_hz,
            bandwidth_hz: p.bandwidth_hz,
            pulse_width_s: p.pulse_width_s,
            pri_s: p.pri_s,
            sample_rate_hz: p.sample_rate_hz,
            snr_db: p.snr_db,
        }
    }
}

impl RadarSection {
    pub fn to_params(&self) -> RadarParams {
        RadarParams {
            carrier_hz: self.carrier_hz,
            bandwidth_hz: self.bandwidth_hz,
            pulse_width_s: self.pulse_width_s,
            pri_s: self.pri_s,
            sample_rate_hz: self.sample_rate_hz,
            snr_db: self.snr_db,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Scenes per class, ordered AJ / RFTJ / RDFTJ.
    pub per_class: [usize; 3],
    /// "standard" (80/10/10) or "small-train" (30/10/60).
    pub split: String,
    pub dir: String,
    /// Export PGM previews of the first N scenes' spectrograms.
    pub pgm_preview: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            per_class: [300, 300, 300],
            split: "standard".into(),
            dir: "dataset".into(),
            pgm_preview: 0,
        }
    }
}

impl DatasetSection {
    pub fn split_fractions(&self) -> CmdResult<SplitFractions> {
        match self.split.as_str() {
            "standard" => Ok(SplitFractions::STANDARD),
            "small-train" => Ok(SplitFractions::SMALL_TRAIN),
            other => Err(CmdError::Config(format!(
                "unknown split preset '{other}' (use standard or small-train)"
            ))),
        }
    }

    pub fn to_config(&self, radar: RadarParams, seed: u64) -> CmdResult<DatasetConfig> {
        Ok(DatasetConfig {
            radar,
            ranges: SampleRanges::default(),
            per_class: self.per_class,
            split: self.split_fractions()?,
            master_seed: seed,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecognizerSection {
    pub image_side: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub early_stop_val_oa: f64,
    pub checkpoint: String,
}

impl Default for RecognizerSection {
    fn default() -> Self {
        RecognizerSection {
            image_side: 64,
            epochs: 30,
            batch_size: 16,
            lr: 1e-3,
            early_stop_val_oa: 0.99,
            checkpoint: "recognizer.fnet".into(),
        }
    }
}

impl RecognizerSection {
    pub fn model_config(&self) -> RecognizerConfig {
        RecognizerConfig {
            image_side: self.image_side,
            ..RecognizerConfig::default()
        }
    }

    pub fn feature_params(&self) -> FeatureParams {
        FeatureParams {
            stft: StftParams::default(),
            spwvd: SpwvdParams::default(),
            image_side: self.image_side,
        }
    }

    pub fn train_options(&self, seed: u64) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed,
            early_stop_val_oa: if self.early_stop_val_oa > 0.0 {
                Some(self.early_stop_val_oa)
            } else {
                None
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub n_channels: usize,
    pub base_hz: f64,
    pub delta_f_hz: f64,
    /// "AJ", "RFTJ", "RDFTJ" for a fixed jammer, or strategy "I"/"II"/"III".
    pub strategy: String,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub hop_cost: f64,
    pub hop_cost_floor: f64,
    pub t_observe_s: f64,
    pub sigma_active_hz: f64,
    pub sigma_passive_hz: f64,
    pub use_passive: bool,
    pub p_s: f64,
    pub p_n: f64,
    pub h_s: f64,
    pub target_rcs: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        let e = EnvConfig::default();
        EnvSection {
            n_channels: e.grid.n_channels,
            base_hz: e.grid.base_hz,
            delta_f_hz: e.grid.delta_f_hz,
            strategy: "AJ".into(),
            episodes: 1000,
            steps_per_episode: e.steps_per_episode,
            hop_cost: e.hop_cost,
            hop_cost_floor: e.hop_cost_floor,
            t_observe_s: e.t_observe_s,
            sigma_active_hz: e.sigma_active_hz,
            sigma_passive_hz: e.sigma_passive_hz,
            use_passive: e.use_passive,
            p_s: e.powers.p_s,
            p_n: e.powers.p_n,
            h_s: e.powers.h_s,
            target_rcs: e.powers.sigma,
        }
    }
}

pub fn parse_jammer_mode(s: &str) -> CmdResult<JammerMode> {
    match s {
        "AJ" | "aj" => Ok(JammerMode::Fixed(JammingKind::Aj)),
        "RFTJ" | "rftj" => Ok(JammerMode::Fixed(JammingKind::Rftj)),
        "RDFTJ" | "rdftj" => Ok(JammerMode::Fixed(JammingKind::Rdftj)),
        "I" | "i" => Ok(JammerMode::Strategy(Strategy::I)),
        "II" | "ii" => Ok(JammerMode::Strategy(Strategy::II)),
        "III" | "iii" => Ok(JammerMode::Strategy(Strategy::III)),
        other => Err(CmdError::Config(format!(
            "unknown strategy '{other}' (use AJ, RFTJ, RDFTJ, I, II or III)"
        ))),
    }
}

impl EnvSection {
    pub fn to_config(&self, radar: &RadarParams, strategy_override: Option<&str>) -> CmdResult<EnvConfig> {
        let mode = parse_jammer_mode(strategy_override.unwrap_or(&self.strategy))?;
        Ok(EnvConfig {
            grid: FreqGrid {
                n_channels: self.n_channels,
                base_hz: self.base_hz,
                delta_f_hz: self.delta_f_hz,
            },
            radar_bandwidth_hz: radar.bandwidth_hz,
            powers: PowerBudget {
                p_s: self.p_s,
                p_j: 10.0,
                p_n: self.p_n,
                h_s: self.h_s,
                sigma: self.target_rcs,
            },
            steps_per_episode: self.steps_per_episode,
            hop_cost: self.hop_cost,
            hop_cost_floor: self.hop_cost_floor,
            t_observe_s: self.t_observe_s,
            sigma_active_hz: self.sigma_active_hz,
            sigma_passive_hz: self.sigma_passive_hz,
            use_passive: self.use_passive,
            mode,
            ..EnvConfig::default()
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub gamma: f64,
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    pub batch_size: usize,
    pub target_sync_steps: usize,
    pub buffer_capacity: usize,
    pub hidden: [usize; 2],
    pub sarsa_alpha: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        let a = AgentConfig::default();
        AgentSection {
            gamma: a.gamma,
            lr: a.lr,
            epsilon_start: a.epsilon_start,
            epsilon_end: a.epsilon_end,
            epsilon_decay_episodes: a.epsilon_decay_episodes,
            batch_size: a.batch_size,
            target_sync_steps: a.target_sync_steps,
            buffer_capacity: a.buffer_capacity,
            hidden: [a.hidden.0, a.hidden.1],
            sarsa_alpha: a.sarsa_alpha,
        }
    }
}

impl AgentSection {
    pub fn to_config(&self) -> AgentConfig {
        AgentConfig {
            gamma: self.gamma,
            lr: self.lr,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            epsilon_decay_episodes: self.epsilon_decay_episodes,
            batch_size: self.batch_size,
            target_sync_steps: self.target_sync_steps,
            buffer_capacity: self.buffer_capacity,
            hidden: (self.hidden[0], self.hidden[1]),
            sarsa_alpha: self.sarsa_alpha,
        }
    }
}

/// Parse a config file; missing sections fall back to defaults.
pub fn load_config(path: &Path) -> CmdResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Io(format!("reading {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CmdError::Config(format!("{}: {e}", path.display())))
}

/// Copy the raw config bytes into the output directory for provenance.
pub fn echo_config(path: &Path, out_dir: &Path) -> CmdResult<()> {
    std::fs::create_dir_all(out_dir)?;
    let bytes = std::fs::read(path)?;
    std::fs::write(out_dir.join("run_config.toml"), bytes)?;
    Ok(())
}
