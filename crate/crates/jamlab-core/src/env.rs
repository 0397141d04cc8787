//! The jammer-radar game.
//!
//! One step is one coherent processing interval (CPI). The jammer observes
//! the radar's previous channel and emits one of the three jamming types,
//! switching type at CPI boundaries according to its scheduling strategy.
//! The radar picks a waveform action (transmit on a channel, or send a
//! cover pulse and hop); the reward is the jamming-type-specific function
//! driven by SINR. The agent's observation fuses noisy active-radar
//! estimates of the jamming parameters with finer passive-receiver
//! estimates.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::seeds;
use crate::signal::JammingKind;
use crate::{Error, Result};

/// Discrete transmit-frequency grid: channel k sits at base + k * delta_f.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqGrid {
    pub n_channels: usize,
    pub base_hz: f64,
    pub delta_f_hz: f64,
}

impl FreqGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_channels < 2 || !(self.delta_f_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "grid needs >= 2 channels and positive spacing, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn channel_hz(&self, k: usize) -> f64 {
        self.base_hz + k as f64 * self.delta_f_hz
    }

    pub fn span_hz(&self) -> (f64, f64) {
        (self.base_hz, self.channel_hz(self.n_channels - 1))
    }
}

/// Radar waveform decision for one CPI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadarAction {
    /// Transmit on grid channel k.
    Transmit { channel: usize },
    /// Send a deceptive cover pulse of the given length, then hop to k.
    CoverPulse { t_cheat_s: f64, channel: usize },
}

impl RadarAction {
    pub fn channel(&self) -> usize {
        match self {
            RadarAction::Transmit { channel } => *channel,
            RadarAction::CoverPulse { channel, .. } => *channel,
        }
    }

    pub fn kind_tag(&self) -> &'static str {
        match self {
            RadarAction::Transmit { .. } => "transmit",
            RadarAction::CoverPulse { .. } => "cover",
        }
    }
}

/// Jammer scheduling: a fixed type, or one of the switching strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JammerMode {
    Fixed(JammingKind),
    Strategy(Strategy),
}

/// Type-switching strategies: sequential cycle, palindrome, uniform random
/// move to another type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    I,
    II,
    III,
}

/// Jammer bookkeeping; type transitions happen only at CPI boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JammerState {
    pub mode: JammerMode,
    pub current_type: JammingKind,
    pub cpi_counter: u64,
    /// Palindrome direction for strategy II: +1 ascending, -1 descending.
    pub palindrome_dir: i8,
    pub observed_radar_channel: usize,
    /// Sensing window the cover pulse must exceed.
    pub t_observe_s: f64,
}

impl JammerState {
    pub fn new(mode: JammerMode, t_observe_s: f64) -> Self {
        let current_type = match mode {
            JammerMode::Fixed(k) => k,
            JammerMode::Strategy(_) => JammingKind::Aj,
        };
        JammerState {
            mode,
            current_type,
            cpi_counter: 0,
            palindrome_dir: 1,
            observed_radar_channel: 0,
            t_observe_s,
        }
    }
}

/// What the jammer emits during one CPI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JamPlan {
    pub kind: JammingKind,
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub jnr_db: f64,
    /// False-target count for the dense kind.
    pub false_targets: usize,
}

/// Powers entering the SINR expression (linear units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBudget {
    pub p_s: f64,
    pub p_j: f64,
    pub p_n: f64,
    pub h_s: f64,
    pub sigma: f64,
}

impl Default for PowerBudget {
    fn default() -> Self {
        PowerBudget {
            p_s: 1.0,
            p_j: 10.0,
            p_n: 0.1,
            h_s: 1.0,
            sigma: 1.0,
        }
    }
}

/// SINR at the radar: P_s h^2 sigma / (P_n + P_j h I), with the indicator
/// set when the jamming occupies the radar band.
pub fn sinr(pb: &PowerBudget, jam_active_on_radar_band: bool) -> f64 {
    let i = if jam_active_on_radar_band { 1.0 } else { 0.0 };
    pb.p_s * pb.h_s * pb.h_s * pb.sigma / (pb.p_n + pb.p_j * pb.h_s * i)
}

/// SINR in dB with the jamming indicator on; this is the value the reward
/// functions fall back to when the radar stays jammed.
pub fn sinr_db_jammed(pb: &PowerBudget) -> f64 {
    10.0 * sinr(pb, true).log10()
}

/// Noise-jamming reward: 30 when the bands are disjoint, -100 when the
/// signal band is fully contained in the jam band, and the jammed SINR (dB)
/// under partial overlap. Branch order: containment, disjoint, partial.
pub fn reward_aj(signal_band: (f64, f64), jam_band: (f64, f64), pb: &PowerBudget) -> f64 {
    let (slo, shi) = signal_band;
    let (jlo, jhi) = jam_band;
    debug_assert!(slo < shi && jlo < jhi);
    if jlo <= slo && shi <= jhi {
        return -100.0;
    }
    if shi < jlo || slo > jhi {
        return 30.0;
    }
    sinr_db_jammed(pb)
}

/// False-target reward on the channel grid: a hop of n >= 1 channels earns
/// 30 - c * max(n, b); staying put leaves the radar jammed (SINR in dB).
pub fn reward_rftj(
    prev_channel: usize,
    next_channel: usize,
    c: f64,
    b: f64,
    pb: &PowerBudget,
) -> f64 {
    let n = (next_channel as i64 - prev_channel as i64).unsigned_abs() as f64;
    if n >= 1.0 {
        30.0 - c * n.max(b)
    } else {
        sinr_db_jammed(pb)
    }
}

/// Raw-frequency variant of [`reward_rftj`] for off-grid requests: a hop
/// that is not an integer multiple of the grid spacing is penalized with
/// -(n_channels - 1). Grid-constrained actions can never reach that branch.
pub fn reward_rftj_raw(
    f_prev_hz: f64,
    f_next_hz: f64,
    grid: &FreqGrid,
    c: f64,
    b: f64,
    pb: &PowerBudget,
) -> f64 {
    let diff = (f_next_hz - f_prev_hz).abs();
    let n_real = diff / grid.delta_f_hz;
    let n_round = n_real.round();
    if (n_real - n_round).abs() < 1e-9 * n_real.max(1.0) {
        if n_round >= 1.0 {
            30.0 - c * n_round.max(b)
        } else {
            sinr_db_jammed(pb)
        }
    } else {
        -((grid.n_channels - 1) as f64)
    }
}

/// Dense-false-target reward: a cover pulse longer than the jammer's
/// sensing window earns 30; anything else leaves the radar jammed.
pub fn reward_rdftj(t_cheat_s: f64, t_observe_s: f64, pb: &PowerBudget) -> f64 {
    if t_cheat_s > t_observe_s {
        30.0
    } else {
        sinr_db_jammed(pb)
    }
}

/// Environment parameters.
#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub grid: FreqGrid,
    pub radar_bandwidth_hz: f64,
    pub powers: PowerBudget,
    /// Per-CPI jammer power draw, dB relative to the unit-power pulse.
    pub jnr_db_range: (f64, f64),
    /// Frequency-hop cost c and its floor b (in channels).
    pub hop_cost: f64,
    pub hop_cost_floor: f64,
    pub t_observe_s: f64,
    /// Cover-pulse lengths exposed as discrete actions.
    pub cover_cheat_s: [f64; 2],
    pub sigma_active_hz: f64,
    pub sigma_passive_hz: f64,
    /// AJ noise bandwidth factor range, times the radar bandwidth.
    pub aj_bw_factor: (f64, f64),
    pub dense_targets: (usize, usize),
    pub steps_per_episode: usize,
    pub mode: JammerMode,
    /// Fuse the passive receiver's finer estimates into the observation.
    pub use_passive: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            grid: FreqGrid {
                n_channels: 10,
                base_hz: 1.0e9 - 135.0e6,
                delta_f_hz: 30.0e6,
            },
            radar_bandwidth_hz: 28.0e6,
            powers: PowerBudget::default(),
            jnr_db_range: (10.0, 35.0),
            hop_cost: 1.0,
            hop_cost_floor: 2.0,
            t_observe_s: 8.0e-6,
            cover_cheat_s: [6.0e-6, 12.0e-6],
            sigma_active_hz: 2.0e6,
            sigma_passive_hz: 0.1e6,
            aj_bw_factor: (2.0, 4.0),
            dense_targets: (3, 5),
            steps_per_episode: 32,
            mode: JammerMode::Fixed(JammingKind::Aj),
            use_passive: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.steps_per_episode == 0 {
            return Err(Error::InvalidConfig(String::from("episode needs >= 1 step")));
        }
        if !(self.radar_bandwidth_hz > 0.0) {
            return Err(Error::InvalidConfig(String::from("radar bandwidth must be > 0")));
        }
        Ok(())
    }

    /// Discrete action count: one transmit per channel plus the cover pulses.
    pub fn action_count(&self) -> usize {
        self.grid.n_channels + self.cover_cheat_s.len()
    }

    /// Decode an action index. Cover-pulse actions hop half the grid away
    /// from the current channel.
    pub fn decode_action(&self, index: usize, last_channel: usize) -> Result<RadarAction> {
        let n = self.grid.n_channels;
        if index < n {
            return Ok(RadarAction::Transmit { channel: index });
        }
        let ci = index - n;
        if ci < self.cover_cheat_s.len() {
            return Ok(RadarAction::CoverPulse {
                t_cheat_s: self.cover_cheat_s[ci],
                channel: (last_channel + n / 2) % n,
            });
        }
        Err(Error::InvalidAction(index))
    }

    /// Radar signal band when transmitting on channel k.
    pub fn signal_band(&self, k: usize) -> (f64, f64) {
        let f = self.grid.channel_hz(k);
        (
            f - self.radar_bandwidth_hz / 2.0,
            f + self.radar_bandwidth_hz / 2.0,
        )
    }

    /// Maximum achievable single-episode return (every step rewarded 30).
    pub fn max_episode_reward(&self) -> f64 {
        30.0 * self.steps_per_episode as f64
    }
}

/// Advance the jammer across a CPI boundary and produce this CPI's
/// emission. The very first CPI uses the initial type unchanged.
pub fn jammer_step(
    js: &JammerState,
    radar_last_channel: usize,
    cfg: &EnvConfig,
    rng: &mut impl Rng,
) -> (JammerState, JamPlan) {
    let mut next = *js;
    if next.cpi_counter > 0 {
        next.current_type = match next.mode {
            JammerMode::Fixed(k) => k,
            JammerMode::Strategy(Strategy::I) => match next.current_type {
                JammingKind::Aj => JammingKind::Rftj,
                JammingKind::Rftj => JammingKind::Rdftj,
                JammingKind::Rdftj => JammingKind::Aj,
            },
            JammerMode::Strategy(Strategy::II) => {
                let idx = (next.current_type.label() as i8 + next.palindrome_dir).clamp(0, 2);
                if idx == 2 {
                    next.palindrome_dir = -1;
                } else if idx == 0 {
                    next.palindrome_dir = 1;
                }
                JammingKind::from_label(idx as usize).unwrap()
            }
            JammerMode::Strategy(Strategy::III) => {
                let others: Vec<JammingKind> = JammingKind::ALL
                    .iter()
                    .copied()
                    .filter(|k| *k != next.current_type)
                    .collect();
                others[rng.gen_range(0..others.len())]
            }
        };
    }
    next.cpi_counter += 1;
    next.observed_radar_channel = radar_last_channel;

    let center_hz = cfg.grid.channel_hz(radar_last_channel);
    let jnr_db = rng.gen_range(cfg.jnr_db_range.0..=cfg.jnr_db_range.1);
    let plan = match next.current_type {
        JammingKind::Aj => {
            let factor = rng.gen_range(cfg.aj_bw_factor.0..=cfg.aj_bw_factor.1);
            JamPlan {
                kind: JammingKind::Aj,
                center_hz,
                bandwidth_hz: factor * cfg.radar_bandwidth_hz,
                jnr_db,
                false_targets: 0,
            }
        }
        JammingKind::Rftj => JamPlan {
            kind: JammingKind::Rftj,
            center_hz,
            bandwidth_hz: cfg.radar_bandwidth_hz,
            jnr_db,
            false_targets: 1,
        },
        JammingKind::Rdftj => JamPlan {
            kind: JammingKind::Rdftj,
            center_hz,
            bandwidth_hz: cfg.radar_bandwidth_hz,
            jnr_db,
            false_targets: rng.gen_range(cfg.dense_targets.0..=cfg.dense_targets.1),
        },
    };
    (next, plan)
}

/// Agent observation: recognized type one-hot, fused jamming-parameter
/// measurements, and the radar's own last channel, all normalized to [0,1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub recognized_type: [f64; 3],
    pub active_center: f64,
    pub active_bandwidth: f64,
    pub passive_center: f64,
    pub passive_bandwidth: f64,
    pub last_radar_channel: f64,
}

impl EnvState {
    pub const DIM: usize = 8;

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.recognized_type[0],
            self.recognized_type[1],
            self.recognized_type[2],
            self.active_center,
            self.active_bandwidth,
            self.passive_center,
            self.passive_bandwidth,
            self.last_radar_channel,
        ]
    }

    /// Replace the recognized-type one-hot (recognizer-in-the-loop runs).
    pub fn with_recognized(mut self, label: usize) -> Self {
        self.recognized_type = [0.0; 3];
        self.recognized_type[label.min(2)] = 1.0;
        self
    }
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn gaussian(rng: &mut impl Rng, sigma: f64) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

/// Build the observation from the true jamming parameters: the active
/// channel adds coarse Gaussian error, the passive channel (when fused)
/// adds much finer error. Values are normalized then clamped to [0,1].
pub fn observe_fused(
    plan: &JamPlan,
    last_channel: usize,
    recognized: usize,
    cfg: &EnvConfig,
    rng: &mut impl Rng,
) -> EnvState {
    let (lo, hi) = cfg.grid.span_hz();
    let span = hi - lo;
    let bw_max = cfg.aj_bw_factor.1 * cfg.radar_bandwidth_hz * 1.25;
    let active_center = plan.center_hz + gaussian(rng, cfg.sigma_active_hz);
    let active_bw = plan.bandwidth_hz + gaussian(rng, cfg.sigma_active_hz);
    let sigma_fine = if cfg.use_passive {
        cfg.sigma_passive_hz
    } else {
        cfg.sigma_active_hz
    };
    let passive_center = plan.center_hz + gaussian(rng, sigma_fine);
    let passive_bw = plan.bandwidth_hz + gaussian(rng, sigma_fine);
    let mut onehot = [0.0; 3];
    onehot[recognized.min(2)] = 1.0;
    EnvState {
        recognized_type: onehot,
        active_center: clamp01((active_center - lo) / span),
        active_bandwidth: clamp01(active_bw / bw_max),
        passive_center: clamp01((passive_center - lo) / span),
        passive_bandwidth: clamp01(passive_bw / bw_max),
        last_radar_channel: last_channel as f64 / (cfg.grid.n_channels - 1) as f64,
    }
}

/// Per-step diagnostics for episode logs.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub cpi: u64,
    pub jammer_type: JammingKind,
    pub action: RadarAction,
    pub reward: f64,
    pub sinr_db: f64,
    pub done: bool,
}

/// The game environment. One instance is single-threaded; run independent
/// seeded instances for parallel sweeps.
pub struct Env {
    pub cfg: EnvConfig,
    jammer: JammerState,
    plan: JamPlan,
    last_channel: usize,
    step_in_episode: usize,
    rng: ChaCha8Rng,
}

impl Env {
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeds::rng_from_seed(seed);
        let jammer = JammerState::new(cfg.mode, cfg.t_observe_s);
        let last_channel = 0;
        let (jammer, plan) = jammer_step(&jammer, last_channel, &cfg, &mut rng);
        Ok(Env {
            cfg,
            jammer,
            plan,
            last_channel,
            step_in_episode: 0,
            rng,
        })
    }

    /// Start a new episode; jammer state and bookkeeping reset, the RNG
    /// stream continues.
    pub fn reset(&mut self) -> EnvState {
        self.jammer = JammerState::new(self.cfg.mode, self.cfg.t_observe_s);
        self.last_channel = 0;
        self.step_in_episode = 0;
        let (jammer, plan) = jammer_step(&self.jammer, self.last_channel, &self.cfg, &mut self.rng);
        self.jammer = jammer;
        self.plan = plan;
        self.observe()
    }

    /// Current jammer emission (the one the pending action is scored against).
    pub fn current_plan(&self) -> &JamPlan {
        &self.plan
    }

    pub fn last_channel(&self) -> usize {
        self.last_channel
    }

    fn observe(&mut self) -> EnvState {
        observe_fused(
            &self.plan,
            self.last_channel,
            self.plan.kind.label(),
            &self.cfg,
            &mut self.rng,
        )
    }

    /// Score `action` against the current emission, advance the jammer, and
    /// return the next observation.
    pub fn step(&mut self, action: RadarAction) -> Result<(EnvState, f64, StepInfo)> {
        if action.channel() >= self.cfg.grid.n_channels {
            return Err(Error::InvalidAction(action.channel()));
        }
        let mut pb = self.cfg.powers;
        pb.p_j = (10.0f64).powf(self.plan.jnr_db / 10.0);
        let sinr_db = sinr_db_jammed(&pb);
        let reward = match self.plan.kind {
            JammingKind::Aj => {
                let jam_band = (
                    self.plan.center_hz - self.plan.bandwidth_hz / 2.0,
                    self.plan.center_hz + self.plan.bandwidth_hz / 2.0,
                );
                reward_aj(self.cfg.signal_band(action.channel()), jam_band, &pb)
            }
            JammingKind::Rftj => reward_rftj(
                self.last_channel,
                action.channel(),
                self.cfg.hop_cost,
                self.cfg.hop_cost_floor,
                &pb,
            ),
            JammingKind::Rdftj => {
                let t_cheat = match action {
                    RadarAction::CoverPulse { t_cheat_s, .. } => t_cheat_s,
                    RadarAction::Transmit { .. } => 0.0,
                };
                reward_rdftj(t_cheat, self.jammer.t_observe_s, &pb)
            }
        };
        let info = StepInfo {
            cpi: self.jammer.cpi_counter - 1,
            jammer_type: self.plan.kind,
            action,
            reward,
            sinr_db,
            done: self.step_in_episode + 1 >= self.cfg.steps_per_episode,
        };
        self.last_channel = action.channel();
        self.step_in_episode += 1;
        let (jammer, plan) = jammer_step(&self.jammer, self.last_channel, &self.cfg, &mut self.rng);
        self.jammer = jammer;
        self.plan = plan;
        Ok((self.observe(), reward, info))
    }
}
