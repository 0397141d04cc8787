//! Anti-jamming decision agents: a DQN (online + target network with
//! uniform experience replay and epsilon-greedy exploration) and a tabular
//! SARSA baseline, both trained against [`crate::env::Env`].

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::{Env, EnvState, JamPlan};
use crate::nn::{self, Adam, Graph, Mode, ParamSet, Tensor, Var};
use crate::seeds;
use crate::signal::JammingKind;
use crate::{Error, Result};

/// One experience-replay record.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer with FIFO eviction and uniform sampling.
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity: capacity.max(1),
            items: Vec::new(),
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn contains(&self, t: &Transition) -> bool {
        self.items.iter().any(|x| x == t)
    }

    /// Uniform sample of `n` references (with replacement across draws).
    pub fn sample<'a>(&'a self, n: usize, rng: &mut impl Rng) -> Vec<&'a Transition> {
        (0..n)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())])
            .collect()
    }
}

/// Agent hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AgentConfig {
    pub gamma: f64,
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    pub batch_size: usize,
    pub target_sync_steps: usize,
    pub buffer_capacity: usize,
    pub hidden: (usize, usize),
    /// SARSA step size.
    pub sarsa_alpha: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.9,
            lr: 1e-3,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: 300,
            batch_size: 64,
            target_sync_steps: 100,
            buffer_capacity: 10_000,
            hidden: (64, 64),
            sarsa_alpha: 0.3,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(alloc::format!(
                "gamma {} outside [0,1)",
                self.gamma
            )));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return Err(Error::InvalidConfig(alloc::format!(
                "batch size {} vs capacity {}",
                self.batch_size,
                self.buffer_capacity
            )));
        }
        Ok(())
    }

    /// Linear epsilon schedule over episodes.
    pub fn epsilon(&self, episode: usize) -> f64 {
        if episode >= self.epsilon_decay_episodes {
            return self.epsilon_end;
        }
        let frac = episode as f64 / self.epsilon_decay_episodes.max(1) as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Two-hidden-layer MLP value network: state -> Q per action.
pub struct QNet {
    pub params: ParamSet,
    layers: Vec<(usize, usize)>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl QNet {
    pub fn new(in_dim: usize, hidden: (usize, usize), out_dim: usize, seed: u64) -> Self {
        let mut rng = seeds::rng_from_seed(seed);
        let mut params = ParamSet::new();
        let mut layers = Vec::new();
        let widths = [in_dim, hidden.0, hidden.1, out_dim];
        for i in 0..3 {
            let w = params.push(
                alloc::format!("q.fc{i}.w"),
                Tensor::he_normal(vec![widths[i], widths[i + 1]], widths[i], &mut rng),
            );
            let b = params.push(alloc::format!("q.fc{i}.b"), Tensor::zeros(vec![widths[i + 1]]));
            layers.push((w, b));
        }
        QNet {
            params,
            layers,
            in_dim,
            out_dim,
        }
    }

    /// Record the forward pass on `g`; `states` is [N, in_dim].
    pub fn forward(&self, g: &mut Graph, vars: &[Var], states: Tensor) -> Result<Var> {
        let mut x = g.leaf(states);
        for (i, (w, b)) in self.layers.iter().enumerate() {
            x = nn::linear(g, x, vars[*w], vars[*b])?;
            if i + 1 < self.layers.len() {
                x = g.relu(x)?;
            }
        }
        Ok(x)
    }

    /// Q-values for one state (eval mode, no gradients kept).
    pub fn q_values(&self, s: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new(Mode::Eval);
        let vars = self.params.leaves(&mut g);
        let out = self.forward(&mut g, &vars, Tensor::new(vec![1, s.len()], s.to_vec()))?;
        Ok(g.value(out).data.clone())
    }

    /// Bit-exact parameter copy from `other`.
    pub fn copy_params_from(&mut self, other: &QNet) {
        for i in 0..self.params.len() {
            self.params.tensor_mut(i).data = other.params.tensor(i).data.clone();
        }
    }

    pub fn clone_net(&self) -> QNet {
        QNet {
            params: self.params.clone(),
            layers: self.layers.clone(),
            in_dim: self.in_dim,
            out_dim: self.out_dim,
        }
    }
}

/// Epsilon-greedy action selection; greedy ties break to the lowest index.
pub fn select_action(q_values: &[f64], epsilon: f64, rng: &mut impl Rng) -> usize {
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q_values.len())
    } else {
        greedy_action(q_values)
    }
}

/// Argmax with ties resolved to the lowest index.
pub fn greedy_action(q_values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in q_values.iter().enumerate() {
        if *v > q_values[best] {
            best = i;
        }
    }
    best
}

/// Bellman target: r + gamma * max_a Q_target(s', a), bootstrap dropped on
/// terminal transitions.
pub fn td_target(r: f64, s_next: &[f64], done: bool, target: &QNet, gamma: f64) -> Result<f64> {
    if done {
        return Ok(r);
    }
    let q = target.q_values(s_next)?;
    let max_q = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(r + gamma * max_q)
}

/// One gradient step on the mean-squared TD error over a batch.
pub fn train_step(
    online: &mut QNet,
    target: &QNet,
    batch: &[&Transition],
    cfg: &AgentConfig,
    adam: &mut Adam,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = batch.len();
    let in_dim = online.in_dim;
    let mut states = vec![0.0; n * in_dim];
    let mut actions = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for (i, t) in batch.iter().enumerate() {
        states[i * in_dim..(i + 1) * in_dim].copy_from_slice(&t.s);
        actions.push(t.a);
        targets.push(td_target(t.r, &t.s_next, t.done, target, cfg.gamma)?);
    }
    let mut g = Graph::new(Mode::Train);
    let vars = online.params.leaves(&mut g);
    let q = online.forward(&mut g, &vars, Tensor::new(vec![n, in_dim], states))?;
    let q_sel = g.gather_cols(q, &actions)?;
    let loss = g.mse_to(q_sel, &targets)?;
    let value = g.value(loss).item();
    let store = g.backward(loss)?;
    adam.step(&mut online.params, &store, &vars);
    Ok(value)
}

/// Copy online into target whenever the step counter hits the sync period.
pub fn sync_target(online: &QNet, target: &mut QNet, step: u64, sync_every: usize) {
    if sync_every > 0 && step % sync_every as u64 == 0 {
        target.copy_params_from(online);
    }
}

/// Recognized-type source for the observation: the oracle default passes
/// the env's ground truth through; a recognizer-in-the-loop implementation
/// classifies a synthesized echo of the current emission.
pub trait ObservationFilter {
    fn filter(&mut self, plan: &JamPlan, obs: EnvState) -> EnvState;
}

/// Ground-truth labels (no recognizer in the loop).
pub struct OracleLabels;

impl ObservationFilter for OracleLabels {
    fn filter(&mut self, _plan: &JamPlan, obs: EnvState) -> EnvState {
        obs
    }
}

/// Per-episode training record.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeStats {
    pub episode: usize,
    pub total_reward: f64,
    pub epsilon: f64,
    pub loss_mean: f64,
}

/// Per-step log row for episode CSVs and policy traces.
#[derive(Debug, Clone, Copy)]
pub struct StepLog {
    pub episode: usize,
    pub step: usize,
    pub cpi: u64,
    pub jammer_type: JammingKind,
    pub action_kind: &'static str,
    pub action_index: usize,
    pub channel: usize,
    pub reward: f64,
    pub sinr_db: f64,
}

/// A finished training run.
pub struct TrainRun {
    pub trace: Vec<EpisodeStats>,
    pub steps: Vec<StepLog>,
}

/// DQN result: the trained network plus its trace.
pub struct DqnRun {
    pub net: QNet,
    pub run: TrainRun,
}

/// Full DQN loop: act, store, sample, train, sync. Deterministic given the
/// seed (network init, exploration and replay sampling all derive from it).
pub fn train_dqn(
    env: &mut Env,
    cfg: &AgentConfig,
    episodes: usize,
    seed: u64,
    filter: &mut dyn ObservationFilter,
) -> Result<DqnRun> {
    cfg.validate()?;
    let n_actions = env.cfg.action_count();
    let mut online = QNet::new(
        EnvState::DIM,
        cfg.hidden,
        n_actions,
        seeds::child_seed(seed, 0x9e7, 0),
    );
    let mut target = online.clone_net();
    let mut adam = Adam::new(&online.params, cfg.lr);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut rng: ChaCha8Rng = seeds::rng_from_seed(seeds::child_seed(seed, 0xac7, 0));
    let mut trace = Vec::with_capacity(episodes);
    let mut steps_log = Vec::new();
    let mut global_step: u64 = 0;
    for episode in 0..episodes {
        let epsilon = cfg.epsilon(episode);
        let raw = env.reset();
        let mut obs = filter.filter(env.current_plan(), raw);
        let mut total = 0.0;
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for step in 0..env.cfg.steps_per_episode {
            let q = online.q_values(&obs.to_vec())?;
            let a_idx = select_action(&q, epsilon, &mut rng);
            let action = env.cfg.decode_action(a_idx, env.last_channel())?;
            let (next_raw, reward, info) = env.step(action)?;
            let next_obs = filter.filter(env.current_plan(), next_raw);
            buffer.push(Transition {
                s: obs.to_vec(),
                a: a_idx,
                r: reward,
                s_next: next_obs.to_vec(),
                done: info.done,
            });
            if buffer.len() >= cfg.batch_size {
                let batch = buffer.sample(cfg.batch_size, &mut rng);
                loss_sum += train_step(&mut online, &target, &batch, cfg, &mut adam)?;
                loss_count += 1;
                global_step += 1;
                sync_target(&online, &mut target, global_step, cfg.target_sync_steps);
            }
            steps_log.push(StepLog {
                episode,
                step,
                cpi: info.cpi,
                jammer_type: info.jammer_type,
                action_kind: info.action.kind_tag(),
                action_index: a_idx,
                channel: info.action.channel(),
                reward,
                sinr_db: info.sinr_db,
            });
            total += reward;
            obs = next_obs;
        }
        trace.push(EpisodeStats {
            episode,
            total_reward: total,
            epsilon,
            loss_mean: if loss_count > 0 {
                loss_sum / loss_count as f64
            } else {
                0.0
            },
        });
    }
    Ok(DqnRun {
        net: online,
        run: TrainRun {
            trace,
            steps: steps_log,
        },
    })
}

// ---------------------------------------------------------------------------
// SARSA baseline
// ---------------------------------------------------------------------------

/// Discretized state for the tabular baseline: recognized type x quantized
/// jamming-center channel x last radar channel.
pub fn sarsa_state_index(obs: &EnvState, n_channels: usize) -> usize {
    let kind = greedy_action(&obs.recognized_type);
    let center =
        ((obs.passive_center * (n_channels - 1) as f64).round() as usize).min(n_channels - 1);
    let last =
        ((obs.last_radar_channel * (n_channels - 1) as f64).round() as usize).min(n_channels - 1);
    (kind * n_channels + center) * n_channels + last
}

/// Tabular action-value store.
pub struct QTable {
    pub values: Vec<f64>,
    pub n_states: usize,
    pub n_actions: usize,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        QTable {
            values: vec![0.0; n_states * n_actions],
            n_states,
            n_actions,
        }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }
}

/// SARSA result: the learned table plus its trace.
pub struct SarsaRun {
    pub table: QTable,
    pub run: TrainRun,
}

/// On-policy tabular SARSA with the same epsilon schedule and trace format
/// as the DQN.
pub fn train_sarsa(
    env: &mut Env,
    cfg: &AgentConfig,
    episodes: usize,
    seed: u64,
    filter: &mut dyn ObservationFilter,
) -> Result<SarsaRun> {
    cfg.validate()?;
    let n_channels = env.cfg.grid.n_channels;
    let n_actions = env.cfg.action_count();
    let n_states = 3 * n_channels * n_channels;
    let mut table = QTable::new(n_states, n_actions);
    let mut rng: ChaCha8Rng = seeds::rng_from_seed(seeds::child_seed(seed, 0x5a25a, 0));
    let mut trace = Vec::with_capacity(episodes);
    let mut steps_log = Vec::new();
    for episode in 0..episodes {
        let epsilon = cfg.epsilon(episode);
        let raw = env.reset();
        let obs = filter.filter(env.current_plan(), raw);
        let mut s = sarsa_state_index(&obs, n_channels);
        let mut a = select_action(table.row(s), epsilon, &mut rng);
        let mut total = 0.0;
        for step in 0..env.cfg.steps_per_episode {
            let action = env.cfg.decode_action(a, env.last_channel())?;
            let (next_raw, reward, info) = env.step(action)?;
            let next_obs = filter.filter(env.current_plan(), next_raw);
            let s_next = sarsa_state_index(&next_obs, n_channels);
            let a_next = select_action(table.row(s_next), epsilon, &mut rng);
            let bootstrap = if info.done {
                0.0
            } else {
                table.get(s_next, a_next)
            };
            let updated = table.get(s, a)
                + cfg.sarsa_alpha * (reward + cfg.gamma * bootstrap - table.get(s, a));
            table.set(s, a, updated);
            steps_log.push(StepLog {
                episode,
                step,
                cpi: info.cpi,
                jammer_type: info.jammer_type,
                action_kind: info.action.kind_tag(),
                action_index: a,
                channel: info.action.channel(),
                reward,
                sinr_db: info.sinr_db,
            });
            total += reward;
            s = s_next;
            a = a_next;
        }
        trace.push(EpisodeStats {
            episode,
            total_reward: total,
            epsilon,
            loss_mean: 0.0,
        });
    }
    Ok(SarsaRun {
        table,
        run: TrainRun {
            trace,
            steps: steps_log,
        },
    })
}

/// Greedy rollout of an arbitrary policy for evaluation; returns per-episode
/// totals and the step log.
pub fn evaluate_policy(
    env: &mut Env,
    episodes: usize,
    filter: &mut dyn ObservationFilter,
    mut policy: impl FnMut(&EnvState) -> usize,
) -> Result<TrainRun> {
    let mut trace = Vec::with_capacity(episodes);
    let mut steps_log = Vec::new();
    for episode in 0..episodes {
        let raw = env.reset();
        let mut obs = filter.filter(env.current_plan(), raw);
        let mut total = 0.0;
        for step in 0..env.cfg.steps_per_episode {
            let a_idx = policy(&obs);
            let action = env.cfg.decode_action(a_idx, env.last_channel())?;
            let (next_raw, reward, info) = env.step(action)?;
            obs = filter.filter(env.current_plan(), next_raw);
            steps_log.push(StepLog {
                episode,
                step,
                cpi: info.cpi,
                jammer_type: info.jammer_type,
                action_kind: info.action.kind_tag(),
                action_index: a_idx,
                channel: info.action.channel(),
                reward,
                sinr_db: info.sinr_db,
            });
            total += reward;
        }
        trace.push(EpisodeStats {
            episode,
            total_reward: total,
            epsilon: 0.0,
            loss_mean: 0.0,
        });
    }
    Ok(TrainRun {
        trace,
        steps: steps_log,
    })
}
