//! Value-learning agents: proxy-value DQN and TD3, their reward-free RL
//! counterparts, and behavior cloning.

pub mod bc;
pub mod dqn;
pub mod losses;
pub mod td3;

pub use bc::BcAgent;
pub use dqn::DqnAgent;
pub use td3::Td3Agent;

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffers::{sample_balanced, sample_union, BalancedBatch, BufferError, Buffers};
use crate::envs::{Action, ActionSpace};
use crate::nn::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    PvpDqn,
    PvpTd3,
    Dqn,
    Td3,
    Bc,
}

impl AgentKind {
    pub fn uses_proxy_values(self) -> bool {
        matches!(self, AgentKind::PvpDqn | AgentKind::PvpTd3)
    }

    pub fn is_discrete(self) -> Option<bool> {
        match self {
            AgentKind::PvpDqn | AgentKind::Dqn => Some(true),
            AgentKind::PvpTd3 | AgentKind::Td3 => Some(false),
            AgentKind::Bc => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Bounded proxy-value labels.
    Pvp,
    /// Unbounded pairwise conservative term, no L2 regularizer.
    Cql,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PvpConfig {
    pub gamma: f64,
    pub q_bound: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub tau: f64,
    pub use_td: bool,
    pub use_balanced: bool,
    pub use_novice_buffer: bool,
    pub use_env_reward: bool,
    pub objective: Objective,
    pub stochastic_actor: bool,
    pub hidden_sizes: Vec<usize>,
    pub gradient_steps: usize,
    pub learning_starts: u64,
    /// Critic updates per actor (and target) update in TD3.
    pub actor_delay: u64,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    /// Gaussian action noise for the stochastic-actor ablation and the TD3 baseline.
    pub action_noise: f64,
    /// Epsilon-greedy schedule for the DQN baseline: linear from
    /// `explore_initial` to `explore_final` over `explore_fraction` of training.
    pub explore_initial: f64,
    pub explore_final: f64,
    pub explore_fraction: f64,
    pub novice_capacity: usize,
}

impl Default for PvpConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            q_bound: 1.0,
            batch_size: 100,
            lr: 1e-4,
            tau: 0.005,
            use_td: true,
            use_balanced: true,
            use_novice_buffer: true,
            use_env_reward: false,
            objective: Objective::Pvp,
            stochastic_actor: false,
            hidden_sizes: vec![64, 64],
            gradient_steps: 1,
            learning_starts: 100,
            actor_delay: 2,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            action_noise: 0.1,
            explore_initial: 0.0,
            explore_final: 0.05,
            explore_fraction: 0.3,
            novice_capacity: crate::buffers::DEFAULT_NOVICE_CAPACITY,
        }
    }
}

impl PvpConfig {
    /// Discrete grid tasks: larger batches, many gradient steps, earlier start.
    pub fn gridworld() -> Self {
        Self {
            batch_size: 256,
            gradient_steps: 32,
            learning_starts: 50,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.q_bound > 0.0) {
            return bad("q_bound must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.lr > 0.0) || !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("lr must be positive and tau in (0, 1]");
        }
        if self.actor_delay == 0 {
            return bad("actor_delay must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Buffer(#[from] BufferError),
    #[error("non-finite loss ({0}), update aborted")]
    NumericFailure(String),
    #[error("agent {agent:?} cannot act in a {space:?} action space")]
    EnvMismatch { agent: AgentKind, space: ActionSpace },
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub pv_loss: f64,
    pub td_loss: f64,
    pub total: f64,
    pub actor_objective: Option<f64>,
    pub human_rows: usize,
    pub batch_len: usize,
}

/// A training batch in matrix form. Human rows come first; their applied
/// action is `a_h` and `novice_actions` holds the matching `a_n`.
#[derive(Debug, Clone)]
pub struct CriticBatch {
    pub states: Array2<f64>,
    pub next_states: Array2<f64>,
    pub applied: Vec<Action>,
    pub novice_actions: Vec<Action>,
    pub done: Vec<bool>,
    /// Only filled when the reward ablation is on.
    pub rewards: Option<Vec<f64>>,
}

impl CriticBatch {
    pub fn len(&self) -> usize {
        self.applied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.applied.is_empty()
    }

    pub fn human_rows(&self) -> usize {
        self.novice_actions.len()
    }

    pub fn from_batch(batch: &BalancedBatch<'_>, with_reward: bool) -> Self {
        let n = batch.len();
        let dim = batch
            .human
            .first()
            .map(|t| t.s.len())
            .or_else(|| batch.novice.first().map(|t| t.s.len()))
            .unwrap_or(0);
        let mut states = Array2::zeros((n, dim));
        let mut next_states = Array2::zeros((n, dim));
        let mut applied = Vec::with_capacity(n);
        let mut novice_actions = Vec::with_capacity(batch.human.len());
        let mut done = Vec::with_capacity(n);
        let mut rewards = with_reward.then(|| Vec::with_capacity(n));
        for (i, t) in batch.human.iter().enumerate() {
            states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.s));
            next_states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.s_next));
            applied.push(t.a_h.clone());
            novice_actions.push(t.a_n.clone());
            done.push(t.done);
            if let Some(r) = rewards.as_mut() {
                r.push(t.eval_reward);
            }
        }
        let offset = batch.human.len();
        for (i, t) in batch.novice.iter().enumerate() {
            states.row_mut(offset + i).assign(&ndarray::ArrayView1::from(&t.s));
            next_states.row_mut(offset + i).assign(&ndarray::ArrayView1::from(&t.s_next));
            applied.push(t.a_n.clone());
            done.push(t.done);
            if let Some(r) = rewards.as_mut() {
                r.push(t.eval_reward);
            }
        }
        Self {
            states,
            next_states,
            applied,
            novice_actions,
            done,
            rewards,
        }
    }
}

/// Draws the batch for one value update according to the buffer ablations.
/// `None` when there is nothing to learn from yet.
pub fn draw_batch<'a>(
    buffers: &'a Buffers,
    cfg: &PvpConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<BalancedBatch<'a>>, AgentError> {
    let n = cfg.batch_size;
    if !cfg.use_novice_buffer {
        if buffers.human.is_empty() {
            return Ok(None);
        }
        return Ok(Some(BalancedBatch {
            human: buffers.human.sample(n, rng)?,
            novice: Vec::new(),
            human_empty: false,
            novice_empty: true,
        }));
    }
    if buffers.human.is_empty() && buffers.novice.is_empty() {
        return Ok(None);
    }
    Ok(Some(if cfg.use_balanced {
        sample_balanced(&buffers.human, &buffers.novice, n, rng)?
    } else {
        sample_union(&buffers.human, &buffers.novice, n, rng)?
    }))
}

pub(crate) fn check_finite(what: &str, v: f64) -> Result<(), AgentError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(AgentError::NumericFailure(format!("{what} = {v}")))
    }
}

/// Gaussian perturbation clipped to the action box.
pub(crate) fn noisy(action: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = rand_distr::Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    action
        .iter()
        .map(|a| (a + rng.sample(normal)).clamp(-1.0, 1.0))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub agent_kind: AgentKind,
    pub config: PvpConfig,
    pub env_id: String,
    pub step: u64,
    pub obs_dim: usize,
    pub action_space: ActionSpace,
    pub networks: Vec<String>,
}

#[derive(Debug, Clone)]
pub enum Agent {
    Dqn(DqnAgent),
    Td3(Td3Agent),
    Bc(BcAgent),
}

impl Agent {
    pub fn new(
        kind: AgentKind,
        obs_dim: usize,
        space: ActionSpace,
        cfg: PvpConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, AgentError> {
        cfg.validate()?;
        match (kind, space) {
            (AgentKind::PvpDqn | AgentKind::Dqn, ActionSpace::Discrete { n }) => Ok(Agent::Dqn(
                DqnAgent::new(obs_dim, n, kind == AgentKind::PvpDqn, cfg, rng)?,
            )),
            (AgentKind::PvpTd3 | AgentKind::Td3, ActionSpace::Continuous { dim }) => Ok(Agent::Td3(
                Td3Agent::new(obs_dim, dim, kind == AgentKind::PvpTd3, cfg, rng)?,
            )),
            (AgentKind::Bc, space) => Ok(Agent::Bc(BcAgent::new(obs_dim, space, cfg, rng)?)),
            (agent, space) => Err(AgentError::EnvMismatch { agent, space }),
        }
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Dqn(a) if a.proxy_values() => AgentKind::PvpDqn,
            Agent::Dqn(_) => AgentKind::Dqn,
            Agent::Td3(a) if a.proxy_values() => AgentKind::PvpTd3,
            Agent::Td3(_) => AgentKind::Td3,
            Agent::Bc(_) => AgentKind::Bc,
        }
    }

    pub fn config(&self) -> &PvpConfig {
        match self {
            Agent::Dqn(a) => a.config(),
            Agent::Td3(a) => a.config(),
            Agent::Bc(a) => a.config(),
        }
    }

    /// Deterministic greedy action; with `stochastic` the continuous output
    /// gets clipped Gaussian noise.
    pub fn select_action(&self, obs: &[f64], stochastic: bool, rng: &mut ChaCha8Rng) -> Result<Action, AgentError> {
        match self {
            Agent::Dqn(a) => a.select_action(obs),
            Agent::Td3(a) => a.select_action(obs, stochastic, rng),
            Agent::Bc(a) => a.select_action(obs),
        }
    }

    /// Action used while collecting training data. `progress` is the
    /// fraction of the training budget already spent.
    pub fn behavior_action(
        &self,
        obs: &[f64],
        step: u64,
        progress: f64,
        space: ActionSpace,
        rng: &mut ChaCha8Rng,
    ) -> Result<Action, AgentError> {
        let cfg = self.config();
        match self {
            Agent::Dqn(a) if !a.proxy_values() => {
                let eps = if cfg.explore_fraction > 0.0 {
                    let frac = (progress / cfg.explore_fraction).min(1.0);
                    cfg.explore_initial + frac * (cfg.explore_final - cfg.explore_initial)
                } else {
                    cfg.explore_final
                };
                if let ActionSpace::Discrete { n } = space {
                    if eps > 0.0 && rng.random::<f64>() < eps {
                        return Ok(Action::Discrete(rng.random_range(0..n)));
                    }
                }
                a.select_action(obs)
            }
            Agent::Td3(a) if !a.proxy_values() => {
                if step < cfg.learning_starts {
                    let dim = space.dim();
                    return Ok(Action::Continuous((0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()));
                }
                a.select_action(obs, true, rng)
            }
            _ => self.select_action(obs, cfg.stochastic_actor, rng),
        }
    }

    /// One gradient step on whatever the agent learns from. Returns `None`
    /// when the buffers hold nothing usable yet.
    pub fn update(&mut self, buffers: &Buffers, rng: &mut ChaCha8Rng) -> Result<Option<UpdateStats>, AgentError> {
        match self {
            Agent::Dqn(a) => a.update(buffers, rng),
            Agent::Td3(a) => a.update(buffers, rng),
            Agent::Bc(a) => {
                if buffers.human.is_empty() {
                    return Ok(None);
                }
                let batch = buffers.human.sample(a.config().batch_size, rng)?;
                a.update_on(&batch).map(Some)
            }
        }
    }

    /// Every network parameter, online and target, in a fixed order.
    pub fn parameters(&self) -> Vec<f64> {
        self.networks().iter().flat_map(|(_, n)| n.params().iter().copied()).collect()
    }

    fn networks(&self) -> Vec<(&'static str, &crate::nn::Mlp)> {
        match self {
            Agent::Dqn(a) => vec![("q", &a.q.online), ("q_target", &a.q.target)],
            Agent::Td3(a) => vec![
                ("q1", &a.q1.online),
                ("q1_target", &a.q1.target),
                ("q2", &a.q2.online),
                ("q2_target", &a.q2.target),
                ("actor", &a.actor.online),
                ("actor_target", &a.actor.target),
            ],
            Agent::Bc(a) => vec![("policy", a.policy())],
        }
    }

    fn networks_mut(&mut self) -> Vec<(&'static str, &mut crate::nn::Mlp)> {
        match self {
            Agent::Dqn(a) => vec![("q", &mut a.q.online), ("q_target", &mut a.q.target)],
            Agent::Td3(a) => vec![
                ("q1", &mut a.q1.online),
                ("q1_target", &mut a.q1.target),
                ("q2", &mut a.q2.online),
                ("q2_target", &mut a.q2.target),
                ("actor", &mut a.actor.online),
                ("actor_target", &mut a.actor.target),
            ],
            Agent::Bc(a) => vec![("policy", a.policy_mut())],
        }
    }

    /// Writes `<dir>/manifest.json` and one `<name>.bin` per network.
    pub fn save(&self, dir: &Path, env_id: &str, step: u64, obs_dim: usize, space: ActionSpace) -> Result<(), AgentError> {
        fs::create_dir_all(dir)?;
        let nets = self.networks();
        for (name, net) in &nets {
            crate::nn::write_checkpoint_file(net, dir.join(format!("{name}.bin")))?;
        }
        let manifest = CheckpointManifest {
            agent_kind: self.kind(),
            config: self.config().clone(),
            env_id: env_id.to_string(),
            step,
            obs_dim,
            action_space: space,
            networks: nets.iter().map(|(n, _)| n.to_string()).collect(),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Self, CheckpointManifest), AgentError> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: CheckpointManifest =
            serde_json::from_str(&text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut agent = Agent::new(
            manifest.agent_kind,
            manifest.obs_dim,
            manifest.action_space,
            manifest.config.clone(),
            &mut rng,
        )?;
        for (name, net) in agent.networks_mut() {
            let loaded = crate::nn::read_checkpoint_file(dir.join(format!("{name}.bin")))?;
            if !loaded.same_shape(net) {
                return Err(AgentError::Checkpoint(format!("{name}.bin has the wrong shape")));
            }
            *net = loaded;
        }
        agent.reset_optimizers();
        Ok((agent, manifest))
    }

    fn reset_optimizers(&mut self) {
        match self {
            Agent::Dqn(a) => a.reset_optimizer(),
            Agent::Td3(a) => a.reset_optimizers(),
            Agent::Bc(a) => a.reset_optimizer(),
        }
    }
}
