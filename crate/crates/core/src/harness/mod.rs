//! Shared-control rollouts, the training driver, evaluation and metrics.

mod eval;
mod metrics;
mod replay;
mod rollout;
mod train;

pub use eval::{evaluate, shared_control_episodes, AgentPolicy, EvalReport, ExpertPolicy, Policy, EVAL_SEED_BASE};
pub use metrics::{RunSummary, StepRow};
pub use replay::{replay, ReplayOutput};
pub use rollout::{rollout_step, Decision, InterventionSource, NoIntervention, StepOutcome, StepStatus, TrainProgress};
pub use train::{train, RunOutput, Trainer};
pub use train::scripted_oracle;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, AgentKind, PvpConfig};
use crate::envs::{EnvConfig, EnvError, GridConfig, LaneKeepConfig};
use crate::live::LiveConfig;
use crate::nn::NnError;
use crate::oracle::{OracleError, OracleSpec};

/// Where takeover decisions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum InterventionConfig {
    Scripted(OracleSpec),
    Live(LiveConfig),
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub agent_kind: AgentKind,
    #[serde(default)]
    pub pvp: PvpConfig,
    pub oracle: InterventionConfig,
    pub total_steps: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Also write every buffer insertion to `<out_dir>/buffers.log`.
    #[serde(default = "default_true")]
    pub record_buffers: bool,
}

fn default_true() -> bool {
    true
}

fn default_eval_every() -> u64 {
    1000
}

fn default_eval_episodes() -> usize {
    20
}

impl RunConfig {
    /// PVP-DQN on an empty grid with a perfect scripted oracle.
    pub fn gridworld(size: usize) -> Self {
        Self {
            env: EnvConfig::Gridworld(GridConfig::empty(size)),
            agent_kind: AgentKind::PvpDqn,
            pvp: PvpConfig::gridworld(),
            oracle: InterventionConfig::Scripted(OracleSpec::perfect()),
            total_steps: 10_000,
            eval_every: default_eval_every(),
            eval_episodes: default_eval_episodes(),
            seed: 0,
            out_dir: None,
            record_buffers: true,
        }
    }

    /// PVP-TD3 on the lane-keeping task with a perfect scripted oracle.
    pub fn lanekeep() -> Self {
        Self {
            env: EnvConfig::Lanekeep(LaneKeepConfig::default()),
            agent_kind: AgentKind::PvpTd3,
            pvp: PvpConfig::default(),
            oracle: InterventionConfig::Scripted(OracleSpec::perfect()),
            total_steps: 40_000,
            eval_every: 5_000,
            eval_episodes: 10,
            seed: 0,
            out_dir: None,
            record_buffers: true,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.pvp.validate()?;
        if let InterventionConfig::Scripted(spec) = &self.oracle {
            spec.validate()?;
        }
        if let InterventionConfig::Live(live) = &self.oracle {
            live.validate().map_err(HarnessError::Config)?;
        }
        Ok(())
    }
}

/// Sets a dotted path such as `pvp.lr` in a JSON config. The value is read
/// as JSON when it parses, except where the existing field is a string.
pub fn apply_override(root: &mut serde_json::Value, key: &str, raw: &str) -> Result<(), HarnessError> {
    use serde_json::Value;
    let key = key.trim_start_matches("--").replace('-', "_");
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(HarnessError::Config(format!("bad override key `{key}`")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| HarnessError::Config(format!("`{key}`: `{part}` is not inside an object")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| HarnessError::Config(format!("`{key}` does not name an object field")))?;
    let last = parts[parts.len() - 1];
    let value = match (obj.get(last), serde_json::from_str::<Value>(raw)) {
        (Some(Value::String(_)), _) | (_, Err(_)) => Value::String(raw.to_string()),
        (_, Ok(v)) => v,
    };
    obj.insert(last.to_string(), value);
    Ok(())
}

/// Applies overrides to a base config and re-validates the result.
pub fn resolve_config(base: &RunConfig, overrides: &[(String, String)]) -> Result<RunConfig, HarnessError> {
    let mut v = serde_json::to_value(base).map_err(|e| HarnessError::Config(e.to_string()))?;
    for (k, raw) in overrides {
        apply_override(&mut v, k, raw)?;
    }
    let cfg: RunConfig = serde_json::from_value(v).map_err(|e| HarnessError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("live session: {0}")]
    Live(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Process exit status: 2 for configuration problems, 3 for numeric
    /// failure during training, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Oracle(_) => 2,
            HarnessError::Env(EnvError::InvalidConfig(_)) => 2,
            HarnessError::Agent(AgentError::Config(_) | AgentError::EnvMismatch { .. }) => 2,
            HarnessError::Agent(AgentError::NumericFailure(_) | AgentError::Nn(NnError::NonFiniteGradient)) => 3,
            _ => 1,
        }
    }
}

/// Training-episode env seeds: top bit clear. Evaluation uses the block
/// with the top bit set, so the two never overlap.
pub fn train_episode_seed(run_seed: u64, episode: u64) -> u64 {
    splitmix64(run_seed.wrapping_mul(0x1_0000_0001).wrapping_add(episode)) & !(1 << 63)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
