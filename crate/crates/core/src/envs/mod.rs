//! Toy environments with deterministic dynamics, an evaluation-only reward,
//! and a hidden ground-truth indicator `violation(s, a)` of undesired actions.

mod gridworld;
mod lanekeep;

pub use gridworld::{Cell, GridConfig, GridWorld, Heading, LayoutKind, FORWARD, GRID_ACTIONS, TOGGLE, TURN_LEFT, TURN_RIGHT};
pub use lanekeep::{LaneKeep, LaneKeepConfig, LaneState};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A discrete action index or a continuous action vector in `[-1, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn as_discrete(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            Action::Discrete(_) => None,
            Action::Continuous(v) => Some(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete { n: usize },
    Continuous { dim: usize },
}

impl ActionSpace {
    pub fn contains(&self, action: &Action) -> bool {
        match (self, action) {
            (ActionSpace::Discrete { n }, Action::Discrete(a)) => a < n,
            (ActionSpace::Continuous { dim }, Action::Continuous(v)) => {
                v.len() == *dim && v.iter().all(|x| x.is_finite() && (-1.0..=1.0).contains(x))
            }
            _ => false,
        }
    }

    /// Width of the action vector fed to critics (1 for discrete).
    pub fn dim(&self) -> usize {
        match self {
            ActionSpace::Discrete { .. } => 1,
            ActionSpace::Continuous { dim } => *dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub success: bool,
    /// Ground-truth intent violation of the applied action.
    pub violation: bool,
    /// Episode ended on the step limit rather than a terminal state.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub next_obs: Vec<f64>,
    /// Evaluation only. No training path reads this unless the reward
    /// ablation is switched on.
    pub reward: f64,
    pub cost: u8,
    pub done: bool,
    pub info: StepInfo,
}

impl StepResult {
    /// True when the TD target must not bootstrap past this step.
    pub fn terminal(&self) -> bool {
        self.done && !self.info.truncated
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error("action {0:?} is outside the action space")]
    InvalidAction(Action),
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(String),
}

pub trait Env {
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> Result<StepResult, EnvError>;
    fn observation(&self) -> Vec<f64>;
    fn obs_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    /// Hidden indicator: would `action` violate intent in the current state.
    fn violation(&self, action: &Action) -> bool;
    fn is_done(&self) -> bool;
    /// Fraction of the task completed, in `[0, 1]`.
    fn completion(&self) -> f64;
    /// Scene snapshot for viewers.
    fn snapshot(&self) -> serde_json::Value;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "snake_case")]
pub enum EnvConfig {
    Gridworld(GridConfig),
    Lanekeep(LaneKeepConfig),
}

impl EnvConfig {
    pub fn id(&self) -> String {
        match self {
            EnvConfig::Gridworld(c) => format!("gridworld-{}-{}x{}", c.layout.name(), c.width, c.height),
            EnvConfig::Lanekeep(_) => "lanekeep".to_string(),
        }
    }

    pub fn build(&self) -> Result<AnyEnv, EnvError> {
        Ok(match self {
            EnvConfig::Gridworld(c) => AnyEnv::Grid(GridWorld::new(c.clone())?),
            EnvConfig::Lanekeep(c) => AnyEnv::Lane(LaneKeep::new(c.clone())?),
        })
    }
}

/// Closed set of environments so callers can dispatch to env-specific
/// behavior (the scripted expert) without trait objects.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    Grid(GridWorld),
    Lane(LaneKeep),
}

macro_rules! dispatch {
    ($self:ident, $env:ident => $body:expr) => {
        match $self {
            AnyEnv::Grid($env) => $body,
            AnyEnv::Lane($env) => $body,
        }
    };
}

impl Env for AnyEnv {
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        dispatch!(self, e => e.reset(seed))
    }
    fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        dispatch!(self, e => e.step(action))
    }
    fn observation(&self) -> Vec<f64> {
        dispatch!(self, e => e.observation())
    }
    fn obs_dim(&self) -> usize {
        dispatch!(self, e => e.obs_dim())
    }
    fn action_space(&self) -> ActionSpace {
        dispatch!(self, e => e.action_space())
    }
    fn violation(&self, action: &Action) -> bool {
        dispatch!(self, e => e.violation(action))
    }
    fn is_done(&self) -> bool {
        dispatch!(self, e => e.is_done())
    }
    fn completion(&self) -> f64 {
        dispatch!(self, e => e.completion())
    }
    fn snapshot(&self) -> serde_json::Value {
        dispatch!(self, e => e.snapshot())
    }
}
