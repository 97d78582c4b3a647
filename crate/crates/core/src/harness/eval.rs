use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rollout::{Decision, InterventionSource};
use super::HarnessError;
use crate::agent::Agent;
use crate::analysis::{TrajStep, Trajectory};
use crate::envs::{Action, AnyEnv, Env, EnvConfig};
use crate::oracle::Expert;

/// First seed of the evaluation block. Training seeds never set the top bit.
pub const EVAL_SEED_BASE: u64 = 1 << 63;

/// Anything that can drive an environment on its own.
pub trait Policy {
    fn act(&mut self, env: &AnyEnv, obs: &[f64]) -> Result<Action, HarnessError>;
}

/// Greedy, noise-free agent actions.
pub struct AgentPolicy<'a> {
    agent: &'a Agent,
    rng: ChaCha8Rng,
}

impl<'a> AgentPolicy<'a> {
    pub fn new(agent: &'a Agent) -> Self {
        Self {
            agent,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Policy for AgentPolicy<'_> {
    fn act(&mut self, _env: &AnyEnv, obs: &[f64]) -> Result<Action, HarnessError> {
        Ok(self.agent.select_action(obs, false, &mut self.rng)?)
    }
}

/// The noiseless scripted expert.
pub struct ExpertPolicy;

impl Policy for ExpertPolicy {
    fn act(&mut self, env: &AnyEnv, _obs: &[f64]) -> Result<Action, HarnessError> {
        Ok(env.expert_action()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub step: u64,
    pub episodes: usize,
    /// All `None` when `episodes == 0`.
    pub success_rate: Option<f64>,
    pub mean_return: Option<f64>,
    pub mean_cost: Option<f64>,
    pub route_completion: Option<f64>,
    pub mean_length: Option<f64>,
}

/// Solo episodes on the fixed evaluation seeds `EVAL_SEED_BASE + first_seed + i`.
/// Never touches buffers or any intervention source.
pub fn evaluate(
    policy: &mut dyn Policy,
    env_cfg: &EnvConfig,
    episodes: usize,
    first_seed: u64,
    step: u64,
) -> Result<EvalReport, HarnessError> {
    let mut env = env_cfg.build()?;
    let (mut succ, mut ret, mut cost, mut comp, mut len) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..episodes {
        let mut obs = env.reset(EVAL_SEED_BASE.wrapping_add(first_seed).wrapping_add(i as u64));
        let mut success = false;
        while !env.is_done() {
            let a = policy.act(&env, &obs)?;
            let r = env.step(&a)?;
            ret += r.reward;
            cost += r.cost as f64;
            len += 1.0;
            success |= r.info.success;
            obs = r.next_obs;
        }
        succ += success as u8 as f64;
        comp += env.completion();
    }
    let avg = |x: f64| (episodes > 0).then(|| x / episodes as f64);
    Ok(EvalReport {
        step,
        episodes,
        success_rate: avg(succ),
        mean_return: avg(ret),
        mean_cost: avg(cost),
        route_completion: avg(comp),
        mean_length: avg(len),
    })
}

/// Behavior-policy episodes (novice plus supervisor) recorded for the
/// violation analysis. Nothing is learned or stored.
pub fn shared_control_episodes(
    policy: &mut dyn Policy,
    source: &mut dyn InterventionSource,
    env_cfg: &EnvConfig,
    episodes: usize,
    first_seed: u64,
) -> Result<Vec<Trajectory>, HarnessError> {
    let mut env = env_cfg.build()?;
    let mut out = Vec::with_capacity(episodes);
    let mut step = 0;
    for i in 0..episodes {
        let mut obs = env.reset(EVAL_SEED_BASE.wrapping_add(first_seed).wrapping_add(i as u64));
        let mut traj = Vec::new();
        while !env.is_done() {
            let a_n = policy.act(&env, &obs)?;
            let novice_violation = env.violation(&a_n);
            let (applied, intervened) = match source.decide(step, &env, &a_n)? {
                Decision::Novice => (a_n, false),
                Decision::Takeover { action, .. } => (action, true),
                Decision::Pause | Decision::Stop => {
                    return Err(HarnessError::Config("analysis sources cannot pause".into()))
                }
            };
            let r = env.step(&applied)?;
            traj.push(TrajStep {
                intervened,
                violation: r.info.violation,
                novice_violation,
            });
            obs = r.next_obs;
            step += 1;
        }
        out.push(traj);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::GridConfig;

    struct Fixed(Action);

    impl Policy for Fixed {
        fn act(&mut self, _: &AnyEnv, _: &[f64]) -> Result<Action, HarnessError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn expert_solves_every_eval_episode() {
        let cfg = EnvConfig::Gridworld(GridConfig::empty(6));
        let r = evaluate(&mut ExpertPolicy, &cfg, 20, 0, 0).unwrap();
        assert_eq!(r.success_rate, Some(1.0));
        assert_eq!(r.mean_cost, Some(0.0));
        let two = EnvConfig::Gridworld(GridConfig::two_room(9, 7));
        assert_eq!(evaluate(&mut ExpertPolicy, &two, 10, 0, 0).unwrap().success_rate, Some(1.0));
    }

    #[test]
    fn zero_episodes_is_an_empty_report() {
        let cfg = EnvConfig::Gridworld(GridConfig::empty(6));
        let r = evaluate(&mut ExpertPolicy, &cfg, 0, 0, 7).unwrap();
        assert_eq!(r.episodes, 0);
        assert!(r.success_rate.is_none() && r.mean_return.is_none());
    }

    #[test]
    fn spinning_in_place_never_succeeds() {
        let cfg = EnvConfig::Gridworld(GridConfig::empty(6));
        let r = evaluate(&mut Fixed(Action::Discrete(0)), &cfg, 5, 0, 0).unwrap();
        assert_eq!(r.success_rate, Some(0.0));
        assert_eq!(r.mean_length, Some(144.0));
    }
}
