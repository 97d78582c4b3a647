//! Scripted stand-in for the human supervisor: an expert policy plus an
//! intervention predicate, each with a tunable error rate.
//!
//! * `epsilon`: probability that an expert action is swapped for a random
//!   violating action.
//! * `kappa`: probability that a due intervention is silently skipped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{Action, AnyEnv, Env, GridWorld, LaneKeep, GRID_ACTIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerMode {
    /// Intervene only when the novice action violates intent.
    ViolationOnly,
    /// Also intervene whenever the novice disagrees with the expert.
    Disagreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSpec {
    pub epsilon: f64,
    pub kappa: f64,
    /// L-infinity action distance that triggers takeover in continuous envs.
    pub delta: f64,
    pub mode: TriggerMode,
    pub seed: u64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            kappa: 0.0,
            delta: 0.4,
            mode: TriggerMode::ViolationOnly,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("error rate {name} = {value} must lie in [0, 1)")]
    RateOutOfRange { name: &'static str, value: f64 },
    #[error("intervention threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("goal is unreachable from the current state")]
    Unreachable,
}

impl OracleSpec {
    pub fn perfect() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        for (name, value) in [("epsilon", self.epsilon), ("kappa", self.kappa)] {
            if !(0.0..1.0).contains(&value) {
                return Err(OracleError::RateOutOfRange { name, value });
            }
        }
        if !(self.delta > 0.0) {
            return Err(OracleError::BadThreshold(self.delta));
        }
        Ok(())
    }
}

/// PD lane-keeping gains and cruise controller used by the LaneKeep expert.
pub const STEER_KP: f64 = 0.25;
pub const STEER_KD: f64 = 3.2;
pub const CRUISE_GAIN: f64 = 0.5;
pub const TARGET_SPEED: f64 = 8.0;

/// Privileged, noise-free expert for each environment.
pub trait Expert {
    fn expert_action(&self) -> Result<Action, OracleError>;
    /// Uniform draw among violating actions, if any exist here.
    fn random_violating_action(&self, rng: &mut ChaCha8Rng) -> Option<Action>;
}

impl Expert for GridWorld {
    fn expert_action(&self) -> Result<Action, OracleError> {
        match self.distance_to_goal() {
            None => Err(OracleError::Unreachable),
            // already on the goal: any action, episode is over
            Some(0) => Ok(Action::Discrete(0)),
            Some(_) => self
                .optimal_actions()
                .first()
                .map(|&a| Action::Discrete(a))
                .ok_or(OracleError::Unreachable),
        }
    }

    fn random_violating_action(&self, rng: &mut ChaCha8Rng) -> Option<Action> {
        let bad: Vec<usize> = (0..GRID_ACTIONS)
            .filter(|&a| self.violation(&Action::Discrete(a)))
            .collect();
        if bad.is_empty() {
            None
        } else {
            Some(Action::Discrete(bad[rng.random_range(0..bad.len())]))
        }
    }
}

impl Expert for LaneKeep {
    fn expert_action(&self) -> Result<Action, OracleError> {
        let s = self.state();
        let c = self.config();
        // feed-forward cancels the road's heading drift at the next speed
        let next_speed = (s.speed + CRUISE_GAIN * (TARGET_SPEED - s.speed) * c.accel_gain * c.dt)
            .clamp(0.0, c.v_max);
        let ff = self.curvature_at(s.progress) * next_speed / c.steer_gain;
        let steer = (-STEER_KP * s.lateral_offset - STEER_KD * s.heading_error + ff).clamp(-1.0, 1.0);
        let accel = (CRUISE_GAIN * (TARGET_SPEED - s.speed)).clamp(-1.0, 1.0);
        let pd = Action::Continuous(vec![steer, accel]);
        if self.violation(&pd) {
            Ok(self.correcting_action(accel))
        } else {
            Ok(pd)
        }
    }

    fn random_violating_action(&self, rng: &mut ChaCha8Rng) -> Option<Action> {
        (0..64)
            .map(|_| {
                Action::Continuous(vec![rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)])
            })
            .find(|a| self.violation(a))
    }
}

impl Expert for AnyEnv {
    fn expert_action(&self) -> Result<Action, OracleError> {
        match self {
            AnyEnv::Grid(e) => e.expert_action(),
            AnyEnv::Lane(e) => e.expert_action(),
        }
    }

    fn random_violating_action(&self, rng: &mut ChaCha8Rng) -> Option<Action> {
        match self {
            AnyEnv::Grid(e) => e.random_violating_action(rng),
            AnyEnv::Lane(e) => e.random_violating_action(rng),
        }
    }
}

/// Who produced the action that was applied during a takeover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionSourceKind {
    Oracle,
    LiveHuman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionEvent {
    pub step: u64,
    pub s: Vec<f64>,
    pub a_n: Action,
    pub a_h: Action,
    pub source: InterventionSourceKind,
}

fn linf(a: &Action, b: &Action) -> f64 {
    match (a, b) {
        (Action::Continuous(x), Action::Continuous(y)) => x
            .iter()
            .zip(y)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max),
        (Action::Discrete(x), Action::Discrete(y)) => {
            if x == y {
                0.0
            } else {
                f64::INFINITY
            }
        }
        _ => f64::INFINITY,
    }
}

/// Stateful oracle: the spec plus two independent random streams, one for
/// action errors and one for missed interventions.
#[derive(Debug, Clone)]
pub struct Oracle {
    spec: OracleSpec,
    action_rng: ChaCha8Rng,
    miss_rng: ChaCha8Rng,
}

impl Oracle {
    pub fn new(spec: OracleSpec) -> Result<Self, OracleError> {
        spec.validate()?;
        Ok(Self {
            action_rng: ChaCha8Rng::seed_from_u64(spec.seed),
            miss_rng: ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9E37_79B9_7F4A_7C15),
            spec,
        })
    }

    pub fn spec(&self) -> &OracleSpec {
        &self.spec
    }

    /// Expert action, replaced by a violating one with probability epsilon.
    pub fn expert_action(&mut self, env: &AnyEnv) -> Result<Action, OracleError> {
        let clean = env.expert_action()?;
        if self.spec.epsilon > 0.0 && self.action_rng.random::<f64>() < self.spec.epsilon {
            if let Some(bad) = env.random_violating_action(&mut self.action_rng) {
                return Ok(bad);
            }
        }
        Ok(clean)
    }

    /// Base trigger before any missed-intervention noise.
    pub fn base_trigger(&self, env: &AnyEnv, a_n: &Action) -> Result<bool, OracleError> {
        let violates = env.violation(a_n);
        Ok(match env {
            AnyEnv::Grid(_) => match self.spec.mode {
                TriggerMode::ViolationOnly => violates,
                TriggerMode::Disagreement => violates || *a_n != env.expert_action()?,
            },
            AnyEnv::Lane(_) => violates || linf(a_n, &env.expert_action()?) > self.spec.delta,
        })
    }

    /// Intervention decision; a due takeover is skipped with probability kappa.
    pub fn should_intervene(&mut self, env: &AnyEnv, a_n: &Action) -> Result<bool, OracleError> {
        if !self.base_trigger(env, a_n)? {
            return Ok(false);
        }
        if self.spec.kappa > 0.0 && self.miss_rng.random::<f64>() < self.spec.kappa {
            return Ok(false);
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{GridConfig, Heading, LaneKeepConfig, LaneState};

    fn grid() -> AnyEnv {
        let mut g = GridWorld::new(GridConfig::empty(6)).unwrap();
        g.reset(0);
        AnyEnv::Grid(g)
    }

    #[test]
    fn rejects_rates_at_or_above_one() {
        let spec = OracleSpec {
            kappa: 1.0,
            ..OracleSpec::default()
        };
        assert!(matches!(Oracle::new(spec), Err(OracleError::RateOutOfRange { name: "kappa", .. })));
    }

    #[test]
    fn adjacent_goal_means_forward() {
        let mut env = grid();
        if let AnyEnv::Grid(g) = &mut env {
            g.set_agent(4, 3, Heading::S).unwrap();
        }
        let mut oracle = Oracle::new(OracleSpec::perfect()).unwrap();
        assert_eq!(oracle.expert_action(&env).unwrap(), Action::Discrete(2));
    }

    #[test]
    fn lanekeep_equilibrium_is_quiet() {
        let mut lk = LaneKeep::new(LaneKeepConfig::straight()).unwrap();
        lk.set_state(LaneState {
            lateral_offset: 0.0,
            heading_error: 0.0,
            speed: TARGET_SPEED,
            progress: 0.0,
        });
        let a = lk.expert_action().unwrap();
        let v = a.as_continuous().unwrap();
        assert_eq!(v[0], 0.0);
        assert!(v[1].abs() < 1e-12);
    }

    #[test]
    fn expert_action_never_triggers() {
        let env = grid();
        let mut oracle = Oracle::new(OracleSpec::perfect()).unwrap();
        let a = env.expert_action().unwrap();
        assert!(!oracle.should_intervene(&env, &a).unwrap());

        let lane = AnyEnv::Lane(LaneKeep::new(LaneKeepConfig::default()).unwrap());
        let a = lane.expert_action().unwrap();
        assert!(!oracle.should_intervene(&lane, &a).unwrap());
    }

    #[test]
    fn wall_bump_is_always_caught_without_misses() {
        let mut env = grid();
        if let AnyEnv::Grid(g) = &mut env {
            g.set_agent(1, 1, Heading::W).unwrap();
        }
        let mut oracle = Oracle::new(OracleSpec::perfect()).unwrap();
        for _ in 0..100 {
            assert!(oracle.should_intervene(&env, &Action::Discrete(2)).unwrap());
        }
    }

    #[test]
    fn lanekeep_disagreement_triggers_past_delta() {
        let lane = AnyEnv::Lane(LaneKeep::new(LaneKeepConfig::straight()).unwrap());
        let mut oracle = Oracle::new(OracleSpec::perfect()).unwrap();
        // at rest the expert wants full throttle
        assert!(oracle.should_intervene(&lane, &Action::Continuous(vec![0.0, 0.0])).unwrap());
        assert!(!oracle.should_intervene(&lane, &Action::Continuous(vec![0.0, 0.7])).unwrap());
    }
}
