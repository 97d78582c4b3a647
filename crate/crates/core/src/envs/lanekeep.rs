use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Action, ActionSpace, Env, EnvError, StepInfo, StepResult};

const DISP_COEF: f64 = 1.0;
const SPEED_COEF: f64 = 0.1;
const COLLISION_COEF: f64 = 5.0;
const SUCCESS_REWARD: f64 = 10.0;
const OFF_ROAD_REWARD: f64 = -5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaneKeepConfig {
    pub dt: f64,
    pub v_max: f64,
    pub route_length: f64,
    pub lane_half_width: f64,
    /// Heading rate (rad/s) at full steer.
    pub steer_gain: f64,
    /// Acceleration (m/s^2) at full throttle.
    pub accel_gain: f64,
    pub max_steps: u32,
    /// Road curvature is piecewise constant, drawn per episode from
    /// `[-max_curvature, max_curvature]` (1/m) on segments of this length.
    pub max_curvature: f64,
    pub segment_length: f64,
    pub initial_speed: f64,
}

impl Default for LaneKeepConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            v_max: 10.0,
            route_length: 400.0,
            lane_half_width: 2.0,
            steer_gain: 0.5,
            accel_gain: 3.0,
            max_steps: 1000,
            max_curvature: 0.005,
            segment_length: 50.0,
            initial_speed: 0.0,
        }
    }
}

impl LaneKeepConfig {
    pub fn straight() -> Self {
        Self {
            max_curvature: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneState {
    pub lateral_offset: f64,
    pub heading_error: f64,
    pub speed: f64,
    pub progress: f64,
}

#[derive(Debug, Clone)]
pub struct LaneKeep {
    config: LaneKeepConfig,
    state: LaneState,
    curvature: Vec<f64>,
    steps: u32,
    done: bool,
}

impl LaneKeep {
    pub fn new(config: LaneKeepConfig) -> Result<Self, EnvError> {
        let positive = [
            config.dt,
            config.v_max,
            config.route_length,
            config.lane_half_width,
            config.steer_gain,
            config.accel_gain,
            config.segment_length,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || config.max_steps == 0 {
            return Err(EnvError::InvalidConfig("lanekeep parameters must be positive".into()));
        }
        if !(0.0..=config.v_max).contains(&config.initial_speed) || config.max_curvature < 0.0 {
            return Err(EnvError::InvalidConfig("initial speed or curvature out of range".into()));
        }
        let mut env = Self {
            config,
            state: LaneState {
                lateral_offset: 0.0,
                heading_error: 0.0,
                speed: 0.0,
                progress: 0.0,
            },
            curvature: Vec::new(),
            steps: 0,
            done: false,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &LaneKeepConfig {
        &self.config
    }

    pub fn state(&self) -> LaneState {
        self.state
    }

    /// Overrides the vehicle state; intended for tests and scripted scenes.
    pub fn set_state(&mut self, state: LaneState) {
        self.state = state;
        self.done = false;
    }

    pub fn curvature_at(&self, progress: f64) -> f64 {
        if self.curvature.is_empty() {
            return 0.0;
        }
        let idx = (progress.max(0.0) / self.config.segment_length) as usize;
        self.curvature[idx.min(self.curvature.len() - 1)]
    }

    /// One tick of the kinematic point-mass model.
    pub fn integrate(&self, s: &LaneState, steer: f64, accel: f64) -> LaneState {
        let c = &self.config;
        let speed = (s.speed + accel * c.accel_gain * c.dt).clamp(0.0, c.v_max);
        let heading =
            s.heading_error + (steer * c.steer_gain - self.curvature_at(s.progress) * speed) * c.dt;
        LaneState {
            lateral_offset: s.lateral_offset + speed * heading.sin() * c.dt,
            heading_error: heading,
            speed,
            progress: s.progress + speed * heading.cos().max(0.0) * c.dt,
        }
    }

    fn unpack(action: &Action) -> Option<(f64, f64)> {
        match action {
            Action::Continuous(v)
                if v.len() == 2 && v.iter().all(|x| x.is_finite() && (-1.0..=1.0).contains(x)) =>
            {
                Some((v[0], v[1]))
            }
            _ => None,
        }
    }

    /// Leaves the lane, or pushes further out while already past half the lane.
    fn unsafe_move(&self, steer: f64, accel: f64) -> bool {
        let hw = self.config.lane_half_width;
        let before = self.state.lateral_offset.abs();
        let after = self.integrate(&self.state, steer, accel).lateral_offset.abs();
        after > hw || (before > 0.5 * hw && after > before)
    }

    /// Full steer toward the lane center with the given throttle.
    pub fn correcting_action(&self, accel: f64) -> Action {
        let s = &self.state;
        let dir = if s.lateral_offset != 0.0 {
            -s.lateral_offset.signum()
        } else if s.heading_error != 0.0 {
            -s.heading_error.signum()
        } else {
            0.0
        };
        Action::Continuous(vec![dir, accel])
    }

    fn violation_of(&self, steer: f64, accel: f64) -> bool {
        if !self.unsafe_move(steer, accel) {
            return false;
        }
        // only avoidable unsafe moves count
        let (cs, ca) = Self::unpack(&self.correcting_action(accel)).unwrap();
        !self.unsafe_move(cs, ca)
    }

    fn observe(&self) -> Vec<f64> {
        let s = &self.state;
        vec![
            s.lateral_offset,
            s.heading_error,
            s.speed / self.config.v_max,
            (self.config.route_length - s.progress).max(0.0) / self.config.route_length,
        ]
    }
}

impl Env for LaneKeep {
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &self.config;
        let n_segments = (c.route_length / c.segment_length).ceil() as usize + 1;
        self.curvature = (0..n_segments)
            .map(|_| {
                if c.max_curvature > 0.0 {
                    rng.random_range(-c.max_curvature..=c.max_curvature)
                } else {
                    0.0
                }
            })
            .collect();
        self.state = LaneState {
            lateral_offset: 0.0,
            heading_error: 0.0,
            speed: c.initial_speed,
            progress: 0.0,
        };
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let (steer, accel) =
            Self::unpack(action).ok_or_else(|| EnvError::InvalidAction(action.clone()))?;
        let violation = self.violation_of(steer, accel);
        let prev = self.state;
        self.state = self.integrate(&prev, steer, accel);
        self.steps += 1;

        let c = &self.config;
        let offset = self.state.lateral_offset.abs();
        let cost = (offset > c.lane_half_width) as u8;
        let success = self.state.progress >= c.route_length;
        let off_road = offset > 2.0 * c.lane_half_width;
        let truncated = !success && !off_road && self.steps >= c.max_steps;
        self.done = success || off_road || truncated;

        let reward = if success {
            SUCCESS_REWARD
        } else if off_road {
            OFF_ROAD_REWARD
        } else {
            DISP_COEF * (self.state.progress - prev.progress) + SPEED_COEF * self.state.speed / c.v_max
                - COLLISION_COEF * cost as f64
        };
        Ok(StepResult {
            next_obs: self.observe(),
            reward,
            cost,
            done: self.done,
            info: StepInfo {
                success,
                violation,
                truncated,
            },
        })
    }

    fn observation(&self) -> Vec<f64> {
        self.observe()
    }

    fn obs_dim(&self) -> usize {
        4
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous { dim: 2 }
    }

    fn violation(&self, action: &Action) -> bool {
        match Self::unpack(action) {
            Some((s, a)) => self.violation_of(s, a),
            None => true,
        }
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn completion(&self) -> f64 {
        (self.state.progress / self.config.route_length).clamp(0.0, 1.0)
    }

    fn snapshot(&self) -> serde_json::Value {
        let s = &self.state;
        json!({
            "kind": "lanekeep",
            "lateral_offset": s.lateral_offset,
            "heading_error": s.heading_error,
            "speed": s.speed,
            "progress": s.progress,
            "route_length": self.config.route_length,
            "lane_half_width": self.config.lane_half_width,
            "curvature": self.curvature_at(s.progress),
            "step": self.steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_starts_centered() {
        let mut env = LaneKeep::new(LaneKeepConfig::default()).unwrap();
        let obs = env.reset(1);
        assert_eq!(obs[0], 0.0);
        assert_eq!(obs[1], 0.0);
        assert_eq!(env.state().progress, 0.0);
        assert_eq!(obs[3], 1.0);
    }

    #[test]
    fn full_throttle_on_straight_road_integrates_in_closed_form() {
        // speed_k = min(k * accel_gain * dt, v_max); progress = sum_k speed_k * dt
        let cfg = LaneKeepConfig::straight();
        let mut env = LaneKeep::new(cfg.clone()).unwrap();
        env.reset(1);
        let mut expected = 0.0;
        for k in 1..=60 {
            let r = env.step(&Action::Continuous(vec![0.0, 1.0])).unwrap();
            let speed = (k as f64 * cfg.accel_gain * cfg.dt).min(cfg.v_max);
            expected += speed * cfg.dt;
            assert!((env.state().progress - expected).abs() < 1e-9, "k = {k}");
            assert_eq!(r.cost, 0);
            assert!(!r.info.violation);
        }
        // 34 accelerating ticks (0.3..10 m/s, saturating at k = 34) then cruise
        let accel: f64 = (1..=33).map(|k| 0.3 * k as f64 * 0.1).sum::<f64>() + 1.0;
        let cruise = 26.0 * 10.0 * 0.1;
        assert!((env.state().progress - (accel + cruise)).abs() < 1e-9);
    }

    #[test]
    fn out_of_box_action_is_rejected() {
        let mut env = LaneKeep::new(LaneKeepConfig::default()).unwrap();
        assert!(env.step(&Action::Continuous(vec![1.5, 0.0])).is_err());
        assert!(env.step(&Action::Discrete(0)).is_err());
    }

    #[test]
    fn steering_out_past_half_lane_is_a_violation() {
        let mut env = LaneKeep::new(LaneKeepConfig::straight()).unwrap();
        env.set_state(LaneState {
            lateral_offset: 1.5,
            heading_error: 0.0,
            speed: 8.0,
            progress: 10.0,
        });
        assert!(env.violation(&Action::Continuous(vec![1.0, 0.0])));
        assert!(!env.violation(&Action::Continuous(vec![-1.0, 0.0])));
    }

    #[test]
    fn unavoidable_exit_is_not_counted() {
        let mut env = LaneKeep::new(LaneKeepConfig::straight()).unwrap();
        env.set_state(LaneState {
            lateral_offset: 1.95,
            heading_error: 0.5,
            speed: 10.0,
            progress: 10.0,
        });
        assert!(!env.violation(&Action::Continuous(vec![-1.0, 0.0])));
        assert!(!env.violation(&Action::Continuous(vec![1.0, 0.0])));
    }

    #[test]
    fn leaving_the_road_ends_the_episode() {
        let mut env = LaneKeep::new(LaneKeepConfig::straight()).unwrap();
        env.set_state(LaneState {
            lateral_offset: 3.95,
            heading_error: 0.3,
            speed: 10.0,
            progress: 10.0,
        });
        let r = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert!(r.done && !r.info.success && !r.info.truncated);
        assert_eq!(r.cost, 1);
        assert_eq!(r.reward, OFF_ROAD_REWARD);
        assert_eq!(env.step(&Action::Continuous(vec![0.0, 0.0])), Err(EnvError::EpisodeDone));
    }

    #[test]
    fn same_seed_same_road() {
        let mut a = LaneKeep::new(LaneKeepConfig::default()).unwrap();
        let mut b = LaneKeep::new(LaneKeepConfig::default()).unwrap();
        a.reset(5);
        b.reset(5);
        assert_eq!(a.curvature, b.curvature);
        let act = Action::Continuous(vec![0.02, 0.7]);
        while !a.is_done() {
            assert_eq!(a.step(&act).unwrap(), b.step(&act).unwrap());
        }
        assert!(b.is_done());
    }
}
