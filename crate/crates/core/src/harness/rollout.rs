use serde::Serialize;

use super::HarnessError;
use crate::buffers::{Buffers, HumanTransition, Transition};
use crate::envs::{Action, AnyEnv, Env, StepResult};
use crate::oracle::{InterventionSourceKind, Oracle};

/// What the supervisor wants for the current step.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    /// Let the novice action through.
    Novice,
    /// Apply `action` instead of the novice proposal.
    Takeover { action: Action, source: InterventionSourceKind },
    /// Hold the environment still this tick.
    Pause,
    /// End the run early.
    Stop,
}

/// Counters the trainer shares with sources that publish progress.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TrainProgress {
    pub step: u64,
    pub human_data_usage: u64,
    pub total_data_usage: u64,
    pub success_rate_latest: Option<f64>,
}

impl TrainProgress {
    pub fn psi(&self) -> f64 {
        if self.total_data_usage == 0 {
            0.0
        } else {
            self.human_data_usage as f64 / self.total_data_usage as f64
        }
    }
}

/// The intervention policy `I(s, a_n)` together with the human policy.
pub trait InterventionSource {
    fn decide(&mut self, step: u64, env: &AnyEnv, a_n: &Action) -> Result<Decision, HarnessError>;

    /// Called once after every applied environment step.
    fn observe(&mut self, _outcome: &StepOutcome, _env: &AnyEnv, _progress: &TrainProgress) {}
}

impl InterventionSource for Oracle {
    fn decide(&mut self, _step: u64, env: &AnyEnv, a_n: &Action) -> Result<Decision, HarnessError> {
        if self.should_intervene(env, a_n)? {
            Ok(Decision::Takeover {
                action: self.expert_action(env)?,
                source: InterventionSourceKind::Oracle,
            })
        } else {
            Ok(Decision::Novice)
        }
    }
}

/// Never takes over; the novice runs alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoIntervention;

impl InterventionSource for NoIntervention {
    fn decide(&mut self, _step: u64, _env: &AnyEnv, _a_n: &Action) -> Result<Decision, HarnessError> {
        Ok(Decision::Novice)
    }
}

/// Everything that happened on one shared-control step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub s: Vec<f64>,
    pub a_n: Action,
    pub applied: Action,
    pub source: Option<InterventionSourceKind>,
    /// `C(s, a_n)`, whether or not the novice action was applied.
    pub novice_violation: bool,
    pub result: StepResult,
}

impl StepStatus {
    /// The outcome of an applied step; panics otherwise.
    pub fn expect_stepped(self) -> StepOutcome {
        match self {
            StepStatus::Stepped(o) => *o,
            other => panic!("expected an applied step, got {other:?}"),
        }
    }
}

impl StepOutcome {
    pub fn intervened(&self) -> bool {
        self.source.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepStatus {
    Stepped(Box<StepOutcome>),
    Paused,
    Stopped,
    /// The step budget is used up.
    Finished,
}

/// One step of the behavior policy: the novice proposes `a_n`, the source
/// may take over, the applied action advances the env, and the step is
/// routed to exactly one buffer.
pub fn rollout_step(
    env: &mut AnyEnv,
    a_n: Action,
    source: &mut dyn InterventionSource,
    buffers: &mut Buffers,
    step: u64,
) -> Result<StepStatus, HarnessError> {
    let s = env.observation();
    let novice_violation = env.violation(&a_n);
    let (applied, src) = match source.decide(step, env, &a_n)? {
        Decision::Novice => (a_n.clone(), None),
        Decision::Takeover { action, source } => {
            if !env.action_space().contains(&action) {
                return Err(HarnessError::Live(format!("takeover action {action:?} is outside the action space")));
            }
            (action, Some(source))
        }
        Decision::Pause => return Ok(StepStatus::Paused),
        Decision::Stop => return Ok(StepStatus::Stopped),
    };
    let result = env.step(&applied)?;
    if src.is_some() {
        buffers.human.push(HumanTransition {
            s: s.clone(),
            a_n: a_n.clone(),
            a_h: applied.clone(),
            s_next: result.next_obs.clone(),
            done: result.terminal(),
            eval_reward: result.reward,
            eval_cost: result.cost,
        });
    } else {
        buffers.novice.push(Transition {
            s: s.clone(),
            a_n: a_n.clone(),
            s_next: result.next_obs.clone(),
            done: result.terminal(),
            eval_reward: result.reward,
            eval_cost: result.cost,
        });
    }
    Ok(StepStatus::Stepped(Box::new(StepOutcome {
        s,
        a_n,
        applied,
        source: src,
        novice_violation,
        result,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{GridConfig, GridWorld, FORWARD, TURN_LEFT};

    struct Always(Action);

    impl InterventionSource for Always {
        fn decide(&mut self, _: u64, _: &AnyEnv, _: &Action) -> Result<Decision, HarnessError> {
            Ok(Decision::Takeover {
                action: self.0.clone(),
                source: InterventionSourceKind::Oracle,
            })
        }
    }

    fn env() -> AnyEnv {
        let mut g = GridWorld::new(GridConfig::empty(6)).unwrap();
        g.reset(3);
        AnyEnv::Grid(g)
    }

    #[test]
    fn no_intervention_applies_novice_action() {
        let mut e = env();
        let mut reference = e.clone();
        let mut b = Buffers::default();
        let out = rollout_step(&mut e, Action::Discrete(TURN_LEFT), &mut NoIntervention, &mut b, 0)
            .unwrap()
            .expect_stepped();
        reference.step(&Action::Discrete(TURN_LEFT)).unwrap();
        assert_eq!(e.observation(), reference.observation());
        assert!(b.human.is_empty());
        assert_eq!(b.novice.len(), 1);
        assert!(!out.intervened());
    }

    #[test]
    fn takeover_applies_human_action_and_stores_both() {
        let mut e = env();
        let mut reference = e.clone();
        let mut b = Buffers::default();
        let mut src = Always(Action::Discrete(FORWARD));
        let out = rollout_step(&mut e, Action::Discrete(TURN_LEFT), &mut src, &mut b, 0)
            .unwrap()
            .expect_stepped();
        let expected = reference.step(&Action::Discrete(FORWARD)).unwrap();
        assert!(b.novice.is_empty());
        let h = b.human.get(0).unwrap();
        assert_eq!(h.a_n, Action::Discrete(TURN_LEFT));
        assert_eq!(h.a_h, Action::Discrete(FORWARD));
        assert_eq!(h.s_next, expected.next_obs);
        assert_eq!(out.applied, Action::Discrete(FORWARD));
    }

    #[test]
    fn progress_ratio() {
        let p = TrainProgress {
            step: 10,
            human_data_usage: 3,
            total_data_usage: 12,
            success_rate_latest: None,
        };
        assert_eq!(p.psi(), 0.25);
        assert_eq!(TrainProgress::default().psi(), 0.0);
    }
}
