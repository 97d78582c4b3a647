use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use super::losses::argmax;
use super::{check_finite, AgentError, PvpConfig, UpdateStats};
use crate::buffers::HumanTransition;
use crate::envs::{Action, ActionSpace};
use crate::nn::{Activation, AdamState, Mlp};

/// Supervised imitation of the human actions in `B_h`.
#[derive(Debug, Clone)]
pub struct BcAgent {
    policy: Mlp,
    opt: AdamState,
    cfg: PvpConfig,
    space: ActionSpace,
}

impl BcAgent {
    pub fn new(obs_dim: usize, space: ActionSpace, cfg: PvpConfig, rng: &mut ChaCha8Rng) -> Result<Self, AgentError> {
        let (out, act) = match space {
            ActionSpace::Discrete { n } => (n, Activation::Identity),
            ActionSpace::Continuous { dim } => (dim, Activation::Tanh),
        };
        let policy = Mlp::with_hidden(obs_dim, &cfg.hidden_sizes, out, Activation::Relu, act, 0.1, rng)?;
        Ok(Self {
            opt: AdamState::new(policy.params().len(), cfg.lr),
            policy,
            cfg,
            space,
        })
    }

    pub fn config(&self) -> &PvpConfig {
        &self.cfg
    }

    pub fn policy(&self) -> &Mlp {
        &self.policy
    }

    pub(crate) fn policy_mut(&mut self) -> &mut Mlp {
        &mut self.policy
    }

    pub(crate) fn reset_optimizer(&mut self) {
        self.opt = AdamState::new(self.policy.params().len(), self.cfg.lr);
    }

    pub fn select_action(&self, obs: &[f64]) -> Result<Action, AgentError> {
        let out = self.policy.forward(obs)?;
        Ok(match self.space {
            ActionSpace::Discrete { .. } => Action::Discrete(argmax(&out)),
            ActionSpace::Continuous { .. } => Action::Continuous(out),
        })
    }

    /// Cross-entropy (discrete) or squared error (continuous) against `a_h`.
    pub fn objective(policy: &Mlp, space: ActionSpace, batch: &[&HumanTransition]) -> Result<(f64, Vec<f64>), AgentError> {
        if batch.is_empty() {
            return Err(AgentError::Buffer(crate::buffers::BufferError::Empty));
        }
        let n = batch.len();
        let mut x = Array2::zeros((n, policy.input_dim()));
        for (i, t) in batch.iter().enumerate() {
            x.row_mut(i).assign(&ndarray::ArrayView1::from(&t.s));
        }
        let cache = policy.forward_batch(&x)?;
        let out = cache.output();
        let mut grad = Array2::zeros(out.dim());
        let inv = 1.0 / n as f64;
        let mut loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let row = out.row(i);
            match (&t.a_h, space) {
                (Action::Discrete(a), ActionSpace::Discrete { .. }) => {
                    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
                    loss += (z.ln() + m - row[*a]) * inv;
                    for (j, v) in row.iter().enumerate() {
                        let p = (v - m).exp() / z;
                        grad[[i, j]] = (p - if j == *a { 1.0 } else { 0.0 }) * inv;
                    }
                }
                (Action::Continuous(a), ActionSpace::Continuous { .. }) => {
                    for (j, (v, target)) in row.iter().zip(a).enumerate() {
                        loss += (v - target).powi(2) * inv;
                        grad[[i, j]] = 2.0 * (v - target) * inv;
                    }
                }
                _ => {
                    return Err(AgentError::EnvMismatch {
                        agent: super::AgentKind::Bc,
                        space,
                    })
                }
            }
        }
        check_finite("bc loss", loss)?;
        Ok((loss, policy.backward(&cache, &grad)?.params))
    }

    pub fn update_on(&mut self, batch: &[&HumanTransition]) -> Result<UpdateStats, AgentError> {
        let (loss, grad) = Self::objective(&self.policy, self.space, batch)?;
        self.opt.step(self.policy.params_mut(), &grad)?;
        Ok(UpdateStats {
            total: loss,
            human_rows: batch.len(),
            batch_len: batch.len(),
            ..UpdateStats::default()
        })
    }
}
