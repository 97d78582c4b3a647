use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use super::losses::{argmax, cql_loss, max_value, pv_loss, td_loss, td_target};
use super::{check_finite, draw_batch, AgentError, CriticBatch, Objective, PvpConfig, UpdateStats};
use crate::buffers::Buffers;
use crate::envs::Action;
use crate::nn::{Activation, AdamState, Mlp, TargetPair};

/// Q network over discrete actions. With `proxy` set it learns from the
/// proxy-value labels plus TD; otherwise it is plain DQN. The environment
/// reward enters the TD target only when `use_env_reward` is set.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub(crate) q: TargetPair,
    opt: AdamState,
    cfg: PvpConfig,
    proxy: bool,
    n_actions: usize,
    updates: u64,
}

fn discrete(a: &Action) -> usize {
    a.as_discrete().expect("discrete agent received a continuous action")
}

/// Objective value and gradient over the online Q parameters.
pub fn dqn_objective(
    q: &Mlp,
    q_target: &Mlp,
    batch: &CriticBatch,
    cfg: &PvpConfig,
    proxy: bool,
) -> Result<(UpdateStats, Vec<f64>), AgentError> {
    let cache = q.forward_batch(&batch.states)?;
    let out = cache.output();
    let mut grad = Array2::zeros(out.dim());
    let mut stats = UpdateStats {
        batch_len: batch.len(),
        human_rows: batch.human_rows(),
        ..UpdateStats::default()
    };

    if proxy {
        let h = batch.human_rows();
        let q_h: Vec<f64> = (0..h).map(|i| out[[i, discrete(&batch.applied[i])]]).collect();
        let q_n: Vec<f64> = (0..h).map(|i| out[[i, discrete(&batch.novice_actions[i])]]).collect();
        let pair = match cfg.objective {
            Objective::Pvp => pv_loss(&q_h, &q_n, cfg.q_bound),
            Objective::Cql => cql_loss(&q_h, &q_n),
        };
        for i in 0..h {
            grad[[i, discrete(&batch.applied[i])]] += pair.grad_h[i];
            grad[[i, discrete(&batch.novice_actions[i])]] += pair.grad_n[i];
        }
        stats.pv_loss = pair.loss;
    }

    if cfg.use_td || !proxy {
        let next = q_target.forward_batch(&batch.next_states)?;
        let next = next.output();
        let targets: Vec<f64> = (0..batch.len())
            .map(|i| {
                let r = batch.rewards.as_ref().map(|r| r[i]);
                td_target(cfg.gamma, batch.done[i], max_value(next.row(i).iter().copied()), r)
            })
            .collect();
        let chosen: Vec<f64> = (0..batch.len()).map(|i| out[[i, discrete(&batch.applied[i])]]).collect();
        let (loss, g) = td_loss(&chosen, &targets);
        for (i, gi) in g.into_iter().enumerate() {
            grad[[i, discrete(&batch.applied[i])]] += gi;
        }
        stats.td_loss = loss;
    }
    stats.total = stats.pv_loss + stats.td_loss;
    check_finite("q loss", stats.total)?;
    let g = q.backward(&cache, &grad)?;
    Ok((stats, g.params))
}

impl DqnAgent {
    pub fn new(
        obs_dim: usize,
        n_actions: usize,
        proxy: bool,
        cfg: PvpConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, AgentError> {
        let net = Mlp::with_hidden(
            obs_dim,
            &cfg.hidden_sizes,
            n_actions,
            Activation::Relu,
            Activation::Identity,
            1.0,
            rng,
        )?;
        let opt = AdamState::new(net.params().len(), cfg.lr);
        Ok(Self {
            q: TargetPair::new(net, cfg.tau),
            opt,
            cfg,
            proxy,
            n_actions,
            updates: 0,
        })
    }

    pub fn proxy_values(&self) -> bool {
        self.proxy
    }

    pub fn config(&self) -> &PvpConfig {
        &self.cfg
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn q_network(&self) -> &Mlp {
        &self.q.online
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.q.online.forward(obs)?)
    }

    pub fn select_action(&self, obs: &[f64]) -> Result<Action, AgentError> {
        Ok(Action::Discrete(argmax(&self.q_values(obs)?)))
    }

    pub(crate) fn reset_optimizer(&mut self) {
        self.opt = AdamState::new(self.q.online.params().len(), self.cfg.lr);
    }

    pub fn update(&mut self, buffers: &Buffers, rng: &mut ChaCha8Rng) -> Result<Option<UpdateStats>, AgentError> {
        let Some(batch) = draw_batch(buffers, &self.cfg, rng)? else {
            return Ok(None);
        };
        let with_reward = self.cfg.use_env_reward;
        let batch = CriticBatch::from_batch(&batch, with_reward);
        self.update_on(&batch).map(Some)
    }

    pub fn update_on(&mut self, batch: &CriticBatch) -> Result<UpdateStats, AgentError> {
        let (stats, grad) = dqn_objective(&self.q.online, &self.q.target, batch, &self.cfg, self.proxy)?;
        self.opt.step(self.q.online.params_mut(), &grad)?;
        self.q.polyak_update();
        self.updates += 1;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffers::{BalancedBatch, HumanTransition, Transition};
    use rand::SeedableRng;

    fn human(s: Vec<f64>, a_n: usize, a_h: usize) -> HumanTransition {
        HumanTransition {
            s_next: s.clone(),
            s,
            a_n: Action::Discrete(a_n),
            a_h: Action::Discrete(a_h),
            done: false,
            eval_reward: 0.0,
            eval_cost: 0,
        }
    }

    fn novice(s: Vec<f64>, a: usize, done: bool) -> Transition {
        Transition {
            s_next: s.clone(),
            s,
            a_n: Action::Discrete(a),
            done,
            eval_reward: 0.0,
            eval_cost: 0,
        }
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = PvpConfig {
            hidden_sizes: vec![5],
            ..PvpConfig::default()
        };
        let agent = DqnAgent::new(3, 3, true, cfg.clone(), &mut rng).unwrap();
        let mut target = agent.q.online.clone();
        for p in target.params_mut() {
            *p += 0.1;
        }
        let h = [human(vec![0.1, -0.4, 0.3], 0, 2), human(vec![0.7, 0.2, -0.1], 1, 1)];
        let n = [novice(vec![-0.3, 0.5, 0.9], 2, false), novice(vec![0.2, 0.2, 0.2], 0, true)];
        let bb = BalancedBatch {
            human: h.iter().collect(),
            novice: n.iter().collect(),
            human_empty: false,
            novice_empty: false,
        };
        let batch = CriticBatch::from_batch(&bb, false);
        let (_, grad) = dqn_objective(&agent.q.online, &target, &batch, &cfg, true).unwrap();
        let eps = 1e-6;
        for k in 0..grad.len() {
            let mut plus = agent.q.online.clone();
            plus.params_mut()[k] += eps;
            let mut minus = agent.q.online.clone();
            minus.params_mut()[k] -= eps;
            let lp = dqn_objective(&plus, &target, &batch, &cfg, true).unwrap().0.total;
            let lm = dqn_objective(&minus, &target, &batch, &cfg, true).unwrap().0.total;
            let fd = (lp - lm) / (2.0 * eps);
            assert!((fd - grad[k]).abs() <= 1e-5 * fd.abs().max(1e-3), "param {k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn proxy_labels_are_fit_on_a_fixed_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = PvpConfig {
            lr: 1e-2,
            use_td: false,
            hidden_sizes: vec![16],
            ..PvpConfig::default()
        };
        let mut agent = DqnAgent::new(2, 3, true, cfg, &mut rng).unwrap();
        let h = [human(vec![0.5, -0.5], 0, 2)];
        let bb = BalancedBatch {
            human: h.iter().collect(),
            novice: Vec::new(),
            human_empty: false,
            novice_empty: true,
        };
        let batch = CriticBatch::from_batch(&bb, false);
        for _ in 0..500 {
            agent.update_on(&batch).unwrap();
        }
        let q = agent.q_values(&[0.5, -0.5]).unwrap();
        assert!((q[2] - 1.0).abs() < 1e-2 && (q[0] + 1.0).abs() < 1e-2, "{q:?}");
        assert_eq!(agent.select_action(&[0.5, -0.5]).unwrap(), Action::Discrete(2));
    }
}
