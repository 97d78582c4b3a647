use ndarray::{s, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::losses::{cql_loss, pv_loss, td_loss, td_target};
use super::{check_finite, draw_batch, noisy, AgentError, CriticBatch, Objective, PvpConfig, UpdateStats};
use crate::buffers::Buffers;
use crate::envs::Action;
use crate::nn::{Activation, AdamState, Mlp, TargetPair};

/// Deterministic actor with twin critics. With `proxy` set the critics fit
/// proxy-value labels plus TD; otherwise plain TD3. The environment reward
/// enters the TD target only when `use_env_reward` is set.
#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub(crate) q1: TargetPair,
    pub(crate) q2: TargetPair,
    pub(crate) actor: TargetPair,
    opt_q1: AdamState,
    opt_q2: AdamState,
    opt_actor: AdamState,
    cfg: PvpConfig,
    proxy: bool,
    act_dim: usize,
    critic_updates: u64,
}

fn cont(a: &Action) -> &[f64] {
    a.as_continuous().expect("continuous agent received a discrete action")
}

/// Concatenates state rows with action rows into critic inputs.
pub fn critic_input(states: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(ndarray::Axis(1), &[states.view(), actions.view()]).expect("row counts agree")
}

fn action_matrix<'a>(actions: impl ExactSizeIterator<Item = &'a Action>, dim: usize) -> Array2<f64> {
    let n = actions.len();
    let mut m = Array2::zeros((n, dim));
    for (i, a) in actions.enumerate() {
        m.row_mut(i).assign(&ndarray::ArrayView1::from(cont(a)));
    }
    m
}

/// Critic inputs for one batch: rows `0..n` pair each state with its applied
/// action, rows `n..n+h` pair the human states with the novice action.
pub fn critic_rows(batch: &CriticBatch, act_dim: usize) -> Array2<f64> {
    let applied = critic_input(&batch.states, &action_matrix(batch.applied.iter(), act_dim));
    let h = batch.human_rows();
    if h == 0 {
        return applied;
    }
    let novice = critic_input(
        &batch.states.slice(s![0..h, ..]).to_owned(),
        &action_matrix(batch.novice_actions.iter(), act_dim),
    );
    ndarray::concatenate(ndarray::Axis(0), &[applied.view(), novice.view()]).expect("column counts agree")
}

/// Objective for a single critic given precomputed TD targets (`None` when
/// TD is off). Returns (pv, td, parameter gradient).
pub fn critic_objective(
    q: &Mlp,
    rows: &Array2<f64>,
    batch: &CriticBatch,
    targets: Option<&[f64]>,
    cfg: &PvpConfig,
    proxy: bool,
) -> Result<(f64, f64, Vec<f64>), AgentError> {
    let n = batch.len();
    let h = batch.human_rows();
    let cache = q.forward_batch(rows)?;
    let out = cache.output();
    let mut grad = Array2::zeros(out.dim());
    let mut pv = 0.0;
    if proxy && h > 0 {
        let q_h: Vec<f64> = (0..h).map(|i| out[[i, 0]]).collect();
        let q_n: Vec<f64> = (0..h).map(|i| out[[n + i, 0]]).collect();
        let pair = match cfg.objective {
            Objective::Pvp => pv_loss(&q_h, &q_n, cfg.q_bound),
            Objective::Cql => cql_loss(&q_h, &q_n),
        };
        for i in 0..h {
            grad[[i, 0]] += pair.grad_h[i];
            grad[[n + i, 0]] += pair.grad_n[i];
        }
        pv = pair.loss;
    }
    let mut td = 0.0;
    if let Some(y) = targets {
        let chosen: Vec<f64> = (0..n).map(|i| out[[i, 0]]).collect();
        let (loss, g) = td_loss(&chosen, y);
        for (i, gi) in g.into_iter().enumerate() {
            grad[[i, 0]] += gi;
        }
        td = loss;
    }
    check_finite("critic loss", pv + td)?;
    Ok((pv, td, q.backward(&cache, &grad)?.params))
}

/// Deterministic-policy-gradient objective `-mean Q1(s, mu(s))` and its
/// gradient over the actor parameters.
pub fn actor_objective(actor: &Mlp, q1: &Mlp, states: &Array2<f64>) -> Result<(f64, Vec<f64>), AgentError> {
    let act_cache = actor.forward_batch(states)?;
    let inputs = critic_input(states, act_cache.output());
    let q_cache = q1.forward_batch(&inputs)?;
    let n = states.nrows() as f64;
    let loss = -q_cache.output().sum() / n;
    check_finite("actor loss", loss)?;
    let dq = Array2::from_elem((states.nrows(), 1), -1.0 / n);
    let d_in = q1.backward(&q_cache, &dq)?.input;
    let d_act = d_in.slice(s![.., states.ncols()..]).to_owned();
    Ok((loss, actor.backward(&act_cache, &d_act)?.params))
}

impl Td3Agent {
    pub fn new(obs_dim: usize, act_dim: usize, proxy: bool, cfg: PvpConfig, rng: &mut ChaCha8Rng) -> Result<Self, AgentError> {
        let critic = |rng: &mut ChaCha8Rng| {
            Mlp::with_hidden(obs_dim + act_dim, &cfg.hidden_sizes, 1, Activation::Relu, Activation::Identity, 1.0, rng)
        };
        let q1 = critic(rng)?;
        let q2 = critic(rng)?;
        let actor = Mlp::with_hidden(obs_dim, &cfg.hidden_sizes, act_dim, Activation::Relu, Activation::Tanh, 0.01, rng)?;
        Ok(Self {
            opt_q1: AdamState::new(q1.params().len(), cfg.lr),
            opt_q2: AdamState::new(q2.params().len(), cfg.lr),
            opt_actor: AdamState::new(actor.params().len(), cfg.lr),
            q1: TargetPair::new(q1, cfg.tau),
            q2: TargetPair::new(q2, cfg.tau),
            actor: TargetPair::new(actor, cfg.tau),
            cfg,
            proxy,
            act_dim,
            critic_updates: 0,
        })
    }

    pub fn proxy_values(&self) -> bool {
        self.proxy
    }

    pub fn config(&self) -> &PvpConfig {
        &self.cfg
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor.online
    }

    pub fn critics(&self) -> (&Mlp, &Mlp) {
        (&self.q1.online, &self.q2.online)
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    pub(crate) fn reset_optimizers(&mut self) {
        self.opt_q1 = AdamState::new(self.q1.online.params().len(), self.cfg.lr);
        self.opt_q2 = AdamState::new(self.q2.online.params().len(), self.cfg.lr);
        self.opt_actor = AdamState::new(self.actor.online.params().len(), self.cfg.lr);
    }

    pub fn select_action(&self, obs: &[f64], stochastic: bool, rng: &mut ChaCha8Rng) -> Result<Action, AgentError> {
        let a = self.actor.online.forward(obs)?;
        Ok(Action::Continuous(if stochastic {
            noisy(&a, self.cfg.action_noise, rng)
        } else {
            a
        }))
    }

    pub fn q1_value(&self, obs: &[f64], action: &[f64]) -> Result<f64, AgentError> {
        let mut x = obs.to_vec();
        x.extend_from_slice(action);
        Ok(self.q1.online.forward(&x)?[0])
    }

    /// Twin-min targets with clipped target-policy smoothing.
    fn td_targets(&self, batch: &CriticBatch, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, AgentError> {
        let mut next_act = self.actor.target.forward_batch(&batch.next_states)?.output().clone();
        let normal = Normal::new(0.0, self.cfg.target_noise).map_err(|e| AgentError::Config(e.to_string()))?;
        let clip = self.cfg.target_noise_clip;
        next_act.mapv_inplace(|a| (a + rng.sample(normal).clamp(-clip, clip)).clamp(-1.0, 1.0));
        let inputs = critic_input(&batch.next_states, &next_act);
        let v1 = self.q1.target.forward_batch(&inputs)?;
        let v2 = self.q2.target.forward_batch(&inputs)?;
        Ok((0..batch.len())
            .map(|i| {
                let v = v1.output()[[i, 0]].min(v2.output()[[i, 0]]);
                let r = batch.rewards.as_ref().map(|r| r[i]);
                td_target(self.cfg.gamma, batch.done[i], v, r)
            })
            .collect())
    }

    pub fn update(&mut self, buffers: &Buffers, rng: &mut ChaCha8Rng) -> Result<Option<UpdateStats>, AgentError> {
        let Some(batch) = draw_batch(buffers, &self.cfg, rng)? else {
            return Ok(None);
        };
        let with_reward = self.cfg.use_env_reward;
        let batch = CriticBatch::from_batch(&batch, with_reward);
        self.update_on(&batch, rng).map(Some)
    }

    pub fn update_on(&mut self, batch: &CriticBatch, rng: &mut ChaCha8Rng) -> Result<UpdateStats, AgentError> {
        let targets = if self.cfg.use_td || !self.proxy {
            Some(self.td_targets(batch, rng)?)
        } else {
            None
        };
        let rows = critic_rows(batch, self.act_dim);
        let (pv1, td1, g1) = critic_objective(&self.q1.online, &rows, batch, targets.as_deref(), &self.cfg, self.proxy)?;
        let (pv2, td2, g2) = critic_objective(&self.q2.online, &rows, batch, targets.as_deref(), &self.cfg, self.proxy)?;
        self.opt_q1.step(self.q1.online.params_mut(), &g1)?;
        self.opt_q2.step(self.q2.online.params_mut(), &g2)?;
        self.critic_updates += 1;

        let mut stats = UpdateStats {
            pv_loss: 0.5 * (pv1 + pv2),
            td_loss: 0.5 * (td1 + td2),
            total: pv1 + td1 + pv2 + td2,
            actor_objective: None,
            human_rows: batch.human_rows(),
            batch_len: batch.len(),
        };
        if self.critic_updates % self.cfg.actor_delay == 0 {
            let (loss, g) = actor_objective(&self.actor.online, &self.q1.online, &batch.states)?;
            self.opt_actor.step(self.actor.online.params_mut(), &g)?;
            self.q1.polyak_update();
            self.q2.polyak_update();
            self.actor.polyak_update();
            stats.actor_objective = Some(-loss);
        }
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffers::{BalancedBatch, HumanTransition, Transition};
    use rand::SeedableRng;

    fn fd_check(params: &[f64], grad: &[f64], f: impl Fn(&[f64]) -> f64) {
        let eps = 1e-6;
        for k in 0..grad.len() {
            let mut p = params.to_vec();
            p[k] += eps;
            let lp = f(&p);
            p[k] -= 2.0 * eps;
            let lm = f(&p);
            let fd = (lp - lm) / (2.0 * eps);
            assert!((fd - grad[k]).abs() <= 1e-5 * fd.abs().max(1e-3), "param {k}: {fd} vs {}", grad[k]);
        }
    }

    fn sample_batch() -> CriticBatch {
        let h = [HumanTransition {
            s: vec![0.2, -0.1],
            a_n: Action::Continuous(vec![0.9, -0.3]),
            a_h: Action::Continuous(vec![-0.5, 0.4]),
            s_next: vec![0.1, 0.0],
            done: false,
            eval_reward: 0.0,
            eval_cost: 0,
        }];
        let n = [Transition {
            s: vec![-0.4, 0.6],
            a_n: Action::Continuous(vec![0.1, 0.2]),
            s_next: vec![-0.3, 0.5],
            done: false,
            eval_reward: 0.0,
            eval_cost: 0,
        }];
        let bb = BalancedBatch {
            human: h.iter().collect(),
            novice: n.iter().collect(),
            human_empty: false,
            novice_empty: false,
        };
        CriticBatch::from_batch(&bb, false)
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = PvpConfig {
            hidden_sizes: vec![6],
            ..PvpConfig::default()
        };
        let agent = Td3Agent::new(2, 2, true, cfg.clone(), &mut rng).unwrap();
        let batch = sample_batch();
        let rows = critic_rows(&batch, 2);
        let targets = [0.3, -0.2];
        let q = &agent.q1.online;
        let (_, _, grad) = critic_objective(q, &rows, &batch, Some(&targets), &cfg, true).unwrap();
        fd_check(q.params(), &grad, |p| {
            let net = Mlp::from_parts(q.layer_sizes(), q.activations(), p.to_vec()).unwrap();
            let (pv, td, _) = critic_objective(&net, &rows, &batch, Some(&targets), &cfg, true).unwrap();
            pv + td
        });
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cfg = PvpConfig {
            hidden_sizes: vec![6],
            ..PvpConfig::default()
        };
        let agent = Td3Agent::new(2, 2, true, cfg, &mut rng).unwrap();
        let batch = sample_batch();
        let actor = &agent.actor.online;
        let (_, grad) = actor_objective(actor, &agent.q1.online, &batch.states).unwrap();
        fd_check(actor.params(), &grad, |p| {
            let net = Mlp::from_parts(actor.layer_sizes(), actor.activations(), p.to_vec()).unwrap();
            actor_objective(&net, &agent.q1.online, &batch.states).unwrap().0
        });
    }

    #[test]
    fn actor_and_targets_move_every_second_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut agent = Td3Agent::new(2, 2, true, PvpConfig::default(), &mut rng).unwrap();
        let batch = sample_batch();
        let actor0 = agent.actor.online.params().to_vec();
        let target0 = agent.q1.target.params().to_vec();
        let s1 = agent.update_on(&batch, &mut rng).unwrap();
        assert!(s1.actor_objective.is_none());
        assert_eq!(agent.actor.online.params(), actor0.as_slice());
        assert_eq!(agent.q1.target.params(), target0.as_slice());
        let s2 = agent.update_on(&batch, &mut rng).unwrap();
        assert!(s2.actor_objective.is_some());
        assert_ne!(agent.actor.online.params(), actor0.as_slice());
        assert_ne!(agent.q1.target.params(), target0.as_slice());
    }

    #[test]
    fn actor_learns_the_human_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = PvpConfig {
            lr: 3e-3,
            hidden_sizes: vec![32, 32],
            ..PvpConfig::default()
        };
        let mut agent = Td3Agent::new(2, 2, true, cfg, &mut rng).unwrap();
        let batch = sample_batch();
        for _ in 0..3000 {
            agent.update_on(&batch, &mut rng).unwrap();
        }
        let a = agent.select_action(&[0.2, -0.1], false, &mut rng).unwrap();
        let a = a.as_continuous().unwrap();
        let to_h = ((a[0] + 0.5).powi(2) + (a[1] - 0.4).powi(2)).sqrt();
        let to_n = ((a[0] - 0.9).powi(2) + (a[1] + 0.3).powi(2)).sqrt();
        assert!(to_h < to_n, "actor output {a:?}");
    }
}
