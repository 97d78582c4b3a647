use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::eval::{evaluate, AgentPolicy, EvalReport};
use super::metrics::{best_eval, psi_tenths, RunSummary, StepRow};
use super::rollout::{rollout_step, InterventionSource, NoIntervention, StepStatus, TrainProgress};
use super::{splitmix64, train_episode_seed, HarnessError, InterventionConfig, RunConfig};
use crate::agent::{Agent, UpdateStats};
use crate::buffers::{BufferLogHeader, BufferLogWriter, LogRecord};
use crate::buffers::{Buffers, HumanTransition, Transition};
use crate::envs::{AnyEnv, Env};
use crate::oracle::{Oracle, OracleSpec};

/// Result of a finished run.
pub struct RunOutput {
    pub summary: RunSummary,
    pub agent: Agent,
    pub buffers: Buffers,
    pub rows: Vec<StepRow>,
}

/// Owns the env, agent, buffers and supervisor for one run and advances
/// them one environment step at a time.
pub struct Trainer<'s> {
    cfg: RunConfig,
    env_id: String,
    env: AnyEnv,
    agent: Agent,
    buffers: Buffers,
    source: Box<dyn InterventionSource + 's>,
    act_rng: ChaCha8Rng,
    update_rng: ChaCha8Rng,
    step: u64,
    episode: u64,
    episode_step: u64,
    need_reset: bool,
    human_steps: u64,
    cost_total: u64,
    violations: u64,
    successes: u64,
    rows: Vec<StepRow>,
    csv: Option<csv::Writer<BufWriter<File>>>,
    log: Option<BufferLogWriter<BufWriter<File>>>,
    evals: Vec<EvalReport>,
    last_update: Option<UpdateStats>,
}

/// Seeds the scripted oracle from both its own seed and the run seed.
pub fn scripted_oracle(spec: &OracleSpec, run_seed: u64) -> Result<Oracle, HarnessError> {
    let mut spec = spec.clone();
    spec.seed ^= splitmix64(run_seed);
    Ok(Oracle::new(spec)?)
}

impl<'s> Trainer<'s> {
    /// Builds the supervisor from the config. Live sessions must go through
    /// [`Trainer::with_source`].
    pub fn new(cfg: RunConfig) -> Result<Self, HarnessError> {
        let source: Box<dyn InterventionSource> = match &cfg.oracle {
            InterventionConfig::Scripted(spec) => Box::new(scripted_oracle(spec, cfg.seed)?),
            InterventionConfig::None => Box::new(NoIntervention),
            InterventionConfig::Live(_) => {
                return Err(HarnessError::Config("live runs are started with `serve`".into()))
            }
        };
        Self::with_source(cfg, source)
    }

    pub fn with_source(cfg: RunConfig, source: Box<dyn InterventionSource + 's>) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let env = cfg.env.build()?;
        let env_id = cfg.env.id();
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let agent = Agent::new(cfg.agent_kind, env.obs_dim(), env.action_space(), cfg.pvp.clone(), &mut init_rng)?;
        let buffers = Buffers::new(cfg.pvp.novice_capacity, None);
        let (csv, log) = match &cfg.out_dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let resolved = serde_json::to_string_pretty(&cfg).map_err(|e| HarnessError::Config(e.to_string()))?;
                fs::write(dir.join("config.json"), resolved)?;
                let csv = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("metrics.csv"))?));
                let log = if cfg.record_buffers {
                    let header = BufferLogHeader::new(env_id.clone(), env.obs_dim(), env.action_space());
                    Some(BufferLogWriter::new(BufWriter::new(File::create(dir.join("buffers.log"))?), header)?)
                } else {
                    None
                };
                (Some(csv), log)
            }
            None => (None, None),
        };
        Ok(Self {
            act_rng: ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ 0xA5A5)),
            update_rng: ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ 0x5A5A)),
            cfg,
            env_id,
            env,
            agent,
            buffers,
            source,
            step: 0,
            episode: 0,
            episode_step: 0,
            need_reset: true,
            human_steps: 0,
            cost_total: 0,
            violations: 0,
            successes: 0,
            rows: Vec::new(),
            csv,
            log,
            evals: Vec::new(),
            last_update: None,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn env(&self) -> &AnyEnv {
        &self.env
    }

    pub fn buffers(&self) -> &Buffers {
        &self.buffers
    }

    /// Direct buffer access, for offline experiments on a live run.
    pub fn buffers_mut(&mut self) -> &mut Buffers {
        &mut self.buffers
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn rows(&self) -> &[StepRow] {
        &self.rows
    }

    pub fn evals(&self) -> &[EvalReport] {
        &self.evals
    }

    pub fn last_update(&self) -> Option<UpdateStats> {
        self.last_update
    }

    pub fn progress(&self) -> TrainProgress {
        TrainProgress {
            step: self.step,
            human_data_usage: self.human_steps,
            total_data_usage: self.step,
            success_rate_latest: self.evals.last().and_then(|e| e.success_rate),
        }
    }

    /// One shared-control step followed by the configured gradient steps.
    pub fn step_once(&mut self) -> Result<StepStatus, HarnessError> {
        let status = self.collect()?;
        if let StepStatus::Stepped(_) = status {
            self.learn()?;
        }
        Ok(status)
    }

    /// The data half of [`step_once`](Self::step_once): act, route the
    /// transition to a buffer, record metrics. No gradient step.
    pub fn collect(&mut self) -> Result<StepStatus, HarnessError> {
        if self.step >= self.cfg.total_steps {
            return Ok(StepStatus::Finished);
        }
        if self.need_reset {
            self.env.reset(train_episode_seed(self.cfg.seed, self.episode));
            self.episode_step = 0;
            self.need_reset = false;
        }
        let obs = self.env.observation();
        let frac = self.step as f64 / self.cfg.total_steps as f64;
        let a_n = self
            .agent
            .behavior_action(&obs, self.step, frac, self.env.action_space(), &mut self.act_rng)?;
        let status = rollout_step(&mut self.env, a_n, self.source.as_mut(), &mut self.buffers, self.step)?;
        let StepStatus::Stepped(outcome) = &status else {
            return Ok(status);
        };

        self.step += 1;
        let intervened = outcome.intervened();
        self.human_steps += intervened as u64;
        self.cost_total += outcome.result.cost as u64;
        self.violations += outcome.result.info.violation as u64;
        let row = StepRow {
            step: self.step,
            episode: self.episode,
            episode_step: self.episode_step,
            intervened: intervened as u8,
            violation: outcome.result.info.violation as u8,
            novice_violation: outcome.novice_violation as u8,
            cost: outcome.result.cost,
            human_data_usage: self.human_steps,
            total_data_usage: self.step,
        };
        if let Some(w) = self.csv.as_mut() {
            w.serialize(row)?;
        }
        self.rows.push(row);
        if let Some(log) = self.log.as_mut() {
            let r = &outcome.result;
            let record = if intervened {
                LogRecord::Human {
                    step: self.step,
                    t: HumanTransition {
                        s: outcome.s.clone(),
                        a_n: outcome.a_n.clone(),
                        a_h: outcome.applied.clone(),
                        s_next: r.next_obs.clone(),
                        done: r.terminal(),
                        eval_reward: r.reward,
                        eval_cost: r.cost,
                    },
                }
            } else {
                LogRecord::Novice {
                    step: self.step,
                    t: Transition {
                        s: outcome.s.clone(),
                        a_n: outcome.a_n.clone(),
                        s_next: r.next_obs.clone(),
                        done: r.terminal(),
                        eval_reward: r.reward,
                        eval_cost: r.cost,
                    },
                }
            };
            log.append(&record)?;
        }
        self.episode_step += 1;
        if outcome.result.done {
            self.successes += outcome.result.info.success as u64;
            self.episode += 1;
            self.need_reset = true;
        }
        let progress = self.progress();
        self.source.observe(outcome, &self.env, &progress);
        Ok(status)
    }

    /// The learning half of [`step_once`](Self::step_once): gradient steps
    /// for the step just collected, then the periodic evaluation.
    pub fn learn(&mut self) -> Result<(), HarnessError> {
        if self.step >= self.cfg.pvp.learning_starts {
            for _ in 0..self.cfg.pvp.gradient_steps {
                if let Some(stats) = self.agent.update(&self.buffers, &mut self.update_rng)? {
                    self.last_update = Some(stats);
                }
            }
        }
        if self.cfg.eval_every > 0 && self.step % self.cfg.eval_every == 0 {
            self.run_eval()?;
        }
        Ok(())
    }

    fn run_eval(&mut self) -> Result<(), HarnessError> {
        let report = evaluate(
            &mut AgentPolicy::new(&self.agent),
            &self.cfg.env,
            self.cfg.eval_episodes,
            0,
            self.step,
        )?;
        info!(
            "step {} success {:?} completion {:?} psi {:.3}",
            self.step,
            report.success_rate,
            report.route_completion,
            self.progress().psi()
        );
        if let Some(dir) = self.checkpoint_dir() {
            self.agent
                .save(&dir.join(format!("step_{}", self.step)), &self.env_id, self.step, self.env.obs_dim(), self.env.action_space())?;
        }
        self.evals.push(report);
        Ok(())
    }

    fn checkpoint_dir(&self) -> Option<PathBuf> {
        self.cfg.out_dir.as_ref().map(|d| d.join("checkpoints"))
    }

    /// Runs until the step budget is spent or the source stops the run.
    pub fn run(mut self) -> Result<RunOutput, HarnessError> {
        loop {
            match self.step_once()? {
                StepStatus::Finished | StepStatus::Stopped => break,
                StepStatus::Paused | StepStatus::Stepped(_) => {}
            }
        }
        self.finish()
    }

    /// Final evaluation, final checkpoint and output files.
    pub fn finish(mut self) -> Result<RunOutput, HarnessError> {
        if self.step > 0 && self.evals.last().map(|e| e.step) != Some(self.step) {
            self.run_eval()?;
        }
        if let Some(dir) = self.checkpoint_dir() {
            self.agent
                .save(&dir.join("final"), &self.env_id, self.step, self.env.obs_dim(), self.env.action_space())?;
        }
        let (first, last) = psi_tenths(&self.rows);
        let summary = RunSummary {
            env_id: self.env_id.clone(),
            agent_kind: self.cfg.agent_kind,
            seed: self.cfg.seed,
            total_steps: self.step,
            episodes: self.episode,
            training_successes: self.successes,
            human_data_usage: self.human_steps,
            total_data_usage: self.step,
            intervention_rate: self.progress().psi(),
            total_safety_cost: self.cost_total,
            training_violations: self.violations,
            psi_first_tenth: first,
            psi_last_tenth: last,
            best: best_eval(&self.evals),
            final_eval: self.evals.last().copied(),
            evals: self.evals.clone(),
        };
        if let Some(mut w) = self.csv.take() {
            w.flush()?;
        }
        if let Some(mut log) = self.log.take() {
            log.flush()?;
        }
        if let Some(dir) = &self.cfg.out_dir {
            write_summary(dir, &summary)?;
        }
        debug!("run finished after {} steps", self.step);
        Ok(RunOutput {
            summary,
            agent: self.agent,
            buffers: self.buffers,
            rows: self.rows,
        })
    }
}

fn write_summary(dir: &Path, summary: &RunSummary) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(dir.join("summary.json"), text)?;
    Ok(())
}

/// Builds a trainer from the config and runs it to completion.
pub fn train(cfg: RunConfig) -> Result<RunOutput, HarnessError> {
    Trainer::new(cfg)?.run()
}
