use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{splitmix64, HarnessError, RunConfig};
use crate::agent::{Agent, UpdateStats};
use crate::buffers::{BufferLogHeader, Buffers, LogRecord};
use crate::envs::Env;

/// Result of re-running training from a recorded buffer log.
#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub agent: Agent,
    pub buffers: Buffers,
    pub records: u64,
    pub last_update: Option<UpdateStats>,
}

/// Feeds logged transitions to a freshly initialized agent with the same
/// update cadence and random streams as [`super::Trainer`]. Replaying the
/// log of a complete run reproduces that run's final parameters.
pub fn replay(
    cfg: &RunConfig,
    header: &BufferLogHeader,
    records: impl IntoIterator<Item = LogRecord>,
) -> Result<ReplayOutput, HarnessError> {
    cfg.validate()?;
    let env = cfg.env.build()?;
    if header.obs_dim != env.obs_dim() || header.action_space != env.action_space() {
        return Err(HarnessError::Config(format!(
            "log was recorded on {} which does not match {}",
            header.env_id,
            cfg.env.id()
        )));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agent = Agent::new(cfg.agent_kind, env.obs_dim(), env.action_space(), cfg.pvp.clone(), &mut init_rng)?;
    let mut update_rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ 0x5A5A));
    let mut buffers = Buffers::new(cfg.pvp.novice_capacity, None);
    let mut last_update = None;
    let mut count = 0;
    for record in records {
        let step = record.step();
        match record {
            LogRecord::Human { t, .. } => buffers.human.push(t),
            LogRecord::Novice { t, .. } => buffers.novice.push(t),
        }
        count += 1;
        if step >= cfg.pvp.learning_starts {
            for _ in 0..cfg.pvp.gradient_steps {
                if let Some(stats) = agent.update(&buffers, &mut update_rng)? {
                    last_update = Some(stats);
                }
            }
        }
    }
    Ok(ReplayOutput {
        agent,
        buffers,
        records: count,
        last_update,
    })
}
