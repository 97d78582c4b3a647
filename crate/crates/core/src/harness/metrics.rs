use serde::{Deserialize, Serialize};

use super::eval::EvalReport;
use crate::agent::AgentKind;

/// One row of `metrics.csv`. Column order is the field order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRow {
    /// 1-based global environment step.
    pub step: u64,
    pub episode: u64,
    /// 0-based step inside the episode.
    pub episode_step: u64,
    pub intervened: u8,
    /// Violation of the applied action.
    pub violation: u8,
    /// Violation of the novice proposal.
    pub novice_violation: u8,
    pub cost: u8,
    /// Cumulative human-controlled steps so far.
    pub human_data_usage: u64,
    /// Cumulative environment steps so far.
    pub total_data_usage: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub env_id: String,
    pub agent_kind: AgentKind,
    pub seed: u64,
    pub total_steps: u64,
    pub episodes: u64,
    pub training_successes: u64,
    pub human_data_usage: u64,
    pub total_data_usage: u64,
    /// `human_data_usage / total_data_usage`, 0 for an empty run.
    pub intervention_rate: f64,
    /// Cost events during training only.
    pub total_safety_cost: u64,
    pub training_violations: u64,
    /// Mean intervention indicator over the first and last tenth of steps.
    pub psi_first_tenth: Option<f64>,
    pub psi_last_tenth: Option<f64>,
    pub evals: Vec<EvalReport>,
    pub best: Option<EvalReport>,
    pub final_eval: Option<EvalReport>,
}

/// Mean of the `intervened` column over the first and last `ceil(n/10)` rows.
pub fn psi_tenths(rows: &[StepRow]) -> (Option<f64>, Option<f64>) {
    if rows.is_empty() {
        return (None, None);
    }
    let k = rows.len().div_ceil(10);
    let mean = |r: &[StepRow]| r.iter().map(|x| x.intervened as f64).sum::<f64>() / r.len() as f64;
    (Some(mean(&rows[..k])), Some(mean(&rows[rows.len() - k..])))
}

/// Highest success rate, ties broken by route completion then earlier step.
pub fn best_eval(evals: &[EvalReport]) -> Option<EvalReport> {
    let key = |e: &EvalReport| (e.success_rate.unwrap_or(0.0), e.route_completion.unwrap_or(0.0));
    evals.iter().copied().fold(None, |best: Option<EvalReport>, e| match best {
        Some(b) if key(&b) >= key(&e) => Some(b),
        _ => Some(e),
    })
}
