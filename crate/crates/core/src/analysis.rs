//! Empirical check of the intent-violation bound
//! `S <= (kappa + epsilon * psi) / (1 - gamma)` on shared-control trajectories.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Normal quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no trajectories to analyze")]
    NoTrajectories,
    #[error("gamma must lie in (0, 1), got {0}")]
    BadGamma(f64),
    #[error("metrics file: {0}")]
    Metrics(String),
}

/// One step of a shared-control trajectory as seen by the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajStep {
    pub intervened: bool,
    /// Violation of the action that was actually applied.
    pub violation: bool,
    /// Violation of the novice proposal, applied or not.
    pub novice_violation: bool,
}

pub type Trajectory = Vec<TrajStep>;

/// A point estimate with a 95% normal-approximation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let half = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Z95 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
            n,
        })
    }

    /// Bernoulli proportion `hits / n`, interval clipped to `[0, 1]`.
    pub fn proportion(hits: usize, n: usize) -> Option<Self> {
        if n == 0 {
            return None;
        }
        let p = hits as f64 / n as f64;
        let half = Z95 * (p * (1.0 - p) / n as f64).sqrt();
        Some(Self {
            mean: p,
            ci_low: (p - half).max(0.0),
            ci_high: (p + half).min(1.0),
            n,
        })
    }
}

/// Discounted violation count `sum_t gamma^t C_t` of one trajectory.
pub fn discounted_violations(flags: impl IntoIterator<Item = f64>, gamma: f64) -> f64 {
    let mut weight = 1.0;
    let mut total = 0.0;
    for c in flags {
        total += weight * c;
        weight *= gamma;
    }
    total
}

/// Mean discounted violation score over episodes, with a CI.
pub fn measure_violation(trajectories: &[Trajectory], gamma: f64) -> Result<Estimate, AnalysisError> {
    let scores: Vec<f64> = trajectories
        .iter()
        .map(|t| discounted_violations(t.iter().map(|s| s.violation as u8 as f64), gamma))
        .collect();
    Estimate::from_samples(&scores).ok_or(AnalysisError::NoTrajectories)
}

pub fn compute_bound(gamma: f64, epsilon: f64, kappa: f64, psi: f64) -> Result<f64, AnalysisError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(AnalysisError::BadGamma(gamma));
    }
    Ok((kappa + epsilon * psi) / (1.0 - gamma))
}

/// Per-step rate estimates. A rate whose denominator is empty is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// Violation rate of the applied action on intervened steps.
    pub epsilon: Option<Estimate>,
    /// Rate of steps where the novice violated and nobody stepped in.
    pub kappa: Option<Estimate>,
    /// Intervention rate.
    pub psi: Option<Estimate>,
}

pub fn estimate_rates(trajectories: &[Trajectory]) -> Rates {
    let steps = trajectories.iter().flatten();
    let (mut n, mut human, mut human_bad, mut missed) = (0, 0, 0, 0);
    for s in steps {
        n += 1;
        if s.intervened {
            human += 1;
            human_bad += s.violation as usize;
        } else if s.novice_violation {
            missed += 1;
        }
    }
    Rates {
        epsilon: Estimate::proportion(human_bad, human),
        kappa: Estimate::proportion(missed, n),
        psi: Estimate::proportion(human, n),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub gamma: f64,
    pub predicate: String,
    pub episodes: usize,
    pub steps: usize,
    pub epsilon_hat: Option<Estimate>,
    pub kappa_hat: Option<Estimate>,
    pub psi_hat: Option<Estimate>,
    pub s_pib_hat: Estimate,
    /// Bound at the point estimates.
    pub bound_value: f64,
    /// Bound at the lower interval edges of every rate.
    pub bound_low: f64,
    /// Bound at the upper interval edges of every rate.
    pub bound_high: f64,
    /// Point check: mean score at most the point bound.
    pub satisfied: bool,
    /// Strict check: upper score edge at most the lower-edge bound.
    pub satisfied_conservative: bool,
}

fn edge(e: Option<Estimate>, pick: fn(&Estimate) -> f64) -> f64 {
    e.as_ref().map_or(0.0, pick)
}

pub fn bound_report(trajectories: &[Trajectory], gamma: f64, predicate: &str) -> Result<BoundReport, AnalysisError> {
    compute_bound(gamma, 0.0, 0.0, 0.0)?;
    let s = measure_violation(trajectories, gamma)?;
    let r = estimate_rates(trajectories);
    let bound = |pick: fn(&Estimate) -> f64| {
        compute_bound(gamma, edge(r.epsilon, pick), edge(r.kappa, pick), edge(r.psi, pick))
    };
    let bound_value = bound(|e| e.mean)?;
    let bound_low = bound(|e| e.ci_low)?;
    let bound_high = bound(|e| e.ci_high)?;
    Ok(BoundReport {
        gamma,
        predicate: predicate.to_string(),
        episodes: trajectories.len(),
        steps: trajectories.iter().map(Vec::len).sum(),
        epsilon_hat: r.epsilon,
        kappa_hat: r.kappa,
        psi_hat: r.psi,
        s_pib_hat: s,
        bound_value,
        bound_low,
        bound_high,
        satisfied: s.mean <= bound_value,
        satisfied_conservative: s.ci_high <= bound_low,
    })
}

fn fmt_est(e: &Option<Estimate>) -> String {
    match e {
        Some(e) => format!("{:.4} [{:.4}, {:.4}]", e.mean, e.ci_low, e.ci_high),
        None => "absent".to_string(),
    }
}

pub fn render_table(r: &BoundReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "predicate        {}", r.predicate);
    let _ = writeln!(out, "gamma            {}", r.gamma);
    let _ = writeln!(out, "episodes/steps   {}/{}", r.episodes, r.steps);
    let _ = writeln!(out, "epsilon_hat      {}", fmt_est(&r.epsilon_hat));
    let _ = writeln!(out, "kappa_hat        {}", fmt_est(&r.kappa_hat));
    let _ = writeln!(out, "psi_hat          {}", fmt_est(&r.psi_hat));
    let _ = writeln!(out, "S_hat            {}", fmt_est(&Some(r.s_pib_hat)));
    let _ = writeln!(out, "bound            {:.4} (low {:.4}, high {:.4})", r.bound_value, r.bound_low, r.bound_high);
    let _ = writeln!(out, "satisfied        {} (conservative: {})", r.satisfied, r.satisfied_conservative);
    out
}

/// Rebuilds per-episode trajectories from a step-level metrics CSV.
pub fn trajectories_from_metrics(path: &Path) -> Result<Vec<Trajectory>, AnalysisError> {
    #[derive(Deserialize)]
    struct Row {
        episode: u64,
        intervened: u8,
        violation: u8,
        novice_violation: u8,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| AnalysisError::Metrics(e.to_string()))?;
    let mut out: Vec<Trajectory> = Vec::new();
    let mut current = None;
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| AnalysisError::Metrics(e.to_string()))?;
        if current != Some(row.episode) {
            out.push(Vec::new());
            current = Some(row.episode);
        }
        out.last_mut().expect("pushed above").push(TrajStep {
            intervened: row.intervened != 0,
            violation: row.violation != 0,
            novice_violation: row.novice_violation != 0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step(intervened: bool, violation: bool, novice_violation: bool) -> TrajStep {
        TrajStep {
            intervened,
            violation,
            novice_violation,
        }
    }

    fn clean(n: usize) -> Trajectory {
        vec![step(false, false, false); n]
    }

    #[test]
    fn zero_violations_score_zero() {
        assert_eq!(measure_violation(&[clean(10), clean(3)], 0.99).unwrap().mean, 0.0);
    }

    #[test]
    fn single_violation_is_discounted_by_its_time() {
        let mut t = clean(5);
        t[0].violation = true;
        assert_eq!(measure_violation(&[t.clone()], 0.9).unwrap().mean, 1.0);
        t[0].violation = false;
        t[1].violation = true;
        assert!((measure_violation(&[t], 0.9).unwrap().mean - 0.9).abs() < 1e-15);
    }

    #[test]
    fn always_violating_approaches_geometric_limit() {
        let s = discounted_violations(std::iter::repeat(1.0).take(5000), 0.99);
        assert!((s - 100.0).abs() < 1e-9);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert_eq!(measure_violation(&[], 0.99), Err(AnalysisError::NoTrajectories));
    }

    #[test]
    fn bound_formula() {
        assert!((compute_bound(0.99, 0.05, 0.01, 0.5).unwrap() - 3.5).abs() < 1e-12);
        assert_eq!(compute_bound(0.99, 0.0, 0.0, 0.7).unwrap(), 0.0);
        assert!((compute_bound(0.9, 0.3, 0.02, 0.0).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(compute_bound(1.0, 0.0, 0.0, 0.0), Err(AnalysisError::BadGamma(1.0)));
    }

    #[test]
    fn all_novice_run_has_no_epsilon() {
        let r = estimate_rates(&[clean(20)]);
        assert!(r.epsilon.is_none());
        assert_eq!(r.psi.unwrap().mean, 0.0);
        assert_eq!(r.kappa.unwrap().mean, 0.0);
    }

    #[test]
    fn perfect_oracle_rates() {
        let t = vec![step(true, false, true), step(false, false, false), step(true, false, true)];
        let r = estimate_rates(&[t]);
        assert_eq!(r.epsilon.unwrap().mean, 0.0);
        assert_eq!(r.kappa.unwrap().mean, 0.0);
        assert!((r.psi.unwrap().mean - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn report_round_trips_and_renders() {
        let t = vec![step(true, true, true), step(false, true, true), step(false, false, false)];
        let r = bound_report(&[t], 0.99, "test").unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<BoundReport>(&json).unwrap(), r);
        assert!(render_table(&r).contains("kappa_hat"));
    }

    proptest! {
        #[test]
        fn score_is_linear_in_the_flags(flags in proptest::collection::vec(0u8..2, 1..200), g in 0.5f64..0.999) {
            let one = discounted_violations(flags.iter().map(|&f| f as f64), g);
            let two = discounted_violations(flags.iter().map(|&f| 2.0 * f as f64), g);
            prop_assert!((two - 2.0 * one).abs() <= 1e-9 * two.abs().max(1.0));
        }
    }
}
