use serde::{Deserialize, Serialize};

use crate::bounds::{BoundKind, BoundResult};

use super::stats::{empirical_tail, TailEstimate};
use super::tandem::{simulate_tandem, SimResult, SimScenario};
use super::SimError;

/// Below this many expected exceedances (`epsilon * samples`) no verdict is
/// given.
pub const MIN_EXPECTED_EXCEEDANCES: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub kind: BoundKind,
    pub bound_value: f64,
    pub epsilon: f64,
    pub tail: TailEstimate,
    pub verdict: Verdict,
    pub warning: Option<String>,
}

/// Compares the simulated tail at the analytic threshold with `epsilon`. The
/// bound passes when the 95% upper confidence limit of the exceedance
/// frequency is at most `epsilon * (1 + slack)`.
pub fn check_bound(
    sim: &SimResult,
    bound: &BoundResult,
    epsilon: f64,
    slack: f64,
) -> ValidationReport {
    let samples = match bound.kind {
        BoundKind::Delay => &sim.delay_samples,
        BoundKind::Backlog => &sim.backlog_samples,
    };
    let tail = empirical_tail(samples, bound.value);
    let expected = epsilon * tail.samples as f64;
    let (verdict, warning) = if expected < MIN_EXPECTED_EXCEEDANCES {
        (
            Verdict::Inconclusive,
            Some(format!(
                "epsilon * samples = {expected:.3e} < {MIN_EXPECTED_EXCEEDANCES}; too few samples to resolve a tail of {epsilon:e}"
            )),
        )
    } else if tail.upper_confidence <= epsilon * (1.0 + slack) {
        (Verdict::Pass, None)
    } else {
        (Verdict::Fail, None)
    };
    ValidationReport {
        kind: bound.kind,
        bound_value: bound.value,
        epsilon,
        tail,
        verdict,
        warning,
    }
}

/// Simulates `scenario` and checks `bound` against it.
pub fn validate_bound(
    scenario: &SimScenario,
    bound: &BoundResult,
    epsilon: f64,
    slack: f64,
) -> Result<ValidationReport, SimError> {
    let sim = simulate_tandem(scenario)?;
    Ok(check_bound(&sim, bound, epsilon, slack))
}
