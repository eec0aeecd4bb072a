//! One-dimensional minimization over `theta > 0`.
//!
//! The objective is scanned on a log-spaced grid, then refined by golden
//! section search in `ln(theta)` inside the two grid cells around the best grid
//! point. Non-finite objective values mark inadmissible `theta` and are never
//! selected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest `theta * peak` the default range allows.
pub const MAX_EXPONENT: f64 = 700.0;
/// Smallest `theta * peak` the default range allows.
pub const MIN_EXPONENT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("invalid theta search range [{theta_min}, {theta_max}]")]
    InvalidRange { theta_min: f64, theta_max: f64 },
    #[error("theta search needs at least 8 grid points, got {0}")]
    TooFewGridPoints(usize),
    #[error("refine tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("objective is infinite or trivial at every theta in [{theta_min:e}, {theta_max:e}]")]
    NoAdmissibleTheta { theta_min: f64, theta_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaSearchConfig {
    pub theta_min: f64,
    pub theta_max: f64,
    pub coarse_grid_points: usize,
    pub refine_tolerance: f64,
}

impl ThetaSearchConfig {
    pub fn new(
        theta_min: f64,
        theta_max: f64,
        coarse_grid_points: usize,
        refine_tolerance: f64,
    ) -> Result<Self, SearchError> {
        let config = Self {
            theta_min,
            theta_max,
            coarse_grid_points,
            refine_tolerance,
        };
        config.validate()?;
        Ok(config)
    }

    /// Default range for traffic whose largest per-slot emission is `peak`
    /// bits: `theta * peak` spans `[1e-9, 700]`.
    pub fn for_peak(peak: f64) -> Self {
        let scale = if peak > 0.0 && peak.is_finite() {
            peak.max(1.0)
        } else {
            1.0
        };
        Self {
            theta_min: MIN_EXPONENT / scale,
            theta_max: MAX_EXPONENT / scale,
            coarse_grid_points: 64,
            refine_tolerance: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let ok =
            self.theta_min > 0.0 && self.theta_min < self.theta_max && self.theta_max.is_finite();
        if !ok {
            return Err(SearchError::InvalidRange {
                theta_min: self.theta_min,
                theta_max: self.theta_max,
            });
        }
        if self.coarse_grid_points < 8 {
            return Err(SearchError::TooFewGridPoints(self.coarse_grid_points));
        }
        if self.refine_tolerance.is_nan() || self.refine_tolerance <= 0.0 {
            return Err(SearchError::InvalidTolerance(self.refine_tolerance));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        log_grid(self.theta_min, self.theta_max, self.coarse_grid_points)
    }
}

/// `n` points spaced evenly in `ln` between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| match i {
            0 => lo,
            i if i == n - 1 => hi,
            i => (a + step * i as f64).exp(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaOptimum {
    pub theta: f64,
    pub value: f64,
    /// Set when the best grid point sat on the edge of the range, meaning the
    /// true infimum may lie outside it.
    pub boundary: Option<Boundary>,
    pub evaluations: usize,
}

struct Best {
    theta: f64,
    value: f64,
}

impl Best {
    fn offer(&mut self, theta: f64, value: f64) {
        if !value.is_finite() {
            return;
        }
        if value < self.value || (value == self.value && theta < self.theta) {
            self.theta = theta;
            self.value = value;
        }
    }
}

pub fn minimize_over_theta(
    mut objective: impl FnMut(f64) -> f64,
    config: &ThetaSearchConfig,
) -> Result<ThetaOptimum, SearchError> {
    config.validate()?;
    let grid = config.grid();
    let values: Vec<f64> = grid.iter().map(|&t| objective(t)).collect();
    let mut evaluations = grid.len();

    let mut best = Best {
        theta: f64::INFINITY,
        value: f64::INFINITY,
    };
    let mut best_index = None;
    for (i, (&t, &v)) in grid.iter().zip(&values).enumerate() {
        let before = best.value;
        best.offer(t, v);
        if best.value < before {
            best_index = Some(i);
        }
    }
    let Some(i) = best_index else {
        return Err(SearchError::NoAdmissibleTheta {
            theta_min: config.theta_min,
            theta_max: config.theta_max,
        });
    };

    let boundary = if i == 0 {
        Some(Boundary::Lower)
    } else if i == grid.len() - 1 {
        Some(Boundary::Upper)
    } else {
        None
    };

    let lo = grid[i.saturating_sub(1)].ln();
    let hi = grid[(i + 1).min(grid.len() - 1)].ln();
    evaluations += golden_section(
        |x| {
            let theta = x.exp();
            let v = objective(theta);
            best.offer(theta, v);
            v
        },
        lo,
        hi,
        config.refine_tolerance,
    );

    Ok(ThetaOptimum {
        theta: best.theta,
        value: best.value,
        boundary,
        evaluations,
    })
}

/// Golden-section search on `[a, b]` until the bracket is narrower than `tol`.
/// Returns the number of objective evaluations. On ties the left point is
/// kept, so flat objectives drift toward `a`.
fn golden_section(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> usize {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    const MAX_ITER: usize = 200;

    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut evals = 2;

    while b - a > tol && evals < MAX_ITER {
        if f1 <= f2 || (f1.is_nan() && f2.is_nan()) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        evals += 1;
    }
    evals
}

/// Evaluates `objective` at `n` log-spaced points and returns the best one.
/// Used as the brute-force reference for [`minimize_over_theta`].
pub fn exhaustive_grid_minimum(
    mut objective: impl FnMut(f64) -> f64,
    theta_min: f64,
    theta_max: f64,
    n: usize,
) -> Option<(f64, f64)> {
    let mut best = Best {
        theta: f64::INFINITY,
        value: f64::INFINITY,
    };
    for t in log_grid(theta_min, theta_max, n) {
        best.offer(t, objective(t));
    }
    best.value.is_finite().then_some((best.theta, best.value))
}
