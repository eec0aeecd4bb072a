//! Log-domain summation of the nonnegative series that appear in the tail
//! bounds. Exponents reach several hundred in magnitude, so sums are carried
//! as `log(sum)` throughout.

/// Relative size below which a term no longer counts as contributing.
pub const NEGLIGIBLE_TERM: f64 = 1e-12;
/// Consecutive negligible terms required before an infinite series is cut.
pub const NEGLIGIBLE_RUN: u32 = 10;
/// Hard cap on the number of terms summed for an infinite series.
pub const MAX_TERMS: u64 = 1_000_000;

/// Running `log(sum(exp(x_i)))`.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    // sum of exp(x_i - max)
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.scaled == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// `log(1 - exp(x))` for `x < 0`, accurate near both ends.
pub fn log1m_exp(x: f64) -> f64 {
    debug_assert!(x < 0.0);
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `log(sum_{k=0}^{∞} exp(rate * k)) = -log(1 - exp(rate))`, or `None` when the
/// series diverges (`rate >= 0`).
pub fn log_geometric_series(rate: f64) -> Option<f64> {
    if rate < 0.0 {
        Some(-log1m_exp(rate))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeriesSum {
    /// `log` of the sum and the number of terms that were added.
    Converged {
        log_sum: f64,
        terms: u64,
    },
    Divergent {
        terms: u64,
    },
}

impl SeriesSum {
    pub fn log_sum(&self) -> Option<f64> {
        match self {
            SeriesSum::Converged { log_sum, .. } => Some(*log_sum),
            SeriesSum::Divergent { .. } => None,
        }
    }

    pub fn terms(&self) -> u64 {
        match self {
            SeriesSum::Converged { terms, .. } | SeriesSum::Divergent { terms } => *terms,
        }
    }
}

/// Sums `exp(log_term(k))` for `k = 0..count` (all of them).
pub fn log_sum_finite(count: u64, mut log_term: impl FnMut(u64) -> f64) -> SeriesSum {
    let mut acc = LogSumExp::new();
    for k in 0..count {
        let x = log_term(k);
        if x.is_nan() || x == f64::INFINITY {
            return SeriesSum::Divergent { terms: k + 1 };
        }
        acc.add(x);
    }
    SeriesSum::Converged {
        log_sum: acc.value(),
        terms: count,
    }
}

/// Sums `exp(log_term(k))` for `k = 0, 1, ...` until the last
/// [`NEGLIGIBLE_RUN`] terms were each below [`NEGLIGIBLE_TERM`] of the partial
/// sum. Reaching [`MAX_TERMS`] while terms are still growing counts as
/// divergence; reaching it with shrinking terms returns the partial sum.
pub fn log_sum_infinite(mut log_term: impl FnMut(u64) -> f64) -> SeriesSum {
    let cutoff = NEGLIGIBLE_TERM.ln();
    let mut acc = LogSumExp::new();
    let mut run = 0;
    let mut prev = f64::NEG_INFINITY;
    for k in 0..MAX_TERMS {
        let x = log_term(k);
        if x.is_nan() || x == f64::INFINITY {
            return SeriesSum::Divergent { terms: k + 1 };
        }
        acc.add(x);
        if x - acc.value() < cutoff {
            run += 1;
            if run >= NEGLIGIBLE_RUN {
                return SeriesSum::Converged {
                    log_sum: acc.value(),
                    terms: k + 1,
                };
            }
        } else {
            run = 0;
        }
        if k + 1 == MAX_TERMS && x >= prev {
            return SeriesSum::Divergent { terms: MAX_TERMS };
        }
        prev = x;
    }
    SeriesSum::Converged {
        log_sum: acc.value(),
        terms: MAX_TERMS,
    }
}
