use statrs::function::beta::beta_reg;

use super::tandem::Histogram;

pub const CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub exceeding: u64,
    pub samples: u64,
    /// Fraction of samples strictly above the threshold.
    pub frequency: f64,
    /// One-sided 95% Clopper–Pearson upper limit on the exceedance probability.
    pub upper_confidence: f64,
    /// One-sided 95% Clopper–Pearson lower limit.
    pub lower_confidence: f64,
}

/// Empirical `P{X > threshold}` with exact binomial confidence limits.
/// Panics on an empty histogram.
pub fn empirical_tail(samples: &Histogram, threshold: f64) -> TailEstimate {
    assert!(!samples.is_empty(), "empirical tail of an empty sample");
    let n = samples.total();
    let k = samples.count_above(threshold);
    TailEstimate {
        exceeding: k,
        samples: n,
        frequency: k as f64 / n as f64,
        upper_confidence: clopper_pearson_upper(k, n, CONFIDENCE),
        lower_confidence: clopper_pearson_lower(k, n, CONFIDENCE),
    }
}

/// Solves `I_x(a, b) = target` for `x` by bisection; `I` is increasing in `x`.
fn beta_quantile(a: f64, b: f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// One-sided upper limit `p` with `P{Bin(n, p) <= k} = 1 - confidence`.
pub fn clopper_pearson_upper(k: u64, n: u64, confidence: f64) -> f64 {
    assert!(k <= n && n > 0);
    if k == n {
        return 1.0;
    }
    if k == 0 {
        return -((1.0 - confidence).ln() / n as f64).exp_m1();
    }
    beta_quantile((k + 1) as f64, (n - k) as f64, confidence)
}

/// One-sided lower limit `p` with `P{Bin(n, p) >= k} = 1 - confidence`.
pub fn clopper_pearson_lower(k: u64, n: u64, confidence: f64) -> f64 {
    assert!(k <= n && n > 0);
    if k == 0 {
        return 0.0;
    }
    if k == n {
        return (1.0 - confidence).powf(1.0 / n as f64);
    }
    beta_quantile(k as f64, (n - k + 1) as f64, 1.0 - confidence)
}
