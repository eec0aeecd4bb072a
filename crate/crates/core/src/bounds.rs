//! End-to-end probabilistic backlog and delay bounds for a tandem of `H`
//! hops, from the effective bandwidth `alpha` of the through traffic and the
//! effective capacities `beta_i` of the hops.
//!
//! For a horizon `t` and any `theta > 0`,
//!
//! ```text
//! P{B(t) > x} <= prod_i ( sum_{u=0}^{t} exp(theta*u/2 * (alpha(theta,u) - beta_i(theta,u))) )^(1/H)
//!                * exp(-theta*x / (2H))
//!
//! P{W(t) > d} <= prod_{i<H} ( same per-hop sum )^(1/H)
//!                * ( sum_{u=d}^{t} exp(theta/2 * ((u-d)*alpha(theta,u-d) - u*beta_H(theta,u))) )^(1/H)
//! ```
//!
//! and the bounds are minimized over `theta`. The per-hop sums are evaluated
//! in the log domain. With an infinite horizon and time-invariant envelopes,
//! the sums are geometric and evaluated in closed form.
//!
//! Backlog is in bits and delay in slots. A divergent per-hop series makes the
//! tail bound trivial (probability 1) and the inverted bound infinite; such
//! `theta` are skipped by the optimizer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelope::{
    ArrivalEnvelope, EnvelopeError, ServiceEnvelope, ServiceModel, TrafficModel,
};
use crate::optimize::{
    minimize_over_theta, Boundary, SearchError, ThetaOptimum, ThetaSearchConfig,
};
use crate::series::{self, SeriesSum};

/// Largest delay the infinite-horizon inversion will search for.
const MAX_DELAY_SLOTS: u64 = 1 << 52;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Search(SearchError),
    #[error("a network path needs at least one hop")]
    EmptyPath,
    #[error("violation probability must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("threshold must be nonnegative and finite, got {0}")]
    InvalidThreshold(f64),
    #[error("theta must be positive and finite, got {0}")]
    InvalidTheta(f64),
    #[error("delay threshold {delay} exceeds the horizon of {horizon} slots")]
    DelayBeyondHorizon { delay: u64, horizon: u64 },
    #[error(
        "no admissible theta in [{theta_min:e}, {theta_max:e}]: stability requires \
         C > N*alpha(theta) + M*alpha_c(theta) (per-hop margin beta - alpha at theta_min is {margin_at_theta_min})"
    )]
    Unstable {
        theta_min: f64,
        theta_max: f64,
        margin_at_theta_min: f64,
    },
    #[error("no delay within the {horizon}-slot horizon meets the target at any theta")]
    HorizonTooSmall { horizon: u64 },
}

impl BoundError {
    pub fn is_instability(&self) -> bool {
        matches!(self, BoundError::Unstable { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(u64),
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Backlog,
    Delay,
}

impl BoundKind {
    pub fn unit(&self) -> &'static str {
        match self {
            BoundKind::Backlog => "bits",
            BoundKind::Delay => "slots",
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::Backlog => "backlog",
            BoundKind::Delay => "delay",
        }
    }
}

impl std::fmt::Display for BoundKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Through traffic and the ordered hops it crosses.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkPath<A = TrafficModel, S = ServiceModel> {
    through: A,
    hops: Vec<S>,
}

impl<A, S> NetworkPath<A, S> {
    pub fn new(through: A, hops: Vec<S>) -> Result<Self, BoundError> {
        if hops.is_empty() {
            return Err(BoundError::EmptyPath);
        }
        Ok(Self { through, hops })
    }

    pub fn through(&self) -> &A {
        &self.through
    }

    pub fn hops(&self) -> &[S] {
        &self.hops
    }

    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }
}

impl<A, S: PartialEq> NetworkPath<A, S> {
    pub fn is_homogeneous(&self) -> bool {
        self.hops.windows(2).all(|w| w[0] == w[1])
    }
}

impl<A, S: Clone> NetworkPath<A, S> {
    pub fn homogeneous(through: A, hop: S, hops: usize) -> Result<Self, BoundError> {
        Self::new(through, vec![hop; hops])
    }
}

impl<A: ArrivalEnvelope, S> NetworkPath<A, S> {
    /// Theta range scaled to the peak per-slot emission of the through traffic.
    pub fn default_search(&self) -> ThetaSearchConfig {
        ThetaSearchConfig::for_peak(self.through.peak_rate())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `beta_i - alpha` at `theta_star` for each hop.
    pub per_hop_margins: Vec<f64>,
    pub boundary: Option<Boundary>,
    /// The raw inverted value was negative and was clamped to zero.
    pub clamped_to_zero: bool,
    /// The target was `epsilon = 1`, which every threshold meets, so the value
    /// was set to zero.
    pub trivial_epsilon: bool,
    pub objective_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub kind: BoundKind,
    /// Bits for backlog, slots for delay.
    pub value: f64,
    pub theta_star: f64,
    pub violation_probability: f64,
    pub stable_at_theta_star: bool,
    /// Terms summed per hop at `theta_star`; `None` when the geometric closed
    /// form was used.
    pub truncation_horizon_used: Option<u64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueryTarget {
    /// Bound the violation probability of this threshold (bits or slots).
    Threshold(f64),
    /// Find the smallest threshold violated with at most this probability.
    Epsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundQuery {
    pub kind: BoundKind,
    pub target: QueryTarget,
    pub horizon: Horizon,
    pub theta_search: ThetaSearchConfig,
}

/// Tail bound at a single `theta`, before clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationAtTheta {
    /// May exceed one; equals one when `divergent`.
    pub bound: f64,
    pub log_bound: f64,
    pub divergent: bool,
    pub terms: Option<u64>,
}

impl ViolationAtTheta {
    fn from_log(log_bound: Option<f64>, terms: Option<u64>) -> Self {
        match log_bound {
            Some(l) => Self {
                bound: l.exp(),
                log_bound: l,
                divergent: false,
                terms,
            },
            None => Self {
                bound: 1.0,
                log_bound: 0.0,
                divergent: true,
                terms,
            },
        }
    }

    pub fn clamped(&self) -> f64 {
        self.bound.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct HopSum {
    log_sum: Option<f64>,
    terms: Option<u64>,
}

fn check_theta(theta: f64) -> Result<(), BoundError> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(BoundError::InvalidTheta(theta))
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), BoundError> {
    if epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(BoundError::InvalidEpsilon(epsilon))
    }
}

/// Runs a series whose terms may fail, keeping the first error.
fn run_series<F>(
    horizon: Horizon,
    count_if_finite: u64,
    mut term: F,
) -> Result<SeriesSum, BoundError>
where
    F: FnMut(u64) -> Result<f64, EnvelopeError>,
{
    let mut failure = None;
    let mut wrapped = |k| match term(k) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    };
    let sum = match horizon {
        Horizon::Finite(_) => series::log_sum_finite(count_if_finite, &mut wrapped),
        Horizon::Infinite => series::log_sum_infinite(&mut wrapped),
    };
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(sum),
    }
}

fn hop_sum(sum: SeriesSum) -> HopSum {
    HopSum {
        log_sum: sum.log_sum(),
        terms: Some(sum.terms()),
    }
}

/// `log sum_{u=0}^{t} exp(theta*u/2 * (alpha(theta,u) - beta(theta,u)))`.
fn hop_log_sum<A: ArrivalEnvelope, S: ServiceEnvelope>(
    through: &A,
    hop: &S,
    theta: f64,
    horizon: Horizon,
) -> Result<HopSum, BoundError> {
    if horizon == Horizon::Infinite && through.time_invariant() && hop.time_invariant() {
        let rate = 0.5
            * theta
            * (through.effective_bandwidth(theta, 1)? - hop.effective_capacity(theta, 1)?);
        return Ok(HopSum {
            log_sum: series::log_geometric_series(rate),
            terms: None,
        });
    }
    let count = match horizon {
        Horizon::Finite(t) => t + 1,
        Horizon::Infinite => 0,
    };
    let sum = run_series(horizon, count, |u| {
        if u == 0 {
            return Ok(0.0);
        }
        let a = through.effective_bandwidth(theta, u)?;
        let b = hop.effective_capacity(theta, u)?;
        Ok(0.5 * theta * u as f64 * (a - b))
    })?;
    Ok(hop_sum(sum))
}

/// `log sum_{u=d}^{t} exp(theta/2 * ((u-d)*alpha(theta,u-d) - u*beta(theta,u)))`.
fn last_hop_delay_log_sum<A: ArrivalEnvelope, S: ServiceEnvelope>(
    through: &A,
    hop: &S,
    theta: f64,
    delay: u64,
    horizon: Horizon,
) -> Result<HopSum, BoundError> {
    let service = |u: u64| -> Result<f64, EnvelopeError> {
        if u == 0 {
            Ok(0.0)
        } else {
            Ok(u as f64 * hop.effective_capacity(theta, u)?)
        }
    };
    if horizon == Horizon::Infinite && through.time_invariant() && hop.time_invariant() {
        let a = through.effective_bandwidth(theta, 1)?;
        let b = hop.effective_capacity(theta, 1)?;
        let shift = -0.5 * theta * service(delay)?;
        return Ok(HopSum {
            log_sum: series::log_geometric_series(0.5 * theta * (a - b)).map(|g| shift + g),
            terms: None,
        });
    }
    let count = match horizon {
        Horizon::Finite(t) => t - delay + 1,
        Horizon::Infinite => 0,
    };
    let sum = run_series(horizon, count, |k| {
        let arrivals = if k == 0 {
            0.0
        } else {
            k as f64 * through.effective_bandwidth(theta, k)?
        };
        Ok(0.5 * theta * (arrivals - service(k + delay)?))
    })?;
    Ok(hop_sum(sum))
}

fn max_terms(sums: &[HopSum]) -> Option<u64> {
    sums.iter().filter_map(|s| s.terms).max()
}

/// Mean of the per-hop log sums, or `None` if any diverges.
fn mean_log(sums: &[HopSum]) -> Option<f64> {
    // identical hops: the geometric mean of equal factors is the factor itself
    let first = sums.first()?.log_sum?;
    if sums.iter().all(|s| s.log_sum == Some(first)) {
        return Some(first);
    }
    let mut total = 0.0;
    for s in sums {
        total += s.log_sum?;
    }
    Some(total / sums.len() as f64)
}

fn upstream_sums<A: ArrivalEnvelope, S: ServiceEnvelope>(
    path: &NetworkPath<A, S>,
    theta: f64,
    horizon: Horizon,
    skip_last: bool,
) -> Result<Vec<HopSum>, BoundError> {
    let hops = if skip_last {
        &path.hops[..path.hops.len() - 1]
    } else {
        &path.hops[..]
    };
    hops.iter()
        .map(|hop| hop_log_sum(&path.through, hop, theta, horizon))
        .collect()
}

/// Backlog tail bound `P{B(t) > x}` at a fixed `theta`.
pub fn backlog_violation_at_theta<A: ArrivalEnvelope, S: ServiceEnvelope>(
    path: &NetworkPath<A, S>,
    x: f64,
    horizon: Horizon,
    theta: f64,
) -> Result<ViolationAtTheta, BoundError> {
    check_theta(theta)?;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(BoundError::InvalidThreshold(x));
    }
    let h = path.hop_count() as f64;
    let sums = upstream_sums(path, theta, horizon, false)?;
    let log_bound = mean_log(&sums).map(|l| l - theta * x / (2.0 * h));
    Ok(ViolationAtTheta::from_log(log_bound, max_terms(&sums)))
}

/// Delay tail bound `P{W(t) > d}` at a fixed `theta`.
pub fn delay_violation_at_theta<A: ArrivalEnvelope, S: ServiceEnvelope>(
    path: &NetworkPath<A, S>,
    d: u64,
    horizon: Horizon,
    theta: f64,
) -> Result<ViolationAtTheta, BoundError> {
    check_theta(theta)?;
    if let Horizon::Finite(t) = horizon {
        if d > t {
            return Err(BoundError::DelayBeyondHorizon {
                delay: d,
                horizon: t,
            });
        }
    }
    let mut sums = upstream_sums(path, theta, horizon, true)?;
    let last = path.hops.last().expect("path has at least one hop");
    sums.push(last_hop_delay_log_sum(
        &path.through,
        last,
        theta,
        d,
        horizon,
    )?);
    Ok(ViolationAtTheta::from_log(
        mean_log(&sums),
        max_terms(&sums),
    ))
}

/// Backlog threshold met with probability at least `1 - epsilon` at a fixed
/// `theta`: `x = (2/theta) * sum_i log S_i - (2H/theta) * log(epsilon)`.
/// Infinite when a per-hop series diverges; not clamped.
pub fn backlog_at_theta<A: ArrivalEnvelope, S: ServiceEnvelope>(
    path: &NetworkPath<A, S>,
    epsilon: f64,
    horizon: Horizon,
    theta: f64,
) -> Result<f64, BoundError> {
    check_theta(theta)?;
    check_epsilon(epsilon)?;
    let h = path.hop_count() as f64;
    let sums = upstream_sums(path, theta, horizon, false)?;
    Ok(match mean_log(&sums) {
        Some(l) => 2.0 * h / theta * (l - epsilon.ln()),
        None => f64::INFINITY,
    })
}

/// Smallest integer delay whose tail bound at `theta` is at most `epsilon`,
/// found by bisection (the bound is nonincreasing in the delay). `None` when
/// the series diverge or no delay within the horizon qualifies.
pub fn delay_at_theta<A: ArrivalEnvelope, S: ServiceEnvelope>(
    path: &NetworkPath<A, S>,
    epsilon: f64,
    horizon: Horizon,
    theta: f64,
) -> Result<Option<u64>, BoundError> {
    check_theta(theta)?;
    check_epsilon(epsilon)?;
    let target = epsilon.ln();
    let h = path.hop_count() as f64;
    let upstream = upstream_sums(path, theta, horizon, true)?;
    let Some(upstream_log) = upstream.iter().map(|s| s.log_sum).sum::<Option<f64>>() else {
        return Ok(None);
    };
    let last = path.hops.last().expect("path has at least one hop");
    let meets = |d: u64| -> Result<Option<bool>, BoundError> {
        let tail = last_hop_delay_log_sum(&path.through, last, theta, d, horizon)?;
        Ok(tail.log_sum.map(|l| (upstream_log + l) / h <= target))
    };

    match meets(0)? {
        None => return Ok(None),
        Some(true) => return Ok(Some(0)),
        Some(false) => {}
    }
    let hi = match horizon {
        Horizon::Finite(t) => {
            if meets(t)? != Some(true) {
                return Ok(None);
            }
            t
        }
        Horizon::Infinite => {
            let mut hi = 1u64;
            loop {
                match meets(hi)? {
                    Some(true) => break hi,
                    _ if hi >= MAX_DELAY_SLOTS => return Ok(None),
                    _ => hi *= 2,
                }
            }
        }
    };
    // meets(lo) is false, meets(hi) is true
    let (mut lo, mut hi) = (0u64, hi);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if meets(mid)? == Some(true) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Runs the optimizer on a fallible objective, mapping errors back out.
fn optimize<F>(
    mut objective: F,
    config: &ThetaSearchConfig,
) -> Result<Result<ThetaOptimum, SearchError>, BoundError>
where
    F: FnMut(f64) -> Result<f64, BoundError>,
{
    let mut failure = None;
    let outcome = minimize_over_theta(
        |theta| match objective(theta) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        },
        config,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(outcome),
    }
}

fn hop_margins<A: ArrivalEnvelope, S: ServiceEnvelope>(
    path: &NetworkPath<A, S>,
    theta: f64,
    t: u64,
) -> Result<Vec<f64>, BoundError> {
    let t = t.max(1);
    let a = path.through.effective_bandwidth(theta, t)?;
    path.hops
        .iter()
        .map(|hop| Ok(hop.effective_capacity(theta, t)? - a))
        .collect()
}

fn margin_t(horizon: Horizon, terms: Option<u64>) -> u64 {
    match (horizon, terms) {
        (Horizon::Finite(t), _) => t,
        (Horizon::Infinite, Some(n)) => n,
        (Horizon::Infinite, None) => 1,
    }
}

fn unstable<A: ArrivalEnvelope, S: ServiceEnvelope>(
    path: &NetworkPath<A, S>,
    config: &ThetaSearchConfig,
) -> Result<BoundError, BoundError> {
    let margins = hop_margins(path, config.theta_min, 1)?;
    Ok(BoundError::Unstable {
        theta_min: config.theta_min,
        theta_max: config.theta_max,
        margin_at_theta_min: margins.into_iter().fold(f64::INFINITY, f64::min),
    })
}

fn search_failure<A: ArrivalEnvelope, S: ServiceEnvelope>(
    path: &NetworkPath<A, S>,
    config: &ThetaSearchConfig,
    err: SearchError,
) -> BoundError {
    match err {
        SearchError::NoAdmissibleTheta { .. } => match unstable(path, config) {
            Ok(e) | Err(e) => e,
        },
        other => BoundError::Search(other),
    }
}

struct Finished {
    kind: BoundKind,
    raw_value: f64,
    violation_probability: f64,
    epsilon_target: Option<f64>,
    optimum: ThetaOptimum,
    terms: Option<u64>,
    margins: Vec<f64>,
}

impl Finished {
    fn into_result(self) -> BoundResult {
        let clamped_to_zero = self.raw_value < 0.0;
        let trivial_epsilon = self.epsilon_target == Some(1.0);
        let value = if trivial_epsilon {
            0.0
        } else {
            self.raw_value.max(0.0)
        };
        BoundResult {
            kind: self.kind,
            value,
            theta_star: self.optimum.theta,
            violation_probability: self.violation_probability.clamp(0.0, 1.0),
            stable_at_theta_star: self.margins.iter().all(|&m| m > 0.0),
            truncation_horizon_used: self.terms,
            diagnostics: Diagnostics {
                per_hop_margins: self.margins,
                boundary: self.optimum.boundary,
                clamped_to_zero,
                trivial_epsilon,
                objective_evaluations: self.optimum.evaluations,
            },
        }
    }
}

/// Smallest backlog (bits) exceeded with probability at most `epsilon`,
/// minimized over `theta`.
pub fn backlog_bound<A: ArrivalEnvelope, S: ServiceEnvelope>(
    path: &NetworkPath<A, S>,
    epsilon: f64,
    horizon: Horizon,
    search: &ThetaSearchConfig,
) -> Result<BoundResult, BoundError> {
    check_epsilon(epsilon)?;
    let optimum = optimize(
        |theta| backlog_at_theta(path, epsilon, horizon, theta),
        search,
    )?
    .map_err(|e| search_failure(path, search, e))?;
    let at = backlog_violation_at_theta(path, optimum.value.max(0.0), horizon, optimum.theta)?;
    Ok(Finished {
        kind: BoundKind::Backlog,
        raw_value: optimum.value,
        violation_probability: epsilon,
        epsilon_target: Some(epsilon),
        optimum,
        terms: at.terms,
        margins: hop_margins(path, optimum.theta, margin_t(horizon, at.terms))?,
    }
    .into_result())
}

/// Smallest integer delay (slots) exceeded with probability at most
/// `epsilon`, minimized over `theta`.
pub fn delay_bound<A: ArrivalEnvelope, S: ServiceEnvelope>(
    path: &NetworkPath<A, S>,
    epsilon: f64,
    horizon: Horizon,
    search: &ThetaSearchConfig,
) -> Result<BoundResult, BoundError> {
    check_epsilon(epsilon)?;
    let mut convergent_somewhere = false;
    let outcome = optimize(
        |theta| {
            let d = delay_at_theta(path, epsilon, horizon, theta)?;
            if d.is_none() && !convergent_somewhere {
                let sums = upstream_sums(path, theta, horizon, false)?;
                convergent_somewhere = sums.iter().all(|s| s.log_sum.is_some());
            }
            Ok(d.map_or(f64::INFINITY, |d| d as f64))
        },
        search,
    )?;
    let optimum = match (outcome, horizon) {
        (Ok(o), _) => o,
        (Err(SearchError::NoAdmissibleTheta { .. }), Horizon::Finite(t))
            if convergent_somewhere =>
        {
            return Err(BoundError::HorizonTooSmall { horizon: t });
        }
        (Err(e), _) => return Err(search_failure(path, search, e)),
    };
    let at = delay_violation_at_theta(path, optimum.value as u64, horizon, optimum.theta)?;
    Ok(Finished {
        kind: BoundKind::Delay,
        raw_value: optimum.value,
        violation_probability: epsilon,
        epsilon_target: Some(epsilon),
        optimum,
        terms: at.terms,
        margins: hop_margins(path, optimum.theta, margin_t(horizon, at.terms))?,
    }
    .into_result())
}

/// Objective for tail-probability queries: `log` bound, or infinity where the
/// bound is divergent or not below one.
fn informative(v: ViolationAtTheta) -> f64 {
    if v.divergent || v.log_bound >= 0.0 {
        f64::INFINITY
    } else {
        v.log_bound
    }
}

/// `inf_theta` of the backlog tail bound at threshold `x` bits.
pub fn backlog_violation<A: ArrivalEnvelope, S: ServiceEnvelope>(
    path: &NetworkPath<A, S>,
    x: f64,
    horizon: Horizon,
    search: &ThetaSearchConfig,
) -> Result<BoundResult, BoundError> {
    let optimum = optimize(
        |theta| backlog_violation_at_theta(path, x, horizon, theta).map(informative),
        search,
    )?
    .map_err(|e| search_failure(path, search, e))?;
    let at = backlog_violation_at_theta(path, x, horizon, optimum.theta)?;
    Ok(Finished {
        kind: BoundKind::Backlog,
        raw_value: x,
        violation_probability: at.clamped(),
        epsilon_target: None,
        optimum,
        terms: at.terms,
        margins: hop_margins(path, optimum.theta, margin_t(horizon, at.terms))?,
    }
    .into_result())
}

/// `inf_theta` of the delay tail bound at threshold `d` slots.
pub fn delay_violation<A: ArrivalEnvelope, S: ServiceEnvelope>(
    path: &NetworkPath<A, S>,
    d: u64,
    horizon: Horizon,
    search: &ThetaSearchConfig,
) -> Result<BoundResult, BoundError> {
    let optimum = optimize(
        |theta| delay_violation_at_theta(path, d, horizon, theta).map(informative),
        search,
    )?
    .map_err(|e| search_failure(path, search, e))?;
    let at = delay_violation_at_theta(path, d, horizon, optimum.theta)?;
    Ok(Finished {
        kind: BoundKind::Delay,
        raw_value: d as f64,
        violation_probability: at.clamped(),
        epsilon_target: None,
        optimum,
        terms: at.terms,
        margins: hop_margins(path, optimum.theta, margin_t(horizon, at.terms))?,
    }
    .into_result())
}

/// Dispatches a [`BoundQuery`].
pub fn evaluate<A: ArrivalEnvelope, S: ServiceEnvelope>(
    path: &NetworkPath<A, S>,
    query: &BoundQuery,
) -> Result<BoundResult, BoundError> {
    let search = &query.theta_search;
    match (query.kind, query.target) {
        (BoundKind::Backlog, QueryTarget::Epsilon(e)) => {
            backlog_bound(path, e, query.horizon, search)
        }
        (BoundKind::Delay, QueryTarget::Epsilon(e)) => delay_bound(path, e, query.horizon, search),
        (BoundKind::Backlog, QueryTarget::Threshold(x)) => {
            backlog_violation(path, x, query.horizon, search)
        }
        (BoundKind::Delay, QueryTarget::Threshold(d)) => {
            if !(d >= 0.0 && d.fract() == 0.0 && d < MAX_DELAY_SLOTS as f64) {
                return Err(BoundError::InvalidThreshold(d));
            }
            delay_violation(path, d as u64, query.horizon, search)
        }
    }
}

/// `N` through flows crossing `H` identical hops of capacity `C`, each shared
/// with `M` fresh cross flows, under stationary time-invariant envelopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousTandem {
    pub through_count: u32,
    pub through: TrafficModel,
    pub cross_count: u32,
    pub cross: TrafficModel,
    /// Bits per slot.
    pub capacity: f64,
    pub hops: u32,
}

impl HomogeneousTandem {
    pub fn validate(&self) -> Result<(), BoundError> {
        self.through.validate()?;
        self.cross.validate()?;
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return Err(EnvelopeError::InvalidCapacity(self.capacity).into());
        }
        if self.hops == 0 {
            return Err(BoundError::EmptyPath);
        }
        Ok(())
    }

    /// `C - N*alpha(theta) - M*alpha_c(theta)`.
    pub fn stability_margin(&self, theta: f64) -> Result<f64, BoundError> {
        stability_margin(
            self.through_count,
            &self.through,
            self.cross_count,
            &self.cross,
            self.capacity,
            theta,
        )
    }

    /// Long-run utilization `(N*m + M*m_c) / C` of each hop.
    pub fn utilization(&self) -> f64 {
        (f64::from(self.through_count) * self.through.mean_rate()
            + f64::from(self.cross_count) * self.cross.mean_rate())
            / self.capacity
    }

    /// The same network as a general path with aggregate through traffic and
    /// leftover service at every hop.
    pub fn to_path(&self) -> Result<NetworkPath, BoundError> {
        self.validate()?;
        let through = TrafficModel::aggregate(self.through_count, self.through.clone())?;
        let hop = ServiceModel::leftover(self.capacity, self.cross_count, self.cross.clone())?;
        NetworkPath::homogeneous(through, hop, self.hops as usize)
    }

    pub fn default_search(&self) -> ThetaSearchConfig {
        ThetaSearchConfig::for_peak(f64::from(self.through_count.max(1)) * self.through.peak_rate())
    }

    fn rates(&self, theta: f64) -> Result<(f64, f64), BoundError> {
        let margin = self.stability_margin(theta)?;
        let leftover = self.capacity
            - f64::from(self.cross_count) * cross_rate(&self.cross, self.cross_count, theta)?;
        Ok((margin, leftover))
    }
}

fn cross_rate(cross: &TrafficModel, count: u32, theta: f64) -> Result<f64, EnvelopeError> {
    if count == 0 {
        Ok(0.0)
    } else {
        cross.effective_bandwidth(theta, 1)
    }
}

/// `C - N*alpha(theta) - M*alpha_c(theta)`; positive margins are required for
/// the stationary bounds to exist.
pub fn stability_margin(
    through_count: u32,
    through: &TrafficModel,
    cross_count: u32,
    cross: &TrafficModel,
    capacity: f64,
    theta: f64,
) -> Result<f64, BoundError> {
    check_theta(theta)?;
    Ok(capacity
        - f64::from(through_count) * cross_rate(through, through_count, theta)?
        - f64::from(cross_count) * cross_rate(cross, cross_count, theta)?)
}

/// `log(1 / (epsilon * (1 - exp(-theta * margin / 2))))`, infinite for
/// nonpositive margins.
fn closed_form_log_term(theta: f64, margin: f64, epsilon: f64) -> f64 {
    if margin > 0.0 {
        -epsilon.ln() - series::log1m_exp(-0.5 * theta * margin)
    } else {
        f64::INFINITY
    }
}

/// `(2H/theta) * log(1 / (epsilon * (1 - exp(-theta/2 * (C - N*alpha - M*alpha_c)))))`.
pub fn closed_form_backlog_at_theta(
    tandem: &HomogeneousTandem,
    epsilon: f64,
    theta: f64,
) -> Result<f64, BoundError> {
    check_epsilon(epsilon)?;
    let margin = tandem.stability_margin(theta)?;
    Ok(2.0 * f64::from(tandem.hops) / theta * closed_form_log_term(theta, margin, epsilon))
}

/// `(2H / (theta * (C - M*alpha_c))) * log(1 / (epsilon * (1 - exp(-theta/2 * (C - N*alpha - M*alpha_c)))))`.
pub fn closed_form_delay_at_theta(
    tandem: &HomogeneousTandem,
    epsilon: f64,
    theta: f64,
) -> Result<f64, BoundError> {
    check_epsilon(epsilon)?;
    let (margin, leftover) = tandem.rates(theta)?;
    if leftover <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(2.0 * f64::from(tandem.hops) / (theta * leftover)
        * closed_form_log_term(theta, margin, epsilon))
}

fn closed_form(
    tandem: &HomogeneousTandem,
    kind: BoundKind,
    epsilon: f64,
    search: &ThetaSearchConfig,
) -> Result<BoundResult, BoundError> {
    tandem.validate()?;
    check_epsilon(epsilon)?;
    let objective = |theta| match kind {
        BoundKind::Backlog => closed_form_backlog_at_theta(tandem, epsilon, theta),
        BoundKind::Delay => closed_form_delay_at_theta(tandem, epsilon, theta),
    };
    let optimum = optimize(objective, search)?.map_err(|e| match e {
        SearchError::NoAdmissibleTheta {
            theta_min,
            theta_max,
        } => BoundError::Unstable {
            theta_min,
            theta_max,
            margin_at_theta_min: tandem.stability_margin(theta_min).unwrap_or(f64::NAN),
        },
        other => BoundError::Search(other),
    })?;
    let margin = tandem.stability_margin(optimum.theta)?;
    Ok(Finished {
        kind,
        raw_value: optimum.value,
        violation_probability: epsilon,
        epsilon_target: Some(epsilon),
        optimum,
        terms: None,
        margins: vec![margin; tandem.hops as usize],
    }
    .into_result())
}

/// Stationary end-to-end backlog bound (bits) for a homogeneous tandem.
pub fn closed_form_backlog(
    tandem: &HomogeneousTandem,
    epsilon: f64,
    search: &ThetaSearchConfig,
) -> Result<BoundResult, BoundError> {
    closed_form(tandem, BoundKind::Backlog, epsilon, search)
}

/// Stationary end-to-end delay bound (slots, real-valued) for a homogeneous
/// tandem.
pub fn closed_form_delay(
    tandem: &HomogeneousTandem,
    epsilon: f64,
    search: &ThetaSearchConfig,
) -> Result<BoundResult, BoundError> {
    closed_form(tandem, BoundKind::Delay, epsilon, search)
}
