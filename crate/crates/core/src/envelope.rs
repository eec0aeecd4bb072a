//! Effective-bandwidth descriptions of arrival traffic and effective-capacity
//! descriptions of per-hop service.
//!
//! Everything here works in internal units: data in bits, time in slots, and
//! `theta` in 1/bit so that `theta * A(t)` is dimensionless. Rates are bits per
//! slot. Conversion from user-facing bit/s and seconds happens in
//! [`crate::scenario`].
//!
//! The effective bandwidth of an arrival process `A` is
//! `alpha(theta, t) = log E[exp(theta * A(t))] / (theta * t)` and the effective
//! capacity of a service process `S` is
//! `beta(theta, t) = -log E[exp(-theta * S(t))] / (theta * t)`.
//! All variants provided here are time-invariant upper forms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvelopeError {
    #[error("theta must be a positive finite number, got {0}")]
    NonPositiveTheta(f64),
    #[error("interval length must be at least one slot")]
    ZeroInterval,
    #[error("peak rate must be positive and finite, got {0}")]
    InvalidPeakRate(f64),
    #[error("transition rate `{name}` must be nonnegative and finite, got {value}")]
    InvalidTransitionRate { name: &'static str, value: f64 },
    #[error("on/off source with both transition rates zero has no stationary distribution; use a constant-rate model instead")]
    DegenerateMmoo,
    #[error("constant rate must be nonnegative and finite, got {0}")]
    InvalidRate(f64),
    #[error("aggregate flow count must be at least one")]
    EmptyAggregate,
    #[error("server capacity must be positive and finite, got {0}")]
    InvalidCapacity(f64),
}

fn check_theta(theta: f64) -> Result<(), EnvelopeError> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(EnvelopeError::NonPositiveTheta(theta))
    }
}

fn check_interval(t: u64) -> Result<(), EnvelopeError> {
    if t == 0 {
        Err(EnvelopeError::ZeroInterval)
    } else {
        Ok(())
    }
}

/// Two-state Markov-modulated on-off source.
///
/// While on, the source emits `peak_rate` bits per slot; while off it is
/// silent. `on_to_off` is the rate of leaving the on state (the reciprocal of
/// the mean on time in slots), `off_to_on` the rate of leaving the off state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmooParams {
    peak_rate: f64,
    on_to_off: f64,
    off_to_on: f64,
}

impl MmooParams {
    pub fn new(peak_rate: f64, on_to_off: f64, off_to_on: f64) -> Result<Self, EnvelopeError> {
        if !(peak_rate > 0.0 && peak_rate.is_finite()) {
            return Err(EnvelopeError::InvalidPeakRate(peak_rate));
        }
        for (name, value) in [("on_to_off", on_to_off), ("off_to_on", off_to_on)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(EnvelopeError::InvalidTransitionRate { name, value });
            }
        }
        if on_to_off == 0.0 && off_to_on == 0.0 {
            return Err(EnvelopeError::DegenerateMmoo);
        }
        Ok(Self {
            peak_rate,
            on_to_off,
            off_to_on,
        })
    }

    /// Builds the source from mean holding times (in slots). An infinite mean
    /// holding time maps to a zero leaving rate.
    pub fn from_holding_times(
        peak_rate: f64,
        mean_on: f64,
        mean_off: f64,
    ) -> Result<Self, EnvelopeError> {
        Self::new(peak_rate, 1.0 / mean_on, 1.0 / mean_off)
    }

    pub fn peak_rate(&self) -> f64 {
        self.peak_rate
    }

    pub fn on_to_off(&self) -> f64 {
        self.on_to_off
    }

    pub fn off_to_on(&self) -> f64 {
        self.off_to_on
    }

    /// Stationary probability of the on state.
    pub fn on_probability(&self) -> f64 {
        self.off_to_on / (self.on_to_off + self.off_to_on)
    }

    pub fn mean_rate(&self) -> f64 {
        mmoo_mean_rate(self)
    }

    pub fn effective_bandwidth(&self, theta: f64) -> Result<f64, EnvelopeError> {
        mmoo_effective_bandwidth(self, theta)
    }
}

/// Mean rate `P * r01 / (r10 + r01)` of an on-off source.
pub fn mmoo_mean_rate(params: &MmooParams) -> f64 {
    params.peak_rate * params.on_probability()
}

/// Time-invariant effective bandwidth of an on-off source:
///
/// ```text
/// alpha(theta) = (P*theta - r10 - r01 + sqrt((P*theta - r10 + r01)^2 + 4*r10*r01)) / (2*theta)
/// ```
///
/// For small `theta` the numerator cancels badly, so when `P*theta - r10 - r01`
/// is negative the equivalent rationalized form `2*r01*P / (s - a)` is used.
pub fn mmoo_effective_bandwidth(params: &MmooParams, theta: f64) -> Result<f64, EnvelopeError> {
    check_theta(theta)?;
    let MmooParams {
        peak_rate: p,
        on_to_off: r10,
        off_to_on: r01,
    } = *params;
    let pt = p * theta;
    let a = pt - r10 - r01;
    let s = (pt - r10 + r01).hypot(2.0 * (r10 * r01).sqrt());
    if a >= 0.0 {
        Ok((a + s) / (2.0 * theta))
    } else {
        // (a + s)(s - a) = s^2 - a^2 = 4 * r01 * P * theta
        Ok(2.0 * r01 * p / (s - a))
    }
}

/// An arrival process described by its effective bandwidth.
pub trait ArrivalEnvelope {
    fn effective_bandwidth(&self, theta: f64, t: u64) -> Result<f64, EnvelopeError>;

    /// True when `effective_bandwidth` does not depend on `t`.
    fn time_invariant(&self) -> bool {
        false
    }

    /// Largest number of bits the process can emit in one slot; used to scale
    /// the default theta search range.
    fn peak_rate(&self) -> f64;
}

/// A service process described by its effective capacity.
pub trait ServiceEnvelope {
    fn effective_capacity(&self, theta: f64, t: u64) -> Result<f64, EnvelopeError>;

    fn time_invariant(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficModel {
    Mmoo(MmooParams),
    ConstantRate(f64),
    /// `count` independent copies of `inner`.
    Aggregate {
        count: u32,
        inner: Box<TrafficModel>,
    },
}

impl TrafficModel {
    pub fn constant(rate: f64) -> Result<Self, EnvelopeError> {
        let model = TrafficModel::ConstantRate(rate);
        model.validate()?;
        Ok(model)
    }

    pub fn aggregate(count: u32, inner: TrafficModel) -> Result<Self, EnvelopeError> {
        let model = TrafficModel::Aggregate {
            count,
            inner: Box::new(inner),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), EnvelopeError> {
        match self {
            TrafficModel::Mmoo(p) => {
                MmooParams::new(p.peak_rate, p.on_to_off, p.off_to_on).map(|_| ())
            }
            TrafficModel::ConstantRate(r) => {
                if *r >= 0.0 && r.is_finite() {
                    Ok(())
                } else {
                    Err(EnvelopeError::InvalidRate(*r))
                }
            }
            TrafficModel::Aggregate { count, inner } => {
                if *count == 0 {
                    return Err(EnvelopeError::EmptyAggregate);
                }
                inner.validate()
            }
        }
    }

    pub fn mean_rate(&self) -> f64 {
        match self {
            TrafficModel::Mmoo(p) => p.mean_rate(),
            TrafficModel::ConstantRate(r) => *r,
            TrafficModel::Aggregate { count, inner } => f64::from(*count) * inner.mean_rate(),
        }
    }

    /// Effective bandwidth at `theta` over an interval of `t` slots.
    pub fn effective_bandwidth(&self, theta: f64, t: u64) -> Result<f64, EnvelopeError> {
        traffic_effective_bandwidth(self, theta, t)
    }
}

pub fn traffic_effective_bandwidth(
    model: &TrafficModel,
    theta: f64,
    t: u64,
) -> Result<f64, EnvelopeError> {
    check_theta(theta)?;
    check_interval(t)?;
    match model {
        TrafficModel::Mmoo(p) => mmoo_effective_bandwidth(p, theta),
        TrafficModel::ConstantRate(r) => Ok(*r),
        TrafficModel::Aggregate { count, inner } => {
            Ok(f64::from(*count) * traffic_effective_bandwidth(inner, theta, t)?)
        }
    }
}

impl ArrivalEnvelope for TrafficModel {
    fn effective_bandwidth(&self, theta: f64, t: u64) -> Result<f64, EnvelopeError> {
        traffic_effective_bandwidth(self, theta, t)
    }

    fn time_invariant(&self) -> bool {
        true
    }

    fn peak_rate(&self) -> f64 {
        match self {
            TrafficModel::Mmoo(p) => p.peak_rate,
            TrafficModel::ConstantRate(r) => *r,
            TrafficModel::Aggregate { count, inner } => f64::from(*count) * inner.peak_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceModel {
    ConstantServer {
        capacity: f64,
    },
    /// Service left to the through traffic at a work-conserving server of rate
    /// `capacity` shared with `cross_count` independent cross flows. The
    /// effective capacity is `C - M * alpha_c(theta, t)` and can be negative.
    Leftover {
        capacity: f64,
        cross_count: u32,
        cross: TrafficModel,
    },
}

impl ServiceModel {
    pub fn constant(capacity: f64) -> Result<Self, EnvelopeError> {
        let model = ServiceModel::ConstantServer { capacity };
        model.validate()?;
        Ok(model)
    }

    pub fn leftover(
        capacity: f64,
        cross_count: u32,
        cross: TrafficModel,
    ) -> Result<Self, EnvelopeError> {
        let model = ServiceModel::Leftover {
            capacity,
            cross_count,
            cross,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn capacity(&self) -> f64 {
        match self {
            ServiceModel::ConstantServer { capacity } | ServiceModel::Leftover { capacity, .. } => {
                *capacity
            }
        }
    }

    pub fn validate(&self) -> Result<(), EnvelopeError> {
        let capacity = self.capacity();
        if !(capacity > 0.0 && capacity.is_finite()) {
            return Err(EnvelopeError::InvalidCapacity(capacity));
        }
        match self {
            ServiceModel::ConstantServer { .. } => Ok(()),
            ServiceModel::Leftover { cross, .. } => cross.validate(),
        }
    }

    pub fn effective_capacity(&self, theta: f64, t: u64) -> Result<f64, EnvelopeError> {
        service_effective_capacity(self, theta, t)
    }
}

pub fn service_effective_capacity(
    model: &ServiceModel,
    theta: f64,
    t: u64,
) -> Result<f64, EnvelopeError> {
    check_theta(theta)?;
    check_interval(t)?;
    match model {
        ServiceModel::ConstantServer { capacity } => Ok(*capacity),
        ServiceModel::Leftover {
            capacity,
            cross_count,
            cross,
        } => {
            if *cross_count == 0 {
                return Ok(*capacity);
            }
            Ok(capacity - f64::from(*cross_count) * traffic_effective_bandwidth(cross, theta, t)?)
        }
    }
}

impl ServiceEnvelope for ServiceModel {
    fn effective_capacity(&self, theta: f64, t: u64) -> Result<f64, EnvelopeError> {
        service_effective_capacity(self, theta, t)
    }

    fn time_invariant(&self) -> bool {
        true
    }
}
