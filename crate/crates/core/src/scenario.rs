//! Experiment descriptions in TOML.
//!
//! A scenario keeps the user-facing values it was written with (rates in
//! `rate_unit`, durations in seconds) and converts them to bits and slots on
//! request, so serializing and re-parsing a scenario reproduces it exactly.
//!
//! ```toml
//! id = "voice-fig3"
//!
//! [units]
//! slot_length_s = 0.001
//! rate_unit = "kbit/s"
//!
//! [traffic]
//! peak_rate = 64.0
//! mean_on_s = 0.4
//! mean_off_s = 0.6
//! through = 781
//! cross = 1953
//!
//! [network]
//! capacity = 100000.0
//! hops = [1, 2, 5, 10]
//!
//! [bound]
//! kind = "delay"
//! epsilon = [1e-9]
//! horizon = "infinite"
//! ```
//!
//! Optional pieces: `[traffic.cross_source]` (separate on-off parameters for
//! cross flows), `network.flow_totals` (N + M values swept with N = M) or
//! `network.flow_pairs` (explicit `[N, M]` pairs), `[bound.theta]` (theta
//! search overrides `min`, `max`, `grid_points`, `refine_tolerance`), and a
//! `[sim]` block. Unknown keys are rejected.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{BoundKind, HomogeneousTandem, Horizon};
use crate::envelope::{MmooParams, TrafficModel};
use crate::optimize::ThetaSearchConfig;
use crate::sim::SimScenario;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn list(violations: &[Violation]) -> String {
    violations.iter().map(|v| format!("\n  - {v}")).collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(String),
    #[error("invalid scenario:{}", list(.0))]
    Invalid(Vec<Violation>),
    #[error("scenario has no [{0}] block, which this command needs")]
    MissingBlock(&'static str),
    #[error("{what} is {value} bits per slot; simulation needs a whole number of bits")]
    FractionalBits { what: &'static str, value: f64 },
    #[error("cannot serialize scenario: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateUnit {
    #[serde(rename = "bit/s")]
    BitPerSecond,
    #[serde(rename = "kbit/s")]
    KbitPerSecond,
    #[serde(rename = "Mbit/s")]
    MbitPerSecond,
}

impl RateUnit {
    pub fn bits_per_second(&self) -> f64 {
        match self {
            RateUnit::BitPerSecond => 1.0,
            RateUnit::KbitPerSecond => 1e3,
            RateUnit::MbitPerSecond => 1e6,
        }
    }

    pub fn to_bits_per_slot(&self, value: f64, slot_length_s: f64) -> f64 {
        value * self.bits_per_second() * slot_length_s
    }

    pub fn from_bits_per_slot(&self, bits: f64, slot_length_s: f64) -> f64 {
        bits / slot_length_s / self.bits_per_second()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindSelection {
    Delay,
    Backlog,
    Both,
}

impl KindSelection {
    pub fn kinds(&self) -> Vec<BoundKind> {
        match self {
            KindSelection::Delay => vec![BoundKind::Delay],
            KindSelection::Backlog => vec![BoundKind::Backlog],
            KindSelection::Both => vec![BoundKind::Delay, BoundKind::Backlog],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum HorizonDoc {
    Slots(u64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(i64),
    Many(Vec<i64>),
}

// ---- raw document ----

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    id: Option<String>,
    units: Option<UnitsDoc>,
    traffic: Option<TrafficDoc>,
    network: Option<NetworkDoc>,
    bound: Option<BoundDoc>,
    sim: Option<SimDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitsDoc {
    slot_length_s: Option<f64>,
    rate_unit: Option<RateUnit>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceDoc {
    peak_rate: Option<f64>,
    mean_on_s: Option<f64>,
    mean_off_s: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrafficDoc {
    peak_rate: Option<f64>,
    mean_on_s: Option<f64>,
    mean_off_s: Option<f64>,
    through: Option<i64>,
    cross: Option<i64>,
    cross_source: Option<SourceDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    capacity: Option<f64>,
    hops: Option<OneOrMany>,
    flow_totals: Option<Vec<i64>>,
    flow_pairs: Option<Vec<(i64, i64)>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThetaDoc {
    min: Option<f64>,
    max: Option<f64>,
    grid_points: Option<i64>,
    refine_tolerance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundDoc {
    kind: Option<KindSelection>,
    epsilon: Option<Vec<f64>>,
    horizon: Option<HorizonDoc>,
    theta: Option<ThetaDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimDoc {
    warmup_slots: Option<i64>,
    measure_slots: Option<i64>,
    replications: Option<i64>,
    seed: Option<u64>,
    queue_cap_bits: Option<i64>,
    slack: Option<f64>,
}

// ---- validated scenario ----

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Units {
    pub slot_length_s: f64,
    pub rate_unit: RateUnit,
}

/// On-off source in user units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceSpec {
    pub peak_rate: f64,
    pub mean_on_s: f64,
    pub mean_off_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Traffic {
    pub peak_rate: f64,
    pub mean_on_s: f64,
    pub mean_off_s: f64,
    pub through: u32,
    pub cross: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_source: Option<SourceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Network {
    pub capacity: f64,
    pub hops: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_totals: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_pairs: Option<Vec<(u32, u32)>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ThetaOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine_tolerance: Option<f64>,
}

impl ThetaOverrides {
    fn is_empty(&self) -> bool {
        *self == ThetaOverrides::default()
    }

    pub fn apply(&self, mut base: ThetaSearchConfig) -> ThetaSearchConfig {
        if let Some(v) = self.min {
            base.theta_min = v;
        }
        if let Some(v) = self.max {
            base.theta_max = v;
        }
        if let Some(v) = self.grid_points {
            base.coarse_grid_points = v as usize;
        }
        if let Some(v) = self.refine_tolerance {
            base.refine_tolerance = v;
        }
        base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSpec {
    pub kind: KindSelection,
    pub epsilon: Vec<f64>,
    #[serde(serialize_with = "serialize_horizon")]
    pub horizon: Horizon,
    #[serde(skip_serializing_if = "ThetaOverrides::is_empty")]
    pub theta: ThetaOverrides,
}

fn serialize_horizon<S: serde::Serializer>(h: &Horizon, s: S) -> Result<S::Ok, S::Error> {
    match h {
        Horizon::Infinite => s.serialize_str("infinite"),
        Horizon::Finite(t) => s.serialize_u64(*t),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_slots: Option<u64>,
    pub measure_slots: u64,
    pub replications: u32,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queue_cap_bits: Option<u64>,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub id: String,
    pub units: Units,
    pub traffic: Traffic,
    pub network: Network,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSpec>,
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn fail(&mut self, field: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn required<T>(&mut self, field: &str, value: Option<T>) -> Option<T> {
        if value.is_none() {
            self.fail(field, "missing required key");
        }
        value
    }

    fn positive(&mut self, field: &str, value: Option<f64>) -> f64 {
        match self.required(field, value) {
            Some(v) if v > 0.0 && !v.is_nan() => v,
            Some(v) => {
                self.fail(field, format!("must be positive, got {v}"));
                f64::NAN
            }
            None => f64::NAN,
        }
    }

    fn count(&mut self, field: &str, value: Option<i64>, min: i64) -> u32 {
        match self.required(field, value) {
            Some(v) => self.count_value(field, v, min),
            None => 0,
        }
    }

    fn count_value(&mut self, field: &str, v: i64, min: i64) -> u32 {
        if v < min || v > i64::from(u32::MAX) {
            self.fail(
                field,
                format!("must be an integer in [{min}, {}], got {v}", u32::MAX),
            );
            0
        } else {
            v as u32
        }
    }

    fn slots(&mut self, field: &str, v: i64, min: i64) -> u64 {
        if v < min {
            self.fail(field, format!("must be at least {min}, got {v}"));
            0
        } else {
            v as u64
        }
    }
}

fn check_source(
    c: &mut Checker,
    prefix: &str,
    peak: Option<f64>,
    on: Option<f64>,
    off: Option<f64>,
) -> SourceSpec {
    let spec = SourceSpec {
        peak_rate: c.positive(&format!("{prefix}.peak_rate"), peak),
        mean_on_s: c.positive(&format!("{prefix}.mean_on_s"), on),
        mean_off_s: c.positive(&format!("{prefix}.mean_off_s"), off),
    };
    if spec.peak_rate.is_infinite() {
        c.fail(&format!("{prefix}.peak_rate"), "must be finite");
    }
    if spec.mean_on_s.is_infinite() && spec.mean_off_s.is_infinite() {
        c.fail(prefix, "on and off times cannot both be infinite");
    }
    spec
}

/// Parses and fully validates a scenario document. Every violation found is
/// reported, not just the first.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: Doc = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let mut c = Checker {
        violations: Vec::new(),
    };

    for (name, present) in [
        ("units", doc.units.is_some()),
        ("traffic", doc.traffic.is_some()),
        ("network", doc.network.is_some()),
    ] {
        if !present {
            c.fail(name, "missing required block");
        }
    }

    let id = doc.id.unwrap_or_else(|| "scenario".to_string());
    if id.trim().is_empty() || id.contains([',', '"', '\n']) {
        c.fail(
            "id",
            "must be nonempty and free of commas, quotes and newlines",
        );
    }

    let units = doc.units.map(|u| {
        let slot_length_s = c.positive("units.slot_length_s", u.slot_length_s);
        if slot_length_s.is_infinite() {
            c.fail("units.slot_length_s", "must be finite");
        }
        Units {
            slot_length_s,
            rate_unit: c
                .required("units.rate_unit", u.rate_unit)
                .unwrap_or(RateUnit::BitPerSecond),
        }
    });

    let traffic = doc.traffic.map(|t| {
        let main = check_source(&mut c, "traffic", t.peak_rate, t.mean_on_s, t.mean_off_s);
        let cross_source = t.cross_source.map(|s| {
            check_source(
                &mut c,
                "traffic.cross_source",
                s.peak_rate,
                s.mean_on_s,
                s.mean_off_s,
            )
        });
        Traffic {
            peak_rate: main.peak_rate,
            mean_on_s: main.mean_on_s,
            mean_off_s: main.mean_off_s,
            through: c.count("traffic.through", t.through, 1),
            cross: c.count("traffic.cross", t.cross, 0),
            cross_source,
        }
    });

    let network = doc.network.map(|n| {
        let capacity = c.positive("network.capacity", n.capacity);
        if capacity.is_infinite() {
            c.fail("network.capacity", "must be finite");
        }
        let hops = match c.required("network.hops", n.hops) {
            Some(OneOrMany::One(h)) => vec![c.count_value("network.hops", h, 1)],
            Some(OneOrMany::Many(hs)) => {
                if hs.is_empty() {
                    c.fail("network.hops", "sweep list is empty");
                }
                hs.into_iter()
                    .map(|h| c.count_value("network.hops", h, 1))
                    .collect()
            }
            None => Vec::new(),
        };
        let flow_totals = n.flow_totals.map(|ts| {
            if ts.is_empty() {
                c.fail("network.flow_totals", "sweep list is empty");
            }
            ts.into_iter()
                .map(|t| {
                    if t % 2 != 0 {
                        c.fail(
                            "network.flow_totals",
                            format!("{t} is odd; N = M needs an even total"),
                        );
                    }
                    c.count_value("network.flow_totals", t, 2)
                })
                .collect::<Vec<_>>()
        });
        let flow_pairs = n.flow_pairs.map(|ps| {
            if ps.is_empty() {
                c.fail("network.flow_pairs", "sweep list is empty");
            }
            ps.into_iter()
                .map(|(a, b)| {
                    (
                        c.count_value("network.flow_pairs", a, 1),
                        c.count_value("network.flow_pairs", b, 0),
                    )
                })
                .collect::<Vec<_>>()
        });
        if flow_totals.is_some() && flow_pairs.is_some() {
            c.fail("network", "give either flow_totals or flow_pairs, not both");
        }
        Network {
            capacity,
            hops,
            flow_totals,
            flow_pairs,
        }
    });

    let bound = doc.bound.map(|b| {
        let epsilon = c.required("bound.epsilon", b.epsilon).unwrap_or_default();
        if epsilon.is_empty() {
            c.fail("bound.epsilon", "list is empty");
        }
        for &e in &epsilon {
            if !(e > 0.0 && e <= 1.0) {
                c.fail("bound.epsilon", format!("{e} is outside (0, 1]"));
            }
        }
        let horizon = match b.horizon {
            None => Horizon::Infinite,
            Some(HorizonDoc::Slots(t)) => Horizon::Finite(t),
            Some(HorizonDoc::Named(s)) if s == "infinite" => Horizon::Infinite,
            Some(HorizonDoc::Named(s)) => {
                c.fail(
                    "bound.horizon",
                    format!("expected \"infinite\" or a slot count, got {s:?}"),
                );
                Horizon::Infinite
            }
        };
        let theta = b
            .theta
            .map(|t| {
                let grid_points = t
                    .grid_points
                    .map(|g| c.count_value("bound.theta.grid_points", g, 8));
                for (field, v) in [
                    ("bound.theta.min", t.min),
                    ("bound.theta.max", t.max),
                    ("bound.theta.refine_tolerance", t.refine_tolerance),
                ] {
                    if let Some(v) = v {
                        if !(v > 0.0 && v.is_finite()) {
                            c.fail(field, format!("must be positive and finite, got {v}"));
                        }
                    }
                }
                if let (Some(lo), Some(hi)) = (t.min, t.max) {
                    if lo >= hi {
                        c.fail("bound.theta", format!("min {lo} must be below max {hi}"));
                    }
                }
                ThetaOverrides {
                    min: t.min,
                    max: t.max,
                    grid_points,
                    refine_tolerance: t.refine_tolerance,
                }
            })
            .unwrap_or_default();
        BoundSpec {
            kind: b.kind.unwrap_or(KindSelection::Delay),
            epsilon,
            horizon,
            theta,
        }
    });

    let sim = doc.sim.map(|s| {
        let slack = s.slack.unwrap_or(0.0);
        if !(slack >= 0.0 && slack.is_finite()) {
            c.fail("sim.slack", format!("must be nonnegative, got {slack}"));
        }
        SimSpec {
            warmup_slots: s.warmup_slots.map(|w| c.slots("sim.warmup_slots", w, 0)),
            measure_slots: s
                .measure_slots
                .map_or(1_000_000, |m| c.slots("sim.measure_slots", m, 1)),
            replications: s
                .replications
                .map_or(1, |r| c.count_value("sim.replications", r, 1)),
            seed: s.seed.unwrap_or(0),
            queue_cap_bits: s
                .queue_cap_bits
                .map(|q| c.slots("sim.queue_cap_bits", q, 1)),
            slack,
        }
    });

    if let (Some(u), Some(t), Some(n)) = (&units, &traffic, &network) {
        let scale = u.rate_unit.to_bits_per_slot(1.0, u.slot_length_s);
        for (field, v) in [
            ("traffic.peak_rate", t.peak_rate),
            ("network.capacity", n.capacity),
        ] {
            let bits = v * scale;
            if v.is_finite() && (!bits.is_finite() || (bits == 0.0 && v > 0.0)) {
                c.fail(
                    field,
                    format!("{v} overflows when converted to bits per slot"),
                );
            }
        }
    }

    if !c.violations.is_empty() {
        return Err(ScenarioError::Invalid(c.violations));
    }
    let scenario = Scenario {
        id,
        units: units.expect("checked"),
        traffic: traffic.expect("checked"),
        network: network.expect("checked"),
        bound,
        sim,
    };
    // on-off parameters must also be valid in slot units
    let mut extra = Vec::new();
    if let Err(e) = scenario.through_source() {
        extra.push(Violation {
            field: "traffic".into(),
            message: e.to_string(),
        });
    }
    if let Err(e) = scenario.cross_source() {
        extra.push(Violation {
            field: "traffic.cross_source".into(),
            message: e.to_string(),
        });
    }
    if !extra.is_empty() {
        return Err(ScenarioError::Invalid(extra));
    }
    Ok(scenario)
}

impl Scenario {
    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Serialize(e.to_string()))
    }

    pub fn slot_length_s(&self) -> f64 {
        self.units.slot_length_s
    }

    pub fn rate_to_bits_per_slot(&self, rate: f64) -> f64 {
        self.units
            .rate_unit
            .to_bits_per_slot(rate, self.units.slot_length_s)
    }

    pub fn seconds_to_slots(&self, seconds: f64) -> f64 {
        seconds / self.units.slot_length_s
    }

    fn source_params(&self, s: SourceSpec) -> Result<MmooParams, crate::envelope::EnvelopeError> {
        MmooParams::new(
            self.rate_to_bits_per_slot(s.peak_rate),
            self.units.slot_length_s / s.mean_on_s,
            self.units.slot_length_s / s.mean_off_s,
        )
    }

    /// Per-slot on-off parameters of one through flow.
    pub fn through_source(&self) -> Result<MmooParams, crate::envelope::EnvelopeError> {
        self.source_params(SourceSpec {
            peak_rate: self.traffic.peak_rate,
            mean_on_s: self.traffic.mean_on_s,
            mean_off_s: self.traffic.mean_off_s,
        })
    }

    /// Per-slot on-off parameters of one cross flow.
    pub fn cross_source(&self) -> Result<MmooParams, crate::envelope::EnvelopeError> {
        match self.traffic.cross_source {
            Some(s) => self.source_params(s),
            None => self.through_source(),
        }
    }

    pub fn capacity_bits_per_slot(&self) -> f64 {
        self.rate_to_bits_per_slot(self.network.capacity)
    }

    /// `(N, M)` points to evaluate: the flow sweep if one is given, otherwise
    /// the single traffic point.
    pub fn flow_points(&self) -> Vec<(u32, u32)> {
        if let Some(pairs) = &self.network.flow_pairs {
            pairs.clone()
        } else if let Some(totals) = &self.network.flow_totals {
            totals.iter().map(|t| (t / 2, t / 2)).collect()
        } else {
            vec![(self.traffic.through, self.traffic.cross)]
        }
    }

    pub fn tandem(&self, hops: u32, through: u32, cross: u32) -> HomogeneousTandem {
        HomogeneousTandem {
            through_count: through,
            through: TrafficModel::Mmoo(self.through_source().expect("validated at parse time")),
            cross_count: cross,
            cross: TrafficModel::Mmoo(self.cross_source().expect("validated at parse time")),
            capacity: self.capacity_bits_per_slot(),
            hops,
        }
    }

    pub fn bound_spec(&self) -> Result<&BoundSpec, ScenarioError> {
        self.bound
            .as_ref()
            .ok_or(ScenarioError::MissingBlock("bound"))
    }

    pub fn sim_spec(&self) -> Result<&SimSpec, ScenarioError> {
        self.sim.as_ref().ok_or(ScenarioError::MissingBlock("sim"))
    }

    /// Default theta range for `tandem` with any `[bound.theta]` overrides.
    pub fn theta_search(&self, tandem: &HomogeneousTandem) -> ThetaSearchConfig {
        let base = tandem.default_search();
        match &self.bound {
            Some(b) => b.theta.apply(base),
            None => base,
        }
    }

    pub fn sim_scenario(
        &self,
        hops: u32,
        through: u32,
        cross: u32,
    ) -> Result<SimScenario, ScenarioError> {
        let spec = self.sim_spec()?;
        let capacity = self.capacity_bits_per_slot();
        let whole = |what, v: f64| {
            let r = v.round();
            if (v - r).abs() <= 1e-9 * v.abs().max(1.0) {
                Ok(r)
            } else {
                Err(ScenarioError::FractionalBits { what, value: v })
            }
        };
        let capacity = whole("network.capacity", capacity)? as u64;
        let snap = |p: MmooParams, what| -> Result<MmooParams, ScenarioError> {
            let peak = whole(what, p.peak_rate())?;
            Ok(MmooParams::new(peak, p.on_to_off(), p.off_to_on())
                .expect("validated at parse time"))
        };
        let source = snap(
            self.through_source().expect("validated"),
            "traffic.peak_rate",
        )?;
        let cross_src = snap(
            self.cross_source().expect("validated"),
            "traffic.cross_source.peak_rate",
        )?;
        let mut sim = SimScenario::new(hops, capacity, through, cross, source);
        if self.traffic.cross_source.is_some() {
            sim.cross_source = Some(cross_src);
            let longest = [
                cross_src.on_to_off(),
                cross_src.off_to_on(),
                source.on_to_off(),
                source.off_to_on(),
            ]
            .into_iter()
            .filter(|r| *r > 0.0)
            .map(|r| 1.0 / r)
            .fold(0.0, f64::max);
            sim.warmup_slots = (10.0 * longest).ceil() as u64;
        }
        if let Some(w) = spec.warmup_slots {
            sim.warmup_slots = w;
        }
        sim.measure_slots = spec.measure_slots;
        sim.replications = spec.replications;
        sim.base_seed = spec.seed;
        if let Some(q) = spec.queue_cap_bits {
            sim.queue_cap_bits = q;
        }
        Ok(sim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const VOICE: &str = r#"
id = "voice"
[units]
slot_length_s = 0.001
rate_unit = "kbit/s"
[traffic]
peak_rate = 64.0
mean_on_s = 0.4
mean_off_s = 0.6
through = 781
cross = 1953
[network]
capacity = 100000.0
hops = [1, 2, 5]
[bound]
kind = "delay"
epsilon = [1e-9]
"#;

    #[test]
    fn parses_voice_and_converts_units() {
        let s = parse_scenario(VOICE).unwrap();
        assert_eq!(s.network.hops, vec![1, 2, 5]);
        assert_relative_eq!(s.capacity_bits_per_slot(), 100_000.0, max_relative = 1e-12);
        let src = s.through_source().unwrap();
        assert_relative_eq!(src.peak_rate(), 64.0, max_relative = 1e-12);
        assert_relative_eq!(src.on_to_off(), 1.0 / 400.0, max_relative = 1e-12);
        assert_relative_eq!(src.mean_rate(), 25.6, max_relative = 1e-12);
        assert_eq!(s.bound.as_ref().unwrap().horizon, Horizon::Infinite);
        assert_eq!(s.flow_points(), vec![(781, 1953)]);
    }

    #[test]
    fn empty_document_names_every_missing_block() {
        let Err(ScenarioError::Invalid(v)) = parse_scenario("") else {
            panic!("expected invalid");
        };
        let fields: Vec<_> = v.iter().map(|v| v.field.as_str()).collect();
        assert_eq!(fields, ["units", "traffic", "network"]);
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let text = VOICE.replace("epsilon = [1e-9]", "epsilon = [0.0, 1.5]");
        let Err(ScenarioError::Invalid(v)) = parse_scenario(&text) else {
            panic!("expected invalid");
        };
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|v| v.field == "bound.epsilon"));
    }

    #[test]
    fn unknown_keys_are_errors_with_location() {
        let text = VOICE.replace("through = 781", "through = 781\nthrough_flows = 3");
        let Err(ScenarioError::Parse(msg)) = parse_scenario(&text) else {
            panic!("expected parse error");
        };
        assert!(msg.contains("through_flows"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn violations_are_listed_exhaustively() {
        let text = VOICE
            .replace("peak_rate = 64.0", "peak_rate = -1.0")
            .replace("through = 781", "through = 0")
            .replace("hops = [1, 2, 5]", "hops = []");
        let Err(ScenarioError::Invalid(v)) = parse_scenario(&text) else {
            panic!("expected invalid");
        };
        let fields: Vec<_> = v.iter().map(|v| v.field.as_str()).collect();
        assert!(fields.contains(&"traffic.peak_rate"));
        assert!(fields.contains(&"traffic.through"));
        assert!(fields.contains(&"network.hops"));
    }

    #[test]
    fn flow_sweeps() {
        let text = VOICE.replace("hops = [1, 2, 5]", "hops = 2\nflow_totals = [100, 200]");
        let s = parse_scenario(&text).unwrap();
        assert_eq!(s.network.hops, vec![2]);
        assert_eq!(s.flow_points(), vec![(50, 50), (100, 100)]);
        let odd = VOICE.replace("hops = [1, 2, 5]", "hops = 2\nflow_totals = [3]");
        assert!(parse_scenario(&odd).is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let text = VOICE.to_string()
            + "horizon = 5000\n[bound.theta]\nmin = 1e-10\ngrid_points = 32\n[sim]\nmeasure_slots = 10\nreplications = 2\nseed = 9\n";
        let s = parse_scenario(&text).unwrap();
        let again = parse_scenario(&s.to_toml().unwrap()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn sim_needs_whole_bits() {
        let text = VOICE.replace("capacity = 100000.0", "capacity = 100.5") + "[sim]\n";
        let s = parse_scenario(&text).unwrap();
        assert!(matches!(
            s.sim_scenario(1, 1, 1),
            Err(ScenarioError::FractionalBits { .. })
        ));
        let s = parse_scenario(&(VOICE.to_string() + "[sim]\nseed = 3\n")).unwrap();
        let sim = s.sim_scenario(2, 10, 10).unwrap();
        assert_eq!(sim.capacity, 100_000);
        assert_eq!(sim.warmup_slots, 6000);
        assert_eq!(sim.base_seed, 3);
    }

    proptest! {
        #[test]
        fn unit_round_trip_within_one_ulp(
            value in 1e-3f64..1e9,
            slot in 1e-6f64..1.0,
            unit in prop_oneof![
                Just(RateUnit::BitPerSecond),
                Just(RateUnit::KbitPerSecond),
                Just(RateUnit::MbitPerSecond)
            ],
        ) {
            let bits = unit.to_bits_per_slot(value, slot);
            let back = unit.from_bits_per_slot(bits, slot);
            let ulp = f64::EPSILON * value;
            // three roundings each way
            prop_assert!((back - value).abs() <= 4.0 * ulp, "{value} -> {bits} -> {back}");
        }
    }
}
