//! Probabilistic end-to-end backlog and delay bounds for tandem networks,
//! built from effective bandwidth (arrivals) and effective capacity (service),
//! together with a discrete-time tandem-queue simulator used to check that the
//! bounds dominate simulated tails.
//!
//! Internal units are bits and slots throughout; [`scenario`] converts from
//! bit/s and seconds at the boundary.

pub mod bounds;
pub mod envelope;
pub mod optimize;
pub mod results;
pub mod scenario;
pub mod series;
pub mod sim;

pub use bounds::{
    backlog_bound, backlog_violation, backlog_violation_at_theta, closed_form_backlog,
    closed_form_delay, delay_bound, delay_violation, delay_violation_at_theta, stability_margin,
    BoundError, BoundKind, BoundQuery, BoundResult, HomogeneousTandem, Horizon, NetworkPath,
    QueryTarget,
};
pub use envelope::{
    mmoo_effective_bandwidth, mmoo_mean_rate, service_effective_capacity,
    traffic_effective_bandwidth, ArrivalEnvelope, EnvelopeError, MmooParams, ServiceEnvelope,
    ServiceModel, TrafficModel,
};
pub use optimize::{minimize_over_theta, ThetaSearchConfig};
pub use results::{write_results_csv, ResultRow};
pub use scenario::{parse_scenario, Scenario, ScenarioError};
pub use sim::{simulate_tandem, SimResult, SimScenario};
