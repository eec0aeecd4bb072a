//! Discrete-time tandem-queue simulation with on-off sources, used to check
//! analytic bounds against empirical end-to-end tails.

mod source;
mod stats;
mod tandem;
mod validate;

use thiserror::Error;

pub use source::{mmoo_source_step, MmooSource, SlotChain, SourceState};
pub use stats::{
    clopper_pearson_lower, clopper_pearson_upper, empirical_tail, TailEstimate, CONFIDENCE,
};
pub use tandem::{
    replication_seed, simulate_tandem, Histogram, HopSlot, SimResult, SimScenario, Tandem,
};
pub use validate::{
    check_bound, validate_bound, ValidationReport, Verdict, MIN_EXPECTED_EXCEEDANCES,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),
    #[error("{what} must be a whole number of bits per slot, got {value}")]
    FractionalBits { what: &'static str, value: f64 },
    #[error(
        "offered load exceeds capacity (utilization {utilization:.4} > 1); the tandem is unstable"
    )]
    Unstable { utilization: f64 },
    #[error(
        "queue at hop {hop} reached {queued_bits} bits in slot {slot}; the tandem looks unstable"
    )]
    QueueOverflow {
        hop: u32,
        slot: u64,
        queued_bits: u64,
    },
}
