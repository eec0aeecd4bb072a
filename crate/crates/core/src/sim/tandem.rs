use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelope::MmooParams;

use super::source::{MmooSource, SlotChain};
use super::SimError;

/// Discrete-time tandem: `through_count` on-off flows cross `hops` FIFO
/// work-conserving servers of `capacity` bits per slot; each hop also carries
/// `cross_count` fresh on-off flows that leave after that hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub hops: u32,
    /// Bits per slot.
    pub capacity: u64,
    pub through_count: u32,
    pub cross_count: u32,
    /// Per-slot parameters of each through source.
    pub source: MmooParams,
    /// Per-slot parameters of each cross source; defaults to `source`.
    pub cross_source: Option<MmooParams>,
    pub warmup_slots: u64,
    pub measure_slots: u64,
    pub replications: u32,
    pub base_seed: u64,
    /// A hop whose queue holds more than this many bits aborts the run.
    pub queue_cap_bits: u64,
}

impl SimScenario {
    /// Warm-up of ten times the longer mean holding time, a queue cap of
    /// 10^6 slots of service, one replication.
    pub fn new(
        hops: u32,
        capacity: u64,
        through_count: u32,
        cross_count: u32,
        source: MmooParams,
    ) -> Self {
        let longest = (1.0 / source.on_to_off()).max(1.0 / source.off_to_on());
        let warmup_slots = if longest.is_finite() {
            (10.0 * longest).ceil() as u64
        } else {
            0
        };
        Self {
            hops,
            capacity,
            through_count,
            cross_count,
            source,
            cross_source: None,
            warmup_slots,
            measure_slots: 1_000_000,
            replications: 1,
            base_seed: 0,
            queue_cap_bits: capacity.saturating_mul(1_000_000),
        }
    }

    pub fn cross_params(&self) -> &MmooParams {
        self.cross_source.as_ref().unwrap_or(&self.source)
    }

    /// Mean offered load per hop over capacity.
    pub fn utilization(&self) -> f64 {
        (f64::from(self.through_count) * self.source.mean_rate()
            + f64::from(self.cross_count) * self.cross_params().mean_rate())
            / self.capacity as f64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut problems = Vec::new();
        if self.hops == 0 {
            problems.push("hops must be at least 1".to_string());
        }
        if self.capacity == 0 {
            problems.push("capacity must be positive".to_string());
        }
        if self.measure_slots == 0 {
            problems.push("measure_slots must be at least 1".to_string());
        }
        if self.replications == 0 {
            problems.push("replications must be at least 1".to_string());
        }
        if !problems.is_empty() {
            return Err(SimError::InvalidScenario(problems));
        }
        SlotChain::new(&self.source)?;
        SlotChain::new(self.cross_params())?;
        let utilization = self.utilization();
        if utilization > 1.0 {
            return Err(SimError::Unstable { utilization });
        }
        Ok(())
    }
}

/// Counts of nonnegative integer samples.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, value: u64) {
        *self.counts.entry(value).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (&v, &c) in &other.counts {
            *self.counts.entry(v).or_insert(0) += c;
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn max(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    pub fn min(&self) -> Option<u64> {
        self.counts.keys().next().copied()
    }

    /// Number of samples strictly greater than `threshold`.
    pub fn count_above(&self, threshold: f64) -> u64 {
        if threshold < 0.0 {
            return self.total;
        }
        if threshold >= u64::MAX as f64 {
            return 0;
        }
        let floor = threshold.floor() as u64;
        self.counts
            .range((std::ops::Bound::Excluded(floor), std::ops::Bound::Unbounded))
            .map(|(_, c)| c)
            .sum()
    }

    /// Smallest value `v` with at most a `tail` fraction of samples above it.
    pub fn quantile_above(&self, tail: f64) -> Option<u64> {
        if self.total == 0 {
            return None;
        }
        let allowed = (tail * self.total as f64).floor() as u64;
        let mut above = self.total;
        for (&v, &c) in &self.counts {
            above -= c;
            if above <= allowed {
                return Some(v);
            }
        }
        self.max()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&v, &c)| (v, c))
    }

    pub fn mean(&self) -> f64 {
        let sum: f64 = self.iter().map(|(v, c)| v as f64 * c as f64).sum();
        sum / self.total as f64
    }
}

impl FromIterator<u64> for Histogram {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        let mut h = Histogram::new();
        iter.into_iter().for_each(|v| h.record(v));
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// End-to-end virtual delays of the through traffic, in slots.
    pub delay_samples: Histogram,
    /// End-to-end through backlog `A(t) - D(t)`, in bits.
    pub backlog_samples: Histogram,
    pub replication_seeds: Vec<u64>,
    /// Measured slots summed over replications.
    pub slots: u64,
}

impl SimResult {
    pub fn merge(&mut self, other: &SimResult) {
        self.delay_samples.merge(&other.delay_samples);
        self.backlog_samples.merge(&other.backlog_samples);
        self.replication_seeds
            .extend_from_slice(&other.replication_seeds);
        self.slots += other.slots;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Through,
    Cross,
}

/// FIFO of bits tagged by class.
#[derive(Debug, Clone, Default)]
struct ClassQueue {
    chunks: VecDeque<(Class, u64)>,
    through: u64,
    total: u64,
}

impl ClassQueue {
    fn push(&mut self, class: Class, bits: u64) {
        if bits == 0 {
            return;
        }
        match self.chunks.back_mut() {
            Some((c, b)) if *c == class => *b += bits,
            _ => self.chunks.push_back((class, bits)),
        }
        self.total += bits;
        if class == Class::Through {
            self.through += bits;
        }
    }

    /// Removes up to `budget` bits from the head; returns (through, cross) removed.
    fn drain(&mut self, mut budget: u64) -> (u64, u64) {
        let (mut through, mut cross) = (0, 0);
        while budget > 0 {
            let Some((class, bits)) = self.chunks.front_mut() else {
                break;
            };
            let take = (*bits).min(budget);
            *bits -= take;
            budget -= take;
            match class {
                Class::Through => through += take,
                Class::Cross => cross += take,
            }
            if *bits == 0 {
                self.chunks.pop_front();
            }
        }
        self.through -= through;
        self.total -= through + cross;
        (through, cross)
    }
}

/// What one hop saw during one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HopSlot {
    pub through_in: u64,
    pub cross_in: u64,
    pub through_out: u64,
    pub cross_out: u64,
    /// Queue contents at the start of the slot.
    pub queued_before: u64,
    pub queued_through_after: u64,
    pub queued_after: u64,
}

/// One replication of the tandem, advanced a slot at a time.
pub struct Tandem {
    capacity: u64,
    queue_cap: u64,
    through: Vec<MmooSource>,
    cross: Vec<Vec<MmooSource>>,
    queues: Vec<ClassQueue>,
    slot: u64,
    arrived: u64,
    departed: u64,
    hop_log: Vec<HopSlot>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of replication `replication` under `base_seed`.
pub fn replication_seed(base_seed: u64, replication: u32) -> u64 {
    splitmix64(base_seed ^ splitmix64(u64::from(replication) + 1))
}

/// Stream id of source `index` at `hop` (0 for the through sources, `h` for
/// the cross sources of hop `h`, counting from 1).
fn stream_id(hop: u32, index: u32) -> u64 {
    (u64::from(hop) << 32) | u64::from(index)
}

impl Tandem {
    pub fn new(scenario: &SimScenario, seed: u64) -> Result<Self, SimError> {
        scenario.validate()?;
        let through_chain = SlotChain::new(&scenario.source)?;
        let cross_chain = SlotChain::new(scenario.cross_params())?;
        let through = (0..scenario.through_count)
            .map(|i| MmooSource::new(through_chain, seed, stream_id(0, i)))
            .collect();
        let cross = (1..=scenario.hops)
            .map(|h| {
                (0..scenario.cross_count)
                    .map(|j| MmooSource::new(cross_chain, seed, stream_id(h, j)))
                    .collect()
            })
            .collect();
        Ok(Self {
            capacity: scenario.capacity,
            queue_cap: scenario.queue_cap_bits,
            through,
            cross,
            queues: vec![ClassQueue::default(); scenario.hops as usize],
            slot: 0,
            arrived: 0,
            departed: 0,
            hop_log: vec![HopSlot::default(); scenario.hops as usize],
        })
    }

    /// Advances one slot; returns the through bits entering and leaving the
    /// network in it.
    pub fn step(&mut self) -> Result<(u64, u64), SimError> {
        self.slot += 1;
        let entering: u64 = self.through.iter_mut().map(MmooSource::step).sum();
        let mut flow = entering;
        for (h, (queue, sources)) in self.queues.iter_mut().zip(&mut self.cross).enumerate() {
            let cross_in: u64 = sources.iter_mut().map(MmooSource::step).sum();
            let queued_before = queue.total;
            // cross first: the through traffic waits behind same-slot cross arrivals
            queue.push(Class::Cross, cross_in);
            queue.push(Class::Through, flow);
            let (through_out, cross_out) = queue.drain(self.capacity);
            if queue.total > self.queue_cap {
                return Err(SimError::QueueOverflow {
                    hop: h as u32 + 1,
                    slot: self.slot,
                    queued_bits: queue.total,
                });
            }
            self.hop_log[h] = HopSlot {
                through_in: flow,
                cross_in,
                through_out,
                cross_out,
                queued_before,
                queued_through_after: queue.through,
                queued_after: queue.total,
            };
            flow = through_out;
        }
        self.arrived += entering;
        self.departed += flow;
        Ok((entering, flow))
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    /// Cumulative through bits that entered hop 1.
    pub fn arrived(&self) -> u64 {
        self.arrived
    }

    /// Cumulative through bits that left the last hop.
    pub fn departed(&self) -> u64 {
        self.departed
    }

    /// Per-hop record of the most recent slot.
    pub fn last_slot(&self) -> &[HopSlot] {
        &self.hop_log
    }
}

/// Tracks `W(t) = inf{d >= 0 : A(t-d) <= D(t)}` with a monotone pointer over
/// the cumulative arrival curve.
struct VirtualDelay {
    arrivals: Vec<u64>,
    pointer: usize,
}

impl VirtualDelay {
    fn new(capacity: usize) -> Self {
        let mut arrivals = Vec::with_capacity(capacity + 1);
        arrivals.push(0);
        Self {
            arrivals,
            pointer: 0,
        }
    }

    fn advance(&mut self, cumulative_arrivals: u64, cumulative_departures: u64) -> u64 {
        self.arrivals.push(cumulative_arrivals);
        let t = self.arrivals.len() - 1;
        while self.pointer < t && self.arrivals[self.pointer + 1] <= cumulative_departures {
            self.pointer += 1;
        }
        (t - self.pointer) as u64
    }
}

fn run_replication(scenario: &SimScenario, replication: u32) -> Result<SimResult, SimError> {
    let seed = replication_seed(scenario.base_seed, replication);
    let mut tandem = Tandem::new(scenario, seed)?;
    let total = scenario.warmup_slots + scenario.measure_slots;
    let mut delay = VirtualDelay::new(total as usize);
    let mut delays = Histogram::new();
    let mut backlogs = Histogram::new();
    for _ in 0..total {
        tandem.step()?;
        let w = delay.advance(tandem.arrived(), tandem.departed());
        if tandem.slot() > scenario.warmup_slots {
            delays.record(w);
            backlogs.record(tandem.arrived() - tandem.departed());
        }
    }
    Ok(SimResult {
        delay_samples: delays,
        backlog_samples: backlogs,
        replication_seeds: vec![seed],
        slots: scenario.measure_slots,
    })
}

/// Runs all replications (in parallel) and merges them in replication order.
pub fn simulate_tandem(scenario: &SimScenario) -> Result<SimResult, SimError> {
    scenario.validate()?;
    let runs: Vec<SimResult> = (0..scenario.replications)
        .into_par_iter()
        .map(|r| run_replication(scenario, r))
        .collect::<Result<_, _>>()?;
    let mut merged = SimResult {
        delay_samples: Histogram::new(),
        backlog_samples: Histogram::new(),
        replication_seeds: Vec::with_capacity(runs.len()),
        slots: 0,
    };
    for run in &runs {
        merged.merge(run);
    }
    Ok(merged)
}
