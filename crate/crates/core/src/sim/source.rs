use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envelope::MmooParams;

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceState {
    On,
    Off,
}

/// Per-slot discretization of an on-off source. Holding times are geometric
/// with leaving probabilities `1 - exp(-r)` for per-slot rates `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotChain {
    leave_on: f64,
    leave_off: f64,
    on_probability: f64,
    bits_per_on_slot: u64,
}

impl SlotChain {
    pub fn new(params: &MmooParams) -> Result<Self, SimError> {
        let peak = params.peak_rate();
        if peak.fract() != 0.0 || peak > u32::MAX as f64 {
            return Err(SimError::FractionalBits {
                what: "source peak rate",
                value: peak,
            });
        }
        Ok(Self {
            leave_on: -(-params.on_to_off()).exp_m1(),
            leave_off: -(-params.off_to_on()).exp_m1(),
            on_probability: params.on_probability(),
            bits_per_on_slot: peak as u64,
        })
    }

    pub fn leave_on(&self) -> f64 {
        self.leave_on
    }

    pub fn leave_off(&self) -> f64 {
        self.leave_off
    }

    pub fn bits_per_on_slot(&self) -> u64 {
        self.bits_per_on_slot
    }

    pub fn stationary_state<R: Rng + ?Sized>(&self, rng: &mut R) -> SourceState {
        if rng.random::<f64>() < self.on_probability {
            SourceState::On
        } else {
            SourceState::Off
        }
    }
}

/// Emits according to the state at the start of the slot, then transitions.
pub fn mmoo_source_step<R: Rng + ?Sized>(
    state: SourceState,
    rng: &mut R,
    chain: &SlotChain,
) -> (SourceState, u64) {
    let u: f64 = rng.random();
    match state {
        SourceState::On => {
            let next = if u < chain.leave_on {
                SourceState::Off
            } else {
                SourceState::On
            };
            (next, chain.bits_per_on_slot)
        }
        SourceState::Off => {
            let next = if u < chain.leave_off {
                SourceState::On
            } else {
                SourceState::Off
            };
            (next, 0)
        }
    }
}

/// An on-off source with its own random stream.
#[derive(Debug, Clone)]
pub struct MmooSource {
    state: SourceState,
    chain: SlotChain,
    rng: ChaCha8Rng,
}

impl MmooSource {
    /// Stream `stream` of the generator seeded by `seed`; distinct streams are
    /// independent, so adding sources leaves existing ones untouched.
    pub fn new(chain: SlotChain, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let state = chain.stationary_state(&mut rng);
        Self { state, chain, rng }
    }

    pub fn state(&self) -> SourceState {
        self.state
    }

    pub fn step(&mut self) -> u64 {
        let (next, bits) = mmoo_source_step(self.state, &mut self.rng, &self.chain);
        self.state = next;
        bits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn always_on_source_never_leaves() {
        let params = MmooParams::new(5.0, 0.0, 1.0).unwrap();
        let chain = SlotChain::new(&params).unwrap();
        let mut src = MmooSource::new(chain, 1, 0);
        assert_eq!(src.state(), SourceState::On);
        for _ in 0..10_000 {
            assert_eq!(src.step(), 5);
        }
    }

    #[test]
    fn symmetric_chain_spends_half_the_time_on() {
        // rates of ln 2 give leaving probabilities of exactly 1/2, so slots are
        // independent and the plain binomial sigma applies
        let r = std::f64::consts::LN_2;
        let params = MmooParams::new(1.0, r, r).unwrap();
        let chain = SlotChain::new(&params).unwrap();
        assert!((chain.leave_on() - 0.5).abs() < 1e-15);
        let mut src = MmooSource::new(chain, 7, 3);
        let n = 1_000_000u64;
        let on: u64 = (0..n).map(|_| src.step()).sum();
        let frac = on as f64 / n as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!(
            (frac - 0.5).abs() < 3.0 * sigma,
            "fraction {frac}, sigma {sigma}"
        );
    }

    #[test]
    fn correlated_symmetric_chain_is_balanced() {
        let params = MmooParams::new(1.0, 0.05, 0.05).unwrap();
        let mut src = MmooSource::new(SlotChain::new(&params).unwrap(), 7, 3);
        let n = 1_000_000u64;
        let on: u64 = (0..n).map(|_| src.step()).sum();
        let frac = on as f64 / n as f64;
        // binomial sigma inflated by the chain's integrated autocorrelation
        // (2 - p - q) / (p + q)
        let p = -(-0.05f64).exp_m1();
        let sigma = (0.25 / n as f64 * (2.0 - 2.0 * p) / (2.0 * p)).sqrt();
        assert!(
            (frac - 0.5).abs() < 3.0 * sigma,
            "fraction {frac}, sigma {sigma}"
        );
    }

    #[test]
    fn fractional_peak_is_rejected() {
        let params = MmooParams::new(1.5, 0.1, 0.1).unwrap();
        assert!(SlotChain::new(&params).is_err());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let chain = SlotChain::new(&MmooParams::new(1.0, 0.3, 0.3).unwrap()).unwrap();
        let run = |seed, stream| {
            let mut s = MmooSource::new(chain, seed, stream);
            (0..256).map(|_| s.step()).collect::<Vec<_>>()
        };
        assert_eq!(run(9, 4), run(9, 4));
        assert_ne!(run(9, 4), run(9, 5));
    }
}
