use approx::assert_relative_eq;
use proptest::prelude::*;
use snc_core::bounds::{
    backlog_at_theta, closed_form_backlog_at_theta, closed_form_delay_at_theta, delay_at_theta,
};
use snc_core::envelope::{ArrivalEnvelope, EnvelopeError, ServiceEnvelope};
use snc_core::optimize::exhaustive_grid_minimum;
use snc_core::*;

fn constant_path(alpha: f64, beta: f64, hops: usize) -> NetworkPath {
    NetworkPath::homogeneous(
        TrafficModel::constant(alpha).unwrap(),
        ServiceModel::constant(beta).unwrap(),
        hops,
    )
    .unwrap()
}

fn voice() -> MmooParams {
    MmooParams::new(64.0, 1.0 / 400.0, 1.0 / 600.0).unwrap()
}

fn voice_tandem(n: u32, m: u32, hops: u32) -> HomogeneousTandem {
    HomogeneousTandem {
        through_count: n,
        through: TrafficModel::Mmoo(voice()),
        cross_count: m,
        cross: TrafficModel::Mmoo(voice()),
        capacity: 100_000.0,
        hops,
    }
}

/// Direct summation of `exp(theta/2 * (u*a - (u+d)*b))` for constant rates,
/// shifted by `d` on the service side.
fn naive_sum(a: f64, b: f64, theta: f64, d: u64, terms: u64) -> f64 {
    (0..terms)
        .map(|k| (0.5 * theta * (k as f64 * a - (k + d) as f64 * b)).exp())
        .sum()
}

// Reference values below were computed by hand-summing the geometric series
// in double precision and are frozen here.
const GEOMETRIC: f64 = 2.541_494_082_536_798_4;

#[test]
fn backlog_tail_for_constant_rates() {
    let path = constant_path(1.0, 2.0, 1);
    let v = backlog_violation_at_theta(&path, 10.0, Horizon::Infinite, 1.0).unwrap();
    assert_relative_eq!(v.bound, 0.017_124_452_426_622_295, max_relative = 1e-12);
    assert_relative_eq!(v.bound, 0.017125, max_relative = 1e-4);
    assert!(!v.divergent);
    let finite = backlog_violation_at_theta(&path, 10.0, Horizon::Finite(10_000), 1.0).unwrap();
    assert_relative_eq!(finite.bound, v.bound, max_relative = 1e-9);
    assert_relative_eq!(
        finite.bound,
        naive_sum(1.0, 2.0, 1.0, 0, 10_001) * (-5f64).exp(),
        max_relative = 1e-12
    );
}

#[test]
fn delay_tail_for_constant_rates() {
    let path = constant_path(1.0, 2.0, 1);
    let v = delay_violation_at_theta(&path, 3, Horizon::Infinite, 1.0).unwrap();
    assert_relative_eq!(v.bound, 0.126_533_539_643_781_22, max_relative = 1e-12);
    assert_relative_eq!(v.bound, 0.12653, max_relative = 1e-4);
    let finite = delay_violation_at_theta(&path, 3, Horizon::Finite(10_000), 1.0).unwrap();
    assert_relative_eq!(finite.bound, v.bound, max_relative = 1e-9);
    assert_relative_eq!(
        finite.bound,
        naive_sum(1.0, 2.0, 1.0, 3, 9_998),
        max_relative = 1e-12
    );
}

#[test]
fn zero_threshold_drops_the_exponential_factor() {
    let path = constant_path(1.0, 2.0, 1);
    let b = backlog_violation_at_theta(&path, 0.0, Horizon::Infinite, 1.0).unwrap();
    assert_relative_eq!(b.bound, GEOMETRIC, max_relative = 1e-12);
    assert_eq!(b.clamped(), 1.0);
    let d = delay_violation_at_theta(&path, 0, Horizon::Infinite, 1.0).unwrap();
    assert_eq!(d.bound, b.bound);
    let two =
        delay_violation_at_theta(&constant_path(1.0, 2.0, 2), 0, Horizon::Infinite, 1.0).unwrap();
    assert_relative_eq!(two.bound, GEOMETRIC, max_relative = 1e-12);
    assert_eq!(two.clamped(), 1.0);
}

#[test]
fn zero_margin_finite_horizon_counts_terms() {
    let path = constant_path(1.0, 1.0, 1);
    let v = backlog_violation_at_theta(&path, 0.0, Horizon::Finite(9), 1.0).unwrap();
    assert_relative_eq!(v.bound, 10.0, max_relative = 1e-12);
    assert_eq!(v.clamped(), 1.0);
    let inf = backlog_violation_at_theta(&path, 0.0, Horizon::Infinite, 1.0).unwrap();
    assert!(inf.divergent);
    assert_eq!(inf.bound, 1.0);
}

#[test]
fn backlog_inversion_at_fixed_theta() {
    let path = constant_path(1.0, 2.0, 1);
    let x = backlog_at_theta(&path, 0.1, Horizon::Infinite, 1.0).unwrap();
    assert_relative_eq!(x, 6.470_674_445_122_468_5, max_relative = 1e-12);
    // bisection on the tail bound as an independent inverse
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if backlog_violation_at_theta(&path, mid, Horizon::Infinite, 1.0)
            .unwrap()
            .bound
            > 0.1
        {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((hi - x).abs() < 1e-6);
}

#[test]
fn delay_inversion_at_fixed_theta() {
    let path = constant_path(1.0, 2.0, 1);
    // the tail at d = 3 is 0.1265335..., just above the rounded 0.12653
    assert_eq!(
        delay_at_theta(&path, 0.126_534, Horizon::Infinite, 1.0).unwrap(),
        Some(3)
    );
    assert_eq!(
        delay_at_theta(&path, 0.12653, Horizon::Infinite, 1.0).unwrap(),
        Some(4)
    );
    assert_eq!(
        delay_at_theta(&path, 0.2, Horizon::Infinite, 1.0).unwrap(),
        Some(3)
    );
    assert_eq!(
        delay_at_theta(&path, 0.5, Horizon::Infinite, 1.0).unwrap(),
        Some(2)
    );
    let unstable = constant_path(2.0, 1.0, 1);
    assert_eq!(
        delay_at_theta(&unstable, 0.1, Horizon::Infinite, 1.0).unwrap(),
        None
    );
}

#[test]
fn unit_epsilon_gives_zero() {
    let path = constant_path(1.0, 2.0, 3);
    let search = ThetaSearchConfig::new(0.1, 10.0, 16, 1e-6).unwrap();
    let d = delay_bound(&path, 1.0, Horizon::Infinite, &search).unwrap();
    assert_eq!(d.value, 0.0);
    assert!(d.diagnostics.trivial_epsilon);
    let x = backlog_bound(&path, 1.0, Horizon::Infinite, &search).unwrap();
    assert_eq!(x.value, 0.0);
    assert!(x.value >= 0.0 && x.violation_probability <= 1.0);
}

#[test]
fn closed_forms_at_fixed_theta() {
    let t = HomogeneousTandem {
        through_count: 1,
        through: TrafficModel::constant(2.0).unwrap(),
        cross_count: 0,
        cross: TrafficModel::constant(2.0).unwrap(),
        capacity: 4.0,
        hops: 1,
    };
    let x = closed_form_backlog_at_theta(&t, 0.1, 1.0).unwrap();
    assert_relative_eq!(x, 5.522_520_476_762_255_5, max_relative = 1e-12);
    let d = closed_form_delay_at_theta(&t, 0.1, 1.0).unwrap();
    assert_relative_eq!(d, 1.380_630_119_190_563_9, max_relative = 1e-12);
    // an under-capacity constant flow has a delay bound tending to zero
    let mut previous = f64::INFINITY;
    for hi in [1e1, 1e2, 1e3] {
        let search = ThetaSearchConfig::new(1e-3, hi, 64, 1e-6).unwrap();
        let r = closed_form_delay(&t, 0.1, &search).unwrap();
        assert!(r.value < previous);
        previous = r.value;
    }
    assert!(previous < 0.01);
}

#[test]
fn stability_margin_examples() {
    let t = voice_tandem(781, 1953, 1);
    let margin = t.stability_margin(1e-12).unwrap();
    assert_relative_eq!(margin, 100_000.0 - 2734.0 * 25.6, max_relative = 1e-6);
    assert_relative_eq!(t.utilization(), 0.699_904, max_relative = 1e-9);
    let empty = stability_margin(0, &t.through, 0, &t.cross, 123.0, 1e-3).unwrap();
    assert_eq!(empty, 123.0);
}

#[test]
fn closed_forms_scale_linearly_in_hops() {
    let search = voice_tandem(781, 1953, 1).default_search();
    let one_d = closed_form_delay(&voice_tandem(781, 1953, 1), 1e-9, &search).unwrap();
    let one_x = closed_form_backlog(&voice_tandem(781, 1953, 1), 1e-9, &search).unwrap();
    for h in [2, 5, 10, 21] {
        let d = closed_form_delay(&voice_tandem(781, 1953, h), 1e-9, &search).unwrap();
        assert_relative_eq!(d.value, f64::from(h) * one_d.value, max_relative = 1e-9);
        assert_eq!(d.theta_star, one_d.theta_star);
        let x = closed_form_backlog(&voice_tandem(781, 1953, h), 1e-9, &search).unwrap();
        assert_relative_eq!(x.value, f64::from(h) * one_x.value, max_relative = 1e-9);
    }
}

#[test]
fn closed_form_backlog_matches_general_engine() {
    for (n, m, h) in [
        (781, 1953, 1),
        (781, 1953, 4),
        (500, 500, 2),
        (1200, 800, 3),
    ] {
        let t = voice_tandem(n, m, h);
        let search = t.default_search();
        let closed = closed_form_backlog(&t, 1e-6, &search).unwrap();
        let general =
            backlog_bound(&t.to_path().unwrap(), 1e-6, Horizon::Infinite, &search).unwrap();
        assert_relative_eq!(closed.value, general.value, max_relative = 1e-6);
        assert!(general.stable_at_theta_star);
    }
}

#[test]
fn finite_horizon_matches_geometric_series() {
    for (a, b, theta) in [(1.0, 2.0, 1.0), (3.0, 3.5, 0.2), (10.0, 40.0, 0.05)] {
        for hops in [1, 3] {
            let path = constant_path(a, b, hops);
            for x in [0.0, 7.5] {
                let inf = backlog_violation_at_theta(&path, x, Horizon::Infinite, theta).unwrap();
                let fin =
                    backlog_violation_at_theta(&path, x, Horizon::Finite(10_000), theta).unwrap();
                assert_relative_eq!(inf.bound, fin.bound, max_relative = 1e-6);
            }
            for d in [0, 2, 9] {
                let inf = delay_violation_at_theta(&path, d, Horizon::Infinite, theta).unwrap();
                let fin =
                    delay_violation_at_theta(&path, d, Horizon::Finite(10_000), theta).unwrap();
                assert_relative_eq!(inf.bound, fin.bound, max_relative = 1e-6);
            }
        }
    }
}

#[test]
fn identical_hops_collapse_to_one_sum() {
    let through = TrafficModel::aggregate(10, TrafficModel::Mmoo(voice())).unwrap();
    let hop = ServiceModel::leftover(1000.0, 5, TrafficModel::Mmoo(voice())).unwrap();
    let theta = 2e-3;
    let single = NetworkPath::new(through.clone(), vec![hop.clone()]).unwrap();
    let base = backlog_violation_at_theta(&single, 0.0, Horizon::Infinite, theta).unwrap();
    for h in [2usize, 3, 7] {
        let path = NetworkPath::new(through.clone(), vec![hop.clone(); h]).unwrap();
        assert!(path.is_homogeneous());
        for x in [0.0, 500.0] {
            let v = backlog_violation_at_theta(&path, x, Horizon::Infinite, theta).unwrap();
            let expected = base.log_bound - theta * x / (2.0 * h as f64);
            assert_eq!(v.log_bound, expected);
        }
    }
}

#[test]
fn inverted_bounds_are_consistent() {
    let t = voice_tandem(781, 1953, 3);
    let path = t.to_path().unwrap();
    let search = t.default_search();
    for eps in [1e-3, 1e-6, 1e-9] {
        let x = backlog_bound(&path, eps, Horizon::Infinite, &search).unwrap();
        let back =
            backlog_violation_at_theta(&path, x.value, Horizon::Infinite, x.theta_star).unwrap();
        assert!(back.bound <= eps * (1.0 + 1e-9), "{} > {eps}", back.bound);
        let d = delay_bound(&path, eps, Horizon::Infinite, &search).unwrap();
        assert_eq!(d.value.fract(), 0.0);
        let back = delay_violation_at_theta(&path, d.value as u64, Horizon::Infinite, d.theta_star)
            .unwrap();
        assert!(back.bound <= eps * (1.0 + 1e-9));
        if d.value > 0.0 {
            let before = delay_violation_at_theta(
                &path,
                d.value as u64 - 1,
                Horizon::Infinite,
                d.theta_star,
            )
            .unwrap();
            assert!(before.bound > eps);
        }
    }
}

#[test]
fn delay_needs_room_in_a_finite_horizon() {
    let path = voice_tandem(781, 1953, 2).to_path().unwrap();
    let search = path.default_search();
    let err = delay_bound(&path, 1e-9, Horizon::Finite(3), &search).unwrap_err();
    assert!(
        matches!(err, BoundError::HorizonTooSmall { horizon: 3 }),
        "{err}"
    );
}

#[test]
fn overload_is_reported_as_instability() {
    let t = voice_tandem(2000, 2000, 1);
    let err = closed_form_delay(&t, 1e-9, &t.default_search()).unwrap_err();
    assert!(err.is_instability());
    assert!(err.to_string().contains("stability"));
    let err = delay_bound(
        &t.to_path().unwrap(),
        1e-9,
        Horizon::Infinite,
        &t.default_search(),
    )
    .unwrap_err();
    assert!(err.is_instability());
}

/// Token-bucket style envelope whose effective bandwidth decays with `t`.
struct Bursty {
    rate: f64,
    burst: f64,
}

impl ArrivalEnvelope for Bursty {
    fn effective_bandwidth(&self, _theta: f64, t: u64) -> Result<f64, EnvelopeError> {
        Ok(self.rate + self.burst / t as f64)
    }

    fn peak_rate(&self) -> f64 {
        self.rate + self.burst
    }
}

struct Link(f64);

impl ServiceEnvelope for Link {
    fn effective_capacity(&self, _theta: f64, _t: u64) -> Result<f64, EnvelopeError> {
        Ok(self.0)
    }
}

#[test]
fn truncated_series_converge() {
    let path = NetworkPath::new(
        Bursty {
            rate: 1.0,
            burst: 20.0,
        },
        vec![Link(1.5), Link(2.0)],
    )
    .unwrap();
    let theta = 0.3;
    let inf = backlog_violation_at_theta(&path, 50.0, Horizon::Infinite, theta).unwrap();
    let terms = inf.terms.expect("time-dependent envelope is truncated");
    let at_t = backlog_violation_at_theta(&path, 50.0, Horizon::Finite(terms), theta).unwrap();
    let at_2t = backlog_violation_at_theta(&path, 50.0, Horizon::Finite(2 * terms), theta).unwrap();
    assert_relative_eq!(at_t.bound, at_2t.bound, max_relative = 1e-9);
    assert_relative_eq!(inf.bound, at_2t.bound, max_relative = 1e-9);
    // u = 0 has no burst; every later term carries exp(theta*burst/2)
    let exact = {
        let g = |m: f64| {
            (0.5 * theta * 20.0).exp() * ((-0.5 * theta * m).exp() / -(-0.5 * theta * m).exp_m1())
                + 1.0
        };
        0.5 * (g(0.5).ln() + g(1.0).ln()) - theta * 50.0 / 4.0
    };
    assert_relative_eq!(inf.log_bound, exact, max_relative = 1e-9);

    let delay = delay_violation_at_theta(&path, 4, Horizon::Infinite, theta).unwrap();
    let delay_2t = delay_violation_at_theta(&path, 4, Horizon::Finite(4 * terms), theta).unwrap();
    assert_relative_eq!(delay.bound, delay_2t.bound, max_relative = 1e-9);

    let unstable = NetworkPath::new(
        Bursty {
            rate: 2.0,
            burst: 1.0,
        },
        vec![Link(1.5)],
    )
    .unwrap();
    let v = backlog_violation_at_theta(&unstable, 0.0, Horizon::Infinite, theta).unwrap();
    assert!(v.divergent);
    assert_eq!(v.bound, 1.0);
}

// Computed once with an independent 10^4-point grid over the default theta
// range; the optimizer has to stay within 0.5%.
const VOICE_H1_DELAY: f64 = 37.655_937_561_349_17;
const VOICE_H10_EQUAL_DELAY: f64 = 0.593_514_105_639_281_5;

#[test]
fn optimizer_reproduces_frozen_voice_bounds() {
    let t = voice_tandem(781, 1953, 1);
    let d = closed_form_delay(&t, 1e-9, &t.default_search()).unwrap();
    assert_relative_eq!(d.value, VOICE_H1_DELAY, max_relative = 5e-3);
    assert!(d.value <= VOICE_H1_DELAY * (1.0 + 1e-9));
    assert!(d.diagnostics.boundary.is_none());

    let t = voice_tandem(781, 781, 10);
    let d = closed_form_delay(&t, 1e-9, &t.default_search()).unwrap();
    assert_relative_eq!(d.value, VOICE_H10_EQUAL_DELAY, max_relative = 5e-3);
    // the aggregate peak fits the link, so the infimum is approached at the top of the range
    assert!(d.diagnostics.boundary.is_some());
}

#[test]
fn optimizer_matches_exhaustive_grid_for_voice() {
    let t = voice_tandem(781, 781, 1);
    let search = t.default_search();
    let best = closed_form_delay(&t, 1e-9, &search).unwrap();
    let (_, grid) = exhaustive_grid_minimum(
        |theta| closed_form_delay_at_theta(&t, 1e-9, theta).unwrap(),
        search.theta_min,
        search.theta_max,
        10_000,
    )
    .unwrap();
    assert!(best.value <= grid * 1.005);
}

fn mmoo_strategy() -> impl Strategy<Value = MmooParams> {
    (1.0f64..100.0, 1e-3f64..0.5, 1e-3f64..0.5)
        .prop_map(|(p, a, b)| MmooParams::new(p, a, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tail_bounds_decrease_in_threshold(
        src in mmoo_strategy(),
        n in 1u32..20,
        hops in 1usize..5,
        headroom in 1.2f64..3.0,
        theta in 1e-3f64..0.5,
        x in 0.0f64..1e4,
        d in 0u64..200,
    ) {
        let through = TrafficModel::aggregate(n, TrafficModel::Mmoo(src)).unwrap();
        let capacity = headroom * through.effective_bandwidth(theta, 1).unwrap();
        let path = NetworkPath::homogeneous(through, ServiceModel::constant(capacity).unwrap(), hops).unwrap();
        let a = backlog_violation_at_theta(&path, x, Horizon::Infinite, theta).unwrap();
        let b = backlog_violation_at_theta(&path, x + 1.0, Horizon::Infinite, theta).unwrap();
        prop_assert!(b.bound <= a.bound);
        let a = delay_violation_at_theta(&path, d, Horizon::Infinite, theta).unwrap();
        let b = delay_violation_at_theta(&path, d + 1, Horizon::Infinite, theta).unwrap();
        prop_assert!(b.bound <= a.bound);
        prop_assert!((0.0..=1.0).contains(&a.clamped()));
    }

    #[test]
    fn inverted_bounds_are_monotone(
        n in 1u32..300,
        m in 0u32..300,
        hops in 1u32..6,
        load in 0.1f64..0.9,
        eps in 1e-9f64..0.5,
    ) {
        let capacity = f64::from(n + m) * 25.6 / load;
        let t = HomogeneousTandem { capacity, ..voice_tandem(n, m, hops) };
        let search = t.default_search();
        let d = closed_form_delay(&t, eps, &search).unwrap();
        let tighter = closed_form_delay(&t, eps / 10.0, &search).unwrap();
        prop_assert!(tighter.value >= d.value * (1.0 - 1e-9));
        let more_hops = closed_form_delay(&HomogeneousTandem { hops: hops + 1, ..t.clone() }, eps, &search).unwrap();
        prop_assert!(more_hops.value >= d.value);
        let bigger = closed_form_delay(&HomogeneousTandem { capacity: capacity * 1.1, ..t.clone() }, eps, &search).unwrap();
        prop_assert!(bigger.value <= d.value * (1.0 + 1e-6));
        let more_cross = HomogeneousTandem { cross_count: m + 1, ..t.clone() };
        if more_cross.utilization() < 1.0 {
            if let Ok(r) = closed_form_delay(&more_cross, eps, &search) {
                prop_assert!(r.value >= d.value * (1.0 - 1e-6));
            }
        }
        prop_assert!(d.value >= 0.0);
    }
}
