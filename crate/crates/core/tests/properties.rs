use frogcert::bounds::{envelope_check, h_upper, l_upper, psi, MIN_RATE};
use frogcert::certificate::{default_step_menu, run_certificate, verify_certificate};
use frogcert::interval::Interval;
use frogcert::operators::{iterate_a_on_exponential, op_a, op_h, op_l, uniform_grid, ExponentialPgf, Pgf};
use frogcert::simulator::walks::{derive_upsilon, geodesic_erasure, is_indexed_subsequence, loop_erase, srw_path};
use frogcert::simulator::engine::sample_step;
use frogcert::simulator::{enumerate_box_model, run_episode, BoxModel, FiniteDistribution, ModelConfig, NodeAddress, Variant};
use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn interval() -> impl Strategy<Value = Interval> {
    (-50.0f64..50.0, 0.0f64..10.0).prop_map(|(lo, w)| Interval::new(lo, lo + w).unwrap())
}

fn unit_point() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0]
}

fn vertex() -> impl Strategy<Value = NodeAddress> {
    (0u16..12, any::<u128>()).prop_map(|(d, i)| {
        let n = frogcert::simulator::tree::level_size(d);
        NodeAddress::from_parts(d, i % n).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn arithmetic_encloses_point_results(x in interval(), y in interval(), s in 0.0f64..=1.0, t in 0.0f64..=1.0) {
        let p = x.lo() + s * (x.hi() - x.lo());
        let q = y.lo() + t * (y.hi() - y.lo());
        prop_assert!((x + y).contains(p + q));
        prop_assert!((x - y).contains(p - q));
        prop_assert!((x * y).contains(p * q));
        if x.hi() < 5.0 {
            prop_assert!(x.exp().contains(p.exp()));
        }
    }

    #[test]
    fn arithmetic_is_inclusion_monotone(x in interval(), y in interval(), shrink in 0.0f64..0.5) {
        let inner = Interval::new(x.lo() + shrink * x.width(), x.hi() - shrink * x.width()).unwrap();
        prop_assert!((inner + y).is_subset_of(&(x + y)));
        prop_assert!((inner * y).is_subset_of(&(x * y)));
        prop_assert!(inner.square().is_subset_of(&x.square()));
    }

    #[test]
    fn strictly_right_of_is_transitive(a in interval(), b in interval(), c in interval()) {
        if a.strictly_right_of(&b) && b.strictly_right_of(&c) {
            prop_assert!(a.strictly_right_of(&c));
        }
        prop_assert!(!(a.strictly_right_of(&b) && b.strictly_right_of(&a)));
    }

    #[test]
    fn operators_stay_in_unit_interval(a in 0.0f64..60.0, x in unit_point()) {
        let g = ExponentialPgf::new(a).unwrap();
        let x = Interval::point(x).unwrap();
        for v in [op_a(&g, x).unwrap(), op_l(&g, x).unwrap(), op_h(&g, x).unwrap()] {
            prop_assert!(v.is_subset_of(&Interval::UNIT));
        }
    }

    #[test]
    fn operators_fix_one_at_one(a in 0.0f64..60.0) {
        let g = ExponentialPgf::new(a).unwrap();
        let one = Interval::point(1.0).unwrap();
        prop_assert!(op_a(&g, one).unwrap().contains(1.0));
        prop_assert!(op_l(&g, one).unwrap().contains(1.0));
        prop_assert!(op_h(&g, one).unwrap().contains(1.0));
    }

    #[test]
    fn operator_is_monotone_in_x_and_rate(a in 0.0f64..40.0, da in 0.01f64..5.0, x in 0.0f64..1.0, dx in 0.001f64..0.5) {
        let y = (x + dx).min(1.0);
        let g = ExponentialPgf::new(a).unwrap();
        let g2 = ExponentialPgf::new(a + da).unwrap();
        let (px, py) = (Interval::point(x).unwrap(), Interval::point(y).unwrap());
        // Only a certified reversal is a violation.
        prop_assert!(!(op_a(&g, px).unwrap().lo() > op_a(&g, py).unwrap().hi()));
        prop_assert!(!(op_a(&g2, px).unwrap().lo() > op_a(&g, px).unwrap().hi()));
    }

    #[test]
    fn iterates_of_a_on_one_decrease(x in 0.0f64..1.0) {
        let x = [Interval::point(x).unwrap()];
        let mut prev = ExponentialPgf::constant_one().eval(x[0]).unwrap();
        for n in 1..=3 {
            let cur = iterate_a_on_exponential(0.0, n, &x).unwrap()[0];
            prop_assert!(!(cur.lo() > prev.hi()), "n={} {} > {}", n, cur, prev);
            prev = cur;
        }
    }

    #[test]
    fn bounds_are_never_refuted(a in MIN_RATE..60.0, x in unit_point()) {
        let g = ExponentialPgf::new(a).unwrap();
        let x = Interval::point(x).unwrap();
        let pairs = [
            (psi(a, x).unwrap(), op_a(&g, x).unwrap()),
            (l_upper(a, x).unwrap(), op_l(&g, x).unwrap()),
            (h_upper(a, x).unwrap(), op_h(&g, x).unwrap()),
        ];
        for (upper, value) in pairs {
            prop_assert!(upper.hi() >= 0.0);
            prop_assert!(!(value.lo() > upper.hi()), "{} above {}", value, upper);
        }
    }

    #[test]
    fn nonbacktracking_walks_are_self_avoiding(start in vertex(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = std::collections::HashSet::from([start]);
        let (mut pos, mut prev) = (start, None);
        for _ in 0..60 {
            let next = sample_step(&mut rng, pos, prev, false);
            prop_assert!(pos.is_adjacent(&next));
            prop_assert!(seen.insert(next), "revisited {:?}", next);
            (prev, pos) = (Some(pos), next);
        }
    }

    #[test]
    fn loop_erasure_is_the_geodesic(start in vertex(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let srw = srw_path(start, 14, 2_000, &mut rng);
        let y = derive_upsilon(&srw, &mut rng);
        let e = loop_erase(&y);
        prop_assert_eq!(&e.vertices, &geodesic_erasure(&y));
        prop_assert!(is_indexed_subsequence(&e, &y.vertices));
        prop_assert!(e.vertices.windows(2).all(|w| w[0].is_adjacent(&w[1])));
    }

    #[test]
    fn episodes_are_reproducible(seed in any::<u64>(), ep in 0u64..1_000, v in 0usize..3) {
        let variant = [Variant::Original, Variant::NonBacktracking, Variant::SelfSimilar][v];
        let config = ModelConfig { variant, depth_cap: 8, master_seed: seed, ..ModelConfig::default() };
        prop_assert_eq!(run_episode(&config, ep), run_episode(&config, ep));
    }

}

proptest! {
    // Exact enumeration is costly in unoptimized builds.
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn box_model_laws_are_distributions(m in 0usize..3, probs in proptest::collection::vec(1i64..6, 1..=2)) {
        let model = [BoxModel::AStar, BoxModel::LStar, BoxModel::HStar][m];
        let total: i64 = probs.iter().sum();
        let u = FiniteDistribution::new(
            probs.iter().map(|&p| BigRational::new(BigInt::from(p), BigInt::from(total))).collect(),
        ).unwrap();
        let law = enumerate_box_model(model, &u).unwrap();
        prop_assert_eq!(law.total(), BigRational::one());
        prop_assert!(law.probabilities().iter().all(|p| *p >= BigRational::zero()));
    }
}

#[test]
fn envelopes_hold_on_a_rate_sweep() {
    let grid = uniform_grid(65);
    for a in [3.0, 4.5, 7.0, 12.0, 15.0, 25.0, 35.0, 50.0] {
        let r = envelope_check(a, &grid).unwrap();
        assert!(r.holds(), "a={a}: {r:?}");
    }
}

#[test]
fn inflated_step_is_rejected_even_when_on_the_menu() {
    let menu = default_step_menu();
    let mut cert = run_certificate(&menu, 400, 257).unwrap().certificate;
    assert!(verify_certificate(&cert).ok());
    // The first pass where the largest step was refused; a still larger step
    // must be refused there too, and the rest of the chain is shifted so
    // only the tangent check can object.
    let k = cert.steps.iter().position(|s| s.delta != menu[0]).unwrap();
    let big = Rational64::new(1, 8);
    let lift = big - cert.steps[k].delta;
    cert.steps[k].delta = big;
    for (i, s) in cert.steps.iter_mut().enumerate().skip(k) {
        if i > k {
            s.u_before += lift;
        }
        s.u_after += lift;
    }
    cert.final_rate += lift;
    let report = verify_certificate(&cert);
    assert_eq!(report.failure.as_ref().and_then(|f| f.step), Some(k), "{report:?}");

    cert.step_menu.insert(0, big);
    let report = verify_certificate(&cert);
    assert_eq!(report.failure.as_ref().and_then(|f| f.step), Some(k), "{report:?}");
}
