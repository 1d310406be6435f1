mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sdd_core::instance::{builtin_geography, sample_day, GeographyId, ServiceParams};
use sdd_core::interday::{update_demand, DemandModel};
use sdd_core::intraday::{extract_features, run_day, run_day_with, service_level, FeatureScaler};
use sdd_core::policies::{bucket_cap, bucket_decide, Policy};

use common::RandomFeasible;

fn geography() -> impl Strategy<Value = GeographyId> {
    prop_oneof![Just(GeographyId::A), Just(GeographyId::B), Just(GeographyId::C)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn capacitated_demand_stays_below_start_or_cap(
        d0 in 0.0..600.0f64,
        cap in 1.0..300.0f64,
        alpha in prop_oneof![Just(0.25), Just(0.5), Just(0.75)],
        rs in proptest::collection::vec(0.0..=1.0f64, 1..60),
    ) {
        let model = DemandModel::Capacitated { alpha, caps: vec![cap] };
        let mut d = vec![d0];
        for r in rs {
            d = update_demand(&model, &d, &[r]);
            prop_assert!(d[0] >= 0.0 && d[0] <= d0.max(cap) + 1e-9);
        }
    }

    #[test]
    fn uncapacitated_factor_is_bounded(
        d in 0.1..500.0f64,
        r in 0.0..=1.0f64,
        r_bar in prop_oneof![Just(0.5), Just(0.55), Just(0.6), Just(0.65), Just(0.7), Just(0.75), Just(0.8), Just(0.85)],
    ) {
        let next = update_demand(&DemandModel::Uncapacitated { threshold: r_bar }, &[d], &[r])[0];
        let f = next / d;
        prop_assert!(f >= 1.0 - r_bar - 1e-12 && f <= 2.0 - r_bar + 1e-12);
    }

    #[test]
    fn service_levels_are_fractions(counts in proptest::collection::vec((0u64..50, 0u64..50), 1..6)) {
        let req: Vec<u64> = counts.iter().map(|&(a, b)| a.max(b)).collect();
        let acc: Vec<u64> = counts.iter().map(|&(a, b)| a.min(b)).collect();
        for r in service_level(&req, &acc) {
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn random_days_conserve_customers(
        which in geography(),
        vehicles in 1usize..6,
        seed in any::<u64>(),
        scale in prop_oneof![Just(1.0), Just(5.0), Just(10.0)],
    ) {
        let geo = builtin_geography(which).scaled(scale);
        let params = ServiceParams { vehicles, ..ServiceParams::default() };
        let expected = geo.initial_demands();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let day = sample_day(&geo, &params, &expected, &mut rng);
        let scaler = FeatureScaler::new(&geo, &params);
        let policy = RandomFeasible(seed);
        let res = run_day_with(&geo, &params, &day, &expected, |point| {
            let f = extract_features(point, &geo, &scaler).0;
            assert_eq!(f.len(), scaler.len());
            assert!(f.iter().all(|v| (0.0..=1.0).contains(v)));
            policy.decide(point, &geo)
        }).unwrap();
        prop_assert_eq!(res.deliveries.len() as u64, res.total_services);
        prop_assert_eq!(res.requested, day.requests_per_region());
        for d in &res.deliveries {
            prop_assert!(d.time <= d.deadline + 1e-9);
        }
        for &t in &res.final_returns {
            prop_assert!(t <= params.shift_end + 1e-9);
        }
    }

    #[test]
    fn bucket_never_exceeds_cap(which in geography(), seed in any::<u64>(), scale in prop_oneof![Just(1.0), Just(10.0)]) {
        let geo = builtin_geography(which).scaled(scale);
        let params = ServiceParams::default();
        let expected = geo.initial_demands();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let day = sample_day(&geo, &params, &expected, &mut rng);
        let res = run_day_with(&geo, &params, &day, &expected, |p| bucket_decide(p, &expected)).unwrap();
        let cap = bucket_cap(&expected);
        prop_assert!(res.accepted.iter().all(|&a| a as f64 <= cap));
        let again = run_day(&geo, &params, &day, &sdd_core::policies::BucketPolicy, &expected).unwrap();
        prop_assert_eq!(again, res);
    }
}
