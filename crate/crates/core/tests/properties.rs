use chainlearn_core::identity::{pack_benchmark, PACKED_BENCHMARK_LEN};
use chainlearn_core::metrics::PredictionBatch;
use chainlearn_core::policy::{ablated_weight, AblationVariant};
use chainlearn_core::sim::{dirichlet_partition, label_skew};
use chainlearn_core::{
    calculate_weight, expected_calibration_error, macro_f1, recover_signer, sign_benchmark, to_fixed_point,
    weighted_aggregate, BenchmarkReport, CapacityClass, EceConfig, FixedPoint, Hash32, PolicyConstants,
    ProbabilityVector, Reliability, SigningKey,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tier() -> impl Strategy<Value = CapacityClass> {
    prop_oneof![
        Just(CapacityClass::Weak),
        Just(CapacityClass::Medium),
        Just(CapacityClass::Strong)
    ]
}

fn weight(t: CapacityClass, c: u64, e: u64, r: u64) -> u64 {
    calculate_weight(t, &Reliability::new(c, e, r), &PolicyConstants::default())
        .unwrap()
        .0
}

fn prob_vector(k: usize) -> impl Strategy<Value = ProbabilityVector> {
    prop::collection::vec(0.001f64..1.0, k).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        ProbabilityVector::new(raw.into_iter().map(|x| x / total).collect()).unwrap()
    })
}

proptest! {
    #[test]
    fn weight_is_monotone(t in tier(), c in 0u64..=10_000, e in 0u64..=10_000, r in 0u64..20,
                          dc in 0u64..=100, de in 0u64..=100) {
        let w = weight(t, c, e, r);
        prop_assert!(w <= 15_000);
        prop_assert!(weight(t, (c + dc).min(10_000), e, r) >= w);
        prop_assert!(weight(t, c, (e + de).min(10_000), r) <= w);
        prop_assert!(weight(t, c, e, r + 1) >= w);
        if t != CapacityClass::Strong {
            let up = if t == CapacityClass::Weak { CapacityClass::Medium } else { CapacityClass::Strong };
            prop_assert!(weight(up, c, e, r) >= w);
        }
    }

    #[test]
    fn ablations_bracket_full(t in tier(), c in 0u64..=10_000, e in 0u64..=10_000, r in 0u64..20) {
        let k = PolicyConstants::default();
        let rel = Reliability::new(c, e, r);
        let full = calculate_weight(t, &rel, &k).unwrap();
        let v = |variant| ablated_weight(variant, t, &rel, &k).unwrap();
        prop_assert!(v(AblationVariant::NoEce) >= full);
        prop_assert!(v(AblationVariant::NoConf) >= full);
        prop_assert!(v(AblationVariant::NoBonus) <= full);
        prop_assert_eq!(v(AblationVariant::Full), full);
    }

    #[test]
    fn out_of_range_reliability_is_rejected(t in tier(), c in 10_001u64..u64::MAX, e in 0u64..=10_000) {
        let k = PolicyConstants::default();
        prop_assert!(calculate_weight(t, &Reliability::new(c, e, 0), &k).is_err());
        prop_assert!(calculate_weight(t, &Reliability::new(e, c, 0), &k).is_err());
    }

    #[test]
    fn fixed_point_rounds_to_nearest(x in 0.0f64..=1.0) {
        let fp = to_fixed_point(x, 10_000).unwrap();
        prop_assert!(fp.0 <= 10_000);
        prop_assert!((fp.0 as f64 - x * 10_000.0).abs() <= 0.5 + 1e-9);
    }

    #[test]
    fn partition_is_exact(labels in prop::collection::vec(0usize..6, 1..300), parts in 1usize..10,
                          alpha in 0.01f64..50.0, seed: u64) {
        let out = dirichlet_partition(&labels, parts, alpha, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(out.len(), parts);
        let mut all: Vec<usize> = out.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for p in &out {
            prop_assert!(p.windows(2).all(|w| w[0] < w[1]));
        }
        let skew = label_skew(&out, &labels);
        prop_assert!(skew >= 1.0 / parts as f64 - 1e-12 && skew <= 1.0);
    }

    #[test]
    fn aggregate_stays_in_the_hull(
        (vs, ws) in (2usize..8, 1usize..6).prop_flat_map(|(k, n)| (
            prop::collection::vec(prob_vector(k), n),
            prop::collection::vec(1u64..=15_000, n),
        ))
    ) {
        let refs: Vec<&ProbabilityVector> = vs.iter().collect();
        let weights: Vec<FixedPoint> = ws.into_iter().map(FixedPoint).collect();
        let out = weighted_aggregate(&refs, &weights).unwrap();
        prop_assert!((out.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        for c in 0..out.len() {
            let lo = vs.iter().map(|v| v.as_slice()[c]).fold(f64::INFINITY, f64::min);
            let hi = vs.iter().map(|v| v.as_slice()[c]).fold(0.0, f64::max);
            prop_assert!(out.as_slice()[c] >= lo - 1e-12 && out.as_slice()[c] <= hi + 1e-12);
        }
        // re-validating the output must succeed
        prop_assert!(ProbabilityVector::new(out.into_inner()).is_ok());
    }

    #[test]
    fn metrics_are_bounded(
        (preds, labels, k) in (2usize..6, 1usize..60).prop_flat_map(|(k, n)| (
            prop::collection::vec(prob_vector(k), n),
            prop::collection::vec(0..k, n),
            Just(k),
        )),
        bins in 1usize..30,
    ) {
        let batch = PredictionBatch::new(k, preds, labels).unwrap();
        let ece = expected_calibration_error(&batch, EceConfig { bin_count: bins }).unwrap();
        prop_assert!((0.0..=1.0).contains(&ece));
        let f1 = macro_f1(&batch).unwrap();
        prop_assert!((0.0..=1.0).contains(&f1));
    }

    #[test]
    fn packing_is_injective(t1 in 0u64..1_000_000_000, t2 in 0u64..1_000_000_000,
                            s1 in 1u32.., s2 in 1u32.., b1 in 1u32.., b2 in 1u32.., c1 in tier(), c2 in tier()) {
        let r = |t: u64, s, b, c| BenchmarkReport {
            throughput: t as f64 / 1000.0,
            steps: s,
            batch_size: b,
            declared_capacity: c,
        };
        let (a, b) = (r(t1, s1, b1, c1), r(t2, s2, b2, c2));
        let (pa, pb) = (pack_benchmark(&a).unwrap(), pack_benchmark(&b).unwrap());
        prop_assert_eq!(pa.len(), PACKED_BENCHMARK_LEN);
        prop_assert_eq!(u64::from_be_bytes(pa[..8].try_into().unwrap()), t1);
        prop_assert_eq!(u32::from_be_bytes(pa[8..12].try_into().unwrap()), s1);
        prop_assert_eq!(u32::from_be_bytes(pa[12..16].try_into().unwrap()), b1);
        prop_assert_eq!(CapacityClass::from_code(pa[16]), Some(c1));
        prop_assert_eq!(pa == pb, (t1, s1, b1, c1) == (t2, s2, b2, c2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn signatures_recover_the_signer(seed: [u8; 16], hash: [u8; 32], other: [u8; 32]) {
        let key = SigningKey::derive(&seed);
        let h = Hash32(hash);
        let sig = sign_benchmark(&h, &key);
        prop_assert_eq!(recover_signer(&h, &sig).unwrap(), key.address());
        prop_assert_eq!(sign_benchmark(&h, &key), sig);
        if other != hash {
            let wrong = recover_signer(&Hash32(other), &sig);
            prop_assert!(wrong.map_or(true, |a| a != key.address()));
        }
        let mut low_v = sig;
        low_v.0[64] -= 27;
        prop_assert_eq!(recover_signer(&h, &low_v).unwrap(), key.address());
    }
}
