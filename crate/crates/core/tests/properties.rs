mod common;

use common::{bh_oracle, random_instance, random_model};
use num_rational::Ratio;
use novex_core::quantization::{unquantized_payload_size, NodeRecord};
use novex_core::{
    bh_pooled, bh_procedure, dequantize, deserialize, empirical_pvalue, fastlsu,
    fastlsu_actual_comm, fastlsu_comm_bound, payload_size, quantize_model, serialize, split_blocks,
    AgentDataset, PValueVector, QuantSpec,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn alpha_strategy() -> impl Strategy<Value = Ratio<u64>> {
    (1u64..=99).prop_map(|n| Ratio::new(n, 100))
}

proptest! {
    #[test]
    fn fastlsu_matches_pooled_bh(seed in any::<u64>(), alpha in alpha_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors = random_instance(&mut rng, 5, 50);
        let fast = fastlsu(&vectors, alpha).unwrap();
        prop_assert_eq!(&fast.rejections.rejected, &bh_oracle(&vectors, alpha));
        prop_assert_eq!(&fast.rejections, &bh_pooled(&vectors, alpha).unwrap());

        let m = vectors.iter().map(PValueVector::len).max().unwrap();
        prop_assert!(fastlsu_actual_comm(&fast.log, m, vectors.len())
            <= fastlsu_comm_bound(m, vectors.len()));
        let trajectory = fast.log.trajectory();
        prop_assert!(trajectory.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn bh_is_permutation_equivariant(
        raw in prop::collection::vec(1u64..=100, 1..60),
        alpha in alpha_strategy(),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let pvals: Vec<Ratio<u64>> = raw.iter().map(|&j| Ratio::new(j, 100)).collect();
        let mut order: Vec<usize> = (0..pvals.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled: Vec<Ratio<u64>> = order.iter().map(|&i| pvals[i]).collect();

        let a = bh_procedure(&pvals, alpha).unwrap();
        let b = bh_procedure(&shuffled, alpha).unwrap();
        prop_assert_eq!(a.threshold, b.threshold);
        let mapped: std::collections::BTreeSet<usize> =
            b.rejected.iter().map(|id| order[id.index]).collect();
        let direct: std::collections::BTreeSet<usize> = a.rejected.iter().map(|id| id.index).collect();
        prop_assert_eq!(mapped, direct);
    }

    #[test]
    fn bh_rejections_grow_with_alpha(
        raw in prop::collection::vec(1u64..=100, 1..60),
        lo in 1u64..=50,
        extra in 0u64..=49,
    ) {
        let pvals: Vec<Ratio<u64>> = raw.iter().map(|&j| Ratio::new(j, 100)).collect();
        let small = bh_procedure(&pvals, Ratio::new(lo, 100)).unwrap();
        let large = bh_procedure(&pvals, Ratio::new(lo + extra, 100)).unwrap();
        prop_assert!(small.rejected.is_subset(&large.rejected));
    }

    #[test]
    fn pvalue_counts_calibration_at_or_above(
        cal in prop::collection::vec(-100i32..100, 1..80),
        test in -100i32..100,
    ) {
        let cal: Vec<f64> = cal.into_iter().map(f64::from).collect();
        let p = empirical_pvalue(test as f64, &cal).unwrap();
        let at_or_above = cal.iter().filter(|&&c| c >= test as f64).count() as u64;
        prop_assert_eq!(p, Ratio::new(1 + at_or_above, cal.len() as u64 + 1));
        prop_assert!(p > Ratio::from_integer(0) && p <= Ratio::from_integer(1));
    }

    #[test]
    fn quantization_error_within_half_step(seed in any::<u64>(), bits in prop::sample::select(vec![1u8, 2, 4, 6, 8, 12, 16])) {
        let model = random_model(&mut ChaCha8Rng::seed_from_u64(seed), 4);
        let qm = quantize_model(&model, QuantSpec::bits(bits)).unwrap();
        let decoded = qm.decoded_params();
        for (orig, back) in model.params().iter().zip(&decoded) {
            // a few ulps of slack for the offset + code * step reconstruction
            let slack = 4.0 * f64::EPSILON * (qm.offset.abs() + orig.abs() + qm.scale * ((1u64 << bits) as f64));
            prop_assert!((orig - back).abs() <= qm.scale / 2.0 + slack,
                "{} -> {} with step {}", orig, back, qm.scale);
        }
    }

    #[test]
    fn wire_round_trip_is_exact(seed in any::<u64>(), bits in prop::option::of(1u8..=16)) {
        let model = random_model(&mut ChaCha8Rng::seed_from_u64(seed), 5);
        let spec = QuantSpec { bits, ..QuantSpec::none() };
        let qm = quantize_model(&model, spec).unwrap();
        let bytes = serialize(&qm);
        prop_assert_eq!(bytes.len(), payload_size(&qm));
        let back = deserialize(&bytes).unwrap();
        prop_assert_eq!(&back, &qm);
        prop_assert_eq!(serialize(&back), bytes);

        let surrogate = dequantize(&back, 5).unwrap();
        let structure: Vec<Vec<NodeRecord>> = qm.trees.clone();
        let rebuilt: Vec<Vec<(u16, u16, u16)>> = surrogate
            .trees
            .iter()
            .map(|t| t.nodes.iter().map(|n| (n.feature, n.left, n.right)).collect())
            .collect();
        let expected: Vec<Vec<(u16, u16, u16)>> = structure
            .iter()
            .map(|t| t.iter().map(|r| (r.feature, r.left, r.right)).collect())
            .collect();
        prop_assert_eq!(rebuilt, expected);
        if bits.is_none() {
            prop_assert_eq!(surrogate.params(), model.params());
        }
    }

    #[test]
    fn decoder_is_total(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
        let _ = deserialize(&bytes);
        let mut framed = b"QMX1\x01\x01".to_vec();
        framed.extend_from_slice(&bytes);
        if let Ok(qm) = deserialize(&framed) {
            prop_assert_eq!(serialize(&qm), framed);
        }
    }

    #[test]
    fn fewer_bits_never_grow_payload(seed in any::<u64>()) {
        let model = random_model(&mut ChaCha8Rng::seed_from_u64(seed), 3);
        let sizes: Vec<usize> = (1..=16u8)
            .map(|b| payload_size(&quantize_model(&model, QuantSpec::bits(b)).unwrap()))
            .collect();
        let full = unquantized_payload_size(&model);
        prop_assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(sizes[15] < full);
        if model.node_count() >= 8 {
            prop_assert!(sizes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn blocks_partition_agent_data(n in 4usize..80, m in 1usize..40, k in 1usize..6, agent in 0usize..6, seed in any::<u64>()) {
        let data = AgentDataset {
            agent_id: agent,
            nulls: (0..n).map(|i| vec![i as f64]).collect(),
            tests: (0..m).map(|i| vec![i as f64]).collect(),
            novelty: vec![false; m],
        };
        match split_blocks(&data, k, seed) {
            Ok(blocks) => {
                prop_assert_eq!(blocks.len(), k);
                let mut nulls: Vec<usize> = blocks.iter().flat_map(|b| b.nulls.clone()).collect();
                nulls.sort_unstable();
                prop_assert_eq!(nulls, (0..n).collect::<Vec<_>>());
                let mut tests: Vec<usize> = blocks.iter().flat_map(|b| b.tests.clone()).collect();
                tests.sort_unstable();
                prop_assert_eq!(tests, (0..m).collect::<Vec<_>>());
                let reserved = &blocks[agent % k];
                for b in &blocks {
                    prop_assert!(reserved.nulls.len() >= b.nulls.len());
                    prop_assert!(reserved.nulls.len() - b.nulls.len() <= 1);
                    prop_assert!(reserved.tests.len() >= b.tests.len());
                }
            }
            Err(_) => prop_assert!(n / k < 4 || m / k < 1),
        }
    }
}
