mod common;

use std::collections::HashMap;

use common::{small_data, small_episode};
use novex_core::quantization::PayloadKind;
use novex_core::{
    deserialize, fastlsu_actual_comm, run_b2, run_b3, run_conservative,
    run_episode, run_model_exchange, EpisodeConfig, Error, Method, QuantSpec, TestId,
};

#[test]
fn global_counts_are_sums_of_agents() {
    let data = small_data(2.0, 1);
    for method in Method::ALL {
        let out = run_episode(&small_episode(method, QuantSpec::none(), 5), &data).unwrap();
        let v: usize = out.per_agent.iter().map(|m| m.false_discoveries).sum();
        let r: usize = out.per_agent.iter().map(|m| m.rejections).sum();
        assert_eq!((out.global.false_discoveries, out.global.rejections), (v, r));
        assert_eq!(out.rejections.len(), r);
        assert!((0.0..=1.0).contains(&out.global.fdp));
    }
}

#[test]
fn episodes_are_deterministic() {
    let data = small_data(1.0, 2);
    for method in Method::ALL {
        let cfg = small_episode(method, QuantSpec::none(), 9);
        assert_eq!(run_episode(&cfg, &data).unwrap(), run_episode(&cfg, &data).unwrap());
    }
    let a = run_model_exchange(&small_episode(Method::Me, QuantSpec::none(), 9), &data).unwrap();
    let b = run_model_exchange(&small_episode(Method::Me, QuantSpec::none(), 10), &data).unwrap();
    assert_ne!(a.model_payload_bytes, b.model_payload_bytes);
}

#[test]
fn single_agent_methods_coincide_with_local_bh() {
    let mut data = small_data(2.0, 3);
    data.truncate(1);
    let run = |method| {
        let cfg = EpisodeConfig {
            agents: 1,
            ..small_episode(method, QuantSpec::none(), 4)
        };
        run_episode(&cfg, &data).unwrap()
    };
    let me = run(Method::Me);
    let b2 = run(Method::B2);
    let b3 = run(Method::B3);
    let cons = run(Method::MeConservative);
    assert_eq!(me.rejections.rejected, b2.rejections.rejected);
    assert_eq!(me.rejections.rejected, b3.rejections.rejected);
    assert_eq!(me.rejections.rejected, cons.rejections.rejected);
    for out in [&me, &b2, &b3, &cons] {
        assert!(out.ledger.is_empty());
    }
    assert!(me.model_payload_bytes.is_empty());
}

#[test]
fn zero_communication_baseline_sends_nothing() {
    let out = run_b2(&small_episode(Method::B2, QuantSpec::none(), 1), &small_data(2.0, 5)).unwrap();
    assert_eq!(out.ledger.total_bits(), 0);
    assert_eq!(out.fastlsu_rounds, 0);
}

#[test]
fn b3_ledger_is_fastlsu_only() {
    let out = run_b3(&small_episode(Method::B3, QuantSpec::none(), 1), &small_data(2.0, 6)).unwrap();
    let log = out.fastlsu_log.as_ref().unwrap();
    assert_eq!(out.ledger.total_bits_of(PayloadKind::ModelExchange), 0);
    assert_eq!(
        out.ledger.total_bits_of(PayloadKind::FastLsuCounts),
        3 * fastlsu_actual_comm(log, out.fastlsu_m, 3)
    );
    assert!(out.comm_kb() < 1.0);
}

#[test]
fn model_exchange_ledger_is_complete() {
    let cfg = small_episode(Method::Me, QuantSpec::bits(4), 2);
    let out = run_model_exchange(&cfg, &small_data(2.0, 7)).unwrap();
    assert_eq!(out.model_payload_bytes.len(), 6);
    let model_bits: u64 = out.model_payload_bytes.iter().map(|&b| 8 * b as u64).sum();
    let log = out.fastlsu_log.as_ref().unwrap();
    assert_eq!(out.ledger.total_bits_of(PayloadKind::ModelExchange), model_bits);
    assert_eq!(
        out.ledger.total_bits(),
        model_bits + 3 * fastlsu_actual_comm(log, out.fastlsu_m, 3)
    );
    for agent in 0..3 {
        // two models out, two models in
        assert!(out.ledger.sent_bits(agent, PayloadKind::ModelExchange) > 0);
        assert!(out.ledger.received_bits(agent, PayloadKind::ModelExchange) > 0);
    }
}

#[test]
fn conservative_broadcasts_every_model() {
    let cfg = small_episode(Method::MeConservative, QuantSpec::bits(2), 3);
    let out = run_conservative(&cfg, &small_data(2.0, 8)).unwrap();
    assert_eq!(out.model_payload_bytes.len(), 6);
    assert_eq!(out.ledger.total_bits_of(PayloadKind::FastLsuCounts), 0);
    assert!(out.fastlsu_log.is_none());
}

#[test]
fn quantization_changes_only_parameter_codes() {
    let data = small_data(2.0, 9);
    let sizes = |quant| {
        run_model_exchange(&small_episode(Method::Me, quant, 11), &data)
            .unwrap()
            .model_payload_bytes
    };
    let full = sizes(QuantSpec::none());
    let six = sizes(QuantSpec::bits(6));
    let one = sizes(QuantSpec::bits(1));
    for ((f, s), o) in full.iter().zip(&six).zip(&one) {
        assert!(f > s && s > o);
    }
}

#[test]
fn exchanged_payloads_share_structure_across_bit_widths() {
    use novex_core::scoring::build_pu_dataset;
    use novex_core::{quantize_model, serialize, train_score_model, ForestConfig};
    let data = small_data(2.0, 10);
    let pu = build_pu_dataset(&data[0].nulls, &data[0].tests, 0.5, 3).unwrap();
    let model = train_score_model(&pu, &ForestConfig { trees: 5, ..Default::default() }, 3).unwrap();
    let raw = deserialize(&serialize(&quantize_model(&model, QuantSpec::none()).unwrap())).unwrap();
    for b in [1, 2, 4, 6] {
        let q = deserialize(&serialize(&quantize_model(&model, QuantSpec::bits(b)).unwrap())).unwrap();
        assert_eq!(q.trees, raw.trees);
        assert_eq!(q.param_count, raw.param_count);
    }
}

#[test]
fn metrics_match_ground_truth() {
    let data = small_data(0.0, 12);
    let out = run_b3(&small_episode(Method::B3, QuantSpec::none(), 2), &data).unwrap();
    let truth: HashMap<TestId, bool> = data
        .iter()
        .flat_map(|a| {
            a.novelty
                .iter()
                .enumerate()
                .map(move |(i, &n)| (TestId::new(a.agent_id, i), n))
        })
        .collect();
    let v = out.rejections.rejected.iter().filter(|id| !truth[id]).count();
    let s = out.rejections.rejected.iter().filter(|id| truth[id]).count();
    let novelties = truth.values().filter(|&&n| n).count();
    assert_eq!(out.global.false_discoveries, v);
    assert_eq!(out.global.true_discoveries, s);
    assert_eq!(out.global.novelties, novelties);
}

#[test]
fn invalid_setups_are_rejected() {
    let data = small_data(2.0, 13);
    let wrong_k = EpisodeConfig {
        agents: 2,
        ..small_episode(Method::Me, QuantSpec::none(), 1)
    };
    assert!(matches!(run_episode(&wrong_k, &data), Err(Error::InvalidConfig(_))));

    let quantized_baseline = small_episode(Method::B2, QuantSpec::bits(4), 1);
    assert!(matches!(run_episode(&quantized_baseline, &data), Err(Error::InvalidConfig(_))));

    let mut tiny = small_data(2.0, 13);
    for a in &mut tiny {
        a.nulls.truncate(10);
    }
    assert!(matches!(
        run_model_exchange(&small_episode(Method::Me, QuantSpec::none(), 1), &tiny),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn sweep_errors_name_the_failing_seed() {
    use novex_core::{run_sweep, SweepAxis, SweepSpec, SynthConfig};
    // 13 nulls per agent cannot fill three blocks of four
    let spec = SweepSpec {
        axis: SweepAxis::Delta(vec![0.0]),
        methods: vec![Method::Me],
        trials: 1,
        episode: small_episode(Method::Me, QuantSpec::none(), 0),
        data: SynthConfig {
            n_train_total: 33,
            n_test_total: 30,
            ..SynthConfig::default()
        },
        master_seed: 1,
    };
    match run_sweep(&spec) {
        Err(Error::Episode { source, .. }) => {
            assert!(matches!(*source, Error::InsufficientData(_)))
        }
        other => panic!("expected an episode error, got {other:?}"),
    }
}
