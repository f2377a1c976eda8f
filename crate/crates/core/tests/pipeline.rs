use std::collections::BTreeMap;

use acdc_core::encode::{encode_flows, field_registry, FeatureSubset, ENCODED_PACKETS};
use acdc_core::explore::{build_pool, ClassifierPool, PoolConfig};
use acdc_core::models::{permutation_importance, train_ensemble, EnsembleParams};
use acdc_core::profile::{profile_pool, CostModel, ProfilerOptions, ProfilerRegistry};
use acdc_core::simulate::{run, throughput_report, Scenario};
use acdc_core::traffic::{
    generate_synthetic, parse_pcap_bytes, split_train_test, write_pcap_bytes, FlowSet, GeneratorConfig,
};

fn small_params() -> EnsembleParams {
    EnsembleParams { n_rounds: 10, max_depth: 4, ..EnsembleParams::default() }
}

/// Writes each class to its own capture and reads the captures back.
fn through_pcap(set: &FlowSet, max_packets: usize) -> FlowSet {
    let parts = set
        .label_names
        .iter()
        .map(|(&label, name)| {
            let flows = set.flows.iter().filter(|f| f.label == label).cloned().collect();
            let one = FlowSet::new(flows, BTreeMap::from([(label, name.clone())])).unwrap();
            parse_pcap_bytes(&write_pcap_bytes(&one), label, name, max_packets).unwrap()
        })
        .collect::<Vec<_>>();
    FlowSet::merge(parts).unwrap()
}

#[test]
fn pcap_round_trip_keeps_headers() {
    let set = generate_synthetic(&GeneratorConfig::preset(4, 15), 11).unwrap();
    let back = through_pcap(&set, 4);
    assert_eq!(back.len(), set.len());
    assert_eq!(back.label_names, set.label_names);
    let by_key: BTreeMap<_, _> = back.flows.iter().map(|f| (f.key, f)).collect();
    for f in &set.flows {
        let g = by_key[&f.key];
        assert_eq!(g.label, f.label);
        assert_eq!(g.packets.len(), 4);
        for (a, b) in f.packets.iter().zip(&g.packets) {
            assert_eq!(a.ip_header, b.ip_header);
            assert_eq!(a.transport_header, b.transport_header);
            assert_eq!(a.payload_len, b.payload_len);
            assert!((a.timestamp - b.timestamp).abs() < 1e-6);
        }
    }
}

#[test]
fn captured_flows_train_profile_and_simulate() {
    let data = through_pcap(&generate_synthetic(&GeneratorConfig::preset(4, 40), 5).unwrap(), 4);
    let (train, test) = split_train_test(&data, 0.5, 5).unwrap();
    let all = FeatureSubset::all_eligible();
    let x = encode_flows(&train.flows, &all, ENCODED_PACKETS).unwrap();
    let full = train_ensemble(&x, &train.labels(), &all, &small_params(), 5).unwrap();
    let x_test = encode_flows(&test.flows, &all, ENCODED_PACKETS).unwrap();
    let fi = permutation_importance(&full, &x_test, &test.labels(), None, 1, 5).unwrap();
    assert!(fi.baseline_f1 > 0.8, "all-feature F1 {}", fi.baseline_f1);

    let config = PoolConfig { sizes: vec![1, 2, 3], num_combos: 2 };
    let pool = build_pool(&train, field_registry(), &fi.importances, &config, &small_params(), 5).unwrap();
    assert_eq!(pool.members.len(), 6);

    let dir = tempfile::tempdir().unwrap();
    let manifest = pool.save(dir.path()).unwrap();
    let reloaded = ClassifierPool::load(&manifest).unwrap();
    for (a, b) in pool.members.iter().zip(&reloaded.members) {
        assert_eq!(a.model.predict_flows(&test.flows).unwrap(), b.model.predict_flows(&test.flows).unwrap());
    }

    let cost = CostModel {
        ttd_intercept: 0.05,
        ttd_per_bitflow: 1e-5,
        mem_intercept: 1e6,
        mem_per_bitflow: 50.0,
        pearson_ttd: 1.0,
        pearson_mem: 1.0,
    };
    let opts = ProfilerOptions { cost_model: Some(cost), ..ProfilerOptions::default() };
    let profiler = ProfilerRegistry::default().create("modeled", &opts).unwrap();
    let batches = [10, 50, 200];
    let profiles = profile_pool(profiler.as_ref(), &reloaded, &test, &batches).unwrap();
    assert_eq!(profiles.len(), 6 * batches.len());

    let ids: Vec<String> = reloaded.members.iter().map(|m| m.id.clone()).collect();
    let trace = run(&ids, &profiles, &Scenario::constant(20, 400.0, 100_000_000), 0).unwrap();
    assert_eq!(trace.conservation_violation(), None);
    assert!(trace.ticks.iter().all(|t| !t.overcommit && t.mem_in_use <= t.mem_budget));
    let steady = throughput_report(&trace.ticks[5..], 15).unwrap();
    assert!((steady[0] - 400.0).abs() <= 400.0 * 0.05, "steady throughput {steady:?}");
    assert_eq!(trace, run(&ids, &profiles, &Scenario::constant(20, 400.0, 100_000_000), 0).unwrap());
}
