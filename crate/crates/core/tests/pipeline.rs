//! From CSV files on disk to a written benchmark report, through the public
//! API only.

use std::collections::BTreeMap;

use linkbn::baselines::{draw_samples, read_samples, write_samples, AviEstimator, SampleMode, SamplingEstimator};
use linkbn::catalog::Catalog;
use linkbn::inference::{Estimator, LinkedEstimator};
use linkbn::linker::{build_linked, load_model, save_model};
use linkbn::oracle::exact;
use linkbn::query::parse_query;
use linkbn::synth;
use linkbn::workload::{expand, run_bench, write_report, BenchOptions, MethodCost};

#[test]
fn star_schema_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let generated = synth::star_instance(3, 6000);
    let schema_path = synth::write_csv(&generated, dir.path().join("data")).unwrap();
    let catalog = Catalog::load(&schema_path).unwrap();
    assert_eq!(catalog.schema.fingerprint(), generated.schema.fingerprint());
    for rel in generated.relations() {
        assert_eq!(catalog.row_count(&rel.name), Some(rel.row_count));
    }

    let model = build_linked(&catalog, 1).unwrap();
    let model_path = dir.path().join("star.lbn");
    let bytes = save_model(&model, &model_path).unwrap();
    assert_eq!(bytes, std::fs::metadata(&model_path).unwrap().len());
    let loaded = load_model(&model_path).unwrap();
    loaded.check_schema(&catalog.schema).unwrap();

    let seeds = synth::star_seeds();
    let queries = expand(&seeds[0], &catalog.schema).unwrap();
    assert!(!queries.is_empty());
    let fresh = LinkedEstimator::new(&model);
    let reloaded = LinkedEstimator::new(&loaded);
    for q in queries.iter().take(40) {
        let a = fresh.estimate(q).unwrap();
        let b = reloaded.estimate(q).unwrap();
        assert_eq!(a.selectivity.to_bits(), b.selectivity.to_bits());
    }
}

#[test]
fn persisted_samples_give_the_same_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = synth::star_instance(5, 4000);
    let samples = draw_samples(&catalog, 0.2, 11, SampleMode::Correlated).unwrap();
    write_samples(&catalog, &samples, dir.path()).unwrap();
    let back = read_samples(dir.path()).unwrap();
    assert_eq!(back, samples);
    let q = &synth::star_seeds()[1];
    let a = SamplingEstimator::new(&catalog, samples).estimate(q).unwrap();
    let b = SamplingEstimator::new(&catalog, back).estimate(q).unwrap();
    assert_eq!(a.selectivity.to_bits(), b.selectivity.to_bits());
}

#[test]
fn toy_bench_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = synth::toy_catalog();
    let spec = linkbn::workload::WorkloadSpec::from_json(synth::TOY_WORKLOAD).unwrap();
    let queries = linkbn::workload::expand_workload(&spec, &catalog.schema).unwrap();
    let k1 = build_linked(&catalog, 1).unwrap();
    let avi = AviEstimator::new(&catalog).unwrap();
    let linked = LinkedEstimator::new(&k1);
    let estimators: [&dyn Estimator; 2] = [&avi, &linked];
    let result = run_bench(&catalog, &estimators, &queries, BenchOptions::default());
    assert_eq!(result.records.len(), 2 * queries.len());
    assert!(result.skipped.is_empty());
    let costs = BTreeMap::from([("k1".to_string(), MethodCost::default())]);
    write_report(&result, &costs, dir.path()).unwrap();

    let sorted = std::fs::read_to_string(dir.path().join("sorted_qerrors.csv")).unwrap();
    assert_eq!(sorted.lines().count(), 1 + 2 * queries.len());
    let per_query = std::fs::read_to_string(dir.path().join("per_query.csv")).unwrap();
    assert_eq!(per_query.lines().count(), 1 + 2 * queries.len());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["queries"], queries.len());
}

#[test]
fn sql_and_json_queries_agree() {
    let catalog = synth::toy_catalog();
    let sql = "SELECT * FROM customers, purchases WHERE customers.id = purchases.customer_id \
               AND customers.hair = 'Blond' AND customers.nationality = 'Swedish'";
    let a = parse_query(sql, &catalog.schema, &catalog).unwrap();
    let b = parse_query(synth::TOY_BLOND_SWEDISH, &catalog.schema, &catalog).unwrap();
    assert_eq!(a, b);
    assert!((exact(&catalog, &a).unwrap().selectivity - 5.0 / 7.0).abs() < 1e-12);
}
