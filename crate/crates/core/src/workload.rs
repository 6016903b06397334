//! Workload expansion, q-error statistics and benchmark reports.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Schema};
use crate::inference::Estimator;
use crate::oracle::{exact_with, OracleOptions, Truth};
use crate::query::Query;
use crate::{Error, Result};

/// Seed queries plus expansion settings, as read from a workload file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub seeds: Vec<Query>,
    #[serde(default)]
    pub seed: u64,
    /// Keep at most this many expanded queries, chosen at random.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
}

impl WorkloadSpec {
    pub fn from_json(text: &str) -> Result<WorkloadSpec> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Largest number of relations in a seed whose subgraphs are enumerated.
const MAX_SEED_RELATIONS: usize = 24;

/// Every connected induced sub-join of `seed`, paired with every non-empty
/// subset of the seed's predicates on the chosen relations.
pub fn expand(seed: &Query, schema: &Schema) -> Result<Vec<Query>> {
    let n = seed.relations.len();
    if n > MAX_SEED_RELATIONS {
        return Err(Error::InvalidQuery(format!(
            "seed joins {n} relations, at most {MAX_SEED_RELATIONS} are supported"
        )));
    }
    let index = |r: &str| seed.relations.iter().position(|x| x == r);
    let mut edges = Vec::with_capacity(seed.joins.len());
    for (parent, fk) in &seed.joins {
        let edge = schema
            .fk_edge(parent, fk)
            .ok_or_else(|| Error::InvalidQuery(format!("{parent}.{fk} is not a foreign key")))?;
        let (Some(a), Some(b)) = (index(parent), index(&edge.child)) else {
            return Err(Error::InvalidQuery(format!("{parent}.{fk} joins an unlisted relation")));
        };
        edges.push((a, b));
    }
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for mask in 1u32..(1u32 << n) {
        if !connected(mask, &edges) {
            continue;
        }
        let inside = |i: usize| mask & (1 << i) != 0;
        let relations: Vec<String> = (0..n).filter(|&i| inside(i)).map(|i| seed.relations[i].clone()).collect();
        let joins: Vec<(String, String)> = seed
            .joins
            .iter()
            .zip(&edges)
            .filter(|(_, &(a, b))| inside(a) && inside(b))
            .map(|(j, _)| j.clone())
            .collect();
        let preds: Vec<_> = seed
            .predicates
            .iter()
            .filter(|p| relations.contains(&p.relation))
            .collect();
        if preds.len() > 20 {
            return Err(Error::InvalidQuery("too many predicates to expand".into()));
        }
        for subset in 1u32..(1u32 << preds.len()) {
            let predicates = (0..preds.len())
                .filter(|&i| subset & (1 << i) != 0)
                .map(|i| preds[i].clone())
                .collect();
            let q = Query {
                relations: relations.clone(),
                joins: joins.clone(),
                predicates,
            }
            .canonical();
            if seen.insert(q.to_json()) {
                out.push(q);
            }
        }
    }
    Ok(out)
}

fn connected(mask: u32, edges: &[(usize, usize)]) -> bool {
    let start = mask.trailing_zeros() as usize;
    let mut reached = 1u32 << start;
    loop {
        let mut grew = false;
        for &(a, b) in edges {
            let (ia, ib) = (mask & (1 << a) != 0, mask & (1 << b) != 0);
            if !(ia && ib) {
                continue;
            }
            let (ra, rb) = (reached & (1 << a) != 0, reached & (1 << b) != 0);
            if ra != rb {
                reached |= (1 << a) | (1 << b);
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    reached == mask
}

/// Expands every seed, removes duplicates across seeds and applies the cap.
pub fn expand_workload(spec: &WorkloadSpec, schema: &Schema) -> Result<Vec<Query>> {
    let mut all = Vec::new();
    let mut seen = BTreeSet::new();
    for seed in &spec.seeds {
        for q in expand(seed, schema)? {
            if seen.insert(q.to_json()) {
                all.push(q);
            }
        }
    }
    if let Some(cap) = spec.cap {
        if cap < all.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut picked = sample(&mut rng, all.len(), cap).into_vec();
            picked.sort_unstable();
            all = picked.into_iter().map(|i| all[i].clone()).collect();
        }
    }
    Ok(all)
}

/// Symmetric ratio error between two positive quantities.
pub fn q_error(truth: f64, estimate: f64) -> f64 {
    if truth >= estimate {
        truth / estimate
    } else {
        estimate / truth
    }
}

/// Q-error between cardinalities, each first raised to at least one tuple.
pub fn cardinality_q_error(truth: f64, estimate: f64) -> f64 {
    q_error(truth.max(1.0), estimate.max(1.0))
}

/// Nearest-rank quantile of a sorted slice, `p` in `(0, 1]`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QErrorStats {
    pub count: usize,
    pub median: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    pub mean: f64,
}

impl QErrorStats {
    pub fn from_values(values: &[f64]) -> QErrorStats {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = if sorted.is_empty() {
            f64::NAN
        } else {
            sorted.iter().sum::<f64>() / sorted.len() as f64
        };
        QErrorStats {
            count: sorted.len(),
            median: quantile(&sorted, 0.5),
            p90: quantile(&sorted, 0.9),
            p95: quantile(&sorted, 0.95),
            p99: quantile(&sorted, 0.99),
            max: sorted.last().copied().unwrap_or(f64::NAN),
            mean,
        }
    }
}

/// One estimate of one query by one method.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub query_id: usize,
    pub method: String,
    pub joins: usize,
    pub filters: usize,
    pub truth: Truth,
    pub est_selectivity: f64,
    pub est_cardinality: f64,
    pub q_error: f64,
    pub degenerate: bool,
    pub elapsed: Duration,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchResult {
    pub queries: usize,
    pub records: Vec<Record>,
    /// `(query id, method or empty for the oracle, reason)`.
    pub skipped: Vec<(usize, String, String)>,
}

impl BenchResult {
    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }

    pub fn q_errors(&self, method: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.q_error)
            .collect()
    }

    pub fn stats(&self, method: &str) -> QErrorStats {
        QErrorStats::from_values(&self.q_errors(method))
    }

    /// Mean and standard deviation of estimation time per join-count
    /// bucket, in milliseconds.
    pub fn timing(&self, method: &str) -> BTreeMap<JoinBucket, (usize, f64, f64)> {
        let mut groups: BTreeMap<JoinBucket, Vec<f64>> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.method == method) {
            groups
                .entry(JoinBucket::of(r.joins))
                .or_default()
                .push(r.elapsed.as_secs_f64() * 1e3);
        }
        groups
            .into_iter()
            .map(|(b, v)| {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                (b, (v.len(), mean, var.sqrt()))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum JoinBucket {
    None,
    One,
    TwoToFive,
    SixPlus,
}

impl JoinBucket {
    pub fn of(joins: usize) -> JoinBucket {
        match joins {
            0 => JoinBucket::None,
            1 => JoinBucket::One,
            2..=5 => JoinBucket::TwoToFive,
            _ => JoinBucket::SixPlus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            JoinBucket::None => "0",
            JoinBucket::One => "1",
            JoinBucket::TwoToFive => "2-5",
            JoinBucket::SixPlus => ">=6",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchOptions {
    pub jobs: usize,
    pub oracle: OracleOptions,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            jobs: 1,
            oracle: OracleOptions::default(),
        }
    }
}

/// Records of one query plus `(query, method, reason)` for what was skipped.
type QueryOutcome = (Vec<Record>, Vec<(usize, String, String)>);

fn run_one(
    catalog: &Catalog,
    estimators: &[&dyn Estimator],
    id: usize,
    query: &Query,
    options: &BenchOptions,
) -> QueryOutcome {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let truth = match exact_with(catalog, query, options.oracle) {
        Ok(t) => t,
        Err(e) => {
            log::warn!("query {id}: oracle skipped: {e}");
            skipped.push((id, String::new(), e.to_string()));
            return (records, skipped);
        }
    };
    for est in estimators {
        match est.estimate(query) {
            Ok(e) => records.push(Record {
                query_id: id,
                method: est.name(),
                joins: query.join_count(),
                filters: query.predicates.len(),
                q_error: cardinality_q_error(truth.qualifying as f64, e.cardinality),
                truth: truth.clone(),
                est_selectivity: e.selectivity,
                est_cardinality: e.cardinality,
                degenerate: e.degenerate,
                elapsed: e.elapsed,
            }),
            Err(e) => {
                log::warn!("query {id}: {} failed: {e}", est.name());
                skipped.push((id, est.name(), e.to_string()));
            }
        }
    }
    (records, skipped)
}

/// Runs every estimator on every query and compares with the oracle.
/// Records come back ordered by query, then by estimator, whatever the
/// number of worker threads.
pub fn run_bench(
    catalog: &Catalog,
    estimators: &[&dyn Estimator],
    queries: &[Query],
    options: BenchOptions,
) -> BenchResult {
    let jobs = options.jobs.max(1).min(queries.len().max(1));
    let mut parts: Vec<QueryOutcome> = Vec::new();
    if jobs == 1 {
        for (id, q) in queries.iter().enumerate() {
            parts.push(run_one(catalog, estimators, id, q, &options));
        }
    } else {
        let chunk = queries.len().div_ceil(jobs);
        std::thread::scope(|scope| {
            let handles: Vec<_> = queries
                .chunks(chunk)
                .enumerate()
                .map(|(c, qs)| {
                    let options = &options;
                    scope.spawn(move || {
                        qs.iter()
                            .enumerate()
                            .map(|(i, q)| run_one(catalog, estimators, c * chunk + i, q, options))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                parts.extend(h.join().expect("bench worker panicked"));
            }
        });
    }
    let mut result = BenchResult {
        queries: queries.len(),
        ..BenchResult::default()
    };
    for (records, skipped) in parts {
        result.records.extend(records);
        result.skipped.extend(skipped);
    }
    result
}

/// Construction cost of one method, reported next to its accuracy.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodCost {
    pub construction_secs: f64,
    pub model_bytes: u64,
}

#[derive(Serialize)]
struct Summary<'a> {
    queries: usize,
    skipped: usize,
    methods: BTreeMap<&'a str, MethodSummary>,
    queries_by_joins: BTreeMap<usize, usize>,
    queries_by_filters: BTreeMap<usize, usize>,
}

#[derive(Serialize)]
struct MethodSummary {
    #[serde(flatten)]
    stats: QErrorStats,
    #[serde(flatten)]
    cost: MethodCost,
}

fn csv_error(e: csv::Error) -> Error {
    Error::Csv {
        relation: "report".into(),
        message: e.to_string(),
    }
}

fn write_csv_file(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut out = csv::Writer::from_path(path).map_err(csv_error)?;
    out.write_record(header).map_err(csv_error)?;
    for row in rows {
        out.write_record(&row).map_err(csv_error)?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes `per_query.csv`, `aggregate.csv`, `sorted_qerrors.csv`,
/// `timing.csv` and `summary.json` into `dir`. Everything except the timing
/// file and the construction times is a pure function of the inputs.
pub fn write_report(result: &BenchResult, costs: &BTreeMap<String, MethodCost>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let methods = result.methods();

    write_csv_file(
        &dir.join("per_query.csv"),
        &[
            "query_id",
            "method",
            "joins",
            "filters",
            "true_cardinality",
            "true_selectivity",
            "est_selectivity",
            "est_cardinality",
            "q_error",
            "degenerate",
        ],
        result
            .records
            .iter()
            .map(|r| {
                vec![
                    r.query_id.to_string(),
                    r.method.clone(),
                    r.joins.to_string(),
                    r.filters.to_string(),
                    r.truth.qualifying.to_string(),
                    r.truth.selectivity.to_string(),
                    r.est_selectivity.to_string(),
                    r.est_cardinality.to_string(),
                    r.q_error.to_string(),
                    r.degenerate.to_string(),
                ]
            })
            .collect(),
    )?;

    write_csv_file(
        &dir.join("aggregate.csv"),
        &["method", "count", "median", "p90", "p95", "p99", "max", "mean"],
        methods
            .iter()
            .map(|m| {
                let s = result.stats(m);
                vec![
                    m.clone(),
                    s.count.to_string(),
                    s.median.to_string(),
                    s.p90.to_string(),
                    s.p95.to_string(),
                    s.p99.to_string(),
                    s.max.to_string(),
                    s.mean.to_string(),
                ]
            })
            .collect(),
    )?;

    let mut sorted_rows = Vec::new();
    for m in &methods {
        let mut q = result.q_errors(m);
        q.sort_by(f64::total_cmp);
        sorted_rows.extend(
            q.iter()
                .enumerate()
                .map(|(rank, v)| vec![m.clone(), (rank + 1).to_string(), v.to_string()]),
        );
    }
    write_csv_file(&dir.join("sorted_qerrors.csv"), &["method", "rank", "q_error"], sorted_rows)?;

    let mut timing_rows = Vec::new();
    for m in &methods {
        for (bucket, (count, mean, sd)) in result.timing(m) {
            timing_rows.push(vec![
                m.clone(),
                bucket.label().to_string(),
                count.to_string(),
                format!("{mean:.6}"),
                format!("{sd:.6}"),
            ]);
        }
    }
    write_csv_file(
        &dir.join("timing.csv"),
        &["method", "joins", "count", "mean_ms", "sd_ms"],
        timing_rows,
    )?;

    let mut by_joins = BTreeMap::new();
    let mut by_filters = BTreeMap::new();
    let mut counted = BTreeSet::new();
    for r in &result.records {
        if counted.insert(r.query_id) {
            *by_joins.entry(r.joins).or_insert(0) += 1;
            *by_filters.entry(r.filters).or_insert(0) += 1;
        }
    }
    let summary = Summary {
        queries: result.queries,
        skipped: result.skipped.len(),
        methods: methods
            .iter()
            .map(|m| {
                (
                    m.as_str(),
                    MethodSummary {
                        stats: result.stats(m),
                        cost: costs.get(m).cloned().unwrap_or_default(),
                    },
                )
            })
            .collect(),
        queries_by_joins: by_joins,
        queries_by_filters: by_filters,
    };
    let path = dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::AviEstimator;
    use crate::inference::LinkedEstimator;
    use crate::linker::build_linked;
    use crate::query::Predicate;
    use crate::synth;
    use proptest::prelude::*;

    #[test]
    fn q_error_examples() {
        assert_eq!(q_error(10.0, 10.0), 1.0);
        assert_eq!(q_error(10.0, 5.0), 2.0);
        assert_eq!(q_error(5.0, 10.0), 2.0);
        assert_eq!(cardinality_q_error(0.0, 0.2), 1.0);
        assert_eq!(cardinality_q_error(0.0, 3.0), 3.0);
    }

    #[test]
    fn quantiles_use_nearest_rank() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.5), 5.0);
        assert_eq!(quantile(&v, 0.9), 9.0);
        assert_eq!(quantile(&v, 0.95), 10.0);
        assert_eq!(quantile(&v, 1.0), 10.0);
        assert_eq!(quantile(&[3.0], 0.99), 3.0);
    }

    #[test]
    fn toy_seed_expands() {
        let cat = synth::toy_catalog();
        let spec = WorkloadSpec::from_json(synth::TOY_WORKLOAD).unwrap();
        let qs = expand_workload(&spec, &cat.schema).unwrap();
        // subgraphs: 3 singletons (1 predicate each), 2 pairs (3 subsets each),
        // the full star (7 subsets)
        assert_eq!(qs.len(), 3 + 2 * 3 + 7);
        for q in &qs {
            q.validate(&cat.schema, &cat).unwrap();
        }
    }

    #[test]
    fn cap_is_deterministic() {
        let cat = synth::toy_catalog();
        let mut spec = WorkloadSpec::from_json(synth::TOY_WORKLOAD).unwrap();
        spec.cap = Some(5);
        let a = expand_workload(&spec, &cat.schema).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, expand_workload(&spec, &cat.schema).unwrap());
    }

    #[test]
    fn bench_is_independent_of_jobs() {
        let cat = synth::toy_catalog();
        let spec = WorkloadSpec::from_json(synth::TOY_WORKLOAD).unwrap();
        let qs = expand_workload(&spec, &cat.schema).unwrap();
        let model = build_linked(&cat, 1).unwrap();
        let linked = LinkedEstimator::new(&model);
        let avi = AviEstimator::new(&cat).unwrap();
        let ests: [&dyn Estimator; 2] = [&linked, &avi];
        let strip = |r: BenchResult| {
            r.records
                .into_iter()
                .map(|mut x| {
                    x.elapsed = Duration::ZERO;
                    x
                })
                .collect::<Vec<_>>()
        };
        let one = strip(run_bench(&cat, &ests, &qs, BenchOptions::default()));
        let four = strip(run_bench(&cat, &ests, &qs, BenchOptions { jobs: 4, ..Default::default() }));
        assert_eq!(one, four);
        assert_eq!(one.len(), 2 * qs.len());
    }

    #[test]
    fn oracle_cap_skips_queries() {
        let cat = synth::toy_catalog();
        let q = Query {
            relations: vec!["customers".into()],
            joins: vec![],
            predicates: vec![Predicate::eq("customers", "hair", "Blond")],
        };
        let avi = AviEstimator::new(&cat).unwrap();
        let opts = BenchOptions {
            jobs: 1,
            oracle: OracleOptions { max_rows: Some(2) },
        };
        let r = run_bench(&cat, &[&avi], &[q], opts);
        assert!(r.records.is_empty());
        assert_eq!(r.skipped.len(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn q_error_properties(a in 1e-6f64..1e6, b in 1e-6f64..1e6, c in 1e-3f64..1e3) {
            let q = q_error(a, b);
            prop_assert!(q >= 1.0);
            prop_assert_eq!(q, q_error(b, a));
            prop_assert!((q_error(c * a, c * b) / q - 1.0).abs() < 1e-9);
        }
    }
}
