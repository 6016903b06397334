//! Browser bindings for three small demos: estimating queries on the shop
//! toy database, learning a Chow-Liu tree from pasted CSV, and measuring
//! how FK skew and correlation hurt the independence baseline.
//!
//! Every export takes and returns JSON text. The plain Rust functions are
//! what the tests call; the `#[wasm_bindgen]` wrappers only convert errors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use linkbn::baselines::AviEstimator;
use linkbn::catalog::{AttributeDecl, AttributeKind, Catalog, EncodingOptions, RelationDecl, Schema};
use linkbn::inference::{Estimator, LinkedEstimator};
use linkbn::linker::{build_linked, LinkedModel};
use linkbn::oracle::exact;
use linkbn::query::{parse_query, Predicate, Query};
use linkbn::structure::{build_mi_graph, NodeFactor};
use linkbn::synth::{self, TableSpec};
use linkbn::workload::cardinality_q_error;

type Result<T> = std::result::Result<T, String>;

fn text<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(text)
}

/// Labels of every attribute of the toy database, by relation.
pub fn toy_domains_json() -> Result<String> {
    let catalog = synth::toy_catalog();
    let mut out: BTreeMap<&str, BTreeMap<&str, Vec<&str>>> = BTreeMap::new();
    for rel in catalog.relations() {
        let attrs = out.entry(rel.name.as_str()).or_default();
        for col in &rel.columns {
            attrs.insert(col.name.as_str(), col.dictionary.labels.iter().map(String::as_str).collect());
        }
    }
    to_json(&out)
}

#[derive(Serialize)]
struct MethodResult {
    method: String,
    selectivity: f64,
    cardinality: f64,
    q_error: f64,
}

#[derive(Serialize)]
struct ToyAnswer {
    query: Query,
    true_selectivity: f64,
    true_cardinality: u64,
    join_size: u64,
    estimates: Vec<MethodResult>,
}

/// Runs a query (SQL or JSON) on the toy database with the oracle, AVI and
/// linked models for k = 0, 1, 2.
pub fn toy_estimate_json(query_text: &str) -> Result<String> {
    let catalog = synth::toy_catalog();
    let query = parse_query(query_text, &catalog.schema, &catalog).map_err(text)?;
    let truth = exact(&catalog, &query).map_err(text)?;
    let avi = AviEstimator::new(&catalog).map_err(text)?;
    let models: Vec<LinkedModel> = (0..=2)
        .map(|k| build_linked(&catalog, k))
        .collect::<std::result::Result<_, _>>()
        .map_err(text)?;
    let mut estimators: Vec<Box<dyn Estimator + '_>> = vec![Box::new(avi)];
    for m in &models {
        estimators.push(Box::new(LinkedEstimator::new(m)));
    }
    let mut estimates = Vec::new();
    for est in &estimators {
        let e = est.estimate(&query).map_err(text)?;
        estimates.push(MethodResult {
            method: e.method.clone(),
            selectivity: e.selectivity,
            cardinality: e.cardinality,
            q_error: cardinality_q_error(truth.qualifying as f64, e.cardinality),
        });
    }
    to_json(&ToyAnswer {
        query,
        true_selectivity: truth.selectivity,
        true_cardinality: truth.qualifying,
        join_size: truth.join_size,
        estimates,
    })
}

#[derive(Serialize)]
struct TreeEdge {
    parent: String,
    child: String,
    mutual_information: f64,
}

#[derive(Serialize)]
struct PairWeight {
    a: String,
    b: String,
    mutual_information: f64,
}

#[derive(Serialize)]
struct ChowLiuAnswer {
    rows: usize,
    columns: Vec<String>,
    root: String,
    edges: Vec<TreeEdge>,
    pairs: Vec<PairWeight>,
}

/// Learns the tree of a single categorical table given as CSV with a
/// header row. Every column is treated as categorical.
pub fn chow_liu_json(csv_text: &str) -> Result<String> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(text)?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err("need at least two columns".into());
    }
    let schema = Schema {
        relations: vec![RelationDecl {
            name: "t".into(),
            path: "t.csv".into(),
            primary_key: None,
            attributes: header
                .iter()
                .map(|h| AttributeDecl {
                    name: h.clone(),
                    kind: AttributeKind::Categorical,
                })
                .collect(),
            foreign_keys: Vec::new(),
        }],
        encoding: EncodingOptions::default(),
    };
    let catalog = Catalog::from_csv_strings(schema, &BTreeMap::from([("t".to_string(), csv_text.to_string())]))
        .map_err(text)?;
    let rel = catalog.relation("t").ok_or("table missing")?;
    let graph = build_mi_graph(rel).map_err(text)?;
    let model = build_linked(&catalog, 0).map_err(text)?;
    let bn = &model.networks["t"];
    let name = |i: usize| bn.nodes[i].name.clone();
    let root = bn.root.map(name).unwrap_or_default();
    let edges = bn
        .nodes
        .iter()
        .filter_map(|n| {
            n.parent.map(|p| TreeEdge {
                parent: name(p),
                child: n.name.clone(),
                mutual_information: n.mi_to_parent,
            })
        })
        .collect();
    let columns: Vec<String> = rel.columns.iter().map(|c| c.name.clone()).collect();
    let mut pairs: Vec<PairWeight> = graph
        .edges()
        .into_iter()
        .map(|(a, b, w)| PairWeight {
            a: columns[a].clone(),
            b: columns[b].clone(),
            mutual_information: w,
        })
        .collect();
    pairs.sort_by(|x, y| y.mutual_information.total_cmp(&x.mutual_information));
    to_json(&ChowLiuAnswer {
        rows: rel.row_count,
        columns,
        root,
        edges,
        pairs,
    })
}

/// Knobs of the skew explorer.
#[derive(Clone, Debug, Deserialize)]
pub struct SkewParams {
    /// Number of customers.
    pub customers: usize,
    /// Mean purchases per customer.
    pub fanout: usize,
    /// Exponent of the purchase weight `(1 + nationality)^skew`.
    pub skew: f64,
    /// Probability that hair colour follows nationality.
    pub correlation: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Serialize)]
struct SkewRow {
    nationality: String,
    hair: Option<String>,
    truth: u64,
    estimates: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct SkewAnswer {
    purchases: usize,
    rows: Vec<SkewRow>,
    /// Median and worst q-error per method.
    summary: BTreeMap<String, (f64, f64)>,
    /// Post-join share of each nationality next to its share of customers.
    shares: Vec<(String, f64, f64)>,
}

const NATIONALITIES: usize = 4;
const HAIR: usize = 4;

fn skew_catalog(p: &SkewParams) -> Result<Catalog> {
    use rand::distributions::{Distribution, WeightedIndex};
    use rand::{Rng, SeedableRng};

    if p.customers == 0 || p.customers > 20_000 || p.fanout == 0 || p.fanout > 50 {
        return Err("customers must be in 1..=20000 and fanout in 1..=50".into());
    }
    if !(0.0..=1.0).contains(&p.correlation) || !(0.0..=6.0).contains(&p.skew) {
        return Err("correlation must be in [0, 1] and skew in [0, 6]".into());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(p.seed);
    let nationality: Vec<u32> = (0..p.customers).map(|_| rng.gen_range(0..NATIONALITIES as u32)).collect();
    let hair: Vec<u32> = nationality
        .iter()
        .map(|&n| {
            if rng.gen_bool(p.correlation) {
                n % HAIR as u32
            } else {
                rng.gen_range(0..HAIR as u32)
            }
        })
        .collect();
    let weights: Vec<f64> = nationality.iter().map(|&n| (1.0 + n as f64).powf(p.skew)).collect();
    let pick = WeightedIndex::new(&weights).map_err(text)?;
    let purchases = p.customers * p.fanout;
    let customer_id: Vec<Option<u32>> = (0..purchases).map(|_| Some(pick.sample(&mut rng) as u32)).collect();
    let day: Vec<u32> = (0..purchases).map(|_| rng.gen_range(0..7)).collect();
    synth::assemble(vec![
        TableSpec::new("customers")
            .attribute("nationality", nationality, NATIONALITIES)
            .attribute("hair", hair, HAIR),
        TableSpec::new("purchases")
            .attribute("day", day, 7)
            .foreign_key("customer_id", "customers", customer_id),
    ])
    .map_err(text)
}

/// Generates customers and purchases with the given skew and correlation,
/// then compares AVI, k0 and k1 with the truth on every nationality and
/// nationality-plus-hair query over the join.
pub fn skew_explore_json(params_json: &str) -> Result<String> {
    let params: SkewParams = serde_json::from_str(params_json).map_err(text)?;
    let catalog = skew_catalog(&params)?;
    let avi = AviEstimator::new(&catalog).map_err(text)?;
    let k0 = build_linked(&catalog, 0).map_err(text)?;
    let k1 = build_linked(&catalog, 1).map_err(text)?;
    let estimators: Vec<Box<dyn Estimator + '_>> = vec![
        Box::new(avi),
        Box::new(LinkedEstimator::new(&k0)),
        Box::new(LinkedEstimator::new(&k1)),
    ];

    let n_label = |c: usize| synth::label(c as u32);
    let mut rows = Vec::new();
    let mut q_errors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for n in 0..NATIONALITIES {
        for h in std::iter::once(None).chain((0..HAIR).map(Some)) {
            let mut predicates = vec![Predicate::eq("customers", "nationality", n_label(n).as_str())];
            if let Some(h) = h {
                predicates.push(Predicate::eq("customers", "hair", n_label(h).as_str()));
            }
            let query = Query {
                relations: vec!["customers".into(), "purchases".into()],
                joins: vec![("purchases".into(), "customer_id".into())],
                predicates,
            }
            .canonical();
            let truth = exact(&catalog, &query).map_err(text)?;
            let mut estimates = BTreeMap::new();
            for est in &estimators {
                let e = est.estimate(&query).map_err(text)?;
                q_errors
                    .entry(e.method.clone())
                    .or_default()
                    .push(cardinality_q_error(truth.qualifying as f64, e.cardinality));
                estimates.insert(e.method, e.cardinality);
            }
            rows.push(SkewRow {
                nationality: n_label(n),
                hair: h.map(n_label),
                truth: truth.qualifying,
                estimates,
            });
        }
    }
    let summary = q_errors
        .into_iter()
        .map(|(m, mut v)| {
            v.sort_by(f64::total_cmp);
            let stats = (linkbn::workload::quantile(&v, 0.5), v.last().copied().unwrap_or(f64::NAN));
            (m, stats)
        })
        .collect();

    let shares = nationality_shares(&catalog, &k1)?;
    to_json(&SkewAnswer {
        purchases: params.customers * params.fanout,
        rows,
        summary,
        shares,
    })
}

/// `(label, share among customers, share among purchases)` per nationality,
/// read from the k=0 customers root and the k=1 imported copy.
fn nationality_shares(catalog: &Catalog, k1: &LinkedModel) -> Result<Vec<(String, f64, f64)>> {
    let customers = catalog.relation("customers").ok_or("customers missing")?;
    let col = customers.column("nationality").ok_or("nationality missing")?;
    let mut pre = vec![0.0; NATIONALITIES];
    for &c in &col.codes {
        if (c as usize) < NATIONALITIES {
            pre[c as usize] += 1.0 / customers.row_count as f64;
        }
    }
    let purchases = &k1.networks["purchases"];
    let post: Vec<f64> = match purchases
        .nodes
        .iter()
        .position(|n| n.origin.relation == "customers" && n.origin.attribute == "nationality")
    {
        Some(i) => {
            let mut p = vec![0.0; NATIONALITIES];
            // marginal of the imported node, found by pushing the root
            // marginal down the path to it
            let marginal = node_marginal(purchases, i);
            for (v, slot) in p.iter_mut().enumerate() {
                *slot = marginal.get(v).copied().unwrap_or(0.0);
            }
            p
        }
        None => pre.clone(),
    };
    Ok((0..NATIONALITIES)
        .map(|n| (synth::label(n as u32), pre[n], post[n]))
        .collect())
}

fn node_marginal(bn: &linkbn::structure::TreeBn, i: usize) -> Vec<f64> {
    let mut path = vec![i];
    while let Some(p) = bn.nodes[*path.last().expect("non-empty")].parent {
        path.push(p);
    }
    path.reverse();
    let mut current: Vec<f64> = Vec::new();
    for &j in &path {
        current = match &bn.nodes[j].factor {
            NodeFactor::Root(m) => m.probs.clone(),
            NodeFactor::Conditional(cpt) => {
                let card = bn.nodes[j].card;
                let dense = cpt.to_dense();
                let mut next = vec![0.0; card];
                for (u, w) in current.iter().enumerate() {
                    for (v, slot) in next.iter_mut().enumerate() {
                        *slot += w * dense[u * card + v];
                    }
                }
                next
            }
        };
    }
    current
}

#[wasm_bindgen]
pub fn toy_domains() -> std::result::Result<String, JsValue> {
    toy_domains_json().map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn toy_estimate(query_text: &str) -> std::result::Result<String, JsValue> {
    toy_estimate_json(query_text).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn chow_liu(csv_text: &str) -> std::result::Result<String, JsValue> {
    chow_liu_json(csv_text).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn skew_explore(params_json: &str) -> std::result::Result<String, JsValue> {
    skew_explore_json(params_json).map_err(|e| JsValue::from_str(&e))
}
