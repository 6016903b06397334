//! Baseline estimators: attribute-value independence over per-column
//! marginals, and estimation on row samples.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{fnv1a, Catalog};
use crate::factor::{ClampPolicy, Marginal};
use crate::inference::{estimated_join_size, Estimate, Estimator};
use crate::oracle::count_filtered;
use crate::query::{predicate_codes, Query};
use crate::timing::Stopwatch;
use crate::{method, Error, Result};

/// Every predicate is assumed independent of every other one, within and
/// across relations.
pub struct AviEstimator {
    marginals: BTreeMap<(String, String), Marginal>,
    dictionaries: BTreeMap<(String, String), crate::catalog::Dictionary>,
    row_counts: BTreeMap<String, u64>,
    join_cards: BTreeMap<String, u64>,
    children: BTreeMap<String, String>,
    pub clamp: ClampPolicy,
}

impl AviEstimator {
    pub fn new(catalog: &Catalog) -> Result<AviEstimator> {
        let mut marginals = BTreeMap::new();
        let mut dictionaries = BTreeMap::new();
        let mut row_counts = BTreeMap::new();
        for rel in catalog.relations() {
            row_counts.insert(rel.name.clone(), rel.row_count as u64);
            for col in &rel.columns {
                let key = (rel.name.clone(), col.name.clone());
                marginals.insert(key.clone(), Marginal::from_codes(&col.codes, col.cardinality())?);
                dictionaries.insert(key, col.dictionary.as_ref().clone());
            }
        }
        let mut join_cards = BTreeMap::new();
        let mut children = BTreeMap::new();
        for edge in catalog.schema.fk_edges() {
            join_cards.insert(edge.key(), catalog.join_cardinality(&edge).unwrap_or(0));
            children.insert(edge.key(), edge.child.clone());
        }
        Ok(AviEstimator {
            marginals,
            dictionaries,
            row_counts,
            join_cards,
            children,
            clamp: ClampPolicy::default(),
        })
    }

    pub fn selectivity(&self, query: &Query) -> Result<f64> {
        let mut s = 1.0;
        for pred in &query.predicates {
            let key = (pred.relation.clone(), pred.attribute.clone());
            let (Some(m), Some(dict)) = (self.marginals.get(&key), self.dictionaries.get(&key)) else {
                return Err(Error::UnknownAttribute {
                    relation: pred.relation.clone(),
                    attribute: pred.attribute.clone(),
                });
            };
            s *= m.mass(&predicate_codes(pred, dict));
        }
        Ok(s)
    }

    pub fn join_size(&self, query: &Query) -> f64 {
        estimated_join_size(query, &self.row_counts, &self.join_cards, |p, fk| {
            self.children.get(&format!("{p}.{fk}")).cloned()
        })
    }
}

impl Estimator for AviEstimator {
    fn name(&self) -> String {
        method::AVI.to_string()
    }

    fn estimate(&self, query: &Query) -> Result<Estimate> {
        let watch = Stopwatch::start();
        let s = self.selectivity(query)?;
        let mut est = Estimate::new(s, self.join_size(query), &self.name(), self.clamp);
        est.elapsed = watch.elapsed();
        Ok(est)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// Independent Bernoulli sample of every relation.
    Uniform,
    /// Hash-based sample on join keys, so that joining rows are kept
    /// together.
    Correlated,
}

impl SampleMode {
    pub fn method(self) -> &'static str {
        match self {
            SampleMode::Uniform => method::SAMPLING,
            SampleMode::Correlated => method::CORRELATED,
        }
    }
}

/// Retained rows per relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub mode: SampleMode,
    pub rate: f64,
    pub seed: u64,
    /// Sorted row indices.
    pub rows: BTreeMap<String, Vec<u32>>,
    /// Relation → the foreign key whose value it was hashed on; absent for
    /// relations hashed on their own primary key.
    #[serde(default)]
    pub hashed_on: BTreeMap<String, String>,
}

impl SampleSet {
    fn masks(&self, catalog: &Catalog, relations: &[String]) -> Result<BTreeMap<String, Vec<bool>>> {
        let mut out = BTreeMap::new();
        for r in relations {
            let rows = self.rows.get(r).ok_or_else(|| Error::MissingSample(r.clone()))?;
            let n = catalog.row_count(r).ok_or_else(|| Error::UnknownRelation(r.clone()))?;
            let mut mask = vec![false; n];
            for &row in rows {
                if let Some(slot) = mask.get_mut(row as usize) {
                    *slot = true;
                }
            }
            out.insert(r.clone(), mask);
        }
        Ok(out)
    }

    /// Probability that a join tuple of `query` survives sampling.
    pub fn survival(&self, catalog: &Catalog, query: &Query) -> f64 {
        let groups = match self.mode {
            SampleMode::Uniform => query.relations.len(),
            SampleMode::Correlated => {
                let linked = query
                    .joins
                    .iter()
                    .filter(|(parent, fk)| {
                        let child = catalog.schema.fk_edge(parent, fk).map(|e| e.child);
                        self.hashed_on.get(parent) == Some(fk)
                            && child.is_some_and(|c| !self.hashed_on.contains_key(&c))
                    })
                    .count();
                query.relations.len() - linked
            }
        };
        self.rate.powi(groups as i32)
    }
}

fn hash_keep(seed: u64, key: &str, rate: f64) -> bool {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(key.as_bytes());
    let h = fnv1a(&bytes);
    // top 53 bits as a uniform draw in [0, 1)
    ((h >> 11) as f64 / (1u64 << 53) as f64) < rate
}

pub fn draw_samples(catalog: &Catalog, rate: f64, seed: u64, mode: SampleMode) -> Result<SampleSet> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::RateOutOfRange(rate));
    }
    let referenced: Vec<String> = catalog.schema.fk_edges().into_iter().map(|e| e.child).collect();
    let mut rows = BTreeMap::new();
    let mut hashed_on = BTreeMap::new();
    for decl in &catalog.schema.relations {
        let rel = catalog
            .relation(&decl.name)
            .ok_or_else(|| Error::UnknownRelation(decl.name.clone()))?;
        let kept: Vec<u32> = match mode {
            SampleMode::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(decl.name.as_bytes()));
                (0..rel.row_count as u32).filter(|_| rng.gen_bool(rate)).collect()
            }
            SampleMode::Correlated => {
                let fk = decl.foreign_keys.first().map(|f| f.attribute.clone());
                match fk {
                    Some(fk) if !referenced.contains(&decl.name) || rel.primary_keys.is_empty() => {
                        let values = rel.foreign_key_values(&fk).unwrap_or(&[]);
                        hashed_on.insert(decl.name.clone(), fk.clone());
                        (0..rel.row_count)
                            .filter(|&i| {
                                values
                                    .get(i)
                                    .and_then(|v| v.as_deref())
                                    .is_some_and(|v| hash_keep(seed, v, rate))
                            })
                            .map(|i| i as u32)
                            .collect()
                    }
                    _ if !rel.primary_keys.is_empty() => (0..rel.row_count)
                        .filter(|&i| hash_keep(seed, &rel.primary_keys[i], rate))
                        .map(|i| i as u32)
                        .collect(),
                    _ => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(decl.name.as_bytes()));
                        (0..rel.row_count as u32).filter(|_| rng.gen_bool(rate)).collect()
                    }
                }
            }
        };
        rows.insert(decl.name.clone(), kept);
    }
    Ok(SampleSet {
        mode,
        rate,
        seed,
        rows,
        hashed_on,
    })
}

/// Selectivity and join size measured on the retained rows; the join size
/// is scaled back up by the survival probability.
pub fn sampling_estimate(catalog: &Catalog, samples: &SampleSet, query: &Query, clamp: ClampPolicy) -> Result<Estimate> {
    let watch = Stopwatch::start();
    let masks = samples.masks(catalog, &query.relations)?;
    let (qualifying, join) = count_filtered(catalog, query, &masks)?;
    let selectivity = if join == 0 { 0.0 } else { qualifying as f64 / join as f64 };
    let join_size = join as f64 / samples.survival(catalog, query);
    let mut est = Estimate::new(selectivity, join_size, samples.mode.method(), clamp);
    if join == 0 {
        est.degenerate = true;
    }
    est.elapsed = watch.elapsed();
    Ok(est)
}

pub struct SamplingEstimator<'a> {
    pub catalog: &'a Catalog,
    pub samples: SampleSet,
    pub clamp: ClampPolicy,
}

impl<'a> SamplingEstimator<'a> {
    pub fn new(catalog: &'a Catalog, samples: SampleSet) -> Self {
        SamplingEstimator {
            catalog,
            samples,
            clamp: ClampPolicy::default(),
        }
    }
}

impl Estimator for SamplingEstimator<'_> {
    fn name(&self) -> String {
        self.samples.mode.method().to_string()
    }

    fn estimate(&self, query: &Query) -> Result<Estimate> {
        sampling_estimate(self.catalog, &self.samples, query, self.clamp)
    }
}

const SAMPLE_ROW_COLUMN: &str = "__row";

#[derive(Serialize, Deserialize)]
struct Manifest {
    mode: SampleMode,
    rate: f64,
    seed: u64,
    relations: BTreeMap<String, ManifestEntry>,
    #[serde(default)]
    hashed_on: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    rows: usize,
}

/// Writes one CSV per relation (row index plus decoded attributes) and a
/// `manifest.json`.
pub fn write_samples(catalog: &Catalog, samples: &SampleSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut relations = BTreeMap::new();
    for (name, rows) in &samples.rows {
        let rel = catalog
            .relation(name)
            .ok_or_else(|| Error::UnknownRelation(name.clone()))?;
        let file = format!("{name}.sample.csv");
        let path = dir.join(&file);
        let csv_err = |e: csv::Error| Error::Csv {
            relation: name.clone(),
            message: e.to_string(),
        };
        let mut out = csv::Writer::from_path(&path).map_err(csv_err)?;
        let mut header = vec![SAMPLE_ROW_COLUMN.to_string()];
        header.extend(rel.columns.iter().map(|c| c.name.clone()));
        out.write_record(&header).map_err(csv_err)?;
        for &row in rows {
            let mut record = vec![row.to_string()];
            record.extend(
                rel.columns
                    .iter()
                    .map(|c| c.decode(row as usize).unwrap_or("").to_string()),
            );
            out.write_record(&record).map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;
        relations.insert(name.clone(), ManifestEntry { file, rows: rows.len() });
    }
    let manifest = Manifest {
        mode: samples.mode,
        rate: samples.rate,
        seed: samples.seed,
        relations,
        hashed_on: samples.hashed_on.clone(),
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

pub fn read_samples(dir: impl AsRef<Path>) -> Result<SampleSet> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let mut rows = BTreeMap::new();
    for (name, entry) in manifest.relations {
        let csv_err = |e: csv::Error| Error::Csv {
            relation: name.clone(),
            message: e.to_string(),
        };
        let mut reader = csv::Reader::from_path(dir.join(&entry.file)).map_err(csv_err)?;
        let mut kept = Vec::with_capacity(entry.rows);
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            let row = record.get(0).unwrap_or("");
            kept.push(row.parse::<u32>().map_err(|_| Error::Csv {
                relation: name.clone(),
                message: format!("bad row index `{row}`"),
            })?);
        }
        rows.insert(name, kept);
    }
    Ok(SampleSet {
        mode: manifest.mode,
        rate: manifest.rate,
        seed: manifest.seed,
        rows,
        hashed_on: manifest.hashed_on,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::exact;
    use crate::query::{Predicate, Scalar};
    use crate::synth;
    use proptest::prelude::*;

    fn blond_swedish() -> Query {
        Query {
            relations: vec!["customers".into(), "purchases".into()],
            joins: vec![("purchases".into(), "customer_id".into())],
            predicates: vec![
                Predicate::eq("customers", "hair", "Blond"),
                Predicate::eq("customers", "nationality", "Swedish"),
            ],
        }
    }

    #[test]
    fn avi_on_toy() {
        let cat = synth::toy_catalog();
        let avi = AviEstimator::new(&cat).unwrap();
        // 3/5 Swedish times 3/5 blond
        assert!((avi.selectivity(&blond_swedish()).unwrap() - 0.36).abs() < 1e-12);
        let e = avi.estimate(&blond_swedish()).unwrap();
        assert!((e.join_size - 7.0).abs() < 1e-9);
    }

    #[test]
    fn full_rate_sampling_is_exact() {
        let cat = synth::toy_catalog();
        for mode in [SampleMode::Uniform, SampleMode::Correlated] {
            let s = draw_samples(&cat, 1.0, 5, mode).unwrap();
            let e = sampling_estimate(&cat, &s, &blond_swedish(), ClampPolicy::default()).unwrap();
            assert!((e.selectivity - 5.0 / 7.0).abs() < 1e-12);
            assert!((e.join_size - 7.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rate_is_checked() {
        let cat = synth::toy_catalog();
        assert!(matches!(draw_samples(&cat, 0.0, 1, SampleMode::Uniform), Err(Error::RateOutOfRange(_))));
        assert!(matches!(draw_samples(&cat, 1.5, 1, SampleMode::Uniform), Err(Error::RateOutOfRange(_))));
    }

    #[test]
    fn empty_sample_is_degenerate() {
        let cat = synth::toy_catalog();
        let mut s = draw_samples(&cat, 1.0, 5, SampleMode::Uniform).unwrap();
        s.rows.insert("purchases".into(), Vec::new());
        let e = sampling_estimate(&cat, &s, &blond_swedish(), ClampPolicy::default()).unwrap();
        assert!(e.degenerate);
        assert!(e.selectivity > 0.0);
    }

    #[test]
    fn correlated_samples_keep_joining_rows_together() {
        let cat = synth::uniform_fanout_catalog(2000, 3, 1);
        let s = draw_samples(&cat, 0.1, 17, SampleMode::Correlated).unwrap();
        let customers: std::collections::BTreeSet<u32> = s.rows["customers"].iter().copied().collect();
        let targets = cat.fk_targets("purchases", "customer_id").unwrap();
        for &row in &s.rows["purchases"] {
            assert!(customers.contains(&targets[row as usize].unwrap()));
        }
        let q = Query {
            relations: vec!["customers".into(), "purchases".into()],
            joins: vec![("purchases".into(), "customer_id".into())],
            predicates: vec![Predicate::eq("purchases", "day", Scalar::from("v0001"))],
        };
        let e = sampling_estimate(&cat, &s, &q, ClampPolicy::default()).unwrap();
        let truth = exact(&cat, &q).unwrap();
        assert!((e.join_size / truth.join_size as f64 - 1.0).abs() < 0.25);
    }

    #[test]
    fn samples_round_trip() {
        let cat = synth::chain_catalog(3, 300, 4);
        let s = draw_samples(&cat, 0.2, 9, SampleMode::Correlated).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_samples(&cat, &s, dir.path()).unwrap();
        assert_eq!(read_samples(dir.path()).unwrap(), s);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn avi_never_exceeds_a_single_marginal(picks in proptest::collection::vec(0usize..10, 1..5)) {
            let cat = synth::toy_catalog();
            let avi = AviEstimator::new(&cat).unwrap();
            let pool = synth::toy_predicate_pool();
            let q = Query {
                relations: vec!["customers".into(), "purchases".into(), "shops".into()],
                joins: vec![
                    ("purchases".into(), "customer_id".into()),
                    ("purchases".into(), "shop_id".into()),
                ],
                predicates: picks.iter().map(|&i| pool[i].clone()).collect(),
            };
            let s = avi.selectivity(&q).unwrap();
            for p in &q.predicates {
                let single = Query { predicates: vec![p.clone()], ..q.clone() };
                prop_assert!(s <= avi.selectivity(&single).unwrap() + 1e-15);
            }
        }
    }
}
