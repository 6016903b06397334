//! Small data generators: the toy shop database and synthetic instances with
//! planted structure, used by tests, benchmarks and the demo.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{
    AttributeDecl, AttributeKind, Catalog, Dictionary, EncodedColumn, EncodingOptions, ForeignKeyDecl,
    RelationData, RelationDecl, Schema,
};
use crate::query::{Predicate, Query};
use crate::{Error, Result};

pub const TOY_SCHEMA: &str = include_str!("../data/toy/schema.json");
pub const TOY_CUSTOMERS: &str = include_str!("../data/toy/customers.csv");
pub const TOY_PURCHASES: &str = include_str!("../data/toy/purchases.csv");
pub const TOY_SHOPS: &str = include_str!("../data/toy/shops.csv");
pub const TOY_BLOND_SWEDISH: &str = include_str!("../data/toy/query_blond_swedish.json");
pub const TOY_IZUMI_SQL: &str = include_str!("../data/toy/query_izumi.sql");
pub const TOY_WORKLOAD: &str = include_str!("../data/toy/workload.json");

/// The three-relation shop database: 5 customers, 3 shops, 7 purchases.
pub fn toy_catalog() -> Catalog {
    let schema = Schema::from_json(TOY_SCHEMA).expect("toy schema is valid");
    let csv: BTreeMap<String, String> = [
        ("customers", TOY_CUSTOMERS),
        ("purchases", TOY_PURCHASES),
        ("shops", TOY_SHOPS),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    Catalog::from_csv_strings(schema, &csv).expect("toy data is valid")
}

/// Equality predicates over every toy attribute, including a few values that
/// never occur.
pub fn toy_predicate_pool() -> Vec<Predicate> {
    vec![
        Predicate::eq("customers", "nationality", "Swedish"),
        Predicate::eq("customers", "nationality", "American"),
        Predicate::eq("customers", "hair", "Blond"),
        Predicate::eq("customers", "hair", "Brown"),
        Predicate::eq("customers", "hair", "Dark"),
        Predicate::eq("purchases", "day", "Mon"),
        Predicate::eq("purchases", "day", "Wed"),
        Predicate::eq("shops", "city", "Stockholm"),
        Predicate::eq("shops", "name", "Izumi"),
        Predicate::eq("shops", "name", "Macys"),
    ]
}

/// Label that generated data uses for `code`.
pub fn label(code: u32) -> String {
    format!("v{code:04}")
}

fn dictionary(len: usize) -> Arc<Dictionary> {
    Arc::new(Dictionary::categorical((0..len as u32).map(label).collect()))
}

/// A relation of categorical columns given directly as codes; column values
/// are `0..dict_len` and decode to `v0000`, `v0001`, ...
pub fn relation_from_codes(name: &str, columns: &[(&str, Vec<u32>, usize)]) -> RelationData {
    let rows = columns.first().map_or(0, |c| c.1.len());
    RelationData {
        name: name.to_string(),
        row_count: rows,
        columns: columns
            .iter()
            .map(|(col, codes, len)| EncodedColumn {
                name: col.to_string(),
                dictionary: dictionary(*len),
                codes: codes.clone(),
            })
            .collect(),
        primary_keys: Vec::new(),
        pk_index: HashMap::new(),
        foreign_keys: Vec::new(),
    }
}

/// One relation of a generated database.
pub struct TableSpec {
    pub name: String,
    /// `(name, codes, domain size)`.
    pub attributes: Vec<(String, Vec<u32>, usize)>,
    /// `(attribute, referenced relation, referenced row)`.
    pub foreign_keys: Vec<(String, String, Vec<Option<u32>>)>,
}

impl TableSpec {
    pub fn new(name: &str) -> TableSpec {
        TableSpec {
            name: name.to_string(),
            attributes: Vec::new(),
            foreign_keys: Vec::new(),
        }
    }

    pub fn attribute(mut self, name: &str, codes: Vec<u32>, card: usize) -> TableSpec {
        self.attributes.push((name.to_string(), codes, card));
        self
    }

    pub fn foreign_key(mut self, attribute: &str, references: &str, rows: Vec<Option<u32>>) -> TableSpec {
        self.foreign_keys
            .push((attribute.to_string(), references.to_string(), rows));
        self
    }

    fn row_count(&self) -> usize {
        self.attributes
            .first()
            .map(|a| a.1.len())
            .or_else(|| self.foreign_keys.first().map(|f| f.2.len()))
            .unwrap_or(0)
    }
}

/// Turns table specs into a catalog. Every relation gets an `id` primary key
/// equal to its row number.
pub fn assemble(tables: Vec<TableSpec>) -> Result<Catalog> {
    let schema = Schema {
        relations: tables
            .iter()
            .map(|t| RelationDecl {
                name: t.name.clone(),
                path: PathBuf::from(format!("{}.csv", t.name)),
                primary_key: Some("id".into()),
                attributes: t
                    .attributes
                    .iter()
                    .map(|a| AttributeDecl {
                        name: a.0.clone(),
                        kind: AttributeKind::Categorical,
                    })
                    .collect(),
                foreign_keys: t
                    .foreign_keys
                    .iter()
                    .map(|f| ForeignKeyDecl {
                        attribute: f.0.clone(),
                        references: f.1.clone(),
                        k: None,
                    })
                    .collect(),
            })
            .collect(),
        encoding: EncodingOptions::default(),
    };
    let mut data = Vec::new();
    for t in tables {
        let rows = t.row_count();
        for (name, codes, card) in &t.attributes {
            if codes.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    actual: codes.len(),
                });
            }
            if codes.iter().any(|&c| c as usize >= *card) {
                return Err(Error::InvalidQuery(format!("{}.{name} has codes out of range", t.name)));
            }
        }
        let primary_keys: Vec<String> = (0..rows).map(|i| i.to_string()).collect();
        let pk_index = primary_keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i as u32))
            .collect();
        let named: Vec<(&str, Vec<u32>, usize)> = t
            .attributes
            .iter()
            .map(|(n, c, card)| (n.as_str(), c.clone(), *card))
            .collect();
        let mut rel = relation_from_codes(&t.name, &named);
        rel.row_count = rows;
        rel.primary_keys = primary_keys;
        rel.pk_index = pk_index;
        rel.foreign_keys = t
            .foreign_keys
            .into_iter()
            .map(|(a, _, targets)| (a, targets.into_iter().map(|r| r.map(|r| r.to_string())).collect()))
            .collect();
        data.push(rel);
    }
    Catalog::from_relations(schema, data)
}

/// Writes every relation as CSV next to a `schema.json` and returns the
/// schema path.
pub fn write_csv(catalog: &Catalog, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut schema = catalog.schema.clone();
    for decl in &mut schema.relations {
        let rel = catalog
            .relation(&decl.name)
            .ok_or_else(|| Error::UnknownRelation(decl.name.clone()))?;
        let file = format!("{}.csv", decl.name);
        let path = dir.join(&file);
        let mut out = csv::Writer::from_path(&path).map_err(|e| Error::Csv {
            relation: decl.name.clone(),
            message: e.to_string(),
        })?;
        let mut header: Vec<String> = Vec::new();
        if let Some(pk) = &decl.primary_key {
            header.push(pk.clone());
        }
        header.extend(decl.foreign_keys.iter().map(|f| f.attribute.clone()));
        header.extend(rel.columns.iter().map(|c| c.name.clone()));
        let write_err = |e: csv::Error| Error::Csv {
            relation: decl.name.clone(),
            message: e.to_string(),
        };
        out.write_record(&header).map_err(write_err)?;
        for row in 0..rel.row_count {
            let mut record: Vec<&str> = Vec::with_capacity(header.len());
            if decl.primary_key.is_some() {
                record.push(rel.primary_keys.get(row).map_or("", String::as_str));
            }
            for fk in &decl.foreign_keys {
                let values = rel.foreign_key_values(&fk.attribute).unwrap_or(&[]);
                record.push(values.get(row).and_then(|v| v.as_deref()).unwrap_or(""));
            }
            for col in &rel.columns {
                record.push(col.decode(row).unwrap_or(""));
            }
            out.write_record(&record).map_err(write_err)?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;
        decl.path = PathBuf::from(file);
    }
    let schema_path = dir.join("schema.json");
    let text = serde_json::to_string_pretty(&schema)?;
    std::fs::write(&schema_path, text).map_err(|e| Error::io(&schema_path, e))?;
    Ok(schema_path)
}

/// Draws a value that equals `anchor` with probability `p`, uniform otherwise.
fn noisy(rng: &mut ChaCha8Rng, anchor: u32, card: usize, p: f64) -> u32 {
    if rng.gen_bool(p) {
        anchor % card as u32
    } else {
        rng.gen_range(0..card as u32)
    }
}

/// Customers whose `hair` (weakly) and `salary` (strongly) both depend on
/// `nationality` and on nothing else.
pub fn three_attribute_customers() -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 2000;
    let nationality: Vec<u32> = (0..n).map(|_| rng.gen_range(0..4)).collect();
    let hair = nationality.iter().map(|&a| noisy(&mut rng, a, 4, 0.35)).collect();
    let salary = nationality.iter().map(|&a| noisy(&mut rng, a, 4, 0.9)).collect();
    assemble(vec![TableSpec::new("customers")
        .attribute("nationality", nationality, 4)
        .attribute("hair", hair, 4)
        .attribute("salary", salary, 4)])
    .expect("generated data is valid")
}

/// Relations `r0 → r1 → … → r{n-1}`, `rows` rows each. Every relation has
/// attributes `a → b → c`; a row tends to reference rows with the same `a`.
pub fn chain_catalog(relations: usize, rows: usize, seed: u64) -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tables = Vec::new();
    let mut a_cols: Vec<Vec<u32>> = Vec::new();
    for _ in 0..relations {
        let a: Vec<u32> = (0..rows).map(|_| rng.gen_range(0..5)).collect();
        a_cols.push(a);
    }
    for i in 0..relations {
        let a = a_cols[i].clone();
        let b: Vec<u32> = a.iter().map(|&x| noisy(&mut rng, x, 4, 0.7)).collect();
        let c: Vec<u32> = b.iter().map(|&x| noisy(&mut rng, x * 2, 6, 0.6)).collect();
        let mut t = TableSpec::new(&format!("r{i}"))
            .attribute("a", a.clone(), 5)
            .attribute("b", b, 4)
            .attribute("c", c, 6);
        if i + 1 < relations {
            let target_a = &a_cols[i + 1];
            let mut by_a: Vec<Vec<u32>> = vec![Vec::new(); 5];
            for (row, &v) in target_a.iter().enumerate() {
                by_a[v as usize].push(row as u32);
            }
            let targets = a
                .iter()
                .map(|&x| {
                    let same = &by_a[x as usize];
                    if !same.is_empty() && rng.gen_bool(0.6) {
                        Some(same[rng.gen_range(0..same.len())])
                    } else {
                        Some(rng.gen_range(0..rows as u32))
                    }
                })
                .collect();
            t = t.foreign_key(&format!("r{}_id", i + 1), &format!("r{}", i + 1), targets);
        }
        tables.push(t);
    }
    assemble(tables).expect("generated data is valid")
}

/// `customers` referenced by `purchases`, every customer exactly `fanout`
/// times.
pub fn uniform_fanout_catalog(customers: usize, fanout: usize, seed: u64) -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nationality: Vec<u32> = (0..customers).map(|_| rng.gen_range(0..4)).collect();
    let hair = nationality.iter().map(|&a| noisy(&mut rng, a, 3, 0.6)).collect();
    let mut targets = Vec::new();
    let mut day = Vec::new();
    for c in 0..customers {
        for _ in 0..fanout {
            targets.push(Some(c as u32));
            day.push(rng.gen_range(0..7));
        }
    }
    assemble(vec![
        TableSpec::new("customers")
            .attribute("nationality", nationality, 4)
            .attribute("hair", hair, 3),
        TableSpec::new("purchases")
            .attribute("day", day, 7)
            .foreign_key("customer_id", "customers", targets),
    ])
    .expect("generated data is valid")
}

fn biased_list(rng: &mut ChaCha8Rng, anchor: u32, card: usize, len: usize) -> Vec<u32> {
    (0..len).map(|_| noisy(rng, anchor, card, 0.6)).collect()
}

/// A referenced relation `c(a, c1, c2)` and a referencing relation
/// `f(f1, f2)` whose data satisfy every independence a one-attribute link
/// assumes, so the linked estimate equals the true selectivity:
///
/// * within each value of `a`, the rows of `c` are the full cross product of
///   a list of `c1` values and a list of `c2` values;
/// * every `c` row with `a = x` is referenced by the same list of `(f1, f2)`
///   pairs, and `f2` depends only on `f1`.
pub fn exact_instance(seed: u64) -> Catalog {
    const A: usize = 4;
    const C1: usize = 3;
    const C2: usize = 3;
    const F1: usize = 3;
    const F2: usize = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // f2 values that follow each f1 value, shared by all of `a`
    let follow: Vec<Vec<u32>> = (0..F1 as u32)
        .map(|f1| biased_list(&mut rng, f1 + 1, F2, 4))
        .collect();
    let mut a = Vec::new();
    let mut c1 = Vec::new();
    let mut c2 = Vec::new();
    let mut f1 = Vec::new();
    let mut f2 = Vec::new();
    let mut targets = Vec::new();
    for x in 0..A as u32 {
        let (n1, n2) = (rng.gen_range(3..=6), rng.gen_range(3..=5));
        let l1 = biased_list(&mut rng, x, C1, n1);
        let l2 = biased_list(&mut rng, x + 1, C2, n2);
        let copies = rng.gen_range(3..=8);
        // how often each f1 value occurs under a = x
        let mut f1_counts: Vec<usize> = (0..F1 as u32)
            .map(|v| if v == x % F1 as u32 { rng.gen_range(2..=4) } else { rng.gen_range(0..=1) })
            .collect();
        if f1_counts.iter().all(|&n| n == 0) {
            f1_counts[0] = 1;
        }
        let mut referencing: Vec<(u32, u32)> = Vec::new();
        for (v, &count) in f1_counts.iter().enumerate() {
            for _ in 0..count {
                referencing.extend(follow[v].iter().map(|&w| (v as u32, w)));
            }
        }
        for _ in 0..copies {
            for &u in &l1 {
                for &w in &l2 {
                    let row = a.len() as u32;
                    a.push(x);
                    c1.push(u);
                    c2.push(w);
                    for &(p, q) in &referencing {
                        f1.push(p);
                        f2.push(q);
                        targets.push(Some(row));
                    }
                }
            }
        }
    }
    assemble(vec![
        TableSpec::new("c")
            .attribute("a", a, A)
            .attribute("c1", c1, C1)
            .attribute("c2", c2, C2),
        TableSpec::new("f")
            .attribute("f1", f1, F1)
            .attribute("f2", f2, F2)
            .foreign_key("c_id", "c", targets),
    ])
    .expect("generated data is valid")
}

/// Random conjunctive queries over the `c`/`f` pair of [`exact_instance`].
pub fn exact_instance_queries(seed: u64, count: usize) -> Vec<Query> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attrs: [(&str, &str, u32); 5] = [("c", "a", 4), ("c", "c1", 3), ("c", "c2", 3), ("f", "f1", 3), ("f", "f2", 4)];
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let shape = rng.gen_range(0..4);
        let relations: Vec<&str> = match shape {
            0 => vec!["c"],
            1 => vec!["f"],
            _ => vec!["c", "f"],
        };
        let mut predicates = Vec::new();
        for &(rel, attr, card) in &attrs {
            if !relations.contains(&rel) || !rng.gen_bool(0.5) {
                continue;
            }
            let mut values: Vec<u32> = (0..card).filter(|_| rng.gen_bool(0.5)).collect();
            if values.is_empty() {
                values.push(rng.gen_range(0..card));
            }
            predicates.push(if values.len() == 1 {
                Predicate::eq(rel, attr, label(values[0]).as_str())
            } else {
                Predicate::is_in(rel, attr, values.iter().map(|&v| label(v).as_str().into()).collect())
            });
        }
        if predicates.is_empty() {
            continue;
        }
        let joins = if relations.len() == 2 {
            vec![("f".to_string(), "c_id".to_string())]
        } else {
            Vec::new()
        };
        out.push(
            Query {
                relations: relations.iter().map(|r| r.to_string()).collect(),
                joins,
                predicates,
            }
            .canonical(),
        );
    }
    out
}

/// Domain sizes of the star instance's dimension attributes.
const REGIONS: usize = 6;
const COUNTRIES: usize = 12;
const SEGMENTS: usize = 5;

struct Dimension {
    region: Vec<u32>,
    country: Vec<u32>,
    segment: Vec<u32>,
}

fn dimension(rng: &mut ChaCha8Rng, rows: usize) -> Dimension {
    let region: Vec<u32> = (0..rows).map(|_| rng.gen_range(0..REGIONS as u32)).collect();
    let country = region
        .iter()
        .map(|&r| {
            if rng.gen_bool(0.75) {
                2 * r + u32::from(rng.gen_bool(0.3))
            } else {
                rng.gen_range(0..COUNTRIES as u32)
            }
        })
        .collect();
    let segment = region.iter().map(|&r| noisy(rng, r, SEGMENTS, 0.3)).collect();
    Dimension {
        region,
        country,
        segment,
    }
}

/// A fact table referencing three dimensions. The dimensions are star-shaped
/// around `region`; fact rows pick dimension rows with a bias that depends on
/// both `region` and `country`, the `d2` pick follows the `d1` region, and
/// the fact's `channel` depends on the `d1` region.
pub fn star_instance(seed: u64, fact_rows: usize) -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim_rows = (fact_rows / 100).max(60);
    let dims: Vec<Dimension> = (0..3).map(|_| dimension(&mut rng, dim_rows)).collect();
    let weight = |d: &Dimension, row: usize| {
        let region = d.region[row] as f64;
        let odd_country = d.country[row] % 2 == 1;
        (1.0 + region).powf(1.6) * if odd_country { 6.0 } else { 1.0 }
    };
    let pickers: Vec<WeightedIndex<f64>> = dims
        .iter()
        .map(|d| WeightedIndex::new((0..dim_rows).map(|r| weight(d, r))).expect("positive weights"))
        .collect();
    let mut d2_by_region: Vec<Vec<usize>> = vec![Vec::new(); REGIONS];
    for (row, &r) in dims[1].region.iter().enumerate() {
        d2_by_region[r as usize].push(row);
    }
    let mut t1 = Vec::with_capacity(fact_rows);
    let mut t2 = Vec::with_capacity(fact_rows);
    let mut t3 = Vec::with_capacity(fact_rows);
    let mut channel = Vec::with_capacity(fact_rows);
    let mut amount = Vec::with_capacity(fact_rows);
    for _ in 0..fact_rows {
        let r1 = pickers[0].sample(&mut rng);
        let region = dims[0].region[r1];
        let same = &d2_by_region[region as usize];
        let r2 = if !same.is_empty() && rng.gen_bool(0.7) {
            same[rng.gen_range(0..same.len())]
        } else {
            pickers[1].sample(&mut rng)
        };
        let r3 = pickers[2].sample(&mut rng);
        let ch = noisy(&mut rng, region, 4, 0.7);
        t1.push(Some(r1 as u32));
        t2.push(Some(r2 as u32));
        t3.push(Some(r3 as u32));
        channel.push(ch);
        amount.push(noisy(&mut rng, ch * 2, 8, 0.5));
    }
    let mut tables = Vec::new();
    for (i, d) in dims.into_iter().enumerate() {
        tables.push(
            TableSpec::new(&format!("d{}", i + 1))
                .attribute("region", d.region, REGIONS)
                .attribute("country", d.country, COUNTRIES)
                .attribute("segment", d.segment, SEGMENTS),
        );
    }
    tables.push(
        TableSpec::new("fact")
            .attribute("channel", channel, 4)
            .attribute("amount", amount, 8)
            .foreign_key("d1_id", "d1", t1)
            .foreign_key("d2_id", "d2", t2)
            .foreign_key("d3_id", "d3", t3),
    );
    assemble(tables).expect("generated data is valid")
}

/// Seed queries for [`star_instance`]: the full star with a handful of
/// predicates, to be expanded into sub-queries.
pub fn star_seeds() -> Vec<Query> {
    let rels = ["fact", "d1", "d2", "d3"];
    let joins = vec![
        ("fact".to_string(), "d1_id".to_string()),
        ("fact".to_string(), "d2_id".to_string()),
        ("fact".to_string(), "d3_id".to_string()),
    ];
    let seed = |preds: Vec<Predicate>| Query {
        relations: rels.iter().map(|r| r.to_string()).collect(),
        joins: joins.clone(),
        predicates: preds,
    };
    vec![
        seed(vec![
            Predicate::eq("d1", "region", label(4).as_str()),
            Predicate::eq("d1", "country", label(9).as_str()),
            Predicate::eq("d2", "region", label(4).as_str()),
            Predicate::eq("fact", "channel", label(0).as_str()),
            Predicate::eq("d3", "segment", label(2).as_str()),
        ]),
        seed(vec![
            Predicate::eq("d1", "region", label(1).as_str()),
            Predicate::eq("d1", "country", label(3).as_str()),
            Predicate::eq("d2", "country", label(3).as_str()),
            Predicate::eq("fact", "channel", label(1).as_str()),
            Predicate::eq("d3", "region", label(5).as_str()),
        ]),
    ]
}

/// Seed query covering the whole chain of [`chain_catalog`], one predicate
/// per relation.
pub fn chain_seed(relations: usize) -> Query {
    Query {
        relations: (0..relations).map(|i| format!("r{i}")).collect(),
        joins: (0..relations.saturating_sub(1))
            .map(|i| (format!("r{i}"), format!("r{}_id", i + 1)))
            .collect(),
        predicates: (0..relations)
            .map(|i| {
                let attr = ["a", "b", "c"][i % 3];
                Predicate::eq(&format!("r{i}"), attr, label((i % 3) as u32).as_str())
            })
            .collect(),
    }
    .canonical()
}
