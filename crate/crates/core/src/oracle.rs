//! Exact selectivities.
//!
//! Join trees are evaluated by propagating per-row multiplicities from the
//! leaves of the query tree towards a root relation, so nothing is
//! materialized and the cost is linear in the rows of the queried relations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::query::{predicate_codes, Query};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    /// Join tuples satisfying every predicate.
    pub qualifying: u64,
    /// Join tuples with no predicate applied.
    pub join_size: u64,
    pub selectivity: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OracleOptions {
    /// Largest number of rows the oracle may scan; `None` for no cap.
    pub max_rows: Option<usize>,
}

/// Rows of each relation that take part; `None` means all of them.
pub type RowFilter<'a> = Option<&'a BTreeMap<String, Vec<bool>>>;

pub fn exact(catalog: &Catalog, query: &Query) -> Result<Truth> {
    exact_with(catalog, query, OracleOptions::default())
}

pub fn exact_with(catalog: &Catalog, query: &Query, options: OracleOptions) -> Result<Truth> {
    let needed: usize = query
        .relations
        .iter()
        .map(|r| catalog.row_count(r).ok_or_else(|| Error::UnknownRelation(r.clone())))
        .sum::<Result<usize>>()?;
    if let Some(cap) = options.max_rows {
        if needed > cap {
            return Err(Error::ResourceExceeded { needed, cap });
        }
    }
    let root = query
        .relations
        .first()
        .ok_or_else(|| Error::InvalidQuery("query has no relations".into()))?;
    let (qualifying, join_size) = count_rooted(catalog, query, root, None)?;
    Ok(truth(qualifying, join_size))
}

fn truth(qualifying: u128, join_size: u128) -> Truth {
    let selectivity = if join_size == 0 {
        0.0
    } else {
        qualifying as f64 / join_size as f64
    };
    Truth {
        qualifying: u64::try_from(qualifying).unwrap_or(u64::MAX),
        join_size: u64::try_from(join_size).unwrap_or(u64::MAX),
        selectivity,
    }
}

/// `(qualifying, join size)` with multiplicities propagated towards `root`,
/// counting only rows admitted by `rows`.
pub fn count_rooted(
    catalog: &Catalog,
    query: &Query,
    root: &str,
    rows: RowFilter<'_>,
) -> Result<(u128, u128)> {
    if !query.relations.iter().any(|r| r == root) {
        return Err(Error::UnknownRelation(root.to_string()));
    }
    // neighbours: (other relation, fk attribute, this side references other)
    let mut adjacency: BTreeMap<&str, Vec<(&str, &str, bool)>> = BTreeMap::new();
    for (parent, fk) in &query.joins {
        let edge = catalog
            .schema
            .fk_edge(parent, fk)
            .ok_or_else(|| Error::InvalidQuery(format!("{parent}.{fk} is not a foreign key")))?;
        let child = query
            .relations
            .iter()
            .find(|r| **r == edge.child)
            .ok_or_else(|| Error::InvalidQuery(format!("{} is joined but not listed", edge.child)))?;
        adjacency
            .entry(parent.as_str())
            .or_default()
            .push((child.as_str(), fk.as_str(), true));
        adjacency
            .entry(child.as_str())
            .or_default()
            .push((parent.as_str(), fk.as_str(), false));
    }

    // DFS order from the root, children before parents when reversed
    let mut order: Vec<(&str, Option<&str>)> = Vec::new();
    let mut stack = vec![(root, None)];
    let mut seen: Vec<&str> = Vec::new();
    while let Some((rel, from)) = stack.pop() {
        if seen.contains(&rel) {
            return Err(Error::InvalidQuery("join graph has a cycle".into()));
        }
        seen.push(rel);
        order.push((rel, from));
        for &(other, _, _) in adjacency.get(rel).map(Vec::as_slice).unwrap_or(&[]) {
            if Some(other) != from {
                stack.push((other, Some(rel)));
            }
        }
    }
    if seen.len() != query.relations.len() {
        return Err(Error::Disconnected);
    }

    let mut with_preds: BTreeMap<&str, Vec<u128>> = BTreeMap::new();
    let mut without: BTreeMap<&str, Vec<u128>> = BTreeMap::new();
    for &(rel, from) in order.iter().rev() {
        let data = catalog
            .relation(rel)
            .ok_or_else(|| Error::UnknownRelation(rel.to_string()))?;
        let n = data.row_count;
        let mut base = vec![1u128; n];
        if let Some(filter) = rows {
            let keep = filter
                .get(rel)
                .ok_or_else(|| Error::MissingSample(rel.to_string()))?;
            for (w, &k) in base.iter_mut().zip(keep) {
                if !k {
                    *w = 0;
                }
            }
        }
        let mut q = base.clone();
        for pred in query.predicates.iter().filter(|p| p.relation == rel) {
            let column = data.column(&pred.attribute).ok_or_else(|| Error::UnknownAttribute {
                relation: pred.relation.clone(),
                attribute: pred.attribute.clone(),
            })?;
            let mut allowed = vec![false; column.cardinality()];
            for c in predicate_codes(pred, &column.dictionary) {
                allowed[c as usize] = true;
            }
            for (w, &code) in q.iter_mut().zip(&column.codes) {
                if !allowed[code as usize] {
                    *w = 0;
                }
            }
        }
        let mut t = base;
        for &(other, fk, references) in adjacency.get(rel).map(Vec::as_slice).unwrap_or(&[]) {
            if Some(other) == from {
                continue;
            }
            let (oq, ot) = (&with_preds[other], &without[other]);
            if references {
                let targets = catalog
                    .fk_targets(rel, fk)
                    .ok_or_else(|| Error::InvalidQuery(format!("{rel}.{fk} is not a foreign key")))?;
                for (row, target) in targets.iter().enumerate() {
                    let (a, b) = target.map_or((0, 0), |c| (oq[c as usize], ot[c as usize]));
                    q[row] *= a;
                    t[row] *= b;
                }
            } else {
                let targets = catalog
                    .fk_targets(other, fk)
                    .ok_or_else(|| Error::InvalidQuery(format!("{other}.{fk} is not a foreign key")))?;
                let mut sq = vec![0u128; n];
                let mut st = vec![0u128; n];
                for (row, target) in targets.iter().enumerate() {
                    if let Some(c) = target {
                        sq[*c as usize] += oq[row];
                        st[*c as usize] += ot[row];
                    }
                }
                for row in 0..n {
                    q[row] *= sq[row];
                    t[row] *= st[row];
                }
            }
        }
        with_preds.insert(rel, q);
        without.insert(rel, t);
    }
    Ok((with_preds[root].iter().sum(), without[root].iter().sum()))
}

/// Exact answer restricted to a subset of rows per relation.
pub fn count_filtered(catalog: &Catalog, query: &Query, rows: &BTreeMap<String, Vec<bool>>) -> Result<(u128, u128)> {
    let root = query
        .relations
        .first()
        .ok_or_else(|| Error::InvalidQuery("query has no relations".into()))?;
    count_rooted(catalog, query, root, Some(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{parse_query, Predicate};
    use crate::synth;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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
    fn toy_truth() {
        let cat = synth::toy_catalog();
        let t = exact(&cat, &blond_swedish()).unwrap();
        assert_eq!((t.qualifying, t.join_size), (5, 7));
        assert!((t.selectivity - 5.0 / 7.0).abs() < 1e-15);
        let izumi = parse_query(synth::TOY_IZUMI_SQL, &cat.schema, &cat).unwrap();
        let t = exact(&cat, &izumi).unwrap();
        assert_eq!((t.qualifying, t.join_size), (0, 7));
    }

    #[test]
    fn cap_is_enforced() {
        let cat = synth::toy_catalog();
        let err = exact_with(&cat, &blond_swedish(), OracleOptions { max_rows: Some(10) }).unwrap_err();
        assert!(matches!(err, Error::ResourceExceeded { needed: 12, cap: 10 }));
    }

    /// Nested-loop join over every relation of a chain query.
    fn materialized(cat: &Catalog, q: &Query) -> (u64, u64) {
        let mut tuples: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new()];
        let mut placed: Vec<String> = Vec::new();
        let first = q.relations[0].clone();
        tuples = (0..cat.row_count(&first).unwrap())
            .map(|r| BTreeMap::from([(first.clone(), r)]))
            .collect();
        placed.push(first);
        while placed.len() < q.relations.len() {
            for (parent, fk) in &q.joins {
                let child = cat.schema.fk_edge(parent, fk).unwrap().child;
                let targets = cat.fk_targets(parent, fk).unwrap();
                let (has_p, has_c) = (placed.contains(parent), placed.contains(&child));
                if has_p && !has_c {
                    tuples = tuples
                        .into_iter()
                        .filter_map(|mut t| {
                            targets[t[parent]].map(|c| {
                                t.insert(child.clone(), c as usize);
                                t
                            })
                        })
                        .collect();
                    placed.push(child);
                } else if has_c && !has_p {
                    let mut next = Vec::new();
                    for t in tuples {
                        for (row, target) in targets.iter().enumerate() {
                            if *target == Some(t[&child] as u32) {
                                let mut e = t.clone();
                                e.insert(parent.clone(), row);
                                next.push(e);
                            }
                        }
                    }
                    tuples = next;
                    placed.push(parent.clone());
                }
            }
        }
        let ok = |t: &BTreeMap<String, usize>| {
            q.predicates.iter().all(|p| {
                let col = cat.relation(&p.relation).unwrap().column(&p.attribute).unwrap();
                predicate_codes(p, &col.dictionary).contains(&col.codes[t[&p.relation]])
            })
        };
        (tuples.iter().filter(|t| ok(t)).count() as u64, tuples.len() as u64)
    }

    fn random_chain_query(rng: &mut ChaCha8Rng, n: usize) -> Query {
        let lo = rng.gen_range(0..n);
        let hi = rng.gen_range(lo..n);
        let mut q = synth::chain_seed(n);
        q.relations.retain(|r| (lo..=hi).any(|i| *r == format!("r{i}")));
        q.joins.retain(|(p, _)| q.relations.contains(p) && *p != format!("r{hi}"));
        let keep: Vec<bool> = (0..q.predicates.len()).map(|_| rng.gen_bool(0.5)).collect();
        let mut i = 0;
        q.predicates.retain(|p| {
            i += 1;
            keep[i - 1] && q.relations.contains(&p.relation)
        });
        q
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn matches_materialized_join(seed in 0u64..1_000_000) {
            let cat = synth::chain_catalog(4, 12, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_chain_query(&mut rng, 4);
            let t = exact(&cat, &q).unwrap();
            prop_assert_eq!((t.qualifying, t.join_size), materialized(&cat, &q));
        }

        #[test]
        fn root_choice_does_not_matter(seed in 0u64..1_000_000) {
            let cat = synth::chain_catalog(4, 30, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let q = random_chain_query(&mut rng, 4);
            let first = count_rooted(&cat, &q, &q.relations[0], None).unwrap();
            for r in &q.relations {
                prop_assert_eq!(count_rooted(&cat, &q, r, None).unwrap(), first);
            }
        }
    }

    #[test]
    fn star_query_matches_materialized() {
        let cat = synth::toy_catalog();
        let q = Query {
            relations: vec!["customers".into(), "purchases".into(), "shops".into()],
            joins: vec![
                ("purchases".into(), "customer_id".into()),
                ("purchases".into(), "shop_id".into()),
            ],
            predicates: vec![
                Predicate::eq("customers", "nationality", "Swedish"),
                Predicate::eq("shops", "city", "Stockholm"),
            ],
        };
        let t = exact(&cat, &q).unwrap();
        assert_eq!((t.qualifying, t.join_size), materialized(&cat, &q));
        assert_eq!(t.qualifying, 2);
    }
}
