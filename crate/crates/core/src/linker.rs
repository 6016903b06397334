//! Construction of the linked model.
//!
//! Relations are visited so that every referenced relation is built before
//! the relations pointing at it. A referencing relation hash-joins each of
//! its foreign keys against the referenced relation and copies a few of that
//! relation's network columns into its own table before fitting its tree.
//! Those copied columns describe the referenced attributes *after* the join,
//! which is what lets the networks be stitched together at query time.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Dictionary, DomainSource, Schema};
use crate::structure::{
    choose_root, maximum_spanning_tree, maximum_spanning_tree_with, mi_graph, orient, ColumnRef,
    NodeSpec, Origin, TreeBn, WeightedGraph,
};
use crate::timing::Stopwatch;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Parent-closed subset of a network's nodes, in selection order.
#[derive(Clone, Debug, PartialEq)]
pub struct ExportSet {
    pub child: String,
    pub k: usize,
    pub nodes: Vec<usize>,
}

/// Picks `k` nodes starting from the root, then repeatedly the frontier node
/// whose edge to its parent carries the most mutual information (ties by
/// name).
pub fn select_export_set(bn: &TreeBn, k: usize) -> Result<ExportSet> {
    if k > bn.len() {
        return Err(Error::KOutOfRange { k, nodes: bn.len() });
    }
    let mut nodes = Vec::with_capacity(k);
    if let (Some(root), true) = (bn.root, k > 0) {
        nodes.push(root);
        let mut frontier = bn.children(root);
        while nodes.len() < k {
            let (pos, _) = frontier
                .iter()
                .enumerate()
                .max_by(|(_, &a), (_, &b)| {
                    let (na, nb) = (&bn.nodes[a], &bn.nodes[b]);
                    na.mi_to_parent
                        .total_cmp(&nb.mi_to_parent)
                        .then_with(|| nb.name.cmp(&na.name))
                })
                .expect("tree has at least k nodes");
            let next = frontier.swap_remove(pos);
            nodes.push(next);
            frontier.extend(bn.children(next));
        }
    }
    Ok(ExportSet {
        child: bn.relation.clone(),
        k,
        nodes,
    })
}

/// Network nodes shared between a referencing relation and the relation it
/// references through one foreign key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub parent: String,
    pub fk: String,
    pub child: String,
    pub k: usize,
    /// `(child node, parent node)` index pairs, child root first.
    pub shared: Vec<(usize, usize)>,
}

impl Link {
    pub fn key(&self) -> String {
        format!("{}.{}", self.parent, self.fk)
    }

    /// Parent-network node that mirrors the child root.
    pub fn parent_root(&self) -> Option<usize> {
        self.shared.first().map(|&(_, p)| p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkedModel {
    pub format_version: u32,
    pub k: usize,
    pub schema_fingerprint: String,
    pub networks: BTreeMap<String, TreeBn>,
    pub links: Vec<Link>,
    /// Matched, non-null foreign-key count per `parent.fk`.
    pub join_cards: BTreeMap<String, u64>,
    pub row_counts: BTreeMap<String, u64>,
    /// Dictionary of every modeled attribute, keyed `relation.attribute`.
    pub domains: BTreeMap<String, Dictionary>,
}

impl LinkedModel {
    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        let fp = schema.fingerprint();
        if fp != self.schema_fingerprint {
            return Err(Error::FingerprintMismatch {
                model: self.schema_fingerprint.clone(),
                schema: fp,
            });
        }
        Ok(())
    }

    pub fn link(&self, parent: &str, fk: &str) -> Option<&Link> {
        self.links.iter().find(|l| l.parent == parent && l.fk == fk)
    }

    pub fn node_count(&self) -> usize {
        self.networks.values().map(TreeBn::len).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<LinkedModel> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::CorruptModel("missing format_version".into()))?;
        if found != u64::from(FORMAT_VERSION) {
            return Err(Error::VersionMismatch {
                found: found as u32,
                expected: FORMAT_VERSION,
            });
        }
        let model: LinkedModel =
            serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        for link in &self.links {
            let (Some(parent), Some(child)) =
                (self.networks.get(&link.parent), self.networks.get(&link.child))
            else {
                return Err(Error::CorruptModel(format!("dangling link {}", link.key())));
            };
            for &(c, p) in &link.shared {
                if c >= child.len() || p >= parent.len() {
                    return Err(Error::CorruptModel(format!("bad node index in {}", link.key())));
                }
            }
        }
        for bn in self.networks.values() {
            if bn.nodes.iter().any(|n| n.parent.is_some_and(|p| p >= bn.len())) {
                return Err(Error::CorruptModel(format!("bad parent in {}", bn.relation)));
            }
        }
        Ok(())
    }
}

impl DomainSource for LinkedModel {
    fn dictionary(&self, relation: &str, attribute: &str) -> Option<&Dictionary> {
        self.domains.get(&format!("{relation}.{attribute}"))
    }
}

pub fn save_model(model: &LinkedModel, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let text = model.to_json()?;
    std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    Ok(text.len() as u64)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinkedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LinkedModel::from_json(&text)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BuildReport {
    /// Build time per relation in construction order.
    pub relations: Vec<(String, Duration)>,
    pub total: Duration,
}

/// Copies the exported columns of the child network onto the parent rows
/// matched by `targets`. Unmatched rows get the null code.
pub fn materialize_imports(
    targets: &[Option<u32>],
    child_columns: &[Cow<'_, [u32]>],
    child_bn: &TreeBn,
    exports: &ExportSet,
) -> Vec<Vec<u32>> {
    exports
        .nodes
        .iter()
        .map(|&j| {
            let source = &child_columns[j];
            let null = (child_bn.nodes[j].card - 1) as u32;
            targets
                .iter()
                .map(|t| t.map_or(null, |row| source[row as usize]))
                .collect()
        })
        .collect()
}

pub fn build_linked(catalog: &Catalog, k: usize) -> Result<LinkedModel> {
    build_linked_with_report(catalog, k).map(|(m, _)| m)
}

pub fn build_linked_with_report(catalog: &Catalog, k: usize) -> Result<(LinkedModel, BuildReport)> {
    let total = Stopwatch::start();
    let schema = &catalog.schema;
    let mut networks: BTreeMap<String, TreeBn> = BTreeMap::new();
    let mut columns: BTreeMap<String, Vec<Cow<'_, [u32]>>> = BTreeMap::new();
    let mut links = Vec::new();
    let mut join_cards = BTreeMap::new();
    let mut report = BuildReport::default();

    for name in schema.topological_order() {
        let watch = Stopwatch::start();
        let decl = schema.relation(&name).expect("ordered names exist");
        let data = catalog
            .relation(&name)
            .ok_or_else(|| Error::UnknownRelation(name.clone()))?;
        if data.row_count == 0 {
            return Err(Error::EmptyRelation(name.clone()));
        }

        let mut specs: Vec<NodeSpec<'_>> = Vec::new();
        let mut node_columns: Vec<Cow<'_, [u32]>> = Vec::new();
        for col in &data.columns {
            specs.push(NodeSpec {
                name: col.name.clone(),
                origin: Origin {
                    relation: name.clone(),
                    attribute: col.name.clone(),
                },
                codes: &[],
                card: col.cardinality(),
            });
            node_columns.push(Cow::Borrowed(col.codes.as_slice()));
        }
        let own = specs.len();

        // (fk, child, export set, first parent index)
        let mut imports = Vec::new();
        for fk in &decl.foreign_keys {
            let child_bn = &networks[&fk.references];
            let edge_k = fk.k.unwrap_or(k).min(child_bn.len());
            let exports = select_export_set(child_bn, edge_k)?;
            if exports.nodes.is_empty() {
                // nothing to copy, so the join itself is not needed
                let edge = schema
                    .fk_edge(&name, &fk.attribute)
                    .ok_or_else(|| Error::UnknownRelation(fk.references.clone()))?;
                let matched = catalog.join_cardinality(&edge).unwrap_or(0);
                join_cards.insert(edge.key(), matched);
                imports.push((fk.attribute.clone(), fk.references.clone(), exports, specs.len()));
                continue;
            }
            let child_data = catalog
                .relation(&fk.references)
                .ok_or_else(|| Error::UnknownRelation(fk.references.clone()))?;
            let targets = data
                .hash_join(&fk.attribute, child_data)
                .ok_or_else(|| Error::MissingColumn {
                    relation: name.clone(),
                    column: fk.attribute.clone(),
                })?;
            let matched = targets.iter().filter(|t| t.is_some()).count() as u64;
            join_cards.insert(format!("{name}.{}", fk.attribute), matched);
            let copied = materialize_imports(&targets, &columns[&fk.references], child_bn, &exports);
            let start = specs.len();
            for (&j, codes) in exports.nodes.iter().zip(copied) {
                let node = &child_bn.nodes[j];
                specs.push(NodeSpec {
                    name: format!("{}.{}", fk.attribute, node.name),
                    origin: node.origin.clone(),
                    codes: &[],
                    card: node.card,
                });
                node_columns.push(Cow::Owned(codes));
            }
            imports.push((fk.attribute.clone(), fk.references.clone(), exports, start));
        }
        for (spec, codes) in specs.iter_mut().zip(&node_columns) {
            spec.codes = codes;
        }

        let bn = if specs.is_empty() {
            TreeBn {
                relation: name.clone(),
                nodes: Vec::new(),
                root: None,
            }
        } else {
            let refs: Vec<ColumnRef<'_>> = specs
                .iter()
                .map(|s| ColumnRef {
                    name: &s.name,
                    codes: s.codes,
                    cardinality: s.card,
                })
                .collect();
            let graph = mi_graph(&refs)?;
            let mut forced = own_tree_edges(&graph, own)?;
            for (_, child, exports, start) in &imports {
                let child_bn = &networks[child];
                for (pos, &j) in exports.nodes.iter().enumerate() {
                    if let Some(pj) = child_bn.nodes[j].parent {
                        let ppos = exports
                            .nodes
                            .iter()
                            .position(|&x| x == pj)
                            .expect("export sets are parent-closed");
                        forced.push((start + ppos, start + pos));
                    }
                }
            }
            let tree = maximum_spanning_tree_with(&graph, &forced)?;
            let root = choose_root(specs.len(), &tree);
            let parent = orient(specs.len(), &tree, root);
            TreeBn::fit(&name, &specs, &parent, &graph)?
        };

        for (fk, child, exports, start) in imports {
            links.push(Link {
                parent: name.clone(),
                fk,
                child,
                k: exports.k,
                shared: exports
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(pos, &j)| (j, start + pos))
                    .collect(),
            });
        }
        columns.insert(name.clone(), node_columns);
        networks.insert(name.clone(), bn);
        report.relations.push((name, watch.elapsed()));
    }

    let model = LinkedModel {
        format_version: FORMAT_VERSION,
        k,
        schema_fingerprint: schema.fingerprint(),
        networks,
        links,
        join_cards,
        row_counts: catalog
            .relations()
            .map(|r| (r.name.clone(), r.row_count as u64))
            .collect(),
        domains: catalog
            .relations()
            .flat_map(|r| {
                r.columns
                    .iter()
                    .map(move |c| (format!("{}.{}", r.name, c.name), c.dictionary.as_ref().clone()))
            })
            .collect(),
    };
    check_links(&model)?;
    report.total = total.elapsed();
    Ok((model, report))
}

/// Chow-Liu edges among the first `own` nodes of `graph`.
fn own_tree_edges(graph: &WeightedGraph, own: usize) -> Result<Vec<(usize, usize)>> {
    if own < 2 {
        return Ok(Vec::new());
    }
    let mut sub = WeightedGraph::new(graph.nodes[..own].to_vec());
    for a in 0..own {
        for b in a + 1..own {
            sub.set(a, b, graph.weight(a, b));
        }
    }
    Ok(maximum_spanning_tree(&sub)?
        .into_iter()
        .map(|(a, b, _)| (a, b))
        .collect())
}

/// Every link must mirror a connected, parent-closed piece of the child
/// network; that is what makes any tree-shaped join stitch into a tree.
fn check_links(model: &LinkedModel) -> Result<()> {
    for link in &model.links {
        let child = &model.networks[&link.child];
        let parent = &model.networks[&link.parent];
        let to_parent: BTreeMap<usize, usize> = link.shared.iter().copied().collect();
        for &(c, p) in &link.shared {
            let cn = &child.nodes[c];
            let pn = &parent.nodes[p];
            if cn.card != pn.card || cn.origin != pn.origin {
                return Err(Error::NotATree(format!(
                    "{} shares mismatched node {}",
                    link.key(),
                    pn.name
                )));
            }
            if let Some(cp) = cn.parent {
                let Some(&pp) = to_parent.get(&cp) else {
                    return Err(Error::NotATree(format!(
                        "{} exports {} without its parent",
                        link.key(),
                        cn.name
                    )));
                };
                let adjacent = pn.parent == Some(pp) || parent.nodes[pp].parent == Some(p);
                if !adjacent {
                    return Err(Error::NotATree(format!(
                        "{} does not mirror edge {}-{}",
                        link.key(),
                        child.nodes[cp].name,
                        cn.name
                    )));
                }
            }
        }
    }
    Ok(())
}
