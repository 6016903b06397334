//! Selectivity inference on a linked model.
//!
//! The networks of the queried relations are glued into one tree: each
//! imported node of a referencing relation is identified with the node it
//! was copied from. The referencing network keeps its (post-join) factors for
//! the shared nodes and the referenced network only contributes the factors
//! of its remaining nodes. When a relation is referenced by several queried
//! relations, only one of them can take that role; the others are re-rooted
//! at their imported root and contribute a ratio of their factors to the
//! referenced network's factors over the shared nodes.
//!
//! The glued tree is pruned of branches that carry no evidence and then
//! evaluated by leaf-to-root message passing.

use std::borrow::Cow;
use std::collections::{BTreeMap, VecDeque};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::factor::ClampPolicy;
use crate::linker::{Link, LinkedModel};
use crate::query::{predicate_codes, Query};
use crate::structure::{NodeFactor, TreeBn};
use crate::timing::Stopwatch;
use crate::{method, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub selectivity: f64,
    pub cardinality: f64,
    pub join_size: f64,
    pub method: String,
    #[serde(with = "duration_secs")]
    pub elapsed: Duration,
    /// Set when the estimate had no support and fell back to the clamp floor.
    #[serde(default)]
    pub degenerate: bool,
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(secs.max(0.0)))
    }
}

impl Estimate {
    pub fn new(selectivity: f64, join_size: f64, method: &str, clamp: ClampPolicy) -> Estimate {
        let (selectivity, degenerate) = clamp.apply(selectivity, join_size);
        Estimate {
            selectivity,
            cardinality: selectivity * join_size,
            join_size,
            method: method.to_string(),
            elapsed: Duration::ZERO,
            degenerate,
        }
    }
}

/// Anything that turns a validated query into an estimate.
pub trait Estimator: Sync {
    fn name(&self) -> String;
    fn estimate(&self, query: &Query) -> Result<Estimate>;
}

pub fn extract_relations(query: &Query) -> Vec<String> {
    query.relations.clone()
}

/// Join size of a tree of foreign-key joins, assuming matched keys are
/// spread independently: every join scales the product of the relation
/// sizes by `matched / (|parent| · |child|)`.
pub fn estimated_join_size<F>(
    query: &Query,
    row_counts: &BTreeMap<String, u64>,
    join_cards: &BTreeMap<String, u64>,
    child_of: F,
) -> f64
where
    F: Fn(&str, &str) -> Option<String>,
{
    let size = |r: &str| row_counts.get(r).copied().unwrap_or(0).max(1) as f64;
    let mut total: f64 = query.relations.iter().map(|r| size(r)).product();
    let mut key = String::new();
    for (parent, fk) in &query.joins {
        key.clear();
        key.push_str(parent);
        key.push('.');
        key.push_str(fk);
        let matched = join_cards
            .get(key.as_str())
            .copied()
            .unwrap_or(0) as f64;
        let child = child_of(parent, fk).unwrap_or_default();
        total *= matched / (size(parent) * size(&child));
    }
    total
}

/// One node of a glued tree.
#[derive(Clone, Debug, PartialEq)]
pub struct StitchedNode<'m> {
    pub label: Cow<'m, str>,
    pub card: usize,
    pub parent: Option<usize>,
    /// `card` entries at a root, `[parent value][value]` otherwise. Rows that
    /// sum to zero are read as uniform.
    pub potential: Cow<'m, [f64]>,
    /// Rows sum to one (or zero); such a node may be dropped when it carries
    /// no evidence and has no children.
    pub normalized: bool,
    /// Allowed values from predicates.
    pub evidence: Option<Vec<bool>>,
    /// Allowed values that define the join itself (non-null keys).
    pub mask: Option<Vec<bool>>,
}

impl StitchedNode<'_> {
    fn is_terminal(&self) -> bool {
        self.evidence.is_some() || self.mask.is_some() || !self.normalized
    }

    /// Potential value with the uniform reading of empty rows applied.
    pub fn value(&self, parent_value: Option<u32>, value: u32) -> f64 {
        match parent_value {
            None => self.potential[value as usize],
            Some(u) => {
                let row = &self.potential[u as usize * self.card..(u as usize + 1) * self.card];
                let sum: f64 = row.iter().sum();
                if sum == 0.0 && self.normalized {
                    1.0 / self.card as f64
                } else {
                    row[value as usize]
                }
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StitchedTree<'m> {
    pub nodes: Vec<StitchedNode<'m>>,
}

impl<'m> StitchedTree<'m> {
    /// Whether every parent comes before its children. Stitching always
    /// produces this order.
    fn is_ordered(&self) -> bool {
        self.nodes
            .iter()
            .enumerate()
            .all(|(i, n)| n.parent.is_none_or(|p| p < i))
    }

    /// Renumbers the nodes so that parents precede children.
    fn into_ordered(self) -> StitchedTree<'m> {
        if self.is_ordered() {
            return self;
        }
        let n = self.nodes.len();
        let mut kids = vec![Vec::new(); n];
        let mut order = Vec::with_capacity(n);
        for (i, node) in self.nodes.iter().enumerate() {
            match node.parent {
                Some(p) => kids[p].push(i),
                None => order.push(i),
            }
        }
        let mut head = 0;
        while head < order.len() {
            order.extend_from_slice(&kids[order[head]]);
            head += 1;
        }
        let mut remap = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let mut slots: Vec<Option<StitchedNode<'m>>> = self.nodes.into_iter().map(Some).collect();
        let nodes = order
            .iter()
            .map(|&old| {
                let mut node = slots[old].take().expect("each node once");
                node.parent = node.parent.map(|p| remap[p]);
                node
            })
            .collect();
        StitchedTree { nodes }
    }

    /// Removes everything that cannot change the result: leaves without
    /// evidence, chains of unconstrained roots, and components with no
    /// constrained node at all.
    pub fn prune(self) -> StitchedTree<'m> {
        let mut nodes = self.into_ordered().nodes;
        let n = nodes.len();
        let mut alive = vec![true; n];
        let mut child_count = vec![0usize; n];
        // children come after parents, so one backward sweep removes barren
        // leaves transitively
        for i in (0..n).rev() {
            if child_count[i] == 0 && !nodes[i].is_terminal() {
                alive[i] = false;
            } else if let Some(p) = nodes[i].parent {
                child_count[p] += 1;
            }
        }
        // the single live child of every node that has exactly one
        let mut only_child = vec![usize::MAX; n];
        for i in 0..n {
            if let (true, Some(p)) = (alive[i], nodes[i].parent) {
                if child_count[p] == 1 {
                    only_child[p] = i;
                }
            }
        }

        // Fold unconstrained roots with a single child into that child, and
        // find which surviving components hold a constrained node.
        let mut root_of = vec![usize::MAX; n];
        let mut constrained = vec![false; n];
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            let Some(p) = nodes[i].parent else {
                root_of[i] = i;
                continue;
            };
            if root_of[p] == p && !alive_root_kept(&nodes[p], child_count[p]) && only_child[p] == i {
                fold_into(&mut nodes, p, i);
                alive[p] = false;
                root_of[i] = i;
            } else {
                root_of[i] = root_of[p];
            }
        }
        for i in 0..n {
            if alive[i] && nodes[i].is_terminal() {
                constrained[root_of[i]] = true;
            }
        }

        let mut remap = vec![usize::MAX; n];
        let mut kept = Vec::with_capacity(n);
        for (i, node) in nodes.into_iter().enumerate() {
            if alive[i] && constrained[root_of[i]] {
                remap[i] = kept.len();
                kept.push(node);
            }
        }
        for node in &mut kept {
            node.parent = node.parent.map(|p| remap[p]);
        }
        StitchedTree { nodes: kept }
    }

    /// Sum over all assignments of the product of potentials, restricted to
    /// evidence and mask values.
    pub fn eliminate(&self) -> f64 {
        self.partition(true)
    }

    /// Same as [`eliminate`](Self::eliminate) with predicate evidence
    /// ignored.
    pub fn eliminate_mask_only(&self) -> f64 {
        self.partition(false)
    }

    fn partition(&self, with_evidence: bool) -> f64 {
        if !self.is_ordered() {
            return self.clone().into_ordered().partition(with_evidence);
        }
        let n = self.nodes.len();
        // product of incoming messages per node value
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for node in &self.nodes {
            offset.push(offset.last().copied().unwrap_or(0) + node.card);
        }
        let mut incoming = vec![1.0; offset[n]];
        let mut z = 1.0;
        for i in (0..n).rev() {
            let node = &self.nodes[i];
            let (before, rest) = incoming.split_at_mut(offset[i]);
            let local = &mut rest[..node.card];
            for (v, slot) in local.iter_mut().enumerate() {
                let allowed = node.mask.as_ref().is_none_or(|m| m[v])
                    && (!with_evidence || node.evidence.as_ref().is_none_or(|e| e[v]));
                if !allowed {
                    *slot = 0.0;
                }
            }
            match node.parent {
                None => {
                    z *= local
                        .iter()
                        .zip(node.potential.iter())
                        .map(|(l, w)| w * l)
                        .sum::<f64>();
                }
                Some(p) => {
                    let local_sum: f64 = local.iter().sum();
                    let target = &mut before[offset[p]..offset[p + 1]];
                    for (u, slot) in target.iter_mut().enumerate() {
                        let row = &node.potential[u * node.card..(u + 1) * node.card];
                        let mut acc = 0.0;
                        let mut row_sum = 0.0;
                        for (w, l) in row.iter().zip(local.iter()) {
                            acc += w * l;
                            row_sum += w;
                        }
                        *slot *= if row_sum == 0.0 && node.normalized {
                            local_sum / node.card as f64
                        } else {
                            acc
                        };
                    }
                }
            }
        }
        z
    }
}

/// A root stays when it is constrained or has more than one live child.
fn alive_root_kept(node: &StitchedNode<'_>, live_children: usize) -> bool {
    node.is_terminal() || live_children != 1
}

/// Sums the root `r` out into its child `c`, which becomes a root.
fn fold_into(nodes: &mut [StitchedNode<'_>], r: usize, c: usize) {
    let card_c = nodes[c].card;
    let mut folded = vec![0.0; card_c];
    for u in 0..nodes[r].card {
        let w = nodes[r].potential[u];
        if w == 0.0 {
            continue;
        }
        let row = &nodes[c].potential[u * card_c..(u + 1) * card_c];
        let sum: f64 = row.iter().sum();
        if sum == 0.0 && nodes[c].normalized {
            let share = w / card_c as f64;
            folded.iter_mut().for_each(|slot| *slot += share);
        } else {
            for (slot, x) in folded.iter_mut().zip(row) {
                *slot += w * x;
            }
        }
    }
    nodes[c].potential = Cow::Owned(folded);
    nodes[c].parent = None;
}

fn factor_potential(factor: &NodeFactor) -> Cow<'_, [f64]> {
    match factor {
        NodeFactor::Root(m) => Cow::Borrowed(m.probs.as_slice()),
        NodeFactor::Conditional(cpt) => match &cpt.storage {
            crate::factor::Storage::Dense { data } => Cow::Borrowed(data.as_slice()),
            crate::factor::Storage::Sparse { .. } => Cow::Owned(cpt.to_dense()),
        },
    }
}

/// Dense `[parent][child]` table, or the marginal for a root.
fn factor_table(bn: &TreeBn, i: usize) -> Vec<f64> {
    factor_potential(&bn.nodes[i].factor).into_owned()
}

enum Placement<'m> {
    Top,
    Down(&'m Link),
    Up(&'m Link),
}

/// Glues the networks of the queried relations into one tree and attaches
/// predicate evidence and join masks.
pub fn stitch<'m>(model: &'m LinkedModel, query: &Query) -> Result<StitchedTree<'m>> {
    let mut query_links: Vec<&Link> = Vec::new();
    for (parent, fk) in &query.joins {
        let link = model
            .link(parent, fk)
            .ok_or_else(|| Error::InvalidQuery(format!("{parent}.{fk} is not a foreign key")))?;
        query_links.push(link);
    }
    for r in &query.relations {
        if !model.networks.contains_key(r) {
            return Err(Error::UnknownRelation(r.clone()));
        }
    }
    let top = query
        .relations
        .iter()
        .find(|r| !query_links.iter().any(|l| &l.child == *r))
        .ok_or_else(|| Error::InvalidQuery("join graph has a cycle".into()))?;

    let mut key = String::new();
    let mut masked = Vec::with_capacity(query_links.len());
    for l in &query_links {
        key.clear();
        key.push_str(&l.parent);
        key.push('.');
        key.push_str(&l.fk);
        masked.push(
            l.parent_root().is_some()
                && model.join_cards.get(key.as_str()).copied() != model.row_counts.get(&l.parent).copied(),
        );
    }
    let slot = |rel: &str| query.relations.iter().position(|r| r == rel).expect("query relation");

    let capacity = query.relations.iter().map(|r| model.networks[r].len()).sum();
    let mut tree = StitchedTree {
        nodes: Vec::with_capacity(capacity),
    };
    // stitched id of every (relation, network node)
    let mut ids: Vec<Vec<usize>> = vec![Vec::new(); query.relations.len()];
    let mut queue: VecDeque<(&str, Placement<'m>)> = VecDeque::from([(top.as_str(), Placement::Top)]);
    let mut placed = vec![false; query.relations.len()];
    let mut placed_count = 0;
    let mut used = vec![false; query_links.len()];
    let mut skipped = 0;
    let mut memo = vec![None; query_links.len()];

    while let Some((rel, placement)) = queue.pop_front() {
        let bn = &model.networks[rel];
        let mut map = vec![usize::MAX; bn.len()];
        match placement {
            Placement::Top => {
                for i in bn.topological() {
                    map[i] = push_node(&mut tree, bn, i, &map, &bn.nodes[i].name, factor_potential(&bn.nodes[i].factor));
                }
            }
            Placement::Down(link) => {
                for &(c, p) in &link.shared {
                    map[c] = ids[slot(&link.parent)][p];
                }
                for i in bn.topological() {
                    if map[i] == usize::MAX {
                        map[i] = push_node(&mut tree, bn, i, &map, &bn.nodes[i].name, factor_potential(&bn.nodes[i].factor));
                    }
                }
            }
            Placement::Up(link) => {
                let child_bn = &model.networks[&link.child];
                let child_ids = &ids[slot(&link.child)];
                let owned;
                let rooted: &TreeBn = match link.parent_root() {
                    Some(r) if bn.root != Some(r) => {
                        owned = bn.reroot(r)?;
                        &owned
                    }
                    _ => bn,
                };
                for &(c, p) in &link.shared {
                    map[p] = child_ids[c];
                }
                for &(c, p) in &link.shared {
                    let target = child_ids[c];
                    let num = factor_table(rooted, p);
                    let den = factor_table(child_bn, c);
                    let ratio: Vec<f64> = num
                        .iter()
                        .zip(&den)
                        .map(|(&a, &b)| if b == 0.0 { 0.0 } else { a / b })
                        .collect();
                    let card = rooted.nodes[p].card;
                    match rooted.nodes[p].parent {
                        None => multiply_unary(&mut tree, target, &ratio),
                        Some(pp) => multiply_pair(&mut tree, map[pp], target, &ratio, card)?,
                    }
                }
                for i in rooted.topological() {
                    if map[i] == usize::MAX {
                        map[i] = push_node(&mut tree, rooted, i, &map, &bn.nodes[i].name, Cow::Owned(factor_table(rooted, i)));
                    }
                }
            }
        }
        let here = slot(rel);
        ids[here] = map;
        placed[here] = true;
        placed_count += 1;
        for (li, link) in query_links.iter().enumerate() {
            if used[li] {
                continue;
            }
            if link.parent == rel && !placed[slot(&link.child)] {
                used[li] = true;
                if branch_needed(&link.child, li, query, &query_links, &masked, &mut memo) {
                    queue.push_back((link.child.as_str(), Placement::Down(link)));
                } else {
                    skipped += branch_size(&link.child, li, &query_links);
                }
            } else if link.child == rel && !placed[slot(&link.parent)] {
                used[li] = true;
                queue.push_back((link.parent.as_str(), Placement::Up(link)));
            }
        }
    }
    if placed_count + skipped != query.relations.len() {
        return Err(Error::Disconnected);
    }

    for pred in &query.predicates {
        let bn = &model.networks[&pred.relation];
        let node = bn
            .nodes
            .iter()
            .position(|n| n.name == pred.attribute && n.origin.relation == pred.relation)
            .ok_or_else(|| Error::UnknownAttribute {
                relation: pred.relation.clone(),
                attribute: pred.attribute.clone(),
            })?;
        key.clear();
        key.push_str(&pred.relation);
        key.push('.');
        key.push_str(&pred.attribute);
        let dict = model
            .domains
            .get(key.as_str())
            .ok_or_else(|| Error::UnknownAttribute {
                relation: pred.relation.clone(),
                attribute: pred.attribute.clone(),
            })?;
        let id = ids[slot(&pred.relation)][node];
        let target = &mut tree.nodes[id];
        let mut allowed = vec![false; target.card];
        for c in predicate_codes(pred, dict) {
            allowed[c as usize] = true;
        }
        target.evidence = Some(match target.evidence.take() {
            Some(prev) => prev.iter().zip(&allowed).map(|(a, b)| *a && *b).collect(),
            None => allowed,
        });
    }

    for (link, _) in query_links.iter().zip(&masked).filter(|(_, &m)| m) {
        let Some(p) = link.parent_root() else {
            continue;
        };
        let id = ids[slot(&link.parent)][p];
        let node = &mut tree.nodes[id];
        let mut mask = vec![true; node.card];
        mask[node.card - 1] = false;
        node.mask = Some(mask);
    }
    Ok(tree)
}

/// Whether the branch entered through `via` (from the referencing side)
/// carries anything besides barren nodes: a predicate, a join mask, or a
/// relation that references into it from outside. Answers are cached per
/// link in `memo`.
fn branch_needed(
    rel: &str,
    via: usize,
    query: &Query,
    links: &[&Link],
    masked: &[bool],
    memo: &mut [Option<bool>],
) -> bool {
    if let Some(known) = memo[via] {
        return known;
    }
    let needed = query.predicates.iter().any(|p| p.relation == rel)
        || (0..links.len()).any(|li| {
            let link = links[li];
            li != via
                && (link.child == rel
                    || (link.parent == rel
                        && (masked[li] || branch_needed(&link.child, li, query, links, masked, memo))))
        });
    memo[via] = Some(needed);
    needed
}

/// Relations in a branch that [`branch_needed`] found empty.
fn branch_size(rel: &str, via: usize, links: &[&Link]) -> usize {
    1 + links
        .iter()
        .enumerate()
        .filter(|&(li, link)| li != via && link.parent == rel)
        .map(|(li, link)| branch_size(&link.child, li, links))
        .sum::<usize>()
}

fn push_node<'m>(
    tree: &mut StitchedTree<'m>,
    bn: &TreeBn,
    i: usize,
    map: &[usize],
    label: &'m str,
    potential: Cow<'m, [f64]>,
) -> usize {
    let node = &bn.nodes[i];
    tree.nodes.push(StitchedNode {
        label: Cow::Borrowed(label),
        card: node.card,
        parent: node.parent.map(|p| map[p]),
        potential,
        normalized: true,
        evidence: None,
        mask: None,
    });
    tree.nodes.len() - 1
}

fn multiply_unary(tree: &mut StitchedTree<'_>, target: usize, unary: &[f64]) {
    let node = &mut tree.nodes[target];
    let card = node.card;
    let rows = node.potential.len() / card;
    let data = node.potential.to_mut();
    for r in 0..rows {
        for v in 0..card {
            data[r * card + v] *= unary[v];
        }
    }
    node.normalized = false;
}

/// Multiplies a `[a][b]` table into whichever of the two nodes owns the
/// edge between them.
fn multiply_pair(
    tree: &mut StitchedTree<'_>,
    a: usize,
    b: usize,
    table: &[f64],
    b_card: usize,
) -> Result<()> {
    let a_card = table.len() / b_card;
    if tree.nodes[b].parent == Some(a) {
        let node = &mut tree.nodes[b];
        for (slot, w) in node.potential.to_mut().iter_mut().zip(table) {
            *slot *= w;
        }
        node.normalized = false;
    } else if tree.nodes[a].parent == Some(b) {
        let node = &mut tree.nodes[a];
        let data = node.potential.to_mut();
        for u in 0..b_card {
            for v in 0..a_card {
                data[u * a_card + v] *= table[v * b_card + u];
            }
        }
        node.normalized = false;
    } else {
        return Err(Error::NotATree(format!(
            "{} and {} are not adjacent",
            tree.nodes[a].label, tree.nodes[b].label
        )));
    }
    Ok(())
}

/// Selectivity of the query under the model, before clamping.
pub fn infer_selectivity(model: &LinkedModel, query: &Query) -> Result<f64> {
    let tree = stitch(model, query)?.prune();
    // a normalized tree without masks sums to one
    let denominator = if tree.nodes.iter().all(|n| n.normalized && n.mask.is_none()) {
        1.0
    } else {
        tree.eliminate_mask_only()
    };
    if denominator <= 0.0 {
        return Ok(0.0);
    }
    Ok((tree.eliminate() / denominator).clamp(0.0, 1.0))
}

/// Estimator backed by a linked model.
pub struct LinkedEstimator<'m> {
    pub model: &'m LinkedModel,
    pub clamp: ClampPolicy,
}

impl<'m> LinkedEstimator<'m> {
    pub fn new(model: &'m LinkedModel) -> Self {
        LinkedEstimator {
            model,
            clamp: ClampPolicy::default(),
        }
    }

    pub fn join_size(&self, query: &Query) -> f64 {
        estimated_join_size(query, &self.model.row_counts, &self.model.join_cards, |p, fk| {
            self.model.link(p, fk).map(|l| l.child.clone())
        })
    }
}

impl Estimator for LinkedEstimator<'_> {
    fn name(&self) -> String {
        method::linked(self.model.k)
    }

    fn estimate(&self, query: &Query) -> Result<Estimate> {
        let watch = Stopwatch::start();
        let selectivity = infer_selectivity(self.model, query)?;
        let mut est = Estimate::new(selectivity, self.join_size(query), &self.name(), self.clamp);
        est.elapsed = watch.elapsed();
        Ok(est)
    }
}

pub fn estimate(model: &LinkedModel, query: &Query) -> Result<Estimate> {
    LinkedEstimator::new(model).estimate(query)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linker::build_linked;
    use crate::query::{Predicate, Scalar};
    use crate::synth;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_query() -> Query {
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
    fn toy_estimates() {
        let cat = synth::toy_catalog();
        let k1 = build_linked(&cat, 1).unwrap();
        let e = estimate(&k1, &toy_query()).unwrap();
        assert!((e.selectivity - 4.0 / 7.0).abs() < 1e-12);
        assert!((e.cardinality - 4.0).abs() < 1e-9);
        let k0 = build_linked(&cat, 0).unwrap();
        assert!((estimate(&k0, &toy_query()).unwrap().selectivity - 2.0 / 5.0).abs() < 1e-12);
        let mut root_only = toy_query();
        root_only.predicates.remove(0);
        assert!((estimate(&k1, &root_only).unwrap().selectivity - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn unseen_value_hits_the_floor() {
        let cat = synth::toy_catalog();
        let model = build_linked(&cat, 1).unwrap();
        let mut q = toy_query();
        q.predicates[0] = Predicate::eq("customers", "hair", "Green");
        let e = estimate(&model, &q).unwrap();
        assert!(e.degenerate);
        assert!((e.selectivity - 1.0 / 14.0).abs() < 1e-12);
        let raw = LinkedEstimator {
            model: &model,
            clamp: ClampPolicy { enabled: false },
        };
        assert_eq!(raw.estimate(&q).unwrap().selectivity, 0.0);
    }

    #[test]
    fn three_relation_tree_shape() {
        let cat = synth::toy_catalog();
        let model = build_linked(&cat, 1).unwrap();
        let q = crate::query::parse_query(synth::TOY_IZUMI_SQL, &cat.schema, &cat).unwrap();
        let tree = stitch(&model, &q).unwrap();
        // 3 purchases nodes + hair + shops.city
        assert_eq!(tree.nodes.len(), 5);
        assert_eq!(tree.nodes.iter().filter(|n| n.parent.is_none()).count(), 1);
        let two = stitch(&model, &toy_query()).unwrap();
        assert_eq!(two.nodes.len(), 4);
        let pruned = two.prune();
        assert!(pruned.nodes.iter().all(|n| !n.label.contains("day")));
    }

    #[test]
    fn single_relation_uses_pre_join_marginal() {
        let cat = synth::toy_catalog();
        let model = build_linked(&cat, 1).unwrap();
        let q = Query {
            relations: vec!["customers".into()],
            joins: vec![],
            predicates: vec![Predicate::eq("customers", "nationality", "Swedish")],
        };
        assert!((estimate(&model, &q).unwrap().selectivity - 0.6).abs() < 1e-12);
        let tree = stitch(&model, &q).unwrap().prune();
        assert_eq!(tree.nodes.len(), 1);
    }

    #[test]
    fn whole_domain_predicate_changes_nothing() {
        let cat = synth::toy_catalog();
        let model = build_linked(&cat, 1).unwrap();
        let base = estimate(&model, &toy_query()).unwrap().selectivity;
        let mut q = toy_query();
        q.joins.clear();
        q.relations = vec!["customers".into(), "purchases".into(), "shops".into()];
        q.joins = vec![
            ("purchases".into(), "customer_id".into()),
            ("purchases".into(), "shop_id".into()),
        ];
        let all_days: Vec<Scalar> = ["Mon", "Tue", "Wed"].iter().map(|&d| d.into()).collect();
        q.predicates.push(Predicate::is_in("purchases", "day", all_days));
        let with = estimate(&model, &q).unwrap().selectivity;
        assert!((base - with).abs() < 1e-9);
    }

    /// Random tree with random potentials, domains ≤ 6.
    pub(crate) fn random_tree(rng: &mut ChaCha8Rng, max_nodes: usize) -> StitchedTree<'static> {
        let n = rng.gen_range(1..=max_nodes);
        let mut nodes: Vec<StitchedNode<'static>> = Vec::new();
        for i in 0..n {
            let card = rng.gen_range(1..=6);
            let parent = if i == 0 { None } else { Some(rng.gen_range(0..i)) };
            let rows = parent.map_or(1, |p: usize| nodes[p].card);
            let normalized = rng.gen_bool(0.7);
            let mut potential: Vec<f64> = (0..rows * card).map(|_| rng.gen::<f64>()).collect();
            if normalized {
                for r in 0..rows {
                    let row = &mut potential[r * card..(r + 1) * card];
                    if parent.is_some() && rng.gen_bool(0.1) {
                        row.iter_mut().for_each(|x| *x = 0.0);
                    } else {
                        let s: f64 = row.iter().sum();
                        row.iter_mut().for_each(|x| *x /= s);
                    }
                }
            }
            let evidence = rng
                .gen_bool(0.5)
                .then(|| (0..card).map(|_| rng.gen_bool(0.6)).collect());
            nodes.push(StitchedNode {
                label: format!("n{i}").into(),
                card,
                parent,
                potential: Cow::Owned(potential),
                normalized,
                evidence,
                mask: None,
            });
        }
        StitchedTree { nodes }
    }

    /// Sum of the joint over every full assignment.
    pub(crate) fn brute_force(tree: &StitchedTree<'_>) -> f64 {
        let n = tree.nodes.len();
        let mut assignment = vec![0u32; n];
        let mut total = 0.0;
        loop {
            let allowed = tree.nodes.iter().zip(&assignment).all(|(node, &v)| {
                node.evidence.as_ref().is_none_or(|e| e[v as usize])
                    && node.mask.as_ref().is_none_or(|m| m[v as usize])
            });
            if allowed {
                total += tree
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(i, node)| node.value(node.parent.map(|p| assignment[p]), assignment[i]))
                    .product::<f64>();
            }
            let mut i = 0;
            loop {
                if i == n {
                    return total;
                }
                assignment[i] += 1;
                if (assignment[i] as usize) < tree.nodes[i].card {
                    break;
                }
                assignment[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn elimination_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let tree = random_tree(&mut rng, 6);
            let exact = brute_force(&tree);
            let ve = tree.eliminate();
            assert!((exact - ve).abs() <= 1e-12 * exact.abs().max(1.0));
            let pruned = tree.clone().prune().eliminate();
            assert!((exact - pruned).abs() <= 1e-12 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn node_order_does_not_matter() {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let tree = random_tree(&mut rng, 7);
            let exact = brute_force(&tree);
            let mut perm: Vec<usize> = (0..tree.nodes.len()).collect();
            perm.shuffle(&mut rng);
            let mut inverse = vec![0; perm.len()];
            for (new, &old) in perm.iter().enumerate() {
                inverse[old] = new;
            }
            let nodes = perm
                .iter()
                .map(|&old| {
                    let mut node = tree.nodes[old].clone();
                    node.parent = node.parent.map(|p| inverse[p]);
                    node
                })
                .collect();
            let shuffled = StitchedTree { nodes };
            assert!((shuffled.eliminate() - exact).abs() <= 1e-12 * exact.abs().max(1.0));
            assert!((shuffled.prune().eliminate() - exact).abs() <= 1e-12 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn join_size_formula() {
        let cat = synth::toy_catalog();
        let model = build_linked(&cat, 1).unwrap();
        let est = LinkedEstimator::new(&model);
        let q = crate::query::parse_query(synth::TOY_IZUMI_SQL, &cat.schema, &cat).unwrap();
        assert!((est.join_size(&q) - 7.0).abs() < 1e-9);
        assert!((est.join_size(&toy_query()) - 7.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(120))]

        #[test]
        fn adding_a_conjunct_never_increases(seed in 0u64..10_000) {
            let cat = synth::toy_catalog();
            let model = build_linked(&cat, (seed % 3) as usize).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pool = synth::toy_predicate_pool();
            let mut q = Query {
                relations: vec!["customers".into(), "purchases".into(), "shops".into()],
                joins: vec![
                    ("purchases".into(), "customer_id".into()),
                    ("purchases".into(), "shop_id".into()),
                ],
                predicates: vec![],
            };
            let mut prev = infer_selectivity(&model, &q).unwrap();
            prop_assert!((prev - 1.0).abs() < 1e-12);
            for _ in 0..4 {
                q.predicates.push(pool[rng.gen_range(0..pool.len())].clone());
                let next = infer_selectivity(&model, &q).unwrap();
                prop_assert!((0.0..=1.0).contains(&next));
                prop_assert!(next <= prev + 1e-12);
                prev = next;
            }
        }
    }
}
