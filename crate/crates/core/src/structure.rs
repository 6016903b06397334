//! Chow-Liu trees: pairwise mutual information, maximum spanning tree, root
//! choice and orientation.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::catalog::{EncodedColumn, RelationData};
use crate::factor::{cpt_from_codes, ConditionalTable, Marginal};
use crate::{Error, Result};

/// Joint count tables up to this many cells are dense arrays.
pub(crate) const DENSE_COUNT_LIMIT: usize = 1 << 22;

/// Mutual information in nats between two code columns.
///
/// Terms are summed in sorted order so that swapping the arguments gives a
/// bit-identical result.
pub fn mutual_information_codes(x: &[u32], x_card: usize, y: &[u32], y_card: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Empty("column has no rows"));
    }
    let n = x.len() as f64;
    let mut cx = vec![0u64; x_card];
    let mut cy = vec![0u64; y_card];
    for (&a, &b) in x.iter().zip(y) {
        cx[a as usize] += 1;
        cy[b as usize] += 1;
    }
    let term = |a: u32, b: u32, count: u64| {
        let nxy = count as f64;
        let marg = cx[a as usize] as f64 * cy[b as usize] as f64;
        nxy / n * (nxy * n / marg).ln()
    };
    let mut terms = Vec::new();
    if x_card.saturating_mul(y_card) <= DENSE_COUNT_LIMIT {
        let mut joint = vec![0u64; x_card * y_card];
        for (&a, &b) in x.iter().zip(y) {
            joint[a as usize * y_card + b as usize] += 1;
        }
        for (cell, &count) in joint.iter().enumerate() {
            if count > 0 {
                terms.push(term((cell / y_card) as u32, (cell % y_card) as u32, count));
            }
        }
    } else {
        let mut pairs: Vec<(u32, u32)> = x.iter().copied().zip(y.iter().copied()).collect();
        pairs.sort_unstable();
        let mut i = 0;
        while i < pairs.len() {
            let mut j = i;
            while j < pairs.len() && pairs[j] == pairs[i] {
                j += 1;
            }
            terms.push(term(pairs[i].0, pairs[i].1, (j - i) as u64));
            i = j;
        }
    }
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>().max(0.0))
}

pub fn mutual_information(x: &EncodedColumn, y: &EncodedColumn) -> Result<f64> {
    mutual_information_codes(&x.codes, x.cardinality(), &y.codes, y.cardinality())
}

/// Complete undirected graph over attributes weighted by mutual information.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    pub nodes: Vec<String>,
    /// Symmetric `n × n` matrix, zero diagonal.
    weights: Vec<f64>,
}

impl WeightedGraph {
    pub fn new(nodes: Vec<String>) -> WeightedGraph {
        let n = nodes.len();
        WeightedGraph {
            nodes,
            weights: vec![0.0; n * n],
        }
    }

    pub fn from_edges(nodes: Vec<String>, edges: &[(usize, usize, f64)]) -> WeightedGraph {
        let mut g = WeightedGraph::new(nodes);
        for &(a, b, w) in edges {
            g.set(a, b, w);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn set(&mut self, a: usize, b: usize, w: f64) {
        let n = self.nodes.len();
        self.weights[a * n + b] = w;
        self.weights[b * n + a] = w;
    }

    pub fn weight(&self, a: usize, b: usize) -> f64 {
        self.weights[a * self.nodes.len() + b]
    }

    /// One entry per unordered pair, `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.nodes.len();
        (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .map(|(a, b)| (a, b, self.weight(a, b)))
            .collect()
    }
}

/// Code columns plus cardinalities, borrowed from wherever they live.
pub struct ColumnRef<'a> {
    pub name: &'a str,
    pub codes: &'a [u32],
    pub cardinality: usize,
}

impl<'a> From<&'a EncodedColumn> for ColumnRef<'a> {
    fn from(c: &'a EncodedColumn) -> Self {
        ColumnRef {
            name: &c.name,
            codes: &c.codes,
            cardinality: c.cardinality(),
        }
    }
}

pub fn mi_graph(columns: &[ColumnRef<'_>]) -> Result<WeightedGraph> {
    let mut g = WeightedGraph::new(columns.iter().map(|c| c.name.to_string()).collect());
    for a in 0..columns.len() {
        for b in a + 1..columns.len() {
            let (x, y) = (&columns[a], &columns[b]);
            let w = mutual_information_codes(x.codes, x.cardinality, y.codes, y.cardinality)?;
            g.set(a, b, w);
        }
    }
    Ok(g)
}

pub fn build_mi_graph(rel: &RelationData) -> Result<WeightedGraph> {
    if rel.row_count == 0 {
        return Err(Error::EmptyRelation(rel.name.clone()));
    }
    let cols: Vec<ColumnRef<'_>> = rel.columns.iter().map(ColumnRef::from).collect();
    mi_graph(&cols)
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

pub fn maximum_spanning_tree(g: &WeightedGraph) -> Result<Vec<(usize, usize, f64)>> {
    maximum_spanning_tree_with(g, &[])
}

/// Kruskal's algorithm, with `forced` edges committed before any other.
/// Remaining edges are taken by decreasing weight, ties by name pair.
pub fn maximum_spanning_tree_with(
    g: &WeightedGraph,
    forced: &[(usize, usize)],
) -> Result<Vec<(usize, usize, f64)>> {
    if g.is_empty() {
        return Err(Error::Empty("graph has no nodes"));
    }
    let mut dsu = DisjointSet::new(g.len());
    let mut tree = Vec::with_capacity(g.len() - 1);
    for &(a, b) in forced {
        if !dsu.union(a, b) {
            return Err(Error::NotATree(format!(
                "forced edge {}-{} closes a cycle",
                g.nodes[a], g.nodes[b]
            )));
        }
        tree.push((a.min(b), a.max(b), g.weight(a, b)));
    }
    let name_pair = |a: usize, b: usize| {
        let (x, y) = (&g.nodes[a], &g.nodes[b]);
        if x <= y {
            (x, y)
        } else {
            (y, x)
        }
    };
    let mut edges = g.edges();
    edges.sort_by(|l, r| {
        r.2.total_cmp(&l.2)
            .then_with(|| name_pair(l.0, l.1).cmp(&name_pair(r.0, r.1)))
    });
    for (a, b, w) in edges {
        if tree.len() + 1 == g.len() {
            break;
        }
        if dsu.union(a, b) {
            tree.push((a, b, w));
        }
    }
    Ok(tree)
}

/// Node with the largest sum of incident tree-edge weights. Ties go to the
/// node declared first.
pub fn choose_root(node_count: usize, tree: &[(usize, usize, f64)]) -> usize {
    let mut degree = vec![0.0; node_count];
    for &(a, b, w) in tree {
        degree[a] += w;
        degree[b] += w;
    }
    let mut best = 0;
    for (i, &d) in degree.iter().enumerate() {
        if d > degree[best] {
            best = i;
        }
    }
    best
}

/// Parent of every node when the tree is hung from `root`; BFS visits
/// neighbours in index order.
pub fn orient(node_count: usize, tree: &[(usize, usize, f64)], root: usize) -> Vec<Option<usize>> {
    let mut adj = vec![Vec::new(); node_count];
    for &(a, b, _) in tree {
        adj[a].push(b);
        adj[b].push(a);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    let mut parent = vec![None; node_count];
    let mut seen = vec![false; node_count];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                parent[w] = Some(v);
                queue.push_back(w);
            }
        }
    }
    parent
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Origin {
    pub relation: String,
    pub attribute: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeFactor {
    Root(Marginal),
    Conditional(ConditionalTable),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnNode {
    /// Unique within the network. Imported nodes are prefixed with the
    /// foreign-key attribute they came through.
    pub name: String,
    pub origin: Origin,
    /// Number of codes, null included.
    pub card: usize,
    pub parent: Option<usize>,
    pub mi_to_parent: f64,
    pub factor: NodeFactor,
}

/// A tree-shaped Bayesian network. Networks over zero attributes are allowed
/// and have no root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeBn {
    pub relation: String,
    pub nodes: Vec<BnNode>,
    pub root: Option<usize>,
}

/// Input column for [`TreeBn::fit`].
pub struct NodeSpec<'a> {
    pub name: String,
    pub origin: Origin,
    pub codes: &'a [u32],
    pub card: usize,
}

impl TreeBn {
    /// Fits factors from counts for a given orientation.
    pub fn fit(
        relation: &str,
        specs: &[NodeSpec<'_>],
        parent: &[Option<usize>],
        graph: &WeightedGraph,
    ) -> Result<TreeBn> {
        let mut root = None;
        let mut nodes = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let (factor, mi) = match parent[i] {
                None => {
                    root = Some(i);
                    (NodeFactor::Root(Marginal::from_codes(spec.codes, spec.card)?), 0.0)
                }
                Some(p) => (
                    NodeFactor::Conditional(cpt_from_codes(
                        spec.codes,
                        spec.card,
                        specs[p].codes,
                        specs[p].card,
                    )?),
                    graph.weight(i, p),
                ),
            };
            nodes.push(BnNode {
                name: spec.name.clone(),
                origin: spec.origin.clone(),
                card: spec.card,
                parent: parent[i],
                mi_to_parent: mi,
                factor,
            });
        }
        Ok(TreeBn {
            relation: relation.to_string(),
            nodes,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&c| self.nodes[c].parent == Some(i))
            .collect()
    }

    /// `(parent, child)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.parent.map(|p| (p, i)))
            .collect()
    }

    /// Nodes ordered so that every parent precedes its children.
    pub fn topological(&self) -> Vec<usize> {
        let Some(root) = self.root else {
            return Vec::new();
        };
        let n = self.nodes.len();
        // children grouped by parent, in index order
        let mut start = vec![0usize; n + 1];
        for node in &self.nodes {
            if let Some(p) = node.parent {
                start[p + 1] += 1;
            }
        }
        for i in 0..n {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut kids = vec![0usize; start[n]];
        for (c, node) in self.nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                kids[fill[p]] = c;
                fill[p] += 1;
            }
        }
        let mut order = Vec::with_capacity(n);
        order.push(root);
        let mut i = 0;
        while i < order.len() {
            let v = order[i];
            order.extend_from_slice(&kids[start[v]..start[v + 1]]);
            i += 1;
        }
        order
    }

    /// Marginal distribution of every node under the model.
    pub fn node_marginals(&self) -> Vec<Marginal> {
        let mut out: Vec<Option<Marginal>> = vec![None; self.nodes.len()];
        for i in self.topological() {
            let m = match (&self.nodes[i].factor, self.nodes[i].parent) {
                (NodeFactor::Root(m), _) => m.clone(),
                (NodeFactor::Conditional(cpt), Some(p)) => {
                    crate::factor::marginalize(cpt, out[p].as_ref().expect("parent first"))
                        .expect("dimensions agree")
                }
                (NodeFactor::Conditional(_), None) => unreachable!("conditional root"),
            };
            out[i] = Some(m);
        }
        out.into_iter().map(|m| m.expect("tree covers all nodes")).collect()
    }

    /// Model probability of one full assignment.
    pub fn joint_probability(&self, assignment: &[u32]) -> f64 {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| match (&n.factor, n.parent) {
                (NodeFactor::Root(m), _) => m.probs[assignment[i] as usize],
                (NodeFactor::Conditional(cpt), Some(p)) => cpt.get(assignment[p], assignment[i]),
                (NodeFactor::Conditional(_), None) => 0.0,
            })
            .product()
    }

    /// Sum of log-probabilities of the given rows, one code column per node.
    pub fn log_likelihood(&self, columns: &[&[u32]]) -> f64 {
        let rows = columns.first().map_or(0, |c| c.len());
        let mut assignment = vec![0u32; columns.len()];
        (0..rows)
            .map(|r| {
                for (slot, col) in assignment.iter_mut().zip(columns) {
                    *slot = col[r];
                }
                self.joint_probability(&assignment).ln()
            })
            .sum()
    }

    /// Same distribution, hung from a different node. Edges on the path
    /// from the old root are reversed with Bayes' rule.
    pub fn reroot(&self, new_root: usize) -> Result<TreeBn> {
        let Some(old_root) = self.root else {
            return Err(Error::Empty("network has no nodes"));
        };
        let mut out = self.clone();
        if new_root == old_root {
            return Ok(out);
        }
        let marginals = self.node_marginals();
        let mut path = vec![new_root];
        while let Some(p) = self.nodes[*path.last().unwrap()].parent {
            path.push(p);
        }
        out.nodes[new_root].parent = None;
        out.nodes[new_root].mi_to_parent = 0.0;
        out.nodes[new_root].factor = NodeFactor::Root(marginals[new_root].clone());
        for w in path.windows(2) {
            let (child, parent) = (w[0], w[1]);
            let NodeFactor::Conditional(cpt) = &self.nodes[child].factor else {
                unreachable!("non-root node has a conditional factor");
            };
            let (reversed, _) = cpt.reverse(&marginals[parent])?;
            out.nodes[parent].parent = Some(child);
            out.nodes[parent].mi_to_parent = self.nodes[child].mi_to_parent;
            out.nodes[parent].factor = NodeFactor::Conditional(reversed);
        }
        out.root = Some(new_root);
        Ok(out)
    }
}

/// Learns a Chow-Liu tree over the modeled attributes of one relation.
pub fn build_bn(rel: &RelationData) -> Result<TreeBn> {
    let graph = build_mi_graph(rel)?;
    let specs: Vec<NodeSpec<'_>> = rel
        .columns
        .iter()
        .map(|c| NodeSpec {
            name: c.name.clone(),
            origin: Origin {
                relation: rel.name.clone(),
                attribute: c.name.clone(),
            },
            codes: &c.codes,
            card: c.cardinality(),
        })
        .collect();
    if specs.is_empty() {
        return Ok(TreeBn {
            relation: rel.name.clone(),
            nodes: Vec::new(),
            root: None,
        });
    }
    let tree = maximum_spanning_tree(&graph)?;
    let root = choose_root(specs.len(), &tree);
    let parent = orient(specs.len(), &tree, root);
    TreeBn::fit(&rel.name, &specs, &parent, &graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Edge weights of the five-attribute example.
    pub(crate) fn supplementary_graph() -> WeightedGraph {
        let nodes = ["nationality", "country", "city", "eye", "hair"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        WeightedGraph::from_edges(
            nodes,
            &[
                (0, 1, 0.55),
                (0, 2, 0.34),
                (0, 3, 0.11),
                (0, 4, 0.59),
                (1, 2, 0.68),
                (1, 3, 0.03),
                (1, 4, 0.25),
                (2, 3, 0.01),
                (2, 4, 0.22),
                (3, 4, 0.10),
            ],
        )
    }

    fn entropy(codes: &[u32], card: usize) -> f64 {
        let m = Marginal::from_codes(codes, card).unwrap();
        -m.probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    #[test]
    fn mi_of_identical_columns_is_entropy() {
        let x = [0, 1, 2, 2, 1, 0, 0, 0];
        let mi = mutual_information_codes(&x, 3, &x, 3).unwrap();
        assert!((mi - entropy(&x, 3)).abs() < 1e-12);
    }

    #[test]
    fn mi_of_full_cross_product_is_zero() {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for a in 0..3 {
            for b in 0..4 {
                x.push(a);
                y.push(b);
            }
        }
        assert!(mutual_information_codes(&x, 3, &y, 4).unwrap().abs() < 1e-12);
    }

    #[test]
    fn toy_mi() {
        // nationality (Swedish=1), hair (Blond=0)
        let nat = [1, 1, 1, 0, 0];
        let hair = [0, 0, 1, 0, 1];
        let expected = 0.4 * (0.4f64 / 0.36).ln()
            + 0.2 * (0.2f64 / 0.24).ln()
            + 0.2 * (0.2f64 / 0.24).ln()
            + 0.2 * (0.2f64 / 0.16).ln();
        let mi = mutual_information_codes(&nat, 3, &hair, 3).unwrap();
        assert!((mi - expected).abs() < 1e-12);
        assert!((mi - 0.013844).abs() < 1e-6);
    }

    #[test]
    fn mi_errors() {
        assert!(mutual_information_codes(&[0], 1, &[0, 0], 1).is_err());
        assert!(mutual_information_codes(&[], 1, &[], 1).is_err());
    }

    #[test]
    fn graph_edge_counts() {
        assert_eq!(supplementary_graph().edges().len(), 10);
        let single = WeightedGraph::new(vec!["a".into()]);
        assert!(single.edges().is_empty());
        assert!(maximum_spanning_tree(&single).unwrap().is_empty());
        assert!(maximum_spanning_tree(&WeightedGraph::new(vec![])).is_err());
    }

    #[test]
    fn supplementary_mst_and_root() {
        let g = supplementary_graph();
        let tree = maximum_spanning_tree(&g).unwrap();
        let mut edges: Vec<(usize, usize)> = tree.iter().map(|&(a, b, _)| (a, b)).collect();
        edges.sort();
        assert_eq!(edges, vec![(0, 1), (0, 3), (0, 4), (1, 2)]);
        let total: f64 = tree.iter().map(|e| e.2).sum();
        assert!((total - 1.93).abs() < 1e-12);
        let root = choose_root(5, &tree);
        assert_eq!(g.nodes[root], "nationality");
        let parent = orient(5, &tree, root);
        assert_eq!(parent, vec![None, Some(0), Some(1), Some(0), Some(0)]);
    }

    #[test]
    fn two_node_graph() {
        let g = WeightedGraph::from_edges(vec!["a".into(), "b".into()], &[(0, 1, 0.3)]);
        assert_eq!(maximum_spanning_tree(&g).unwrap(), vec![(0, 1, 0.3)]);
    }

    #[test]
    fn root_ties_follow_declaration_order() {
        let tree = [(0, 1, 0.5)];
        assert_eq!(choose_root(2, &tree), 0);
        assert_eq!(choose_root(1, &[]), 0);
    }

    #[test]
    fn forced_edges_are_kept() {
        let g = supplementary_graph();
        let tree = maximum_spanning_tree_with(&g, &[(3, 2)]).unwrap();
        assert!(tree.iter().any(|&(a, b, _)| (a, b) == (2, 3)));
        assert_eq!(tree.len(), 4);
        assert!(maximum_spanning_tree_with(&g, &[(0, 1), (1, 0)]).is_err());
    }

    /// Every labeled spanning tree from its Prüfer sequence.
    pub(crate) fn prufer_tree(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
        let mut degree = vec![1; n];
        for &s in seq {
            degree[s] += 1;
        }
        let mut edges = Vec::new();
        for &s in seq {
            let leaf = (0..n).find(|&i| degree[i] == 1).unwrap();
            edges.push((leaf, s));
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
        edges.push((rest[0], rest[1]));
        edges
    }

    pub(crate) fn brute_force_max(g: &WeightedGraph) -> f64 {
        let n = g.len();
        if n < 2 {
            return 0.0;
        }
        let total = n.pow(n as u32 - 2);
        (0..total)
            .map(|mut code| {
                let seq: Vec<usize> = (0..n - 2)
                    .map(|_| {
                        let s = code % n;
                        code /= n;
                        s
                    })
                    .collect();
                prufer_tree(&seq, n)
                    .iter()
                    .map(|&(a, b)| g.weight(a, b))
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn six_node_mst_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let nodes: Vec<String> = (0..6).map(|i| format!("n{i}")).collect();
            let mut g = WeightedGraph::new(nodes);
            for a in 0..6 {
                for b in a + 1..6 {
                    g.set(a, b, rng.gen::<f64>());
                }
            }
            let total: f64 = maximum_spanning_tree(&g).unwrap().iter().map(|e| e.2).sum();
            assert!((total - brute_force_max(&g)).abs() < 1e-12);
        }
    }

    fn planted_chain(rows: usize, seed: u64) -> RelationData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut c = Vec::new();
        for _ in 0..rows {
            let va: u32 = rng.gen_range(0..4);
            let vb = if rng.gen_bool(0.8) { va } else { rng.gen_range(0..4) };
            let vc = if rng.gen_bool(0.8) { vb } else { rng.gen_range(0..4) };
            a.push(va);
            b.push(vb);
            c.push(vc);
        }
        crate::synth::relation_from_codes("r", &[("A", a, 4), ("B", b, 4), ("C", c, 4)])
    }

    #[test]
    fn planted_chain_is_recovered() {
        let rel = planted_chain(5000, 3);
        let g = build_mi_graph(&rel).unwrap();
        assert!(g.weight(0, 1) > g.weight(0, 2));
        assert!(g.weight(1, 2) > g.weight(0, 2));
        let bn = build_bn(&rel).unwrap();
        let mut edges: Vec<(usize, usize)> = bn
            .edges()
            .into_iter()
            .map(|(p, c)| (p.min(c), p.max(c)))
            .collect();
        edges.sort();
        assert_eq!(edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn single_attribute_network() {
        let rel = crate::synth::relation_from_codes("r", &[("A", vec![0, 1, 1], 2)]);
        let bn = build_bn(&rel).unwrap();
        assert_eq!(bn.root, Some(0));
        assert!(matches!(bn.nodes[0].factor, NodeFactor::Root(_)));
    }

    #[test]
    fn empty_relation_is_rejected() {
        let rel = crate::synth::relation_from_codes("r", &[("A", vec![], 2)]);
        assert!(matches!(build_bn(&rel), Err(Error::EmptyRelation(_))));
    }

    fn all_assignments(cards: &[usize]) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new()];
        for &c in cards {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..c as u32).map(move |v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn chow_liu_beats_random_trees() {
        let rel = planted_chain(2000, 5);
        let cols: Vec<&[u32]> = rel.columns.iter().map(|c| c.codes.as_slice()).collect();
        let bn = build_bn(&rel).unwrap();
        let best = bn.log_likelihood(&cols);
        let graph = build_mi_graph(&rel).unwrap();
        let specs: Vec<NodeSpec<'_>> = rel
            .columns
            .iter()
            .map(|c| NodeSpec {
                name: c.name.clone(),
                origin: Origin {
                    relation: "r".into(),
                    attribute: c.name.clone(),
                },
                codes: &c.codes,
                card: c.cardinality(),
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let seq = [rng.gen_range(0..3)];
            let edges: Vec<(usize, usize, f64)> =
                prufer_tree(&seq, 3).into_iter().map(|(a, b)| (a, b, 0.0)).collect();
            let root = rng.gen_range(0..3);
            let parent = orient(3, &edges, root);
            let other = TreeBn::fit("r", &specs, &parent, &graph).unwrap();
            assert!(best >= other.log_likelihood(&cols) - 1e-9);
        }
    }

    proptest! {
        #[test]
        fn mi_is_symmetric_and_non_negative(
            (x, y) in (1usize..80).prop_flat_map(|n| (
                proptest::collection::vec(0u32..5, n),
                proptest::collection::vec(0u32..3, n),
            ))
        ) {
            let xy = mutual_information_codes(&x, 5, &y, 3).unwrap();
            let yx = mutual_information_codes(&y, 3, &x, 5).unwrap();
            prop_assert!(xy >= 0.0);
            prop_assert_eq!(xy.to_bits(), yx.to_bits());
        }

        #[test]
        fn rerooting_preserves_the_joint(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..5usize);
            let cards: Vec<usize> = (0..n).map(|_| rng.gen_range(2..4)).collect();
            let rows = 40;
            let cols: Vec<Vec<u32>> = cards
                .iter()
                .map(|&c| (0..rows).map(|_| rng.gen_range(0..c as u32)).collect())
                .collect();
            let named: Vec<(&str, Vec<u32>, usize)> = ["a", "b", "c", "d"]
                .iter()
                .zip(cols)
                .zip(&cards)
                .map(|((name, codes), &c)| (*name, codes, c - 1))
                .collect();
            let rel = crate::synth::relation_from_codes("r", &named);
            let bn = build_bn(&rel).unwrap();
            let new_root = rng.gen_range(0..n);
            let moved = bn.reroot(new_root).unwrap();
            prop_assert_eq!(moved.root, Some(new_root));
            let full_cards: Vec<usize> = bn.nodes.iter().map(|n| n.card).collect();
            for a in all_assignments(&full_cards) {
                prop_assert!((bn.joint_probability(&a) - moved.joint_probability(&a)).abs() < 1e-9);
            }
        }
    }
}
