//! Directed Steiner trees by recursive greedy, and the node-and-edge-weighted
//! group Steiner reduction used to pick which nodes a cascade should reach.
//!
//! The reduction splits every node `u` into `u_in -> u_out` (paying the node
//! weight), turns each undirected edge into two crossing arcs (paying the
//! edge weight), and attaches one zero-cost dummy terminal per group behind
//! its members' out-copies. A root arborescence covering all dummies then
//! corresponds to a connected subgraph containing the root and touching every
//! group, with identical weight.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::io::Write;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

pub type ArcId = usize;

/// Arc-weighted digraph. The optional root and terminal set are filled in by
/// [`gst_reduce`]; the solver takes them explicitly.
#[derive(Debug, Clone)]
pub struct WeightedDigraph {
    n: usize,
    arcs: Vec<(usize, usize, f64)>,
    out: Vec<Vec<ArcId>>,
    into: Vec<Vec<ArcId>>,
    pub root: Option<usize>,
    pub terminals: Vec<usize>,
}

impl WeightedDigraph {
    pub fn new(n: usize) -> Self {
        WeightedDigraph {
            n,
            arcs: Vec::new(),
            out: vec![Vec::new(); n],
            into: vec![Vec::new(); n],
            root: None,
            terminals: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn add_arc(&mut self, from: usize, to: usize, w: f64) -> Result<ArcId> {
        if from >= self.n || to >= self.n {
            return Err(Error::NodeOutOfRange(from.max(to)));
        }
        if !(w >= 0.0) {
            return Err(Error::NegativeArcWeight { u: from, v: to, w });
        }
        let id = self.arcs.len();
        self.arcs.push((from, to, w));
        self.out[from].push(id);
        self.into[to].push(id);
        Ok(id)
    }

    pub fn arc(&self, a: ArcId) -> (usize, usize, f64) {
        self.arcs[a]
    }

    pub fn arcs_iter(&self) -> impl Iterator<Item = (ArcId, usize, usize, f64)> + '_ {
        self.arcs.iter().enumerate().map(|(a, &(u, v, w))| (a, u, v, w))
    }

    pub fn out_arcs(&self, v: usize) -> &[ArcId] {
        &self.out[v]
    }

    pub fn in_arcs(&self, v: usize) -> &[ArcId] {
        &self.into[v]
    }

    /// Debug dump, one `from to weight` line per arc in insertion order.
    pub fn write_arc_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# digraph {} nodes {} arcs", self.n, self.arcs.len())?;
        for &(u, v, wt) in &self.arcs {
            writeln!(w, "{u} {v} {wt}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed so BinaryHeap pops the smallest distance, ties by node id
        other
            .dist
            .partial_cmp(&self.dist)
            .expect("arc weights are finite")
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest paths; returns distances plus the arc into each
/// node on its shortest path (for path reconstruction).
pub fn shortest_paths(dg: &WeightedDigraph, src: usize) -> (Vec<f64>, Vec<Option<ArcId>>) {
    dijkstra(dg, src, false)
}

/// Single-target shortest paths: `dist[v]` is the cheapest v -> dst path,
/// with the outgoing arc each node takes toward the target.
pub fn shortest_paths_to(dg: &WeightedDigraph, dst: usize) -> (Vec<f64>, Vec<Option<ArcId>>) {
    dijkstra(dg, dst, true)
}

fn dijkstra(dg: &WeightedDigraph, origin: usize, reverse: bool) -> (Vec<f64>, Vec<Option<ArcId>>) {
    let mut dist = vec![f64::INFINITY; dg.n];
    let mut via: Vec<Option<ArcId>> = vec![None; dg.n];
    let mut heap = BinaryHeap::new();
    dist[origin] = 0.0;
    heap.push(HeapEntry { dist: 0.0, node: origin });
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        let arcs = if reverse { &dg.into[u] } else { &dg.out[u] };
        for &a in arcs {
            let (from, to, w) = dg.arcs[a];
            let v = if reverse { from } else { to };
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                via[v] = Some(a);
                heap.push(HeapEntry { dist: nd, node: v });
            }
        }
    }
    (dist, via)
}

/// All-pairs shortest distances with path reconstruction.
pub struct MetricClosure {
    dist: Vec<Vec<f64>>,
    pred: Vec<Vec<Option<ArcId>>>,
}

impl MetricClosure {
    /// One Dijkstra per source node.
    pub fn compute(dg: &WeightedDigraph) -> Self {
        let mut dist = Vec::with_capacity(dg.n);
        let mut pred = Vec::with_capacity(dg.n);
        for s in 0..dg.n {
            let (d, p) = shortest_paths(dg, s);
            dist.push(d);
            pred.push(p);
        }
        MetricClosure { dist, pred }
    }

    pub fn dist(&self, u: usize, v: usize) -> f64 {
        self.dist[u][v]
    }

    /// Arcs of a shortest u -> v path in path order, `None` if unreachable.
    pub fn path_arcs(&self, dg: &WeightedDigraph, u: usize, v: usize) -> Option<Vec<ArcId>> {
        if !self.dist[u][v].is_finite() {
            return None;
        }
        let mut arcs = Vec::new();
        let mut cur = v;
        while cur != u {
            let a = self.pred[u][cur]?;
            arcs.push(a);
            cur = dg.arcs[a].0;
        }
        arcs.reverse();
        Some(arcs)
    }
}

/// Out-arborescence result carrier. Parent links give in-degree at most one
/// by construction; the constructors verify root-reachability.
#[derive(Debug, Clone)]
pub struct SteinerTree {
    root: usize,
    /// child -> (parent, arc weight)
    parent: BTreeMap<usize, (usize, f64)>,
    covered: BTreeSet<usize>,
    weight: f64,
}

impl SteinerTree {
    /// Builds from parent arcs; weight is the sum of arc weights.
    pub fn from_arcs(
        root: usize,
        arcs: &[(usize, usize, f64)],
        covered: BTreeSet<usize>,
    ) -> Result<Self> {
        let weight = arcs.iter().map(|&(_, _, w)| w).sum();
        Self::with_total_weight(root, arcs, covered, weight)
    }

    /// Builds from parent arcs with an explicitly supplied total weight, for
    /// trees whose weight also charges node weights (group Steiner results).
    pub fn with_total_weight(
        root: usize,
        arcs: &[(usize, usize, f64)],
        covered: BTreeSet<usize>,
        weight: f64,
    ) -> Result<Self> {
        let mut parent = BTreeMap::new();
        let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(u, v, w) in arcs {
            if v == root || parent.insert(v, (u, w)).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "node {v} has two parents or is the root"
                )));
            }
            children.entry(u).or_default().push(v);
        }
        // every node must hang off the root
        let mut reached = BTreeSet::from([root]);
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            if let Some(cs) = children.get(&u) {
                for &c in cs {
                    if reached.insert(c) {
                        stack.push(c);
                    }
                }
            }
        }
        if let Some((&v, _)) = parent.iter().find(|(v, _)| !reached.contains(v)) {
            return Err(Error::InvalidParameter(format!(
                "node {v} is not reachable from the arborescence root"
            )));
        }
        Ok(SteinerTree { root, parent, covered, weight })
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn covered_terminals(&self) -> &BTreeSet<usize> {
        &self.covered
    }

    pub fn contains(&self, v: usize) -> bool {
        v == self.root || self.parent.contains_key(&v)
    }

    /// All nodes including the root, ascending.
    pub fn nodes(&self) -> BTreeSet<usize> {
        let mut s: BTreeSet<usize> = self.parent.keys().copied().collect();
        s.insert(self.root);
        s
    }

    /// `(parent, child, weight)` triples ordered by child.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.parent.iter().map(|(&v, &(u, w))| (u, v, w))
    }

    pub fn arc_count(&self) -> usize {
        self.parent.len()
    }

    pub fn arc_weight_sum(&self) -> f64 {
        self.parent.values().map(|&(_, w)| w).sum()
    }
}

/// A metric leg of a partial greedy solution: how to expand it to real arcs
/// depends on which shortest-path tree it came from.
#[derive(Debug, Clone, Copy)]
enum Leg {
    /// Shortest path root -> v, expanded with the forward tree from the root.
    FromRoot { v: usize },
    /// Shortest path v -> t, expanded with terminal t's reverse tree.
    ToTerminal { v: usize, t: usize },
    /// Shortest path u -> v, expanded with the full metric closure.
    Closure { u: usize, v: usize },
}

/// Approximate minimum-weight out-arborescence from `root` covering at least
/// `k` of the given terminals.
///
/// Level 1 takes the k terminals cheapest to reach by shortest path. Level
/// `l+1` repeatedly picks, over every intermediate node v and budget k', the
/// minimum-density (weight per newly covered terminal) combination of the
/// path root -> v with a level-`l` subtree at v; ties prefer the lowest v,
/// then the smallest budget. Level 2 is the default everywhere and needs
/// only one shortest-path tree per terminal plus one from the root; deeper
/// levels compute the full metric closure.
pub fn directed_steiner_tree(
    dg: &WeightedDigraph,
    root: usize,
    terminals: &[usize],
    k: usize,
    level: usize,
) -> Result<SteinerTree> {
    if level == 0 {
        return Err(Error::InvalidParameter("recursion level must be at least 1".into()));
    }
    if root >= dg.n {
        return Err(Error::NodeOutOfRange(root));
    }
    let terms: Vec<usize> = terminals.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if let Some(&t) = terms.iter().find(|&&t| t >= dg.n) {
        return Err(Error::NodeOutOfRange(t));
    }
    if k == 0 {
        return SteinerTree::from_arcs(root, &[], BTreeSet::new());
    }

    let (dist_root, _) = shortest_paths(dg, root);
    let reachable = terms.iter().filter(|&&t| dist_root[t].is_finite()).count();
    if reachable < k {
        return Err(Error::TerminalsUnreachable { needed: k, reachable });
    }

    let legs = if level == 1 {
        greedy_level1(&dist_root, &terms, k)
    } else if level == 2 {
        greedy_level2(dg, &dist_root, &terms, k)?
    } else {
        let mc = MetricClosure::compute(dg);
        let uncovered: BTreeSet<usize> = terms.iter().copied().collect();
        let (_, legs, _) = recursive_greedy(&mc, dg.n, level, k, root, &uncovered)
            .ok_or(Error::TerminalsUnreachable { needed: k, reachable })?;
        return assemble(dg, root, &terms, &legs, Some(&mc));
    };
    assemble(dg, root, &terms, &legs, None)
}

/// Level 1: the k terminals nearest to the root, ties by id.
fn greedy_level1(dist_root: &[f64], terms: &[usize], k: usize) -> Vec<Leg> {
    let mut order: Vec<(f64, usize)> = terms
        .iter()
        .filter(|&&t| dist_root[t].is_finite())
        .map(|&t| (dist_root[t], t))
        .collect();
    order.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    order.truncate(k);
    order.into_iter().map(|(_, t)| Leg::FromRoot { v: t }).collect()
}

/// Level 2 with targeted shortest-path trees: one forward tree from the root
/// plus one reverse tree per terminal, instead of a full metric closure.
fn greedy_level2(
    dg: &WeightedDigraph,
    dist_root: &[f64],
    terms: &[usize],
    k: usize,
) -> Result<Vec<Leg>> {
    // dist_to[i][v] = shortest v -> terms[i] distance
    let reverse: Vec<(Vec<f64>, Vec<Option<ArcId>>)> =
        terms.iter().map(|&t| shortest_paths_to(dg, t)).collect();

    let mut covered: BTreeSet<usize> = BTreeSet::new();
    let mut legs: Vec<Leg> = Vec::new();
    while covered.len() < k {
        // best = (density, v, k', picked terminal indices)
        let mut best: Option<(f64, usize, usize, Vec<usize>)> = None;
        for v in 0..dg.n {
            if !dist_root[v].is_finite() {
                continue;
            }
            let mut near: Vec<(f64, usize)> = (0..terms.len())
                .filter(|&i| !covered.contains(&i) && reverse[i].0[v].is_finite())
                .map(|i| (reverse[i].0[v], i))
                .collect();
            near.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
            let cap = near.len().min(k - covered.len());
            let mut spokes = 0.0;
            for kp in 1..=cap {
                spokes += near[kp - 1].0;
                let density = (dist_root[v] + spokes) / kp as f64;
                let candidate_better = match &best {
                    None => true,
                    Some((bd, bv, bkp, _)) => {
                        density < *bd
                            || (density == *bd && (v < *bv || (v == *bv && kp < *bkp)))
                    }
                };
                if candidate_better {
                    let picked = near[..kp].iter().map(|&(_, i)| i).collect();
                    best = Some((density, v, kp, picked));
                }
            }
        }
        let (_, v, _, picked) =
            best.ok_or(Error::TerminalsUnreachable { needed: k, reachable: covered.len() })?;
        legs.push(Leg::FromRoot { v });
        for i in picked {
            legs.push(Leg::ToTerminal { v, t: terms[i] });
            covered.insert(i);
        }
    }
    Ok(legs)
}

/// Generic recursion for levels >= 3 over a full metric closure. Returns the
/// total metric weight, the legs, and the covered terminals.
fn recursive_greedy(
    mc: &MetricClosure,
    n: usize,
    level: usize,
    k: usize,
    root: usize,
    uncovered: &BTreeSet<usize>,
) -> Option<(f64, Vec<Leg>, BTreeSet<usize>)> {
    if level == 1 {
        let mut near: Vec<(f64, usize)> = uncovered
            .iter()
            .filter(|&&t| mc.dist(root, t).is_finite())
            .map(|&t| (mc.dist(root, t), t))
            .collect();
        if near.len() < k {
            return None;
        }
        near.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
        near.truncate(k);
        let weight = near.iter().map(|&(d, _)| d).sum();
        let covered: BTreeSet<usize> = near.iter().map(|&(_, t)| t).collect();
        let legs = near.into_iter().map(|(_, t)| Leg::Closure { u: root, v: t }).collect();
        return Some((weight, legs, covered));
    }
    let mut covered = BTreeSet::new();
    let mut legs = Vec::new();
    let mut weight = 0.0;
    while covered.len() < k {
        let remaining: BTreeSet<usize> = uncovered.difference(&covered).copied().collect();
        // best = (density, v, k', subtree weight, legs, covered)
        let mut best: Option<(f64, usize, usize, f64, Vec<Leg>, BTreeSet<usize>)> = None;
        for v in 0..n {
            if !mc.dist(root, v).is_finite() {
                continue;
            }
            for kp in 1..=(k - covered.len()) {
                let Some((sw, slegs, scov)) = recursive_greedy(mc, n, level - 1, kp, v, &remaining)
                else {
                    break; // larger budgets are unreachable too
                };
                let w = mc.dist(root, v) + sw;
                let density = w / scov.len() as f64;
                let better = match &best {
                    None => true,
                    Some((bd, bv, bkp, ..)) => {
                        density < *bd
                            || (density == *bd && (v < *bv || (v == *bv && kp < *bkp)))
                    }
                };
                if better {
                    best = Some((density, v, kp, w, slegs, scov));
                }
            }
        }
        let (_, v, _, w, slegs, scov) = best?;
        weight += w;
        legs.push(Leg::Closure { u: root, v });
        legs.extend(slegs);
        covered.extend(scov);
    }
    Some((weight, legs, covered))
}

/// Expands metric legs to real arcs, keeps the cheapest way to reach each
/// node inside that arc union, and prunes branches that serve no terminal.
fn assemble(
    dg: &WeightedDigraph,
    root: usize,
    terms: &[usize],
    legs: &[Leg],
    mc: Option<&MetricClosure>,
) -> Result<SteinerTree> {
    let (_, pred_root) = shortest_paths(dg, root);
    let mut reverse: BTreeMap<usize, Vec<Option<ArcId>>> = BTreeMap::new();
    let mut union: BTreeSet<ArcId> = BTreeSet::new();
    for leg in legs {
        match *leg {
            Leg::FromRoot { v } => {
                let mut cur = v;
                while cur != root {
                    let a = pred_root[cur].expect("leg endpoints are reachable");
                    union.insert(a);
                    cur = dg.arcs[a].0;
                }
            }
            Leg::ToTerminal { v, t } => {
                let succ = reverse
                    .entry(t)
                    .or_insert_with(|| shortest_paths_to(dg, t).1);
                let mut cur = v;
                while cur != t {
                    let a = succ[cur].expect("leg endpoints are reachable");
                    union.insert(a);
                    cur = dg.arcs[a].1;
                }
            }
            Leg::Closure { u, v } => {
                let mc = mc.expect("closure legs only arise at levels >= 3");
                for a in mc.path_arcs(dg, u, v).expect("leg endpoints are reachable") {
                    union.insert(a);
                }
            }
        }
    }

    // cheapest path to every node inside the union
    let mut sub = WeightedDigraph::new(dg.n);
    let mut orig: BTreeMap<ArcId, ArcId> = BTreeMap::new();
    for &a in &union {
        let (u, v, w) = dg.arcs[a];
        orig.insert(sub.add_arc(u, v, w)?, a);
    }
    let (dist, pred) = shortest_paths(&sub, root);

    let mut keep: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    let term_set: BTreeSet<usize> = terms.iter().copied().collect();
    let in_tree: Vec<usize> = (0..dg.n).filter(|&v| v != root && dist[v].is_finite()).collect();
    for &v in &in_tree {
        let a = orig[&pred[v].expect("finite distance implies a predecessor")];
        let (u, _, w) = dg.arcs[a];
        keep.insert(v, (u, w));
    }
    // drop branches that reach no terminal
    let mut child_count: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, &(u, _)) in keep.iter() {
        *child_count.entry(u).or_insert(0) += 1;
    }
    let mut leaves: Vec<usize> = keep
        .keys()
        .filter(|v| !term_set.contains(v) && child_count.get(v).copied().unwrap_or(0) == 0)
        .copied()
        .collect();
    while let Some(v) = leaves.pop() {
        let (u, _) = keep.remove(&v).expect("pruned node is present");
        let c = child_count.get_mut(&u).expect("parent has a child count");
        *c -= 1;
        if *c == 0 && u != root && !term_set.contains(&u) {
            leaves.push(u);
        }
    }

    let arcs: Vec<(usize, usize, f64)> = keep.iter().map(|(&v, &(u, w))| (u, v, w)).collect();
    let covered: BTreeSet<usize> =
        term_set.iter().copied().filter(|t| *t == root || keep.contains_key(t)).collect();
    SteinerTree::from_arcs(root, &arcs, covered)
}

/// Result of [`gst_reduce`]: the split digraph plus the id scheme that maps
/// back to original nodes and groups.
pub struct GstReduction {
    pub dg: WeightedDigraph,
    n: usize,
    num_groups: usize,
}

impl GstReduction {
    pub fn node_in(u: NodeId) -> usize {
        2 * u
    }

    pub fn node_out(u: NodeId) -> usize {
        2 * u + 1
    }

    pub fn dummy(&self, group: usize) -> usize {
        2 * self.n + group
    }

    pub fn dummies(&self) -> Vec<usize> {
        (0..self.num_groups).map(|g| 2 * self.n + g).collect()
    }
}

/// Builds the split digraph: `u_in -> u_out` arcs carry node weights, two
/// crossing arcs per undirected edge carry its edge weight, and each group
/// gets a dummy terminal fed by zero-weight arcs from its members' out-copies.
pub fn gst_reduce(
    g: &Graph,
    node_w: &[f64],
    edge_w: &[f64],
    groups: &[Vec<NodeId>],
) -> Result<GstReduction> {
    let n = g.node_count();
    if node_w.len() != n || edge_w.len() != g.edge_count() {
        return Err(Error::InvalidParameter(format!(
            "{} node weights and {} edge weights for a graph with {} nodes and {} edges",
            node_w.len(),
            edge_w.len(),
            n,
            g.edge_count()
        )));
    }
    let mut dg = WeightedDigraph::new(2 * n + groups.len());
    for u in 0..n {
        dg.add_arc(2 * u, 2 * u + 1, node_w[u])?;
    }
    for (e, u, v) in g.edges() {
        dg.add_arc(2 * u + 1, 2 * v, edge_w[e])?;
        dg.add_arc(2 * v + 1, 2 * u, edge_w[e])?;
    }
    for (gi, members) in groups.iter().enumerate() {
        let sorted: BTreeSet<NodeId> = members.iter().copied().collect();
        for &v in &sorted {
            if v >= n {
                return Err(Error::NodeOutOfRange(v));
            }
            dg.add_arc(2 * v + 1, 2 * n + gi, 0.0)?;
        }
    }
    dg.terminals = (0..groups.len()).map(|gi| 2 * n + gi).collect();
    Ok(GstReduction { dg, n, num_groups: groups.len() })
}

/// Minimum-weight connected subtree containing `root` and touching every
/// group, by reduction to a directed Steiner tree over the dummy terminals.
/// The returned tree lives on the original nodes; its weight is the sum of
/// node weights over its nodes plus edge weights over its edges.
pub fn group_steiner_tree(
    g: &Graph,
    node_w: &[f64],
    edge_w: &[f64],
    root: NodeId,
    groups: &[Vec<NodeId>],
    level: usize,
) -> Result<SteinerTree> {
    if root >= g.node_count() {
        return Err(Error::NodeOutOfRange(root));
    }
    let red = gst_reduce(g, node_w, edge_w, groups)?;
    let r_in = GstReduction::node_in(root);

    let (dist, _) = shortest_paths(&red.dg, r_in);
    for gi in 0..groups.len() {
        if !dist[red.dummy(gi)].is_finite() {
            return Err(Error::InfeasiblePool {
                pool: gi,
                msg: "no member of the pool is reachable from the root".into(),
            });
        }
    }

    let dummies = red.dummies();
    let dst = directed_steiner_tree(&red.dg, r_in, &dummies, dummies.len(), level)?;

    // the tree contains its root even when there is nothing to cover
    let mut nodes = BTreeSet::from([root]);
    let mut arcs: Vec<(usize, usize, f64)> = Vec::new();
    for (from, to, _) in dst.arcs() {
        if to >= 2 * red.n {
            continue; // dummy attachment
        }
        if to == from + 1 && from % 2 == 0 {
            nodes.insert(from / 2);
        } else {
            // crossing arc u_out -> v_in
            let (u, v) = (from / 2, to / 2);
            let e = g.edge_id(u, v).expect("crossing arcs come from graph edges");
            arcs.push((u, v, edge_w[e]));
        }
    }
    let node_sum: f64 = nodes.iter().map(|&v| node_w[v]).sum();
    let edge_sum: f64 = arcs.iter().map(|&(_, _, w)| w).sum();
    let covered: BTreeSet<usize> = (0..groups.len())
        .filter(|gi| groups[*gi].iter().any(|v| nodes.contains(v)))
        .collect();
    debug_assert_eq!(covered.len(), groups.len());
    SteinerTree::with_total_weight(root, &arcs, covered, node_sum + edge_sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_digraph(n: usize, arcs: usize, rng: &mut ChaCha8Rng) -> WeightedDigraph {
        let mut dg = WeightedDigraph::new(n);
        for _ in 0..arcs {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            if u != v {
                dg.add_arc(u, v, rng.gen_range(0.1..5.0)).unwrap();
            }
        }
        dg
    }

    fn bellman_ford(dg: &WeightedDigraph, src: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; dg.node_count()];
        dist[src] = 0.0;
        for _ in 0..dg.node_count() {
            for (_, u, v, w) in dg.arcs_iter() {
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                }
            }
        }
        dist
    }

    /// Exact directed Steiner optimum by dynamic programming over terminal
    /// subsets on the metric closure.
    fn exact_dst(dg: &WeightedDigraph, root: usize, terms: &[usize], k: usize) -> f64 {
        let mc = MetricClosure::compute(dg);
        let n = dg.node_count();
        let m = terms.len();
        let full = 1usize << m;
        let mut dp = vec![vec![f64::INFINITY; n]; full];
        for v in 0..n {
            dp[0][v] = 0.0;
        }
        for mask in 1..full {
            // attach one terminal or merge two covered halves at v
            for v in 0..n {
                let mut best = f64::INFINITY;
                let mut sub = (mask - 1) & mask;
                while sub > 0 {
                    let w = dp[sub][v] + dp[mask ^ sub][v];
                    if w < best {
                        best = w;
                    }
                    sub = (sub - 1) & mask;
                }
                if mask.count_ones() == 1 {
                    let t = terms[mask.trailing_zeros() as usize];
                    best = best.min(mc.dist(v, t));
                }
                dp[mask][v] = best;
            }
            // then re-root anywhere via metric distance
            let snapshot: Vec<f64> = (0..n).map(|v| dp[mask][v]).collect();
            for v in 0..n {
                for (u, &du) in snapshot.iter().enumerate() {
                    let w = mc.dist(v, u) + du;
                    if w < dp[mask][v] {
                        dp[mask][v] = w;
                    }
                }
            }
        }
        (1..full)
            .filter(|mask| mask.count_ones() as usize == k)
            .map(|mask| dp[mask][root])
            .fold(f64::INFINITY, f64::min)
    }

    /// Literal arborescence enumeration for tiny digraphs: every parent
    /// assignment over every node subset.
    fn enumerate_dst(dg: &WeightedDigraph, root: usize, terms: &[usize], k: usize) -> f64 {
        let n = dg.node_count();
        let mut arc_w = vec![vec![f64::INFINITY; n]; n];
        for (_, u, v, w) in dg.arcs_iter() {
            if w < arc_w[u][v] {
                arc_w[u][v] = w;
            }
        }
        // parent[v] in 0..=n, n meaning "excluded"
        let mut best = f64::INFINITY;
        let others: Vec<usize> = (0..n).filter(|&v| v != root).collect();
        let combos = (n + 1).pow(others.len() as u32);
        'outer: for code in 0..combos {
            let mut c = code;
            let mut parent = vec![usize::MAX; n];
            let mut included = vec![false; n];
            included[root] = true;
            for &v in &others {
                let p = c % (n + 1);
                c /= n + 1;
                if p < n {
                    if !arc_w[p][v].is_finite() {
                        continue 'outer;
                    }
                    parent[v] = p;
                    included[v] = true;
                }
            }
            // every included node's parent must be included, checked before
            // any ancestor walk can step onto an excluded node
            for v in 0..n {
                if included[v] && v != root && !included[parent[v]] {
                    continue 'outer;
                }
            }
            let mut weight = 0.0;
            for v in 0..n {
                if included[v] && v != root {
                    let mut cur = v;
                    let mut hops = 0;
                    while cur != root {
                        cur = parent[cur];
                        hops += 1;
                        if hops > n {
                            continue 'outer; // cycle
                        }
                    }
                    weight += arc_w[parent[v]][v];
                }
            }
            if terms.iter().filter(|&&t| included[t]).count() >= k && weight < best {
                best = weight;
            }
        }
        best
    }

    /// Brute-force group Steiner optimum: every root-containing connected
    /// node subset hitting all groups, with a minimum spanning tree on the
    /// induced edges.
    fn brute_gst(
        g: &Graph,
        node_w: &[f64],
        edge_w: &[f64],
        root: usize,
        groups: &[Vec<usize>],
    ) -> f64 {
        let n = g.node_count();
        let mut best = f64::INFINITY;
        'subset: for mask in 0..(1usize << n) {
            if mask & (1 << root) == 0 {
                continue;
            }
            for group in groups {
                if !group.iter().any(|&v| mask & (1 << v) != 0) {
                    continue 'subset;
                }
            }
            let nodes: Vec<usize> = (0..n).filter(|&v| mask & (1 << v) != 0).collect();
            let mut induced: Vec<(f64, usize, usize)> = g
                .edges()
                .filter(|&(_, u, v)| mask & (1 << u) != 0 && mask & (1 << v) != 0)
                .map(|(e, u, v)| (edge_w[e], u, v))
                .collect();
            induced.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Kruskal; subset must come out connected
            let mut comp: Vec<usize> = (0..n).collect();
            fn find(comp: &mut Vec<usize>, v: usize) -> usize {
                if comp[v] != v {
                    comp[v] = find(comp, comp[v]);
                }
                comp[v]
            }
            let mut tree_w = 0.0;
            let mut joined = 1;
            for (w, u, v) in induced {
                let (ru, rv) = (find(&mut comp, u), find(&mut comp, v));
                if ru != rv {
                    comp[ru] = rv;
                    tree_w += w;
                    joined += 1;
                }
            }
            if joined < nodes.len() {
                continue;
            }
            let total = tree_w + nodes.iter().map(|&v| node_w[v]).sum::<f64>();
            if total < best {
                best = total;
            }
        }
        best
    }

    #[test]
    fn shortest_paths_match_relaxation_oracle() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dg = random_digraph(50, 200, &mut rng);
            let (dist, _) = shortest_paths(&dg, 0);
            let oracle = bellman_ford(&dg, 0);
            for v in 0..50 {
                assert!(
                    (dist[v] - oracle[v]).abs() < 1e-9 || (dist[v].is_infinite() && oracle[v].is_infinite()),
                    "node {v}: {} vs {}",
                    dist[v],
                    oracle[v]
                );
            }
        }
    }

    #[test]
    fn closure_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dg = random_digraph(50, 300, &mut rng);
        let mc = MetricClosure::compute(&dg);
        for _ in 0..2000 {
            let (a, b, c) =
                (rng.gen_range(0..50), rng.gen_range(0..50), rng.gen_range(0..50));
            assert!(mc.dist(a, c) <= mc.dist(a, b) + mc.dist(b, c) + 1e-9);
        }
        for v in 0..50 {
            assert_eq!(mc.dist(v, v), 0.0);
        }
    }

    #[test]
    fn closure_chain_distances_add() {
        let mut dg = WeightedDigraph::new(3);
        dg.add_arc(0, 1, 1.0).unwrap();
        dg.add_arc(1, 2, 2.0).unwrap();
        let mc = MetricClosure::compute(&dg);
        assert_eq!(mc.dist(0, 2), 3.0);
        assert_eq!(mc.path_arcs(&dg, 0, 2).unwrap(), vec![0, 1]);
        assert!(mc.dist(2, 0).is_infinite());
        assert!(mc.path_arcs(&dg, 2, 0).is_none());
    }

    #[test]
    fn reverse_tree_reaches_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dg = random_digraph(30, 150, &mut rng);
        let (dist_to, succ) = shortest_paths_to(&dg, 5);
        for v in 0..30 {
            if !dist_to[v].is_finite() || v == 5 {
                continue;
            }
            let mut cur = v;
            let mut total = 0.0;
            while cur != 5 {
                let a = succ[cur].unwrap();
                let (from, to, w) = dg.arc(a);
                assert_eq!(from, cur);
                total += w;
                cur = to;
            }
            assert!((total - dist_to[v]).abs() < 1e-9);
        }
    }

    #[test]
    fn negative_weight_rejected() {
        let mut dg = WeightedDigraph::new(2);
        assert!(matches!(
            dg.add_arc(0, 1, -0.5),
            Err(Error::NegativeArcWeight { u: 0, v: 1, .. })
        ));
    }

    #[test]
    fn single_terminal_is_shortest_path_at_any_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dg = random_digraph(15, 60, &mut rng);
        let (dist, _) = shortest_paths(&dg, 0);
        let terms: Vec<usize> = (10..15).filter(|&t| dist[t].is_finite()).collect();
        if terms.is_empty() {
            return;
        }
        let nearest = terms.iter().map(|&t| dist[t]).fold(f64::INFINITY, f64::min);
        for level in 1..=3 {
            let tree = directed_steiner_tree(&dg, 0, &terms, 1, level).unwrap();
            assert!(
                (tree.weight() - nearest).abs() < 1e-9,
                "level {level}: {} vs shortest {nearest}",
                tree.weight()
            );
        }
    }

    #[test]
    fn unit_star_is_solved_exactly() {
        let k = 6;
        let mut dg = WeightedDigraph::new(k + 1);
        for t in 1..=k {
            dg.add_arc(0, t, 1.0).unwrap();
        }
        let terms: Vec<usize> = (1..=k).collect();
        for level in 1..=2 {
            let tree = directed_steiner_tree(&dg, 0, &terms, k, level).unwrap();
            assert_eq!(tree.weight(), k as f64);
            assert_eq!(tree.covered_terminals().len(), k);
        }
    }

    #[test]
    fn unreachable_terminals_error() {
        let mut dg = WeightedDigraph::new(4);
        dg.add_arc(0, 1, 1.0).unwrap();
        // 2 and 3 are unreachable
        let err = directed_steiner_tree(&dg, 0, &[1, 2, 3], 2, 2).unwrap_err();
        assert!(matches!(err, Error::TerminalsUnreachable { needed: 2, reachable: 1 }));
    }

    #[test]
    fn exact_dp_matches_literal_enumeration() {
        for seed in 0..15 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dg = random_digraph(5, 12, &mut rng);
            let terms = [2, 3, 4];
            for k in 1..=2 {
                let dp = exact_dst(&dg, 0, &terms, k);
                let brute = enumerate_dst(&dg, 0, &terms, k);
                assert!(
                    (dp - brute).abs() < 1e-9 || (dp.is_infinite() && brute.is_infinite()),
                    "seed {seed} k {k}: dp {dp} vs enumeration {brute}"
                );
            }
        }
    }

    #[test]
    fn greedy_never_beats_exact_and_stays_close() {
        let mut worst: f64 = 1.0;
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let dg = random_digraph(10, 40, &mut rng);
            let terms = [6, 7, 8, 9];
            let (dist, _) = shortest_paths(&dg, 0);
            let reachable = terms.iter().filter(|&&t| dist[t].is_finite()).count();
            for k in 1..=reachable {
                let opt = exact_dst(&dg, 0, &terms, k);
                for level in 1..=3 {
                    let tree = directed_steiner_tree(&dg, 0, &terms, k, level).unwrap();
                    assert!(tree.weight() >= opt - 1e-9);
                    assert!(tree.covered_terminals().len() >= k);
                    if level >= 2 && opt > 0.0 {
                        worst = worst.max(tree.weight() / opt);
                    }
                }
            }
        }
        println!("worst level>=2 greedy/optimal ratio observed: {worst:.4}");
    }

    #[test]
    fn smallest_reduction_has_two_arcs() {
        let g = Graph::new(1);
        let red = gst_reduce(&g, &[0.7], &[], &[vec![0]]).unwrap();
        assert_eq!(red.dg.arc_count(), 2);
        assert_eq!(red.dg.arc(0), (0, 1, 0.7));
        assert_eq!(red.dg.arc(1), (1, 2, 0.0));
        assert_eq!(red.dg.terminals, vec![2]);
    }

    #[test]
    fn each_edge_becomes_two_crossing_arcs() {
        let mut g = Graph::new(2);
        g.add_edge(0, 1, Some(0.2)).unwrap();
        let red = gst_reduce(&g, &[0.1, 0.2], &[1.5], &[]).unwrap();
        // two internal arcs + two crossing arcs
        assert_eq!(red.dg.arc_count(), 4);
        assert_eq!(red.dg.arc(2), (1, 2, 1.5));
        assert_eq!(red.dg.arc(3), (3, 0, 1.5));
    }

    #[test]
    fn groups_containing_root_give_singleton_tree() {
        let mut g = Graph::new(3);
        g.add_edge(0, 1, Some(0.2)).unwrap();
        g.add_edge(1, 2, Some(0.2)).unwrap();
        let tree =
            group_steiner_tree(&g, &[0.4, 1.0, 1.0], &[1.0, 1.0], 0, &[vec![0, 2], vec![0]], 2)
                .unwrap();
        assert_eq!(tree.nodes(), BTreeSet::from([0]));
        assert_eq!(tree.arc_count(), 0);
        assert!((tree.weight() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn touches_every_group_on_the_worked_example() {
        let ex = crate::cost::fixture::worked_example(0.2);
        let n = ex.graph.node_count();
        let node_w = vec![1.0; n];
        let edge_w = vec![1.0; ex.graph.edge_count()];
        let groups = vec![vec![5, 6, 7], vec![3, 8, 9]];
        let tree = group_steiner_tree(&ex.graph, &node_w, &edge_w, 0, &groups, 2).unwrap();
        let nodes = tree.nodes();
        assert!(nodes.contains(&0));
        for group in &groups {
            assert!(group.iter().any(|v| nodes.contains(v)), "missed group {group:?}");
        }
        // tree edges all exist in the graph and form |V|-1 arcs
        assert_eq!(tree.arc_count(), nodes.len() - 1);
        for (u, v, _) in tree.arcs() {
            assert!(ex.graph.has_edge(u, v));
        }
    }

    #[test]
    fn unreachable_group_reports_infeasible() {
        let mut g = Graph::new(4);
        g.add_edge(0, 1, Some(0.2)).unwrap();
        g.add_edge(2, 3, Some(0.2)).unwrap();
        let err = group_steiner_tree(
            &g,
            &[1.0; 4],
            &[1.0; 2],
            0,
            &[vec![1], vec![2, 3]],
            2,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InfeasiblePool { pool: 1, .. }));
        assert!(err.is_infeasible());
    }

    #[test]
    fn empty_group_reports_infeasible() {
        let mut g = Graph::new(2);
        g.add_edge(0, 1, Some(0.2)).unwrap();
        let err =
            group_steiner_tree(&g, &[1.0; 2], &[1.0], 0, &[vec![]], 2).unwrap_err();
        assert!(err.is_infeasible());
    }

    #[test]
    fn reduction_and_brute_force_agree_on_small_instances() {
        for seed in 0..12 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let mut g = crate::graph::generate_gnq(7, 0.45, &mut rng).unwrap();
            g.set_uniform_prob(0.3).unwrap();
            let node_w: Vec<f64> = (0..7).map(|_| rng.gen_range(0.0..2.0)).collect();
            let edge_w: Vec<f64> = (0..g.edge_count()).map(|_| rng.gen_range(0.1..2.0)).collect();
            let groups = vec![
                vec![rng.gen_range(1..7), rng.gen_range(1..7)],
                vec![rng.gen_range(1..7)],
            ];
            let brute = brute_gst(&g, &node_w, &edge_w, 0, &groups);
            let red = gst_reduce(&g, &node_w, &edge_w, &groups).unwrap();
            let dummies = red.dummies();
            let exact_reduced = exact_dst(&red.dg, GstReduction::node_in(0), &dummies, dummies.len());
            assert!(
                (brute - exact_reduced).abs() < 1e-9
                    || (brute.is_infinite() && exact_reduced.is_infinite()),
                "seed {seed}: direct optimum {brute} vs reduced optimum {exact_reduced}"
            );
            if brute.is_finite() {
                let tree = group_steiner_tree(&g, &node_w, &edge_w, 0, &groups, 2).unwrap();
                assert!(tree.weight() >= brute - 1e-9, "seed {seed}");
            }
        }
    }

    #[test]
    fn tree_weight_recomputes_from_scratch() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let mut g = crate::graph::generate_gnq(12, 0.3, &mut rng).unwrap();
            g.set_uniform_prob(0.3).unwrap();
            if !g.is_connected() {
                continue;
            }
            let node_w: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..2.0)).collect();
            let edge_w: Vec<f64> =
                (0..g.edge_count()).map(|_| rng.gen_range(0.1..2.0)).collect();
            let groups = vec![vec![3, 4], vec![7], vec![9, 10, 11]];
            let tree = group_steiner_tree(&g, &node_w, &edge_w, 0, &groups, 2).unwrap();
            let nodes = tree.nodes();
            let recomputed: f64 = nodes.iter().map(|&v| node_w[v]).sum::<f64>()
                + tree
                    .arcs()
                    .map(|(u, v, _)| edge_w[g.edge_id(u, v).unwrap()])
                    .sum::<f64>();
            assert!(
                (tree.weight() - recomputed).abs() < 1e-9,
                "stored {} recomputed {recomputed}",
                tree.weight()
            );
        }
    }

    #[test]
    fn weight_monotone_under_arc_increase() {
        // shortest-path case (k=1) and exact star case, where the greedy
        // output is optimal and optima are monotone in arc weights
        let mut dg = WeightedDigraph::new(4);
        dg.add_arc(0, 1, 1.0).unwrap();
        dg.add_arc(1, 2, 1.0).unwrap();
        dg.add_arc(0, 3, 2.5).unwrap();
        dg.add_arc(3, 2, 0.1).unwrap();
        let mut prev = 0.0;
        for bump in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let mut d2 = dg.clone();
            d2.arcs[1].2 = 1.0 + bump;
            let tree = directed_steiner_tree(&d2, 0, &[2], 1, 2).unwrap();
            assert!(tree.weight() >= prev - 1e-12);
            prev = tree.weight();
        }

        let mut prev = 0.0;
        for bump in [0.0, 0.3, 0.9, 2.0] {
            let mut star = WeightedDigraph::new(4);
            for t in 1..4 {
                star.add_arc(0, t, 1.0 + bump).unwrap();
            }
            let tree = directed_steiner_tree(&star, 0, &[1, 2, 3], 3, 2).unwrap();
            assert!(tree.weight() >= prev - 1e-12);
            prev = tree.weight();
        }
    }

    #[test]
    fn arc_list_dump_is_stable() {
        let mut dg = WeightedDigraph::new(3);
        dg.add_arc(0, 1, 0.5).unwrap();
        dg.add_arc(1, 2, 1.25).unwrap();
        let mut buf = Vec::new();
        dg.write_arc_list(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "# digraph 3 nodes 2 arcs\n0 1 0.5\n1 2 1.25\n"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        // the solver output is always a valid arborescence covering enough
        // terminals, with consistent weight
        #[test]
        fn solver_output_is_valid(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dg = random_digraph(12, 50, &mut rng);
            let terms: Vec<usize> = vec![8, 9, 10, 11];
            let (dist, _) = shortest_paths(&dg, 0);
            let reachable = terms.iter().filter(|&&t| dist[t].is_finite()).count();
            prop_assume!(reachable > 0);
            let k = 1 + (seed as usize % reachable);
            let tree = directed_steiner_tree(&dg, 0, &terms, k, 2).unwrap();
            prop_assert!(tree.covered_terminals().len() >= k);
            for t in tree.covered_terminals() {
                prop_assert!(tree.contains(*t));
            }
            // arcs exist in the digraph with matching weight
            for (u, v, w) in tree.arcs() {
                prop_assert!(dg.arcs_iter().any(|(_, au, av, aw)| au == u && av == v && aw == w));
            }
            prop_assert!((tree.weight() - tree.arc_weight_sum()).abs() < 1e-9);
        }

        // group steiner results always touch every group and pay each node
        // once
        #[test]
        fn group_trees_touch_all_groups(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = crate::graph::generate_gnq(10, 0.4, &mut rng).unwrap();
            g.set_uniform_prob(0.3).unwrap();
            let node_w: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..2.0)).collect();
            let edge_w: Vec<f64> = (0..g.edge_count()).map(|_| rng.gen_range(0.1..2.0)).collect();
            let groups = vec![vec![4, 5], vec![8, 9]];
            match group_steiner_tree(&g, &node_w, &edge_w, 0, &groups, 2) {
                Err(e) => prop_assert!(e.is_infeasible()),
                Ok(tree) => {
                    let nodes = tree.nodes();
                    prop_assert!(nodes.contains(&0));
                    for group in &groups {
                        prop_assert!(group.iter().any(|v| nodes.contains(v)));
                    }
                    prop_assert_eq!(tree.arc_count(), nodes.len() - 1);
                }
            }
        }
    }
}
