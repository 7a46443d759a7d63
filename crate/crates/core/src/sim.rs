//! Independent-cascade simulation and the cascade types reconstruction works
//! with.
//!
//! Two spreading regimes are supported: a single root spreading in
//! breadth-synchronous rounds until extinction (the realized transmissions
//! form a tree rooted at the origin), and a one-round regime where every node
//! seeds independently and each seed exposes its neighborhood exactly once.
//! The one-round regime lives on a directed bipartite expansion of the
//! contact network, with a time-0 and a time-1 copy of every node.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph, NodeId};

/// A realized cascade: either a transmission tree grown from one root or a
/// seed set with the crossing edges it fired.
#[derive(Debug, Clone, PartialEq)]
pub enum Cascade {
    SingleSeed(TreeCascade),
    OneHop(OneHopCascade),
}

impl Cascade {
    /// Every node the cascade infected. For the one-round regime these are
    /// combined-space ids (time-0 copies first, then time-1 copies).
    pub fn infected(&self) -> BTreeSet<NodeId> {
        match self {
            Cascade::SingleSeed(t) => t.nodes().clone(),
            Cascade::OneHop(o) => o.infected_combined(),
        }
    }

    pub fn as_tree(&self) -> Option<&TreeCascade> {
        match self {
            Cascade::SingleSeed(t) => Some(t),
            Cascade::OneHop(_) => None,
        }
    }

    pub fn as_one_hop(&self) -> Option<&OneHopCascade> {
        match self {
            Cascade::OneHop(o) => Some(o),
            Cascade::SingleSeed(_) => None,
        }
    }
}

/// A transmission tree: each infected node except the root has exactly one
/// infecting parent, and depth equals the round of infection.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeCascade {
    root: NodeId,
    parent: BTreeMap<NodeId, NodeId>,
    depth: BTreeMap<NodeId, usize>,
    nodes: BTreeSet<NodeId>,
}

impl TreeCascade {
    pub fn singleton(root: NodeId) -> TreeCascade {
        TreeCascade {
            root,
            parent: BTreeMap::new(),
            depth: BTreeMap::from([(root, 0)]),
            nodes: BTreeSet::from([root]),
        }
    }

    /// Builds a tree from `(parent, child)` pairs, validating that they form
    /// a tree rooted at `root`, and deriving depths by traversal.
    pub fn from_edges(root: NodeId, edges: &[(NodeId, NodeId)]) -> Result<TreeCascade> {
        let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        let mut parent = BTreeMap::new();
        for &(p, c) in edges {
            if c == root {
                return Err(Error::MalformedCascade {
                    root,
                    msg: format!("root {root} has parent {p}"),
                });
            }
            if parent.insert(c, p).is_some() {
                return Err(Error::MalformedCascade {
                    root,
                    msg: format!("node {c} has two parents"),
                });
            }
            children.entry(p).or_default().push(c);
        }
        let mut depth = BTreeMap::from([(root, 0)]);
        let mut nodes = BTreeSet::from([root]);
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            let du = depth[&u];
            if let Some(cs) = children.get(&u) {
                for &c in cs {
                    if !nodes.insert(c) {
                        return Err(Error::MalformedCascade {
                            root,
                            msg: format!("node {c} reached twice"),
                        });
                    }
                    depth.insert(c, du + 1);
                    queue.push_back(c);
                }
            }
        }
        if nodes.len() != edges.len() + 1 {
            return Err(Error::MalformedCascade {
                root,
                msg: "edges not all reachable from the root".into(),
            });
        }
        Ok(TreeCascade { root, parent, depth, nodes })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a tree always contains its root
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.nodes.contains(&v)
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent.get(&v).copied()
    }

    /// Hop distance from the root within the tree.
    pub fn depth(&self, v: NodeId) -> Option<usize> {
        self.depth.get(&v).copied()
    }

    /// Tree edges as `(parent, child)`, ordered by child id.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.parent.iter().map(|(&c, &p)| (p, c))
    }

    pub fn edge_count(&self) -> usize {
        self.parent.len()
    }

    /// True iff `(u, v)` is a tree edge in either orientation.
    pub fn has_tree_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.parent.get(&v) == Some(&u) || self.parent.get(&u) == Some(&v)
    }
}

/// A one-round cascade on a bipartite expansion: seed set in the time-0 part
/// and the crossing edges the seeds fired.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHopCascade {
    n_left: usize,
    seeds: BTreeSet<NodeId>,
    live: BTreeSet<(NodeId, NodeId)>,
}

impl OneHopCascade {
    /// `seeds` are time-0 ids, `live` edges are `(time-0 source, time-1
    /// target)` pairs; every live edge must leave a seed.
    pub fn new(
        n_left: usize,
        seeds: BTreeSet<NodeId>,
        live: BTreeSet<(NodeId, NodeId)>,
    ) -> Result<OneHopCascade> {
        for &(i, j) in &live {
            if !seeds.contains(&i) {
                return Err(Error::LiveEdgeUnseededOrigin(i, j));
            }
        }
        Ok(OneHopCascade { n_left, seeds, live })
    }

    pub fn seeds(&self) -> &BTreeSet<NodeId> {
        &self.seeds
    }

    pub fn live_edges(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.live
    }

    pub fn n_left(&self) -> usize {
        self.n_left
    }

    /// Infected nodes in the combined id space: a time-0 node `i` is id `i`,
    /// a time-1 node `j` is id `n_left + j`.
    pub fn infected_combined(&self) -> BTreeSet<NodeId> {
        let mut s: BTreeSet<NodeId> = self.seeds.clone();
        s.extend(self.live.iter().map(|&(_, j)| self.n_left + j));
        s
    }
}

/// Directed bipartite graph from a time-0 node set to a time-1 node set.
/// Arcs carry transmission probabilities.
#[derive(Debug, Clone)]
pub struct Bipartite {
    n_left: usize,
    n_right: usize,
    arcs: Vec<(NodeId, NodeId)>,
    probs: Vec<Option<f64>>,
    out: Vec<Vec<ArcId>>,
    into: Vec<Vec<ArcId>>,
    index: BTreeMap<(NodeId, NodeId), ArcId>,
}

pub type ArcId = usize;

impl Bipartite {
    pub fn new(n_left: usize, n_right: usize) -> Bipartite {
        Bipartite {
            n_left,
            n_right,
            arcs: Vec::new(),
            probs: Vec::new(),
            out: vec![Vec::new(); n_left],
            into: vec![Vec::new(); n_right],
            index: BTreeMap::new(),
        }
    }

    pub fn add_arc(&mut self, i: NodeId, j: NodeId, prob: Option<f64>) -> Result<ArcId> {
        if i >= self.n_left {
            return Err(Error::NodeOutOfRange(i));
        }
        if j >= self.n_right {
            return Err(Error::NodeOutOfRange(j));
        }
        if let Some(p) = prob {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidProbability { u: i, v: j, p });
            }
        }
        if self.index.contains_key(&(i, j)) {
            return Err(Error::ConflictingDuplicateEdge { u: i, v: j });
        }
        let id = self.arcs.len();
        self.arcs.push((i, j));
        self.probs.push(prob);
        self.out[i].push(id);
        self.into[j].push(id);
        self.index.insert((i, j), id);
        Ok(id)
    }

    pub fn n_left(&self) -> usize {
        self.n_left
    }

    pub fn n_right(&self) -> usize {
        self.n_right
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn arc(&self, a: ArcId) -> (NodeId, NodeId) {
        self.arcs[a]
    }

    pub fn prob(&self, a: ArcId) -> Option<f64> {
        self.probs[a]
    }

    pub fn arc_id(&self, i: NodeId, j: NodeId) -> Option<ArcId> {
        self.index.get(&(i, j)).copied()
    }

    pub fn arcs_out(&self, i: NodeId) -> &[ArcId] {
        &self.out[i]
    }

    pub fn arcs_into(&self, j: NodeId) -> &[ArcId] {
        &self.into[j]
    }

    pub fn arcs_iter(&self) -> impl Iterator<Item = (ArcId, NodeId, NodeId)> + '_ {
        self.arcs.iter().enumerate().map(|(a, &(i, j))| (a, i, j))
    }

    /// Combined id of a time-1 node.
    pub fn combined_right(&self, j: NodeId) -> NodeId {
        self.n_left + j
    }

    /// All combined ids of the time-1 part, ascending.
    pub fn combined_right_ids(&self) -> Vec<NodeId> {
        (0..self.n_right).map(|j| self.n_left + j).collect()
    }
}

/// Expands a contact network over one time step: every node gets a time-0 and
/// a time-1 copy, and each undirected edge becomes the two directed arcs
/// `(u_0, v_1)` and `(v_0, u_1)`, inheriting its transmission probability.
pub fn time_expand(g: &Graph) -> Bipartite {
    let n = g.node_count();
    let mut bip = Bipartite::new(n, n);
    for (e, u, v) in g.edges() {
        let p = g.prob(e);
        bip.add_arc(u, v, p).expect("expansion arcs are unique");
        bip.add_arc(v, u, p).expect("expansion arcs are unique");
    }
    bip
}

fn edge_prob(g: &Graph, e: EdgeId) -> Result<f64> {
    let (u, v) = g.endpoints(e);
    g.prob(e).ok_or(Error::ProbabilityUnset(u, v))
}

/// Breadth-synchronous independent-cascade simulation from a single root.
///
/// Newly infectious nodes each expose every still-susceptible neighbor once,
/// simultaneously; a node attacked successfully by several neighbors in the
/// same round picks its parent uniformly among them. Rounds proceed until no
/// new infection occurs. Exposure order is by ascending attacker id, then
/// adjacency order, so a fixed RNG stream reproduces the cascade.
pub fn simulate_single_seed<R: Rng>(g: &Graph, root: NodeId, rng: &mut R) -> Result<Cascade> {
    if root >= g.node_count() {
        return Err(Error::NodeOutOfRange(root));
    }
    let mut infected = vec![false; g.node_count()];
    infected[root] = true;
    let mut parent_edges: Vec<(NodeId, NodeId)> = Vec::new();
    let mut frontier = vec![root];
    while !frontier.is_empty() {
        // attackers per freshly-hit target, in deterministic order
        let mut hits: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for &u in &frontier {
            for &(v, e) in g.neighbors(u) {
                if infected[v] {
                    continue;
                }
                let p = edge_prob(g, e)?;
                if rng.gen::<f64>() < p {
                    hits.entry(v).or_default().push(u);
                }
            }
        }
        let mut next = Vec::with_capacity(hits.len());
        for (v, attackers) in hits {
            let p = if attackers.len() == 1 {
                attackers[0]
            } else {
                attackers[rng.gen_range(0..attackers.len())]
            };
            infected[v] = true;
            parent_edges.push((p, v));
            next.push(v);
        }
        frontier = next;
    }
    Ok(Cascade::SingleSeed(TreeCascade::from_edges(root, &parent_edges)?))
}

/// One-round simulation on a bipartite expansion: every time-0 node seeds
/// independently with probability `p0`, and each arc out of a seed fires
/// independently with its transmission probability.
pub fn simulate_one_hop<R: Rng>(bip: &Bipartite, p0: f64, rng: &mut R) -> Result<Cascade> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::InvalidParameter(format!(
            "seeding probability {p0} outside [0, 1]"
        )));
    }
    let mut seeds = BTreeSet::new();
    for i in 0..bip.n_left() {
        if rng.gen::<f64>() < p0 {
            seeds.insert(i);
        }
    }
    let mut live = BTreeSet::new();
    for &i in &seeds {
        for &a in bip.arcs_out(i) {
            let (_, j) = bip.arc(a);
            let p = bip.prob(a).ok_or(Error::ProbabilityUnset(i, j))?;
            if rng.gen::<f64>() < p {
                live.insert((i, j));
            }
        }
    }
    Ok(Cascade::OneHop(OneHopCascade::new(bip.n_left(), seeds, live)?))
}

/// One-round simulation on a plain contact network: every node may seed, and
/// each edge out of a seed toward a non-seed fires with its transmission
/// probability. Live edges are recorded as `(seed, non-seed)` pairs in the
/// graph's own id space (`n_left` equals the node count, so combined ids of
/// exposed targets are offset by `n`).
pub fn simulate_one_hop_graph<R: Rng>(g: &Graph, p0: f64, rng: &mut R) -> Result<Cascade> {
    simulate_one_hop(&time_expand(g), p0, rng)
}

/// Serializes a cascade as a short header line (`root <r>` or
/// `seeds <i...>`) followed by one `u v` line per edge.
pub fn write_cascade<W: Write>(c: &Cascade, mut w: W) -> Result<()> {
    match c {
        Cascade::SingleSeed(t) => {
            writeln!(w, "root {}", t.root())?;
            for (p, c) in t.edges() {
                writeln!(w, "{p} {c}")?;
            }
        }
        Cascade::OneHop(o) => {
            write!(w, "seeds")?;
            for s in o.seeds() {
                write!(w, " {s}")?;
            }
            writeln!(w)?;
            for &(i, j) in o.live_edges() {
                writeln!(w, "{i} {j}")?;
            }
        }
    }
    Ok(())
}

/// Parses the format written by [`write_cascade`]. `n_left` is required to
/// rebuild combined ids for one-round cascades; for a transmission tree it is
/// ignored.
pub fn read_cascade<R: BufRead>(reader: R, n_left: usize) -> Result<Cascade> {
    let mut lines = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let s = line.trim().to_owned();
        if !s.is_empty() && !s.starts_with('#') {
            lines.push(s);
        }
    }
    let header = lines.first().ok_or_else(|| Error::Parse {
        line: 1,
        msg: "empty cascade file".into(),
    })?;
    let mut toks = header.split_whitespace();
    let kind = toks.next().unwrap();
    let parse_pair = |s: &str, line: usize| -> Result<(usize, usize)> {
        let mut it = s.split_whitespace();
        let a = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse { line, msg: "expected `u v`".into() })?;
        let b = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse { line, msg: "expected `u v`".into() })?;
        if it.next().is_some() {
            return Err(Error::Parse { line, msg: "trailing tokens".into() });
        }
        Ok((a, b))
    };
    match kind {
        "root" => {
            let root: usize = toks
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Parse { line: 1, msg: "expected `root <r>`".into() })?;
            let mut edges = Vec::new();
            for (i, s) in lines.iter().enumerate().skip(1) {
                edges.push(parse_pair(s, i + 1)?);
            }
            Ok(Cascade::SingleSeed(TreeCascade::from_edges(root, &edges)?))
        }
        "seeds" => {
            let mut seeds = BTreeSet::new();
            for t in toks {
                seeds.insert(t.parse().map_err(|e| Error::Parse {
                    line: 1,
                    msg: format!("bad seed: {e}"),
                })?);
            }
            let mut live = BTreeSet::new();
            for (i, s) in lines.iter().enumerate().skip(1) {
                live.insert(parse_pair(s, i + 1)?);
            }
            Ok(Cascade::OneHop(OneHopCascade::new(n_left, seeds, live)?))
        }
        other => Err(Error::Parse {
            line: 1,
            msg: format!("unknown cascade header `{other}`"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_ba, Graph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path_graph(n: usize, p: f64) -> Graph {
        let mut g = Graph::new(n);
        for i in 0..n - 1 {
            g.add_edge(i, i + 1, Some(p)).unwrap();
        }
        g
    }

    #[test]
    fn tree_cascade_rejects_cycles_and_double_parents() {
        assert!(TreeCascade::from_edges(0, &[(0, 1), (1, 2), (2, 1)]).is_err());
        assert!(TreeCascade::from_edges(0, &[(1, 0)]).is_err());
        assert!(TreeCascade::from_edges(0, &[(5, 6)]).is_err()); // detached from root
    }

    #[test]
    fn depths_are_rounds() {
        let t = TreeCascade::from_edges(3, &[(3, 1), (1, 0), (3, 4)]).unwrap();
        assert_eq!(t.depth(3), Some(0));
        assert_eq!(t.depth(1), Some(1));
        assert_eq!(t.depth(0), Some(2));
        assert_eq!(t.depth(4), Some(1));
    }

    #[test]
    fn single_edge_transmission_frequency() {
        let g = path_graph(2, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mut hits = 0;
        for _ in 0..n {
            let c = simulate_single_seed(&g, 0, &mut rng).unwrap();
            if c.infected().contains(&1) {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        let sigma = (0.3 * 0.7 / n as f64).sqrt();
        assert!((freq - 0.3).abs() < 4.0 * sigma, "freq={freq}");
    }

    #[test]
    fn cascade_is_closed_and_rooted() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = generate_ba(200, 3, &mut rng).map(|mut g| {
            g.set_uniform_prob(0.15).unwrap();
            g
        })
        .unwrap();
        for trial in 0..50 {
            let root = trial % 200;
            let c = simulate_single_seed(&g, root, &mut rng).unwrap();
            let t = c.as_tree().unwrap();
            assert!(t.contains(root));
            assert_eq!(t.edge_count() + 1, t.len());
            for (p, ch) in t.edges() {
                assert!(g.has_edge(p, ch));
                assert_eq!(t.depth(ch).unwrap(), t.depth(p).unwrap() + 1);
            }
        }
    }

    #[test]
    fn zero_probability_of_spread_is_rejected_but_tiny_ok() {
        // p is constrained to (0,1) at the graph level; simulation trusts it.
        let g = path_graph(3, 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = simulate_single_seed(&g, 0, &mut rng).unwrap();
        assert_eq!(c.infected().len(), 1);
    }

    #[test]
    fn mean_cascade_size_grows_with_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut g = generate_ba(1000, 3, &mut rng).unwrap();
        let mut mean_at = |p: f64, rng: &mut ChaCha8Rng| {
            g.set_uniform_prob(p).unwrap();
            let mut total = 0usize;
            for s in 0..50 {
                let c = simulate_single_seed(&g, (s * 17) % 1000, rng).unwrap();
                total += c.infected().len();
            }
            total as f64 / 50.0
        };
        let low = mean_at(0.05, &mut rng);
        let high = mean_at(0.20, &mut rng);
        assert!(high > low, "high={high} low={low}");
    }

    #[test]
    fn time_expansion_shape() {
        let g = path_graph(3, 0.4);
        let bip = time_expand(&g);
        assert_eq!(bip.n_left(), 3);
        assert_eq!(bip.n_right(), 3);
        assert_eq!(bip.arc_count(), 4);
        assert!(bip.arc_id(0, 1).is_some());
        assert!(bip.arc_id(1, 0).is_some());
        assert_eq!(bip.prob(bip.arc_id(2, 1).unwrap()), Some(0.4));
        assert!(bip.arc_id(0, 2).is_none());
    }

    #[test]
    fn one_hop_seed_count_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut g = generate_ba(1000, 3, &mut rng).unwrap();
        g.set_uniform_prob(0.1).unwrap();
        let bip = time_expand(&g);
        let reps = 200;
        let mut total = 0usize;
        for _ in 0..reps {
            let c = simulate_one_hop(&bip, 0.05, &mut rng).unwrap();
            total += c.as_one_hop().unwrap().seeds().len();
        }
        let mean = total as f64 / reps as f64;
        let sd = (1000.0f64 * 0.05 * 0.95).sqrt();
        assert!((mean - 50.0).abs() < 3.0 * sd, "mean={mean}");
    }

    #[test]
    fn one_hop_extremes() {
        let g = path_graph(4, 0.3);
        let bip = time_expand(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let none = simulate_one_hop(&bip, 0.0, &mut rng).unwrap();
        assert!(none.infected().is_empty());
        let all = simulate_one_hop(&bip, 1.0, &mut rng).unwrap();
        assert_eq!(all.as_one_hop().unwrap().seeds().len(), 4);
    }

    #[test]
    fn live_edges_leave_seeds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut g = generate_ba(100, 2, &mut rng).unwrap();
        g.set_uniform_prob(0.4).unwrap();
        let bip = time_expand(&g);
        for _ in 0..20 {
            let c = simulate_one_hop(&bip, 0.1, &mut rng).unwrap();
            let o = c.as_one_hop().unwrap();
            for &(i, _) in o.live_edges() {
                assert!(o.seeds().contains(&i));
            }
        }
    }

    #[test]
    fn cascade_io_roundtrip() {
        let t = TreeCascade::from_edges(2, &[(2, 0), (0, 1), (2, 5)]).unwrap();
        let mut buf = Vec::new();
        write_cascade(&Cascade::SingleSeed(t.clone()), &mut buf).unwrap();
        let back = read_cascade(std::io::Cursor::new(buf), 0).unwrap();
        assert_eq!(back, Cascade::SingleSeed(t));

        let o = OneHopCascade::new(
            6,
            BTreeSet::from([1, 4]),
            BTreeSet::from([(1, 2), (4, 0)]),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_cascade(&Cascade::OneHop(o.clone()), &mut buf).unwrap();
        let back = read_cascade(std::io::Cursor::new(buf), 6).unwrap();
        assert_eq!(back, Cascade::OneHop(o));
    }

    #[test]
    fn combined_ids_offset_right_side() {
        let o = OneHopCascade::new(5, BTreeSet::from([2]), BTreeSet::from([(2, 3)])).unwrap();
        assert_eq!(o.infected_combined(), BTreeSet::from([2, 8]));
    }
}
