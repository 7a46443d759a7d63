//! Undirected contact networks with per-edge transmission probabilities.
//!
//! Nodes are dense indices `0..n`. Every edge may carry a transmission
//! probability `p` in (0, 1) and optionally a contact duration; generators
//! produce bare topology and probabilities are assigned afterwards, either
//! homogeneously or derived from durations.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    /// Canonical endpoints, `u < v`.
    edges: Vec<(NodeId, NodeId)>,
    probs: Vec<Option<f64>>,
    durations: Vec<Option<f64>>,
    adj: Vec<Vec<(NodeId, EdgeId)>>,
    index: HashMap<(NodeId, NodeId), EdgeId>,
}

impl Graph {
    pub fn new(n: usize) -> Graph {
        Graph {
            n,
            edges: Vec::new(),
            probs: Vec::new(),
            durations: Vec::new(),
            adj: vec![Vec::new(); n],
            index: HashMap::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn add_edge(&mut self, u: NodeId, v: NodeId, prob: Option<f64>) -> Result<EdgeId> {
        self.add_edge_full(u, v, prob, None)
    }

    pub fn add_edge_full(
        &mut self,
        u: NodeId,
        v: NodeId,
        prob: Option<f64>,
        duration: Option<f64>,
    ) -> Result<EdgeId> {
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        if u >= self.n {
            return Err(Error::NodeOutOfRange(u));
        }
        if v >= self.n {
            return Err(Error::NodeOutOfRange(v));
        }
        if let Some(p) = prob {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidProbability { u, v, p });
            }
        }
        let key = (u.min(v), u.max(v));
        if self.index.contains_key(&key) {
            return Err(Error::ConflictingDuplicateEdge { u, v });
        }
        let id = self.edges.len();
        self.edges.push(key);
        self.probs.push(prob);
        self.durations.push(duration);
        self.adj[u].push((v, id));
        self.adj[v].push((u, id));
        self.index.insert(key, id);
        Ok(id)
    }

    pub fn endpoints(&self, e: EdgeId) -> (NodeId, NodeId) {
        self.edges[e]
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, NodeId, NodeId)> + '_ {
        self.edges.iter().enumerate().map(|(e, &(u, v))| (e, u, v))
    }

    pub fn edge_id(&self, u: NodeId, v: NodeId) -> Option<EdgeId> {
        self.index.get(&(u.min(v), u.max(v))).copied()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.edge_id(u, v).is_some()
    }

    pub fn prob(&self, e: EdgeId) -> Option<f64> {
        self.probs[e]
    }

    pub fn duration(&self, e: EdgeId) -> Option<f64> {
        self.durations[e]
    }

    /// Neighbors of `u` as `(neighbor, edge id)`, in insertion order.
    pub fn neighbors(&self, u: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adj[u]
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.adj[u].len()
    }

    /// Assigns the same transmission probability to every edge, replacing any
    /// previous assignment.
    pub fn set_uniform_prob(&mut self, p: f64) -> Result<()> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "uniform probability {p} outside (0, 1)"
            )));
        }
        for slot in &mut self.probs {
            *slot = Some(p);
        }
        Ok(())
    }

    /// Derives `p_e = 1 - exp(-beta * duration_e)` for every edge. Requires a
    /// duration on every edge and a result strictly inside (0, 1).
    pub fn set_probs_from_durations(&mut self, beta: f64) -> Result<()> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta {beta} must be positive")));
        }
        for e in 0..self.edges.len() {
            let (u, v) = self.edges[e];
            let d = self.durations[e].ok_or(Error::DurationUnset(u, v))?;
            let p = -(-beta * d).exp_m1();
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidProbability { u, v, p });
            }
            self.probs[e] = Some(p);
        }
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    /// Induced subgraph on the nodes where `keep` is true. Returns the
    /// subgraph and the original id of each surviving node.
    pub fn induced_subgraph(&self, keep: &[bool]) -> (Graph, Vec<NodeId>) {
        assert_eq!(keep.len(), self.n);
        let old_ids: Vec<NodeId> = (0..self.n).filter(|&u| keep[u]).collect();
        let mut new_of_old = vec![usize::MAX; self.n];
        for (new, &old) in old_ids.iter().enumerate() {
            new_of_old[old] = new;
        }
        let mut g = Graph::new(old_ids.len());
        for (e, u, v) in self.edges() {
            if keep[u] && keep[v] {
                g.add_edge_full(new_of_old[u], new_of_old[v], self.probs[e], self.durations[e])
                    .expect("induced edge is valid in the parent graph");
            }
        }
        (g, old_ids)
    }

    /// Writes the graph as whitespace-separated `u v x` lines, where `x` is
    /// the probability (or duration when no probability is assigned).
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        for (e, u, v) in self.edges() {
            let x = match (self.probs[e], self.durations[e]) {
                (Some(p), _) => p,
                (None, Some(d)) => d,
                (None, None) => return Err(Error::ProbabilityUnset(u, v)),
            };
            writeln!(w, "{u} {v} {x}")?;
        }
        Ok(())
    }
}

/// How to interpret the third column of an edge-list file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeValueMode {
    /// `x` is the transmission probability, required in (0, 1).
    Probability,
    /// `x` is a nonnegative contact duration; probabilities are derived
    /// later via `set_probs_from_durations`.
    Duration,
}

#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    /// Original label of each compacted node id, ascending.
    pub node_labels: Vec<u64>,
}

/// Parses a whitespace-separated `u v x` edge list. Lines starting with `#`
/// and blank lines are skipped. Node labels are arbitrary nonnegative
/// integers and are compacted to `0..n` in ascending label order; the label
/// of each compacted id is returned alongside the graph. Symmetric or
/// repeated duplicates of an edge are accepted if they carry the same value.
pub fn load_edge_list<R: BufRead>(reader: R, mode: EdgeValueMode) -> Result<LoadedGraph> {
    let mut raw: Vec<(u64, u64, f64)> = Vec::new();
    let mut labels: Vec<u64> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let mut it = s.split_whitespace();
        let parse = |tok: Option<&str>, what: &str| -> Result<String> {
            tok.map(str::to_owned).ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("missing {what}"),
            })
        };
        let u: u64 = parse(it.next(), "source node")?.parse().map_err(|e| Error::Parse {
            line: lineno,
            msg: format!("bad source node: {e}"),
        })?;
        let v: u64 = parse(it.next(), "target node")?.parse().map_err(|e| Error::Parse {
            line: lineno,
            msg: format!("bad target node: {e}"),
        })?;
        let x: f64 = parse(it.next(), "edge value")?.parse().map_err(|e| Error::Parse {
            line: lineno,
            msg: format!("bad edge value: {e}"),
        })?;
        if it.next().is_some() {
            return Err(Error::Parse {
                line: lineno,
                msg: "trailing tokens after `u v x`".into(),
            });
        }
        if u == v {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("self loop at node {u}"),
            });
        }
        raw.push((u, v, x));
        labels.push(u);
        labels.push(v);
    }
    labels.sort_unstable();
    labels.dedup();
    let idx_of = |l: u64| labels.binary_search(&l).expect("label collected above");

    let mut g = Graph::new(labels.len());
    let mut seen: HashMap<(usize, usize), f64> = HashMap::new();
    for &(lu, lv, x) in &raw {
        let (u, v) = (idx_of(lu), idx_of(lv));
        let key = (u.min(v), u.max(v));
        if let Some(&prev) = seen.get(&key) {
            if prev != x {
                return Err(Error::ConflictingDuplicateEdge { u, v });
            }
            continue;
        }
        seen.insert(key, x);
        match mode {
            EdgeValueMode::Probability => {
                if !(x > 0.0 && x < 1.0) {
                    return Err(Error::InvalidProbability { u, v, p: x });
                }
                g.add_edge(u, v, Some(x))?;
            }
            EdgeValueMode::Duration => {
                if !(x >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "negative duration {x} on edge ({u}, {v})"
                    )));
                }
                g.add_edge_full(u, v, None, Some(x))?;
            }
        }
    }
    Ok(LoadedGraph { graph: g, node_labels: labels })
}

/// Preferential-attachment network: an `m`-node star seed, then each new node
/// attaches to `m` distinct existing nodes chosen proportionally to degree.
/// Connected by construction, with `(n - m) * m + (m - 1)` edges. Transmission
/// probabilities are left unassigned.
pub fn generate_ba<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<Graph> {
    if m == 0 || m >= n {
        return Err(Error::InvalidParameter(format!(
            "preferential attachment requires 0 < m < n, got m={m}, n={n}"
        )));
    }
    let mut g = Graph::new(n);
    // One slot per unit of degree; uniform draws from this implement
    // degree-proportional selection.
    let mut slots: Vec<NodeId> = Vec::with_capacity(2 * n * m);
    for leaf in 1..m {
        g.add_edge(0, leaf, None)?;
        slots.push(0);
        slots.push(leaf);
    }
    for new in m..n {
        let mut targets = std::collections::BTreeSet::new();
        while targets.len() < m {
            if slots.is_empty() {
                // Only with m = 1 before any edge exists.
                targets.insert(rng.gen_range(0..new));
            } else {
                targets.insert(slots[rng.gen_range(0..slots.len())]);
            }
        }
        for &t in &targets {
            g.add_edge(new, t, None)?;
            slots.push(new);
            slots.push(t);
        }
    }
    Ok(g)
}

/// Erdős–Rényi network: each unordered pair is an edge independently with
/// probability `q`. Transmission probabilities are left unassigned.
pub fn generate_gnq<R: Rng>(n: usize, q: f64, rng: &mut R) -> Result<Graph> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("edge probability {q} outside [0, 1]")));
    }
    let mut g = Graph::new(n);
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen::<f64>() < q {
                g.add_edge(u, v, None)?;
            }
        }
    }
    Ok(g)
}

/// Log-domain costs for cascade likelihoods.
///
/// Per edge, `c_e = -ln p_e` is the cost of a transmission and
/// `d_e = -ln(1 - p_e)` the cost of a failed exposure, so
/// `exp(-c_e) + exp(-d_e) = 1`. When node seeding probabilities are given,
/// `a_v = -ln p0_v` (infinite for forbidden seeds) and `b_v = -ln(1 - p0_v)`.
#[derive(Debug, Clone)]
pub struct CostModel {
    c: Vec<f64>,
    d: Vec<f64>,
    seeding: Option<SeedingCosts>,
}

#[derive(Debug, Clone)]
pub struct SeedingCosts {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl CostModel {
    /// Transmission cost of edge `e`.
    pub fn c(&self, e: EdgeId) -> f64 {
        self.c[e]
    }

    /// Failed-exposure cost of edge `e`.
    pub fn d(&self, e: EdgeId) -> f64 {
        self.d[e]
    }

    pub fn edge_count(&self) -> usize {
        self.c.len()
    }

    pub fn seeding(&self) -> Option<&SeedingCosts> {
        self.seeding.as_ref()
    }

    /// Seeding cost of node `v`; +inf when seeding is impossible.
    pub fn a(&self, v: NodeId) -> f64 {
        self.seeding.as_ref().expect("seeding costs present").a[v]
    }

    /// Non-seeding cost of node `v`.
    pub fn b(&self, v: NodeId) -> f64 {
        self.seeding.as_ref().expect("seeding costs present").b[v]
    }

    pub fn from_parts(c: Vec<f64>, d: Vec<f64>, seeding: Option<SeedingCosts>) -> CostModel {
        assert_eq!(c.len(), d.len());
        CostModel { c, d, seeding }
    }
}

/// Derives log-domain costs from the graph's edge probabilities, and from
/// per-node seeding probabilities when given. Seeding probabilities must lie
/// in [0, 1); zero marks a node that can never seed (`a_v = +inf`, `b_v = 0`).
pub fn compute_costs(g: &Graph, p0: Option<&[f64]>) -> Result<CostModel> {
    let mut c = Vec::with_capacity(g.edge_count());
    let mut d = Vec::with_capacity(g.edge_count());
    for (e, u, v) in g.edges() {
        let p = g.prob(e).ok_or(Error::ProbabilityUnset(u, v))?;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidProbability { u, v, p });
        }
        c.push(-p.ln());
        d.push(-(-p).ln_1p());
    }
    let seeding = match p0 {
        None => None,
        Some(ps) => {
            if ps.len() != g.node_count() {
                return Err(Error::InvalidParameter(format!(
                    "{} seeding probabilities for {} nodes",
                    ps.len(),
                    g.node_count()
                )));
            }
            Some(seeding_costs(ps)?)
        }
    };
    Ok(CostModel { c, d, seeding })
}

pub fn seeding_costs(p0: &[f64]) -> Result<SeedingCosts> {
    let mut a = Vec::with_capacity(p0.len());
    let mut b = Vec::with_capacity(p0.len());
    for (v, &p) in p0.iter().enumerate() {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidSeedingProbability { v, p });
        }
        a.push(if p == 0.0 { f64::INFINITY } else { -p.ln() });
        b.push(-(-p).ln_1p());
    }
    Ok(SeedingCosts { a, b })
}

/// True iff `c_e >= d_e` on every edge, equivalently every transmission
/// probability is at most 1/2 (boundary included). Reconstruction weights
/// `c_e - d_e` are nonnegative exactly in this regime.
pub fn check_assumption(cm: &CostModel) -> bool {
    cm.c.iter().zip(&cm.d).all(|(&c, &d)| c >= d)
}
