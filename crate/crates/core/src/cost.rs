//! Log-likelihood costs of cascades.
//!
//! For a transmission tree `T` grown from root `r` in a graph with
//! per-edge transmission costs `c_e` and failed-exposure costs `d_e`, the
//! negative log-likelihood decomposes as
//!
//! ```text
//! cost(T) =   sum c_e  over tree edges
//!           + sum d_e  over edges from T to certified-negative nodes
//!           + sum d_e  over edges from T to other untouched nodes
//!           + sum d_e  over non-tree edges inside T (chords)
//! ```
//!
//! This slightly overcounts the exact likelihood: a chord between two nodes
//! at equal depth joins two nodes infected in the same round, where neither
//! endpoint ever exposes the other, so its `d_e` does not belong in the
//! likelihood. [`cascade_log_probability`] adds those terms back.
//!
//! For a one-round cascade with seed set `A0` and fired edge set `A`,
//! the analogous decomposition charges `a_v` per seed, `b_v` per non-seed,
//! `c_e` per fired edge, and `d_e` per unfired edge leaving a seed.

use std::collections::BTreeSet;
use std::io::Write;

use crate::error::{Error, Result};
use crate::graph::{CostModel, EdgeId, Graph, NodeId};
use crate::sim::{Bipartite, OneHopCascade, TreeCascade};

/// Non-tree edges incident to a tree, split by where the far endpoint lies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySets {
    /// Edges from a tree node to a certified-negative node.
    pub to_negative: Vec<EdgeId>,
    /// Edges from a tree node to an untouched node outside the negative set.
    pub to_outside: Vec<EdgeId>,
    /// Non-tree edges with both endpoints in the tree.
    pub chords: Vec<EdgeId>,
}

/// Splits every non-tree edge incident to `t` into the three boundary
/// classes. The tree must avoid `negative` entirely.
pub fn boundary_sets(
    t: &TreeCascade,
    g: &Graph,
    negative: &BTreeSet<NodeId>,
) -> Result<BoundarySets> {
    if let Some(&v) = t.nodes().iter().find(|v| negative.contains(v)) {
        return Err(Error::CascadeTouchesNegativePool(v));
    }
    let mut sets = BoundarySets {
        to_negative: Vec::new(),
        to_outside: Vec::new(),
        chords: Vec::new(),
    };
    for (e, u, v) in g.edges() {
        let (u_in, v_in) = (t.contains(u), t.contains(v));
        match (u_in, v_in) {
            (true, true) => {
                if !t.has_tree_edge(u, v) {
                    sets.chords.push(e);
                }
            }
            (true, false) | (false, true) => {
                let far = if u_in { v } else { u };
                if negative.contains(&far) {
                    sets.to_negative.push(e);
                } else {
                    sets.to_outside.push(e);
                }
            }
            (false, false) => {}
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    /// Transmission costs of the tree edges.
    pub inclusion: f64,
    /// Failed exposures into certified-negative nodes.
    pub boundary_negative: f64,
    /// Failed exposures into untouched, uncertified nodes.
    pub boundary_outside: f64,
    /// Failed exposures along chords inside the tree.
    pub chord: f64,
    pub total: f64,
}

impl CostBreakdown {
    /// One CSV row: `inclusion,boundary_s0,boundary_out,chord,total`.
    pub const CSV_HEADER: &'static str = "inclusion,boundary_s0,boundary_out,chord,total";

    pub fn write_csv_row<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{},{},{},{},{}",
            self.inclusion, self.boundary_negative, self.boundary_outside, self.chord, self.total
        )?;
        Ok(())
    }
}

/// Sums addends in ascending order; with nonnegative terms this keeps the
/// floating-point error of repeated accumulation small and, more importantly,
/// makes the result independent of enumeration order.
pub fn sum_sorted(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("costs are never NaN"));
    // the empty sum is -0.0, which would print as "-0" in CSV output
    xs.iter().sum::<f64>() + 0.0
}

/// Negative log-likelihood decomposition of a transmission tree under the
/// observation whose certified-negative node set is `negative`.
pub fn cascade_cost(
    t: &TreeCascade,
    g: &Graph,
    cm: &CostModel,
    negative: &BTreeSet<NodeId>,
) -> Result<CostBreakdown> {
    let bounds = boundary_sets(t, g, negative)?;
    let inclusion = sum_sorted(
        t.edges()
            .map(|(u, v)| {
                let e = g
                    .edge_id(u, v)
                    .ok_or(Error::MalformedCascade {
                        root: t.root(),
                        msg: format!("tree edge ({u}, {v}) not in graph"),
                    })?;
                Ok(cm.c(e))
            })
            .collect::<Result<Vec<f64>>>()?,
    );
    let boundary_negative = sum_sorted(bounds.to_negative.iter().map(|&e| cm.d(e)).collect());
    let boundary_outside = sum_sorted(bounds.to_outside.iter().map(|&e| cm.d(e)).collect());
    let chord = sum_sorted(bounds.chords.iter().map(|&e| cm.d(e)).collect());
    Ok(CostBreakdown {
        inclusion,
        boundary_negative,
        boundary_outside,
        chord,
        total: inclusion + boundary_negative + boundary_outside + chord,
    })
}

/// Exact log-likelihood of the tree: the negated cost, with the
/// failed-exposure charge of every equal-depth chord added back (two nodes
/// infected in the same round never expose one another).
pub fn cascade_log_probability(
    t: &TreeCascade,
    g: &Graph,
    cm: &CostModel,
    negative: &BTreeSet<NodeId>,
) -> Result<f64> {
    let bounds = boundary_sets(t, g, negative)?;
    let cost = cascade_cost(t, g, cm, negative)?;
    let equidistant: Vec<f64> = bounds
        .chords
        .iter()
        .filter(|&&e| {
            let (u, v) = g.endpoints(e);
            t.depth(u) == t.depth(v)
        })
        .map(|&e| cm.d(e))
        .collect();
    Ok(-cost.total + sum_sorted(equidistant))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneHopCostBreakdown {
    /// Seeding costs `a_v` of the seed set (+inf if a forbidden node seeds).
    pub seed: f64,
    /// Non-seeding costs `b_v` of all other time-0 nodes.
    pub nonseed: f64,
    /// Transmission costs of the fired edges.
    pub live: f64,
    /// Failed-exposure costs of unfired edges leaving seeds.
    pub failed: f64,
    pub total: f64,
}

/// Negative log-likelihood of a one-round cascade on a bipartite expansion.
/// The cost model must carry seeding costs and be indexed by the expansion's
/// arcs.
pub fn one_hop_cost(
    c: &OneHopCascade,
    bip: &Bipartite,
    cm: &CostModel,
) -> Result<OneHopCostBreakdown> {
    if c.n_left() != bip.n_left() {
        return Err(Error::InvalidParameter(format!(
            "cascade over {} time-0 nodes, expansion has {}",
            c.n_left(),
            bip.n_left()
        )));
    }
    let mut live_arcs = BTreeSet::new();
    for &(i, j) in c.live_edges() {
        let a = bip.arc_id(i, j).ok_or(Error::UnknownLiveEdge(i, j))?;
        live_arcs.insert(a);
    }
    let seed = sum_sorted(c.seeds().iter().map(|&v| cm.a(v)).collect());
    let nonseed = sum_sorted(
        (0..bip.n_left())
            .filter(|v| !c.seeds().contains(v))
            .map(|v| cm.b(v))
            .collect(),
    );
    let live = sum_sorted(live_arcs.iter().map(|&a| cm.c(a)).collect());
    let failed = sum_sorted(
        c.seeds()
            .iter()
            .flat_map(|&i| bip.arcs_out(i))
            .filter(|a| !live_arcs.contains(a))
            .map(|&a| cm.d(a))
            .collect(),
    );
    Ok(OneHopCostBreakdown { seed, nonseed, live, failed, total: seed + nonseed + live + failed })
}

/// Cost model for a bipartite expansion: `c`/`d` per arc from the arc
/// probabilities, seeding costs per time-0 node.
pub fn compute_costs_bipartite(bip: &Bipartite, p0: &[f64]) -> Result<CostModel> {
    if p0.len() != bip.n_left() {
        return Err(Error::InvalidParameter(format!(
            "{} seeding probabilities for {} time-0 nodes",
            p0.len(),
            bip.n_left()
        )));
    }
    let mut c = Vec::with_capacity(bip.arc_count());
    let mut d = Vec::with_capacity(bip.arc_count());
    for (a, i, j) in bip.arcs_iter() {
        let p = bip.prob(a).ok_or(Error::ProbabilityUnset(i, j))?;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidProbability { u: i, v: j, p });
        }
        c.push(-p.ln());
        d.push(-(-p).ln_1p());
    }
    Ok(CostModel::from_parts(c, d, Some(crate::graph::seeding_costs(p0)?)))
}

/// The worked transmission-tree example used across the test suite: ten
/// nodes, a six-edge tree below root 0, one chord between equal-depth nodes,
/// and two exposures into untouched nodes.
///
/// Nodes: root = 0, others 1..=9. Tree edges: (0,1), (1,5), (1,2), (2,3),
/// (0,4), (4,9). Chord: (2,5). Outside edges: (3,7), (3,8). Node 6 is
/// isolated. Pools: {5,6,7} and {3,8,9}, both positive.
pub mod fixture {
    use super::*;
    use crate::pools::{Observation, PoolSet};

    pub struct WorkedExample {
        pub graph: Graph,
        pub tree: TreeCascade,
        pub pools: PoolSet,
        pub obs: Observation,
    }

    pub fn worked_example(p: f64) -> WorkedExample {
        let mut g = Graph::new(10);
        for (u, v) in [(0, 1), (1, 5), (1, 2), (2, 3), (0, 4), (4, 9), (2, 5), (3, 7), (3, 8)] {
            g.add_edge(u, v, Some(p)).unwrap();
        }
        let tree =
            TreeCascade::from_edges(0, &[(0, 1), (1, 5), (1, 2), (2, 3), (0, 4), (4, 9)]).unwrap();
        let pools = PoolSet::new(vec![vec![5, 6, 7], vec![3, 8, 9]]).unwrap();
        let obs = Observation::new(2, BTreeSet::from([0, 1])).unwrap();
        WorkedExample { graph: g, tree, pools, obs }
    }
}
