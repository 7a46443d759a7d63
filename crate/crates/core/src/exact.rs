//! Exact brute-force solvers for tiny instances, plus the hand-crafted
//! adversarial instances used to measure where maximum-likelihood
//! reconstruction diverges from the ground truth.
//!
//! The single-seed oracle enumerates every connected root-containing node
//! subset avoiding the certified negatives, and every spanning tree of each
//! subset (boundary terms depend only on the node set, but the inclusion
//! term varies per tree). The one-hop oracle enumerates seed sets crossed
//! with live-arc choices, pruning arcs whose state is forced.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::cost::{cascade_cost, one_hop_cost};
use crate::error::{Error, Result};
use crate::graph::{CostModel, Graph, NodeId};
use crate::pools::{Observation, PoolSet};
use crate::sim::{Bipartite, Cascade, OneHopCascade, TreeCascade};

/// Node ceiling for the single-seed oracle; keeps worst cases around a
/// minute.
pub const ORACLE_NODE_CAP: usize = 12;
/// log2 ceiling on the one-hop oracle's seed-set times live-arc enumeration.
const ONE_HOP_ENUM_BITS: usize = 20;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub optimal_cascade: Cascade,
    pub optimal_cost: f64,
    /// Candidate cascades whose cost was evaluated.
    pub instances_enumerated: usize,
}

/// Number of spanning trees of `g`, by the Laplacian minor determinant.
/// Exact for counts small enough to fit an f64 mantissa.
pub fn count_spanning_trees(g: &Graph) -> f64 {
    let n = g.node_count();
    if n <= 1 {
        return 1.0;
    }
    let m = n - 1;
    let mut lap = vec![vec![0.0f64; m]; m];
    for (_, u, v) in g.edges() {
        if u < m {
            lap[u][u] += 1.0;
        }
        if v < m {
            lap[v][v] += 1.0;
        }
        if u < m && v < m {
            lap[u][v] -= 1.0;
            lap[v][u] -= 1.0;
        }
    }
    let mut det = 1.0;
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&a, &b| lap[a][col].abs().partial_cmp(&lap[b][col].abs()).unwrap())
            .unwrap();
        if lap[pivot][col].abs() < 1e-12 {
            return 0.0;
        }
        if pivot != col {
            lap.swap(pivot, col);
            det = -det;
        }
        det *= lap[col][col];
        for row in col + 1..m {
            let factor = lap[row][col] / lap[col][col];
            for k in col..m {
                lap[row][k] -= factor * lap[col][k];
            }
        }
    }
    det.round()
}

/// Calls `f` with every spanning tree of the graph on `0..n` described by
/// `edges`, given as a set of edge-list indices. Trees are produced in
/// lexicographic index order.
fn for_each_spanning_tree(
    n: usize,
    edges: &[(usize, usize)],
    f: &mut impl FnMut(&[usize]),
) {
    if n == 0 {
        return;
    }
    if n == 1 {
        f(&[]);
        return;
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(n - 1);
    // union-find snapshots are tiny at oracle scale, so cloning per branch
    // beats rollback bookkeeping
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    fn rec(
        idx: usize,
        n: usize,
        edges: &[(usize, usize)],
        parent: &[usize],
        chosen: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]),
    ) {
        if chosen.len() == n - 1 {
            f(chosen);
            return;
        }
        if idx == edges.len() || chosen.len() + (edges.len() - idx) < n - 1 {
            return;
        }
        let (u, v) = edges[idx];
        let mut with = parent.to_vec();
        let ru = root(&mut with, u);
        let rv = root(&mut with, v);
        if ru != rv {
            with[ru] = rv;
            chosen.push(idx);
            rec(idx + 1, n, edges, &with, chosen, f);
            chosen.pop();
        }
        rec(idx + 1, n, edges, parent, chosen, f);
    }
    let parent: Vec<usize> = (0..n).collect();
    rec(0, n, edges, &parent, &mut chosen, f);
}

/// Exact single-seed reconstruction by exhaustive enumeration.
pub fn brute_force_pool_mle(
    g: &Graph,
    cm: &CostModel,
    root: NodeId,
    ps: &PoolSet,
    obs: &Observation,
    n_cap: usize,
) -> Result<OracleResult> {
    let n = g.node_count();
    if n > n_cap {
        return Err(Error::ExhaustiveSearchTooLarge(format!(
            "{n} nodes exceed the exhaustive cap of {n_cap}"
        )));
    }
    if root >= n {
        return Err(Error::NodeOutOfRange(root));
    }
    if obs.num_pools() != ps.len() {
        return Err(Error::ObservationMismatch { got: obs.num_pools(), want: ps.len() });
    }
    let s0 = obs.negative_nodes(ps);
    if s0.contains(&root) {
        return Err(Error::RootInNegativePool(root));
    }
    let s0_mask: u32 = s0.iter().fold(0, |m, &v| m | (1 << v));
    let pool_masks: Vec<u32> = (0..ps.len())
        .filter(|&p| obs.is_positive(p))
        .map(|p| ps.pool(p).iter().fold(0, |m, &v| m | (1 << v)))
        .collect();

    let per_subset: Vec<Option<(f64, Vec<(NodeId, NodeId)>, usize)>> = (0u32..(1 << n))
        .into_par_iter()
        .map(|mask| {
            if mask & (1 << root) == 0 || mask & s0_mask != 0 {
                return None;
            }
            if pool_masks.iter().any(|&pm| mask & pm == 0) {
                return None;
            }
            if !mask_connected(g, mask, root) {
                return None;
            }
            let members: Vec<NodeId> = (0..n).filter(|&v| mask & (1 << v) != 0).collect();
            let local: Vec<usize> = {
                let mut map = vec![usize::MAX; n];
                for (i, &v) in members.iter().enumerate() {
                    map[v] = i;
                }
                map
            };
            let sub_edges: Vec<(usize, usize)> = g
                .edges()
                .filter(|&(_, u, v)| mask & (1 << u) != 0 && mask & (1 << v) != 0)
                .map(|(_, u, v)| (local[u], local[v]))
                .collect();
            let mut best: Option<(f64, Vec<(NodeId, NodeId)>)> = None;
            let mut count = 0usize;
            for_each_spanning_tree(members.len(), &sub_edges, &mut |tree| {
                let picked: Vec<(NodeId, NodeId)> = tree
                    .iter()
                    .map(|&ei| {
                        let (u, v) = sub_edges[ei];
                        (members[u], members[v])
                    })
                    .collect();
                let oriented = orient_from(root, &picked);
                let tc = TreeCascade::from_edges(root, &oriented)
                    .expect("spanning trees orient into valid cascades");
                let cost = cascade_cost(&tc, g, cm, &s0)
                    .expect("enumerated trees avoid the negative set")
                    .total;
                count += 1;
                if best.as_ref().map_or(true, |(bc, _)| cost < *bc) {
                    best = Some((cost, oriented));
                }
            });
            best.map(|(c, t)| (c, t, count))
        })
        .collect();

    let mut best: Option<(f64, Vec<(NodeId, NodeId)>)> = None;
    let mut enumerated = 0usize;
    for entry in per_subset.into_iter().flatten() {
        enumerated += entry.2;
        if best.as_ref().map_or(true, |(bc, _)| entry.0 < *bc) {
            best = Some((entry.0, entry.1));
        }
    }
    let (cost, edges) = best.ok_or(Error::NoConsistentCascade)?;
    let tc = TreeCascade::from_edges(root, &edges)?;
    Ok(OracleResult {
        optimal_cascade: Cascade::SingleSeed(tc),
        optimal_cost: cost,
        instances_enumerated: enumerated,
    })
}

fn mask_connected(g: &Graph, mask: u32, root: NodeId) -> bool {
    let mut seen = 1u32 << root;
    let mut stack = vec![root];
    while let Some(u) = stack.pop() {
        for &(v, _) in g.neighbors(u) {
            let bit = 1u32 << v;
            if mask & bit != 0 && seen & bit == 0 {
                seen |= bit;
                stack.push(v);
            }
        }
    }
    seen == mask
}

/// Orients undirected tree edges away from the root.
fn orient_from(root: NodeId, edges: &[(NodeId, NodeId)]) -> Vec<(NodeId, NodeId)> {
    let mut adj: std::collections::BTreeMap<NodeId, Vec<NodeId>> = Default::default();
    for &(u, v) in edges {
        adj.entry(u).or_default().push(v);
        adj.entry(v).or_default().push(u);
    }
    let mut out = Vec::with_capacity(edges.len());
    let mut seen = BTreeSet::from([root]);
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        if let Some(vs) = adj.get(&u) {
            for &v in vs {
                if seen.insert(v) {
                    out.push((u, v));
                    queue.push_back(v);
                }
            }
        }
    }
    out
}

/// Exact one-round reconstruction minimizing the true likelihood cost:
/// seeding charges, transmission cost per live arc, failure cost per dead
/// arc out of a seed.
pub fn brute_force_one_hop_mle(
    bip: &Bipartite,
    cm: &CostModel,
    ps: &PoolSet,
    obs: &Observation,
    n_cap: usize,
) -> Result<OracleResult> {
    one_hop_search(bip, cm, ps, obs, n_cap, false)
}

/// Integral optimum of the covering program that charges every arc out of a
/// seed its failure cost even when it fires. Sits between the true optimum
/// and twice the true optimum.
pub fn brute_force_one_hop_ilp(
    bip: &Bipartite,
    cm: &CostModel,
    ps: &PoolSet,
    obs: &Observation,
    n_cap: usize,
) -> Result<OracleResult> {
    one_hop_search(bip, cm, ps, obs, n_cap, true)
}

fn one_hop_search(
    bip: &Bipartite,
    cm: &CostModel,
    ps: &PoolSet,
    obs: &Observation,
    n_cap: usize,
    double_charge: bool,
) -> Result<OracleResult> {
    let n = bip.n_left();
    let sc = cm
        .seeding()
        .ok_or_else(|| Error::InvalidParameter("cost model lacks seeding costs".into()))?;
    if sc.a.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{} seeding costs for {} time-0 nodes",
            sc.a.len(),
            n
        )));
    }
    if obs.num_pools() != ps.len() {
        return Err(Error::ObservationMismatch { got: obs.num_pools(), want: ps.len() });
    }
    for (pid, pool) in ps.iter().enumerate() {
        for &m in pool {
            if m < n || m >= n + bip.n_right() {
                return Err(Error::InvalidParameter(format!(
                    "pool {pid} member {m} is not a time-1 node"
                )));
            }
        }
    }
    let s0 = obs.negative_nodes(ps);
    let positive: Vec<usize> = obs.positive_pools().iter().copied().collect();
    if positive.len() > 63 {
        return Err(Error::ExhaustiveSearchTooLarge(format!(
            "{} positive pools exceed the coverage-mask width",
            positive.len()
        )));
    }
    let full_cover: u64 = if positive.is_empty() { 0 } else { (1u64 << positive.len()) - 1 };
    // coverage contribution of firing into each right-side node
    let mut target_cover = vec![0u64; bip.n_right()];
    for (pi, &pid) in positive.iter().enumerate() {
        for &m in ps.pool(pid) {
            target_cover[m - n] |= 1 << pi;
        }
    }

    let eligible: Vec<usize> = (0..n).filter(|&i| sc.a[i].is_finite()).collect();
    if eligible.len() > n_cap {
        return Err(Error::ExhaustiveSearchTooLarge(format!(
            "{} eligible seeds exceed the cap of {n_cap}",
            eligible.len()
        )));
    }
    // arcs whose firing state is an actual decision: out of an eligible
    // seed, into a surviving member of a positive pool
    let sigma: Vec<usize> = bip
        .arcs_iter()
        .filter(|&(_, i, j)| {
            sc.a[i].is_finite()
                && target_cover[j] != 0
                && !s0.contains(&bip.combined_right(j))
        })
        .map(|(a, _, _)| a)
        .collect();
    if eligible.len() + sigma.len() > ONE_HOP_ENUM_BITS {
        return Err(Error::ExhaustiveSearchTooLarge(format!(
            "2^{} seed sets by 2^{} live-arc choices exceeds 2^{ONE_HOP_ENUM_BITS}",
            eligible.len(),
            sigma.len()
        )));
    }

    let per_seed_set: Vec<(Option<(f64, u32, u64)>, usize)> = (0u32..(1 << eligible.len()))
        .into_par_iter()
        .map(|smask| {
            let seeded = |i: usize| -> bool {
                eligible.iter().position(|&e| e == i).is_some_and(|p| smask & (1 << p) != 0)
            };
            let mut base = 0.0;
            for i in 0..n {
                base += if seeded(i) { sc.a[i] } else { sc.b[i] };
            }
            // decidable arcs from this seed set, in arc-id order
            let mut decide: Vec<usize> = Vec::new();
            for (a, i, j) in bip.arcs_iter() {
                if !seeded(i) {
                    continue;
                }
                let t = bip.combined_right(j);
                if s0.contains(&t) {
                    base += cm.d(a);
                } else if target_cover[j] != 0 {
                    base += cm.d(a);
                    decide.push(a);
                } else if double_charge {
                    base += cm.d(a);
                } else {
                    base += cm.c(a).min(cm.d(a));
                }
            }
            let mut best: Option<(f64, u64)> = None;
            let mut count = 0usize;
            for fmask in 0u64..(1 << decide.len()) {
                let mut cover = 0u64;
                let mut cost = base;
                for (bi, &a) in decide.iter().enumerate() {
                    if fmask & (1 << bi) != 0 {
                        let (_, j) = bip.arc(a);
                        cover |= target_cover[j];
                        cost += if double_charge { cm.c(a) } else { cm.c(a) - cm.d(a) };
                    }
                }
                count += 1;
                if cover == full_cover && best.as_ref().map_or(true, |(bc, _)| cost < *bc) {
                    best = Some((cost, fmask));
                }
            }
            (best.map(|(c, f)| (c, smask, f)), count)
        })
        .collect();

    let mut best: Option<(f64, u32, u64)> = None;
    let mut enumerated = 0usize;
    for (cand, count) in per_seed_set {
        enumerated += count;
        if let Some(c) = cand {
            if best.as_ref().map_or(true, |(bc, _, _)| c.0 < *bc) {
                best = Some(c);
            }
        }
    }
    let (cost, smask, fmask) = best.ok_or(Error::NoConsistentCascade)?;

    let seeds: BTreeSet<NodeId> = eligible
        .iter()
        .enumerate()
        .filter(|&(p, _)| smask & (1 << p) != 0)
        .map(|(_, &i)| i)
        .collect();
    let mut decide: Vec<usize> = Vec::new();
    for (a, i, j) in bip.arcs_iter() {
        if seeds.contains(&i) && target_cover[j] != 0 && !s0.contains(&bip.combined_right(j)) {
            decide.push(a);
        }
    }
    let mut live: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    for (bi, &a) in decide.iter().enumerate() {
        if fmask & (1 << bi) != 0 {
            let (i, j) = bip.arc(a);
            live.insert((i, j));
        }
    }
    if !double_charge {
        // sweep in the forced always-fire arcs the base cost assumed
        for (a, i, j) in bip.arcs_iter() {
            if seeds.contains(&i)
                && target_cover[j] == 0
                && !s0.contains(&bip.combined_right(j))
                && cm.c(a) < cm.d(a)
            {
                live.insert((i, j));
            }
        }
    }
    let cascade = OneHopCascade::new(n, seeds, live)?;
    if !double_charge {
        debug_assert!({
            let check = one_hop_cost(&cascade, bip, cm).expect("winner is well-formed").total;
            !cost.is_finite() || (check - cost).abs() < 1e-9
        });
    }
    Ok(OracleResult {
        optimal_cascade: Cascade::OneHop(cascade),
        optimal_cost: cost,
        instances_enumerated: enumerated,
    })
}

/// Families of instances where likelihood and ground truth part ways.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitationKind {
    /// A pooled clutch of far leaves loses to a short decoy path.
    PooledLeaves,
    /// A spider whose pooled path collapses onto hub detours once a middle
    /// pool reads negative.
    NoisySpider,
}

/// Builds the instance family with its ground-truth cascade. Edges carry a
/// homogeneous transmission probability of 0.3.
pub fn make_limitation_instance(
    kind: LimitationKind,
    k: usize,
) -> Result<(Graph, CostModel, PoolSet, Cascade)> {
    const P: f64 = 0.3;
    match kind {
        LimitationKind::PooledLeaves => {
            if k < 2 {
                return Err(Error::InvalidParameter(
                    "pooled-leaves instances need at least 2 leaves".into(),
                ));
            }
            // 0 is the root; 1..=k a spine; k+1..=2k leaves off the spine
            // end; 2k+1 and 2k+2 a short decoy branch whose tip shares the
            // leaves' pool
            let mut g = Graph::new(2 * k + 3);
            let mut truth_edges: Vec<(NodeId, NodeId)> = Vec::new();
            g.add_edge(0, 1, Some(P))?;
            truth_edges.push((0, 1));
            for i in 1..k {
                g.add_edge(i, i + 1, Some(P))?;
                truth_edges.push((i, i + 1));
            }
            for i in 1..=k {
                g.add_edge(k, k + i, Some(P))?;
                truth_edges.push((k, k + i));
            }
            g.add_edge(0, 2 * k + 1, Some(P))?;
            g.add_edge(2 * k + 1, 2 * k + 2, Some(P))?;
            let cm = crate::graph::compute_costs(&g, None)?;
            let mut pool: Vec<NodeId> = (k + 1..=2 * k).collect();
            pool.push(2 * k + 2);
            let ps = PoolSet::new(vec![pool])?;
            let truth = TreeCascade::from_edges(0, &truth_edges)?;
            Ok((g, cm, ps, Cascade::SingleSeed(truth)))
        }
        LimitationKind::NoisySpider => {
            if k < 3 {
                return Err(Error::InvalidParameter(
                    "spider instances need at least 3 legs".into(),
                ));
            }
            // 0 is the hub; 1..=k a path; leg i runs hub, w_i1 .. w_ik,
            // then joins path node i; node w_ij is i*k + j
            let n = 1 + k + k * k;
            let mut g = Graph::new(n);
            for i in 1..k {
                g.add_edge(i, i + 1, Some(P))?;
            }
            let w = |i: usize, j: usize| i * k + j;
            for i in 1..=k {
                g.add_edge(0, w(i, 1), Some(P))?;
                for j in 1..k {
                    g.add_edge(w(i, j), w(i, j + 1), Some(P))?;
                }
                g.add_edge(w(i, k), i, Some(P))?;
            }
            let cm = crate::graph::compute_costs(&g, None)?;
            let pools: Vec<Vec<NodeId>> = (1..=k).map(|i| vec![i, w(i, k)]).collect();
            let ps = PoolSet::new(pools)?;
            let truth_edges: Vec<(NodeId, NodeId)> =
                (1..k).map(|i| (i, i + 1)).collect();
            let truth = TreeCascade::from_edges(1, &truth_edges)?;
            Ok((g, cm, ps, Cascade::SingleSeed(truth)))
        }
    }
}
