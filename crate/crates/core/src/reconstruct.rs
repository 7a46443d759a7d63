//! Single-seed cascade reconstruction from pooled outcomes.
//!
//! The reconstruction builds a node- and edge-weighted copy of the contact
//! graph, removes all certified-negative nodes, and asks for a minimum
//! weight connected subtree rooted at the seed that touches every positive
//! pool. Node weights `w(u) = sum of d_e over edges at u` and edge weights
//! `w(e) = c_e - d_e` make that tree weight sandwich the true cascade cost
//! within a factor of two, so an approximate group Steiner tree yields an
//! approximate maximum-likelihood cascade.
//!
//! The noisy variant searches over hypothesized true outcomes, charging
//! each hypothesis the log-likelihood of the observed outcomes given it,
//! with branch-and-bound over the number of flipped pools.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;

use crate::cost::{cascade_cost, CostBreakdown};
use crate::error::{Error, Result};
use crate::graph::{CostModel, Graph, NodeId};
use crate::pools::{is_consistent, NoiseModel, Observation, PoolSet};
use crate::sim::{Cascade, TreeCascade};
use crate::steiner::group_steiner_tree;

/// Outcome-hypothesis cap for exhaustive noisy enumeration.
pub const DEFAULT_OUTCOME_CAP: usize = 16;
/// Hard ceiling on hypotheses evaluated by the pruned noisy search.
pub const HYPOTHESIS_BUDGET: usize = 1 << 20;

const HYPOTHESIS_CHUNK: usize = 1024;

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub cascade: Cascade,
    pub cost: CostBreakdown,
    /// Weight of the returned tree in the node- and edge-weighted graph.
    pub gst_weight: f64,
    /// The outcome the cascade explains; differs from the input only when
    /// the noisy search flipped pools.
    pub outcome_used: Observation,
    /// Log-likelihood charge of the outcome hypothesis, zero when noiseless.
    pub noisy_penalty: f64,
}

/// `w(u)`: total failure cost of the edges at `u`, on the full graph.
pub fn node_weights(g: &Graph, cm: &CostModel) -> Vec<f64> {
    (0..g.node_count())
        .map(|u| g.neighbors(u).iter().map(|&(_, e)| cm.d(e)).sum())
        .collect()
}

/// `w(e) = c_e - d_e`, nonnegative whenever transmission is no more likely
/// than not.
pub fn edge_weights(g: &Graph, cm: &CostModel) -> Vec<f64> {
    (0..g.edge_count()).map(|e| cm.c(e) - cm.d(e)).collect()
}

/// Weight of a tree under the reconstruction weighting: every node pays its
/// full-graph incident failure mass once, every tree edge pays `c - d`.
pub fn tree_weight(t: &TreeCascade, g: &Graph, cm: &CostModel) -> Result<f64> {
    let w_node = node_weights(g, cm);
    let mut total: f64 = t.nodes().iter().map(|&u| w_node[u]).sum();
    for (u, v) in t.edges() {
        let e = g.edge_id(u, v).ok_or(Error::MalformedCascade {
            root: t.root(),
            msg: format!("tree edge ({u}, {v}) is not a graph edge"),
        })?;
        total += cm.c(e) - cm.d(e);
    }
    Ok(total)
}

/// Reconstructs an approximate maximum-likelihood cascade rooted at `root`.
/// `level` controls the Steiner recursion depth (quality/time trade-off).
pub fn approx_cascade(
    g: &Graph,
    cm: &CostModel,
    root: NodeId,
    ps: &PoolSet,
    obs: &Observation,
    level: usize,
) -> Result<ReconstructionResult> {
    if root >= g.node_count() {
        return Err(Error::NodeOutOfRange(root));
    }
    if cm.edge_count() != g.edge_count() {
        return Err(Error::InvalidParameter(format!(
            "{} edge costs for {} edges",
            cm.edge_count(),
            g.edge_count()
        )));
    }
    if obs.num_pools() != ps.len() {
        return Err(Error::ObservationMismatch { got: obs.num_pools(), want: ps.len() });
    }
    let violations = (0..g.edge_count()).filter(|&e| cm.c(e) < cm.d(e)).count();
    if violations > 0 {
        return Err(Error::AssumptionViolated(violations));
    }
    let s0 = obs.negative_nodes(ps);
    if s0.contains(&root) {
        return Err(Error::RootInNegativePool(root));
    }

    // weights are taken before removal so boundary edges into removed
    // territory still charge their failure cost
    let w_node = node_weights(g, cm);
    let w_edge = edge_weights(g, cm);

    let keep: Vec<bool> = (0..g.node_count()).map(|u| !s0.contains(&u)).collect();
    let (sub, old_ids) = g.induced_subgraph(&keep);
    let mut new_of_old = vec![usize::MAX; g.node_count()];
    for (new, &old) in old_ids.iter().enumerate() {
        new_of_old[old] = new;
    }

    let mut groups: Vec<Vec<NodeId>> = Vec::new();
    let mut group_pool: Vec<usize> = Vec::new();
    for (pid, pool) in ps.iter().enumerate() {
        if !obs.is_positive(pid) {
            continue;
        }
        let members: Vec<NodeId> =
            pool.iter().filter(|v| !s0.contains(v)).map(|&v| new_of_old[v]).collect();
        if members.is_empty() {
            return Err(Error::InfeasiblePool {
                pool: pid,
                msg: "every member also sits in a negative pool".into(),
            });
        }
        groups.push(members);
        group_pool.push(pid);
    }

    let sub_node_w: Vec<f64> = old_ids.iter().map(|&old| w_node[old]).collect();
    let mut sub_edge_w = vec![0.0; sub.edge_count()];
    for (e, u, v) in sub.edges() {
        let orig = g
            .edge_id(old_ids[u], old_ids[v])
            .expect("induced edges exist in the parent graph");
        sub_edge_w[e] = w_edge[orig];
    }

    let tree = group_steiner_tree(&sub, &sub_node_w, &sub_edge_w, new_of_old[root], &groups, level)
        .map_err(|e| match e {
            // group indices are positional; report the original pool id
            Error::InfeasiblePool { pool, msg } => {
                Error::InfeasiblePool { pool: group_pool[pool], msg }
            }
            other => other,
        })?;

    let edges: Vec<(NodeId, NodeId)> =
        tree.arcs().map(|(p, c, _)| (old_ids[p], old_ids[c])).collect();
    let tc = TreeCascade::from_edges(root, &edges)?;
    let cost = cascade_cost(&tc, g, cm, &s0)?;
    let cascade = Cascade::SingleSeed(tc);
    debug_assert!(is_consistent(&cascade, ps, obs));
    Ok(ReconstructionResult {
        cascade,
        cost,
        gst_weight: tree.weight(),
        outcome_used: obs.clone(),
        noisy_penalty: 0.0,
    })
}

/// Tries every node outside the negative pools as the root and keeps the
/// cheapest reconstruction; ties go to the smallest root id.
pub fn approx_cascade_any_root(
    g: &Graph,
    cm: &CostModel,
    ps: &PoolSet,
    obs: &Observation,
    level: usize,
) -> Result<(NodeId, ReconstructionResult)> {
    let s0 = obs.negative_nodes(ps);
    let mut best: Option<(NodeId, ReconstructionResult)> = None;
    for root in 0..g.node_count() {
        if s0.contains(&root) {
            continue;
        }
        match approx_cascade(g, cm, root, ps, obs, level) {
            Ok(r) => {
                if best.as_ref().map_or(true, |(_, b)| r.cost.total < b.cost.total) {
                    best = Some((root, r));
                }
            }
            Err(e) if e.is_infeasible() => continue,
            Err(e) => return Err(e),
        }
    }
    best.ok_or(Error::NoConsistentCascade)
}

/// Log-likelihood charge `-ln P(observed | actual)` summed over pools;
/// infinite when some observed outcome is impossible under `actual`.
pub fn hypothesis_penalty(observed: &Observation, nm: &NoiseModel, actual: &Observation) -> f64 {
    let mut total = 0.0;
    for i in 0..observed.num_pools() {
        let p = match (observed.is_positive(i), actual.is_positive(i)) {
            (true, true) => 1.0 - nm.p_fn,
            (true, false) => nm.p_fp,
            (false, true) => nm.p_fn,
            (false, false) => 1.0 - nm.p_fp,
        };
        if p <= 0.0 {
            return f64::INFINITY;
        }
        total -= p.ln();
    }
    total
}

/// Noisy reconstruction with the default outcome cap.
#[allow(clippy::too_many_arguments)]
pub fn approx_cascade_noisy(
    g: &Graph,
    cm: &CostModel,
    root: NodeId,
    ps: &PoolSet,
    obs: &Observation,
    nm: &NoiseModel,
    level: usize,
    prune: bool,
) -> Result<ReconstructionResult> {
    approx_cascade_noisy_with_cap(g, cm, root, ps, obs, nm, level, prune, DEFAULT_OUTCOME_CAP)
}

/// Searches hypothesized true outcomes for the minimizer of
/// `cost + penalty`. Hypotheses are enumerated by number of flipped pools;
/// flips with zero probability are never generated. With `prune`, any
/// hypothesis (and any flip-count tier) whose penalty alone cannot beat the
/// incumbent is skipped, which also lifts the cap when every flip has a
/// positive penalty.
#[allow(clippy::too_many_arguments)]
pub fn approx_cascade_noisy_with_cap(
    g: &Graph,
    cm: &CostModel,
    root: NodeId,
    ps: &PoolSet,
    obs: &Observation,
    nm: &NoiseModel,
    level: usize,
    prune: bool,
    cap: usize,
) -> Result<ReconstructionResult> {
    let m = obs.num_pools();
    if m != ps.len() {
        return Err(Error::ObservationMismatch { got: m, want: ps.len() });
    }
    // keeping pool i as observed costs -ln P(obs|obs); flipping it costs
    // -ln P(obs|!obs), delta is the difference
    let mut base = 0.0;
    let mut flippable: Vec<(usize, f64)> = Vec::new();
    for i in 0..m {
        let (keep_p, flip_p) = if obs.is_positive(i) {
            (1.0 - nm.p_fn, nm.p_fp)
        } else {
            (1.0 - nm.p_fp, nm.p_fn)
        };
        base -= keep_p.ln();
        if flip_p > 0.0 {
            flippable.push((i, keep_p.ln() - flip_p.ln()));
        }
    }
    if flippable.len() > cap && (!prune || flippable.iter().any(|&(_, d)| d <= 0.0)) {
        return Err(Error::OutcomeCapExceeded { got: flippable.len(), cap });
    }
    let mut sorted_deltas: Vec<f64> = flippable.iter().map(|&(_, d)| d).collect();
    sorted_deltas.sort_by(|a, b| a.partial_cmp(b).expect("finite penalties"));
    let mut prefix = vec![0.0; sorted_deltas.len() + 1];
    for (i, d) in sorted_deltas.iter().enumerate() {
        prefix[i + 1] = prefix[i] + d;
    }

    let mut best: Option<(f64, ReconstructionResult)> = None;
    let mut evaluated = 0usize;
    for k in 0..=flippable.len() {
        if prune {
            if let Some((bt, _)) = &best {
                // no k-or-more-flip hypothesis can beat the incumbent
                if base + prefix[k] >= *bt {
                    break;
                }
            }
        }
        let mut comb: Vec<usize> = (0..k).collect();
        let mut done = false;
        while !done {
            // gather a chunk of surviving hypotheses, then solve in parallel
            let mut chunk: Vec<(Vec<usize>, f64)> = Vec::new();
            let incumbent = best.as_ref().map(|(bt, _)| *bt);
            while chunk.len() < HYPOTHESIS_CHUNK {
                let penalty =
                    base + comb.iter().map(|&ci| flippable[ci].1).sum::<f64>();
                if !prune || incumbent.map_or(true, |bt| penalty < bt) {
                    chunk.push((comb.clone(), penalty));
                }
                if !advance_combination(&mut comb, flippable.len()) {
                    done = true;
                    break;
                }
            }
            if evaluated + chunk.len() > HYPOTHESIS_BUDGET {
                return Err(Error::EnumerationBudget(evaluated + chunk.len()));
            }
            evaluated += chunk.len();
            let outcomes: Vec<Option<(f64, ReconstructionResult)>> = chunk
                .par_iter()
                .map(|(subset, penalty)| -> Result<Option<(f64, ReconstructionResult)>> {
                    let mut pos = obs.positive_pools().clone();
                    for &ci in subset {
                        let pid = flippable[ci].0;
                        if !pos.remove(&pid) {
                            pos.insert(pid);
                        }
                    }
                    let hyp = Observation::new(m, pos)?;
                    match approx_cascade(g, cm, root, ps, &hyp, level) {
                        Ok(mut r) => {
                            r.noisy_penalty = *penalty;
                            Ok(Some((r.cost.total + penalty, r)))
                        }
                        Err(e) if e.is_infeasible() => Ok(None),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<_>>()?;
            for cand in outcomes.into_iter().flatten() {
                if best.as_ref().map_or(true, |(bt, _)| cand.0 < *bt) {
                    best = Some(cand);
                }
            }
        }
    }
    best.map(|(_, r)| r).ok_or(Error::NoFeasibleOutcome)
}

fn advance_combination(comb: &mut [usize], m: usize) -> bool {
    let k = comb.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if comb[i] != i + m - k {
            comb[i] += 1;
            for j in i + 1..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Baseline: each positive pool is replaced by one uniformly chosen member
/// before reconstructing, mirroring single-infection pooling schemes.
#[allow(clippy::too_many_arguments)]
pub fn baseline_random<R: Rng>(
    g: &Graph,
    cm: &CostModel,
    root: NodeId,
    ps: &PoolSet,
    obs: &Observation,
    rng: &mut R,
    level: usize,
) -> Result<ReconstructionResult> {
    let mut pools: Vec<Vec<NodeId>> = Vec::with_capacity(ps.len());
    for (pid, pool) in ps.iter().enumerate() {
        if obs.is_positive(pid) {
            pools.push(vec![pool[rng.gen_range(0..pool.len())]]);
        } else {
            pools.push(pool.to_vec());
        }
    }
    let collapsed = PoolSet::new(pools)?;
    let mut r = approx_cascade(g, cm, root, &collapsed, obs, level)?;
    r.outcome_used = obs.clone();
    debug_assert!(is_consistent(&r.cascade, ps, obs));
    Ok(r)
}

/// Baseline: every member of every positive pool becomes a mandatory
/// singleton (members certified negative elsewhere are dropped; a pool with
/// nothing left is contradictory and reported infeasible).
pub fn baseline_all(
    g: &Graph,
    cm: &CostModel,
    root: NodeId,
    ps: &PoolSet,
    obs: &Observation,
    level: usize,
) -> Result<ReconstructionResult> {
    let s0 = obs.negative_nodes(ps);
    let mut pools: Vec<Vec<NodeId>> = Vec::new();
    let mut positive: BTreeSet<usize> = BTreeSet::new();
    let mut seen: BTreeSet<NodeId> = BTreeSet::new();
    for (pid, pool) in ps.iter().enumerate() {
        if !obs.is_positive(pid) {
            pools.push(pool.to_vec());
            continue;
        }
        let mut kept_any = false;
        for &v in pool {
            if s0.contains(&v) {
                continue;
            }
            kept_any = true;
            if seen.insert(v) {
                positive.insert(pools.len());
                pools.push(vec![v]);
            }
        }
        if !kept_any {
            return Err(Error::InfeasiblePool {
                pool: pid,
                msg: "every member also sits in a negative pool".into(),
            });
        }
    }
    let obs2 = Observation::new(pools.len(), positive)?;
    let ps2 = PoolSet::new(pools)?;
    let mut r = approx_cascade(g, cm, root, &ps2, &obs2, level)?;
    r.outcome_used = obs.clone();
    debug_assert!(is_consistent(&r.cascade, ps, obs));
    Ok(r)
}
