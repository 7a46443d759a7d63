//! Pooled testing: pool designs, observed outcomes, and reporting noise.
//!
//! A pool is a set of nodes tested together; a pool is truly positive iff it
//! contains an infected node. Designed pools are disjoint, but every
//! consumer accepts arbitrary (overlapping) pools. The union of the
//! observed-negative pools is the set of nodes certified uninfected, which
//! downstream reconstruction must avoid.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::sim::Cascade;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSet {
    pools: Vec<Vec<NodeId>>,
}

impl PoolSet {
    /// Pools may overlap; each must be nonempty. Members are kept sorted.
    pub fn new(pools: Vec<Vec<NodeId>>) -> Result<PoolSet> {
        let mut cleaned = Vec::with_capacity(pools.len());
        for (i, mut pool) in pools.into_iter().enumerate() {
            if pool.is_empty() {
                return Err(Error::EmptyPool(i));
            }
            pool.sort_unstable();
            pool.dedup();
            cleaned.push(pool);
        }
        Ok(PoolSet { pools: cleaned })
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    pub fn pool(&self, i: usize) -> &[NodeId] {
        &self.pools[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[NodeId]> {
        self.pools.iter().map(|p| p.as_slice())
    }

    /// Every node appearing in some pool.
    pub fn covered_nodes(&self) -> BTreeSet<NodeId> {
        self.pools.iter().flatten().copied().collect()
    }
}

/// Partition of the pools into observed-negative and observed-positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    num_pools: usize,
    positive: BTreeSet<usize>,
}

impl Observation {
    pub fn new(num_pools: usize, positive: BTreeSet<usize>) -> Result<Observation> {
        if let Some(&max) = positive.iter().next_back() {
            if max >= num_pools {
                return Err(Error::ObservationMismatch { got: max + 1, want: num_pools });
            }
        }
        Ok(Observation { num_pools, positive })
    }

    pub fn num_pools(&self) -> usize {
        self.num_pools
    }

    pub fn is_positive(&self, pool: usize) -> bool {
        self.positive.contains(&pool)
    }

    pub fn positive_pools(&self) -> &BTreeSet<usize> {
        &self.positive
    }

    pub fn negative_pools(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_pools).filter(|i| !self.positive.contains(i))
    }

    pub fn num_positive(&self) -> usize {
        self.positive.len()
    }

    /// Union of the observed-negative pools: nodes certified uninfected.
    pub fn negative_nodes(&self, ps: &PoolSet) -> BTreeSet<NodeId> {
        assert_eq!(ps.len(), self.num_pools, "observation belongs to this pool design");
        let mut s = BTreeSet::new();
        for i in self.negative_pools() {
            s.extend(ps.pool(i).iter().copied());
        }
        s
    }
}

/// Pool-level reporting noise: a truly negative pool reads positive with
/// probability `p_fp`, a truly positive pool reads negative with `p_fn`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub p_fp: f64,
    pub p_fn: f64,
}

impl NoiseModel {
    pub fn new(p_fp: f64, p_fn: f64) -> Result<NoiseModel> {
        for (name, p) in [("p_fp", p_fp), ("p_fn", p_fn)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name}={p} outside [0, 1)")));
            }
        }
        Ok(NoiseModel { p_fp, p_fn })
    }

    pub fn noiseless() -> NoiseModel {
        NoiseModel { p_fp: 0.0, p_fn: 0.0 }
    }
}

/// Random disjoint pools: `floor(ratio * |nodes|)` nodes are drawn uniformly
/// without replacement and chunked into pools of `size`; a final short pool
/// keeps the remainder. `nodes` is the population eligible for testing.
pub fn design_random_pools<R: Rng>(
    nodes: &[NodeId],
    ratio: f64,
    size: usize,
    rng: &mut R,
) -> Result<PoolSet> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidParameter(format!("pool ratio {ratio} outside [0, 1]")));
    }
    if size == 0 {
        return Err(Error::InvalidParameter("pool size must be positive".into()));
    }
    let take = (ratio * nodes.len() as f64).floor() as usize;
    if size > take {
        return Err(Error::PoolSizeTooLarge { size, selected: take });
    }
    let mut shuffled = nodes.to_vec();
    shuffled.shuffle(rng);
    shuffled.truncate(take);
    let pools = shuffled.chunks(size).map(|c| c.to_vec()).collect();
    PoolSet::new(pools)
}

/// Ground-truth outcomes: a pool is positive iff it intersects the infected
/// set.
pub fn evaluate_pools(ps: &PoolSet, infected: &BTreeSet<NodeId>) -> Observation {
    let positive = ps
        .iter()
        .enumerate()
        .filter(|(_, pool)| pool.iter().any(|v| infected.contains(v)))
        .map(|(i, _)| i)
        .collect();
    Observation { num_pools: ps.len(), positive }
}

/// Flips each pool's reported outcome independently per the noise model.
pub fn apply_noise<R: Rng>(obs: &Observation, nm: &NoiseModel, rng: &mut R) -> Observation {
    let mut positive = BTreeSet::new();
    for i in 0..obs.num_pools {
        let truly_positive = obs.is_positive(i);
        let flip = if truly_positive {
            rng.gen::<f64>() < nm.p_fn
        } else {
            rng.gen::<f64>() < nm.p_fp
        };
        if truly_positive != flip {
            positive.insert(i);
        }
    }
    Observation { num_pools: obs.num_pools, positive }
}

/// A cascade explains an observation iff it avoids every node of every
/// observed-negative pool and touches every observed-positive pool.
pub fn is_consistent(c: &Cascade, ps: &PoolSet, obs: &Observation) -> bool {
    let infected = c.infected();
    let negative = obs.negative_nodes(ps);
    if infected.iter().any(|v| negative.contains(v)) {
        return false;
    }
    obs.positive_pools()
        .iter()
        .all(|&i| ps.pool(i).iter().any(|v| infected.contains(v)))
}

/// Writes `g <pool_id> <result> <members...>` lines, with result `1`, `0`,
/// or `?` when no observation is supplied.
pub fn write_pools<W: Write>(ps: &PoolSet, obs: Option<&Observation>, mut w: W) -> Result<()> {
    if let Some(o) = obs {
        if o.num_pools() != ps.len() {
            return Err(Error::ObservationMismatch { got: o.num_pools(), want: ps.len() });
        }
    }
    for (i, pool) in ps.iter().enumerate() {
        let result = match obs {
            None => "?".to_string(),
            Some(o) => if o.is_positive(i) { "1" } else { "0" }.to_string(),
        };
        write!(w, "g {i} {result}")?;
        for v in pool {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Parses the format written by [`write_pools`]. Returns the pool design and
/// the observation if every pool carries a 0/1 result (`None` if any is `?`).
pub fn read_pools<R: BufRead>(reader: R) -> Result<(PoolSet, Option<Observation>)> {
    let mut pools = Vec::new();
    let mut results: Vec<Option<bool>> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let mut it = s.split_whitespace();
        if it.next() != Some("g") {
            return Err(Error::Parse { line: lineno, msg: "expected `g <id> <result> <nodes...>`".into() });
        }
        let id: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse { line: lineno, msg: "bad pool id".into() })?;
        if id != pools.len() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("pool ids must be consecutive from 0, got {id}"),
            });
        }
        let result = match it.next() {
            Some("1") => Some(true),
            Some("0") => Some(false),
            Some("?") => None,
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("bad result {other:?}"),
                })
            }
        };
        let mut members = Vec::new();
        for t in it {
            members.push(t.parse().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad node id: {e}"),
            })?);
        }
        if members.is_empty() {
            return Err(Error::EmptyPool(id));
        }
        pools.push(members);
        results.push(result);
    }
    let ps = PoolSet::new(pools)?;
    let obs = if results.iter().all(|r| r.is_some()) && !results.is_empty() {
        let positive = results
            .iter()
            .enumerate()
            .filter(|(_, r)| r.unwrap())
            .map(|(i, _)| i)
            .collect();
        Some(Observation { num_pools: ps.len(), positive })
    } else {
        None
    };
    Ok((ps, obs))
}
