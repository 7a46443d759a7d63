//! Replicate experiment harness: builds instances over a parameter grid,
//! runs the reconstruction methods on identical inputs, and emits metric
//! rows as versioned CSV.
//!
//! Determinism contract: a fixed `base_seed` yields byte-identical CSV. Each
//! grid point and replicate derives its RNG stream from the base seed and a
//! stable hash of the grid coordinates, so rows do not depend on scheduling
//! or on which other grid points run.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{
    compute_costs, generate_ba, generate_gnq, load_edge_list, EdgeValueMode, Graph, NodeId,
};
use crate::cost::compute_costs_bipartite;
use crate::onehop::{one_hop_baseline_random, one_hop_reconstruct};
use crate::pools::{design_random_pools, evaluate_pools, Observation, PoolSet};
use crate::reconstruct::{approx_cascade, baseline_all, baseline_random};
use crate::sim::{simulate_one_hop, simulate_single_seed, time_expand, Bipartite};

pub const CONFIG_SCHEMA: &str = "experiment-config/1";
pub const CSV_SCHEMA: &str = "experiment-csv/1";
/// Give up re-drawing a cascade that never leaves its root after this many
/// attempts and score the degenerate replicate as-is.
pub const REDRAW_CAP: usize = 10_000;
pub const DEFAULT_LEVEL: usize = 2;
pub const DEFAULT_ROUND_RETRIES: usize = 100;

/// FNV-1a, 64 bit. Stable across platforms and releases; used to derive
/// per-grid-point seeds.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// F1 = 2TP / (2TP + FP + FN) over node sets.
pub fn f1_score(v_t: &BTreeSet<NodeId>, v_g: &BTreeSet<NodeId>) -> Result<f64> {
    if v_g.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let tp = v_t.intersection(v_g).count();
    let fp = v_t.len() - tp;
    let fn_ = v_g.len() - tp;
    if tp == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64))
}

/// Signed size error (|V_G| - |V_T|) / |V_G|; positive when the
/// reconstruction undershoots.
pub fn relative_error(v_t: &BTreeSet<NodeId>, v_g: &BTreeSet<NodeId>) -> Result<f64> {
    if v_g.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    Ok((v_g.len() as f64 - v_t.len() as f64) / v_g.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkSpec {
    Gnq { n: usize, q: f64 },
    Ba { n: usize, m: usize },
    EdgeList { path: String },
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkSpec::Gnq { n, q } => write!(f, "gnq:{n}:{q}"),
            NetworkSpec::Ba { n, m } => write!(f, "ba:{n}:{m}"),
            NetworkSpec::EdgeList { path } => write!(f, "edgelist:{path}"),
        }
    }
}

impl FromStr for NetworkSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<NetworkSpec> {
        let mut it = s.splitn(3, ':');
        let kind = it.next().unwrap_or_default();
        match kind {
            "gnq" => {
                let n = parse_field(it.next(), "gnq node count")?;
                let q = parse_field(it.next(), "gnq edge probability")?;
                Ok(NetworkSpec::Gnq { n, q })
            }
            "ba" => {
                let n = parse_field(it.next(), "ba node count")?;
                let m = parse_field(it.next(), "ba attachment count")?;
                Ok(NetworkSpec::Ba { n, m })
            }
            "edgelist" => {
                let path = it.next().unwrap_or_default();
                if path.is_empty() {
                    return Err(Error::Config("edgelist network needs a path".into()));
                }
                Ok(NetworkSpec::EdgeList { path: path.to_string() })
            }
            other => Err(Error::Config(format!(
                "unknown network kind {other:?} (expected gnq, ba, or edgelist)"
            ))),
        }
    }
}

fn parse_field<T: FromStr>(tok: Option<&str>, what: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    let tok = tok.ok_or_else(|| Error::Config(format!("missing {what}")))?;
    tok.parse().map_err(|e| Error::Config(format!("bad {what} {tok:?}: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentMode {
    SingleSeed,
    OneHop,
}

impl fmt::Display for ExperimentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentMode::SingleSeed => "single-seed",
            ExperimentMode::OneHop => "one-hop",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Approx,
    ApproxRandom,
    ApproxAll,
    Round,
    RoundRandom,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Approx => "approx",
            Method::ApproxRandom => "approx_random",
            Method::ApproxAll => "approx_all",
            Method::Round => "round",
            Method::RoundRandom => "round_random",
        }
    }

    pub fn mode(self) -> ExperimentMode {
        match self {
            Method::Approx | Method::ApproxRandom | Method::ApproxAll => {
                ExperimentMode::SingleSeed
            }
            Method::Round | Method::RoundRandom => ExperimentMode::OneHop,
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "approx" => Ok(Method::Approx),
            "approx_random" => Ok(Method::ApproxRandom),
            "approx_all" => Ok(Method::ApproxAll),
            "round" => Ok(Method::Round),
            "round_random" => Ok(Method::RoundRandom),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Whether the `p` grid carries edge probabilities directly or scales
/// contact durations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiseaseKind {
    Probability,
    Beta,
}

impl DiseaseKind {
    fn key(self) -> &'static str {
        match self {
            DiseaseKind::Probability => "p",
            DiseaseKind::Beta => "beta",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub network: NetworkSpec,
    pub mode: ExperimentMode,
    pub disease: DiseaseKind,
    /// Edge-probability grid (or beta grid when `disease` is `Beta`).
    pub p: Vec<f64>,
    /// Seeding-probability grid; only one-hop experiments read it.
    pub p0: Vec<f64>,
    pub pool_ratios: Vec<f64>,
    pub pool_sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub base_seed: u64,
    /// Metric-closure refinement depth for tree reconstructions.
    pub level: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p.is_empty() || self.pool_ratios.is_empty() || self.pool_sizes.is_empty() {
            return Err(Error::Config("parameter grids must be nonempty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.level == 0 {
            return Err(Error::Config("level must be at least 1".into()));
        }
        for m in &self.methods {
            if m.mode() != self.mode {
                return Err(Error::Config(format!(
                    "method {} does not run in {} mode",
                    m.name(),
                    self.mode
                )));
            }
        }
        if self.mode == ExperimentMode::OneHop {
            if self.p0.is_empty() {
                return Err(Error::Config("one-hop experiments need a p0 grid".into()));
            }
            if self.disease == DiseaseKind::Beta {
                return Err(Error::Config(
                    "beta-scaled durations are not defined for the one-hop expansion".into(),
                ));
            }
        }
        if self.disease == DiseaseKind::Beta
            && !matches!(self.network, NetworkSpec::EdgeList { .. })
        {
            return Err(Error::Config(
                "beta grids need an edge list with contact durations".into(),
            ));
        }
        Ok(())
    }
}

/// Parses the flat `key = value` config format. Requires a
/// `# schema: experiment-config/1` line; `#` lines are otherwise comments.
pub fn parse_experiment_config(text: &str) -> Result<ExperimentConfig> {
    let mut schema_seen = false;
    let mut network: Option<NetworkSpec> = None;
    let mut mode: Option<ExperimentMode> = None;
    let mut p: Option<Vec<f64>> = None;
    let mut disease = DiseaseKind::Probability;
    let mut p0: Option<Vec<f64>> = None;
    let mut pool_ratios: Option<Vec<f64>> = None;
    let mut pool_sizes: Option<Vec<usize>> = None;
    let mut methods: Option<Vec<Method>> = None;
    let mut replicates: Option<usize> = None;
    let mut base_seed: Option<u64> = None;
    let mut level: Option<usize> = None;

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('#') {
            if let Some(found) = rest.trim().strip_prefix("schema:") {
                let found = found.trim();
                if found != CONFIG_SCHEMA {
                    return Err(Error::Config(format!(
                        "unsupported config schema {found:?} (expected {CONFIG_SCHEMA})"
                    )));
                }
                schema_seen = true;
            }
            continue;
        }
        let (key, value) = s.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {lineno}: expected `key = value`, got {s:?}"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "network" => network = Some(value.parse()?),
            "mode" => {
                mode = Some(match value {
                    "single-seed" => ExperimentMode::SingleSeed,
                    "one-hop" => ExperimentMode::OneHop,
                    other => {
                        return Err(Error::Config(format!("unknown mode {other:?}")))
                    }
                })
            }
            "p" => {
                p = Some(parse_list(value, "p")?);
                disease = DiseaseKind::Probability;
            }
            "beta" => {
                p = Some(parse_list(value, "beta")?);
                disease = DiseaseKind::Beta;
            }
            "p0" => p0 = Some(parse_list(value, "p0")?),
            "pool_ratio" => pool_ratios = Some(parse_list(value, "pool_ratio")?),
            "pool_size" => pool_sizes = Some(parse_list(value, "pool_size")?),
            "methods" => {
                let ms: Result<Vec<Method>> =
                    value.split(',').map(|m| m.trim().parse()).collect();
                methods = Some(ms?);
            }
            "replicates" => replicates = Some(parse_field(Some(value), "replicates")?),
            "base_seed" => base_seed = Some(parse_field(Some(value), "base_seed")?),
            "level" => level = Some(parse_field(Some(value), "level")?),
            other => {
                return Err(Error::Config(format!("line {lineno}: unknown key {other:?}")))
            }
        }
    }
    if !schema_seen {
        return Err(Error::Config(format!("missing `# schema: {CONFIG_SCHEMA}` line")));
    }
    let network = network.ok_or_else(|| Error::Config("missing network".into()))?;
    let mode = mode.unwrap_or(ExperimentMode::SingleSeed);
    let methods = methods.unwrap_or_else(|| match mode {
        ExperimentMode::SingleSeed => {
            vec![Method::Approx, Method::ApproxRandom, Method::ApproxAll]
        }
        ExperimentMode::OneHop => vec![Method::Round, Method::RoundRandom],
    });
    let cfg = ExperimentConfig {
        network,
        mode,
        disease,
        p: p.ok_or_else(|| Error::Config("missing p (or beta) grid".into()))?,
        p0: p0.unwrap_or_else(|| vec![0.01]),
        pool_ratios: pool_ratios.unwrap_or_else(|| vec![0.5, 0.9]),
        pool_sizes: pool_sizes.unwrap_or_else(|| vec![3, 5, 7, 9]),
        methods,
        replicates: replicates.unwrap_or(50),
        base_seed: base_seed.unwrap_or(0),
        level: level.unwrap_or(DEFAULT_LEVEL),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_list<T: FromStr>(value: &str, key: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse()
                .map_err(|e| Error::Config(format!("bad {key} entry {tok:?}: {e}")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    Infeasible,
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowStatus::Ok => "ok",
            RowStatus::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Clone)]
pub struct MetricRow {
    pub network: String,
    pub mode: ExperimentMode,
    pub disease: DiseaseKind,
    pub p: f64,
    /// Seeding probability; `None` in single-seed mode.
    pub p0: Option<f64>,
    pub pool_ratio: f64,
    pub pool_size: usize,
    pub method: Method,
    pub replicate: usize,
    /// Times the ground-truth cascade was re-drawn for leaving its root
    /// uninfectious.
    pub redraws: usize,
    pub status: RowStatus,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub f1: f64,
    pub e_rel: f64,
    /// Why the instance was infeasible; empty on success.
    pub reason: String,
    /// Method runtime. Kept out of the default CSV so output stays
    /// byte-reproducible.
    pub wall_time_s: f64,
}

/// One grid point and replicate: the instance every method shares.
struct Job {
    p: f64,
    p0: Option<f64>,
    pool_ratio: f64,
    pool_size: usize,
    replicate: usize,
    seed: u64,
}

fn job_seed(cfg: &ExperimentConfig, p: f64, p0: Option<f64>, ratio: f64, size: usize, rep: usize) -> u64 {
    let coord = match p0 {
        Some(p0) => format!(
            "net={}|{}={p}|p0={p0}|ratio={ratio}|size={size}|rep={rep}",
            cfg.network,
            cfg.disease.key()
        ),
        None => format!(
            "net={}|{}={p}|ratio={ratio}|size={size}|rep={rep}",
            cfg.network,
            cfg.disease.key()
        ),
    };
    cfg.base_seed ^ fnv1a64(coord.as_bytes())
}

/// Runs the full grid. Rows come back ordered by (p, p0, ratio, size,
/// replicate, method) regardless of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricRow>> {
    cfg.validate()?;
    let loaded: Option<Arc<Graph>> = match &cfg.network {
        NetworkSpec::EdgeList { path } => {
            let file = std::fs::File::open(path).map_err(Error::Io)?;
            let reader = std::io::BufReader::new(file);
            // durations accept any nonnegative value, so the loader works
            // for weighted and unweighted lists alike; probabilities are
            // installed per grid point
            let lg = load_edge_list(reader, EdgeValueMode::Duration)?;
            Some(Arc::new(lg.graph))
        }
        _ => None,
    };

    let mut jobs: Vec<Job> = Vec::new();
    let p0_grid: Vec<Option<f64>> = match cfg.mode {
        ExperimentMode::SingleSeed => vec![None],
        ExperimentMode::OneHop => cfg.p0.iter().copied().map(Some).collect(),
    };
    for &p in &cfg.p {
        for &p0 in &p0_grid {
            for &ratio in &cfg.pool_ratios {
                for &size in &cfg.pool_sizes {
                    for rep in 0..cfg.replicates {
                        jobs.push(Job {
                            p,
                            p0,
                            pool_ratio: ratio,
                            pool_size: size,
                            replicate: rep,
                            seed: job_seed(cfg, p, p0, ratio, size, rep),
                        });
                    }
                }
            }
        }
    }

    let per_job: Result<Vec<Vec<MetricRow>>> = jobs
        .par_iter()
        .map(|job| run_job(cfg, job, loaded.as_deref()))
        .collect();
    Ok(per_job?.into_iter().flatten().collect())
}

fn build_graph(cfg: &ExperimentConfig, loaded: Option<&Graph>, rng: &mut ChaCha8Rng) -> Result<Graph> {
    match (&cfg.network, loaded) {
        (NetworkSpec::Gnq { n, q }, _) => generate_gnq(*n, *q, rng),
        (NetworkSpec::Ba { n, m }, _) => generate_ba(*n, *m, rng),
        (NetworkSpec::EdgeList { .. }, Some(g)) => Ok(g.clone()),
        (NetworkSpec::EdgeList { .. }, None) => {
            Err(Error::Config("edge list was not preloaded".into()))
        }
    }
}

fn run_job(cfg: &ExperimentConfig, job: &Job, loaded: Option<&Graph>) -> Result<Vec<MetricRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let mut g = build_graph(cfg, loaded, &mut rng)?;
    match cfg.disease {
        DiseaseKind::Probability => g.set_uniform_prob(job.p)?,
        DiseaseKind::Beta => g.set_probs_from_durations(job.p)?,
    }
    match cfg.mode {
        ExperimentMode::SingleSeed => run_single_seed_job(cfg, job, &g, &mut rng),
        ExperimentMode::OneHop => run_one_hop_job(cfg, job, &g, &mut rng),
    }
}

fn run_single_seed_job(
    cfg: &ExperimentConfig,
    job: &Job,
    g: &Graph,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<MetricRow>> {
    let n = g.node_count();
    let cm = compute_costs(g, None)?;
    let mut redraws = 0usize;
    let (root, v_g) = loop {
        let root = rng.gen_range(0..n);
        let cascade = simulate_single_seed(g, root, rng)?;
        let infected = cascade.infected();
        if infected.len() >= 2 || redraws >= REDRAW_CAP {
            break (root, infected);
        }
        redraws += 1;
    };
    let ids: Vec<NodeId> = (0..n).collect();
    let ps = design_random_pools(&ids, job.pool_ratio, job.pool_size, rng)?;
    let obs = evaluate_pools(&ps, &v_g);

    let mut rows = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let mut mrng =
            ChaCha8Rng::seed_from_u64(job.seed ^ fnv1a64(method.name().as_bytes()));
        let t0 = Instant::now();
        let outcome = match method {
            Method::Approx => {
                approx_cascade(g, &cm, root, &ps, &obs, cfg.level).map(|r| r.cascade.infected())
            }
            Method::ApproxRandom => baseline_random(g, &cm, root, &ps, &obs, &mut mrng, cfg.level)
                .map(|r| r.cascade.infected()),
            Method::ApproxAll => {
                baseline_all(g, &cm, root, &ps, &obs, cfg.level).map(|r| r.cascade.infected())
            }
            Method::Round | Method::RoundRandom => {
                unreachable!("validated against the mode")
            }
        };
        let wall = t0.elapsed().as_secs_f64();
        rows.push(score_row(cfg, job, method, redraws, n, &v_g, outcome, wall)?);
    }
    Ok(rows)
}

fn run_one_hop_job(
    cfg: &ExperimentConfig,
    job: &Job,
    g: &Graph,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<MetricRow>> {
    let n = g.node_count();
    let bip = time_expand(g);
    let p0 = job.p0.expect("one-hop jobs carry p0");
    let cm = compute_costs_bipartite(&bip, &vec![p0; n])?;
    let mut redraws = 0usize;
    let v_g = loop {
        let cascade = simulate_one_hop(&bip, p0, rng)?;
        let infected = cascade.infected();
        if infected.iter().any(|&v| v >= n) || redraws >= REDRAW_CAP {
            break infected;
        }
        redraws += 1;
    };
    let ids = bip.combined_right_ids();
    let ps = design_random_pools(&ids, job.pool_ratio, job.pool_size, rng)?;
    let obs = evaluate_pools(&ps, &v_g);
    let total = n + bip.n_right();

    let mut rows = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let mut mrng =
            ChaCha8Rng::seed_from_u64(job.seed ^ fnv1a64(method.name().as_bytes()));
        let t0 = Instant::now();
        let outcome = one_hop_nodes(method, &bip, &cm, &ps, &obs, &mut mrng);
        let wall = t0.elapsed().as_secs_f64();
        rows.push(score_row(cfg, job, method, redraws, total, &v_g, outcome, wall)?);
    }
    Ok(rows)
}

fn one_hop_nodes(
    method: Method,
    bip: &Bipartite,
    cm: &crate::graph::CostModel,
    ps: &PoolSet,
    obs: &Observation,
    rng: &mut ChaCha8Rng,
) -> Result<BTreeSet<NodeId>> {
    match method {
        Method::Round => one_hop_reconstruct(bip, cm, ps, obs, rng, DEFAULT_ROUND_RETRIES)
            .map(|(_, r)| r.cascade.infected_combined()),
        Method::RoundRandom => one_hop_baseline_random(bip, cm, ps, obs, rng, DEFAULT_ROUND_RETRIES)
            .map(|r| r.cascade.infected_combined()),
        _ => unreachable!("validated against the mode"),
    }
}

#[allow(clippy::too_many_arguments)]
fn score_row(
    cfg: &ExperimentConfig,
    job: &Job,
    method: Method,
    redraws: usize,
    total_nodes: usize,
    v_g: &BTreeSet<NodeId>,
    outcome: Result<BTreeSet<NodeId>>,
    wall_time_s: f64,
) -> Result<MetricRow> {
    let mut row = MetricRow {
        network: cfg.network.to_string(),
        mode: cfg.mode,
        disease: cfg.disease,
        p: job.p,
        p0: job.p0,
        pool_ratio: job.pool_ratio,
        pool_size: job.pool_size,
        method,
        replicate: job.replicate,
        redraws,
        status: RowStatus::Ok,
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
        f1: f64::NAN,
        e_rel: f64::NAN,
        reason: String::new(),
        wall_time_s,
    };
    match outcome {
        Ok(v_t) => {
            let tp = v_t.intersection(v_g).count();
            row.tp = tp;
            row.fp = v_t.len() - tp;
            row.fn_ = v_g.len() - tp;
            row.tn = total_nodes - v_t.union(v_g).count();
            row.f1 = f1_score(&v_t, v_g)?;
            row.e_rel = relative_error(&v_t, v_g)?;
            debug_assert_eq!(row.tp + row.fp + row.fn_ + row.tn, total_nodes);
        }
        Err(e) if e.is_infeasible() => {
            row.status = RowStatus::Infeasible;
            // keep the reason single-field safe for the CSV
            row.reason = e.to_string().replace(',', ";");
        }
        Err(e) => return Err(e),
    }
    Ok(row)
}

const CSV_COLUMNS: &str =
    "network,mode,disease,p,p0,pool_ratio,pool_size,method,replicate,redraws,status,tp,fp,fn,tn,f1,e_rel,reason";

/// Writes the versioned metrics CSV. Excludes wall time, so identical
/// configs produce identical bytes.
pub fn write_csv<W: Write>(rows: &[MetricRow], mut w: W) -> Result<()> {
    writeln!(w, "# schema: {CSV_SCHEMA}")?;
    writeln!(w, "{CSV_COLUMNS}")?;
    for row in rows {
        writeln!(w, "{}", format_row(row, None))?;
    }
    Ok(())
}

/// Companion CSV with a trailing wall-time column; not byte-reproducible.
pub fn write_timing_csv<W: Write>(rows: &[MetricRow], mut w: W) -> Result<()> {
    writeln!(w, "# schema: {CSV_SCHEMA}")?;
    writeln!(w, "{CSV_COLUMNS},wall_time_s")?;
    for row in rows {
        writeln!(w, "{}", format_row(row, Some(row.wall_time_s)))?;
    }
    Ok(())
}

fn format_row(row: &MetricRow, timing: Option<f64>) -> String {
    let p0 = row.p0.map(|v| v.to_string()).unwrap_or_default();
    let (f1, e_rel) = if row.status == RowStatus::Ok {
        (row.f1.to_string(), row.e_rel.to_string())
    } else {
        (String::new(), String::new())
    };
    let mut line = format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        row.network,
        row.mode,
        row.disease.key(),
        row.p,
        p0,
        row.pool_ratio,
        row.pool_size,
        row.method.name(),
        row.replicate,
        row.redraws,
        row.status,
        row.tp,
        row.fp,
        row.fn_,
        row.tn,
        f1,
        e_rel,
        row.reason,
    );
    if let Some(t) = timing {
        line.push(',');
        line.push_str(&t.to_string());
    }
    line
}
