//! Command-line front end for the cascade reconstruction pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 the instance is infeasible (a
//! legitimate outcome worth tallying, not a crash), 3 internal error.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cascade_recon::cost::{compute_costs_bipartite, one_hop_cost};
use cascade_recon::eval::{
    parse_experiment_config, run_experiment, write_csv, write_timing_csv, NetworkSpec,
};
use cascade_recon::exact::{
    brute_force_one_hop_mle, brute_force_pool_mle, OracleResult, ORACLE_NODE_CAP,
};
use cascade_recon::graph::{load_edge_list, EdgeValueMode, Graph};
use cascade_recon::onehop::one_hop_reconstruct;
use cascade_recon::pools::{read_pools, write_pools, NoiseModel, Observation, PoolSet};
use cascade_recon::reconstruct::{approx_cascade, approx_cascade_noisy_with_cap};
use cascade_recon::sim::{
    read_cascade, simulate_one_hop, simulate_single_seed, time_expand, write_cascade, Cascade,
};
use cascade_recon::{compute_costs, generate_ba, generate_gnq};

#[derive(Parser)]
#[command(name = "cascade-recon", version, about = "Reconstructs epidemic cascades from pooled test results")]
struct Cli {
    /// Seed for all randomness in this invocation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// off, error, warn, info, debug, or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generates a random contact network as an edge list.
    GenGraph(GenGraphArgs),
    /// Simulates an outbreak on a network and writes the ground-truth cascade.
    Simulate(SimulateArgs),
    /// Designs random pools over a network and optionally evaluates them.
    Pool(PoolArgs),
    /// Reconstructs the most likely single-seed cascade from pooled results.
    Reconstruct(ReconstructArgs),
    /// Reconstruction that may flip pool outcomes under a test noise model.
    ReconstructNoisy(ReconstructNoisyArgs),
    /// Reconstructs a one-round seeded cascade by LP rounding.
    ReconstructOnehop(ReconstructOnehopArgs),
    /// Exhaustive exact reconstruction for tiny instances.
    Oracle(OracleArgs),
    /// Runs a replicate experiment grid from a config file and emits CSV.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenGraphArgs {
    /// gnq:<n>:<q> or ba:<n>:<m>.
    #[arg(long)]
    model: String,
    /// Homogeneous transmission probability stored on every edge.
    #[arg(long)]
    p: f64,
}

#[derive(Args)]
struct DiseaseArgs {
    /// Override every edge with this transmission probability.
    #[arg(long, conflicts_with = "beta")]
    p: Option<f64>,
    /// Derive probabilities 1 - exp(-beta * duration) from the edge values.
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Edge-list file.
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    disease: DiseaseArgs,
    /// single-seed or one-hop.
    #[arg(long, default_value = "single-seed")]
    mode: String,
    /// Outbreak origin for single-seed mode; drawn at random when omitted.
    #[arg(long)]
    root: Option<usize>,
    /// Independent seeding probability for one-hop mode.
    #[arg(long, default_value_t = 0.01)]
    p0: f64,
}

#[derive(Args)]
struct PoolArgs {
    #[arg(long)]
    graph: PathBuf,
    /// single-seed pools nodes; one-hop pools the time-1 copies.
    #[arg(long, default_value = "single-seed")]
    mode: String,
    /// Fraction of eligible nodes that get pooled.
    #[arg(long)]
    ratio: f64,
    /// Nodes per pool.
    #[arg(long)]
    size: usize,
    /// Ground-truth cascade file; when given, pool results are evaluated.
    #[arg(long)]
    cascade: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Known outbreak origin.
    #[arg(long)]
    root: usize,
    /// Pool file with 0/1 results.
    #[arg(long)]
    pools: PathBuf,
    #[command(flatten)]
    disease: DiseaseArgs,
    /// Search refinement depth; higher is slower and more accurate.
    #[arg(long, default_value_t = 2)]
    level: usize,
}

#[derive(Args)]
struct ReconstructNoisyArgs {
    #[command(flatten)]
    base: ReconstructArgs,
    /// False-positive rate of a pool test.
    #[arg(long)]
    p_fp: f64,
    /// False-negative rate of a pool test.
    #[arg(long)]
    p_fn: f64,
    /// Maximum number of flippable pools enumerated exhaustively.
    #[arg(long, default_value_t = 16)]
    cap: usize,
    /// Prune the outcome search by its accumulated penalty.
    #[arg(long)]
    prune: bool,
}

#[derive(Args)]
struct ReconstructOnehopArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    pools: PathBuf,
    #[command(flatten)]
    disease: DiseaseArgs,
    /// Independent seeding probability of every node.
    #[arg(long)]
    p0: f64,
    /// Rounding redraws before greedy repair.
    #[arg(long, default_value_t = 100)]
    retries: usize,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    pools: PathBuf,
    #[command(flatten)]
    disease: DiseaseArgs,
    /// single-seed or one-hop.
    #[arg(long, default_value = "single-seed")]
    mode: String,
    /// Outbreak origin (single-seed mode).
    #[arg(long)]
    root: Option<usize>,
    /// Seeding probability (one-hop mode).
    #[arg(long, default_value_t = 0.01)]
    p0: f64,
    /// Refuse instances with more nodes (or eligible seeds) than this.
    #[arg(long, default_value_t = ORACLE_NODE_CAP)]
    n_cap: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Also write a CSV with per-row wall times to this path.
    #[arg(long)]
    timing_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(core) = e.downcast_ref::<cascade_recon::Error>() {
                if core.is_infeasible() {
                    eprintln!("infeasible: {core}");
                    return ExitCode::from(2);
                }
            }
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    match &cli.command {
        Command::GenGraph(a) => gen_graph(cli, a, &mut rng),
        Command::Simulate(a) => simulate(cli, a, &mut rng),
        Command::Pool(a) => pool(cli, a, &mut rng),
        Command::Reconstruct(a) => reconstruct(cli, a),
        Command::ReconstructNoisy(a) => reconstruct_noisy(cli, a),
        Command::ReconstructOnehop(a) => reconstruct_onehop(cli, a, &mut rng),
        Command::Oracle(a) => oracle(cli, a),
        Command::Experiment(a) => experiment(cli, a),
    }
}

/// Opens `--out`, falling back to standard output.
fn output(cli: &Cli) -> anyhow::Result<Box<dyn Write>> {
    match &cli.out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            Ok(Box::new(f))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

/// Loads an edge list and installs transmission probabilities: `--p`
/// overrides uniformly, `--beta` derives them from contact durations, and
/// with neither the file's values are the probabilities.
fn load_graph(path: &Path, disease: &DiseaseArgs) -> anyhow::Result<Graph> {
    let mode = if disease.p.is_some() || disease.beta.is_some() {
        EdgeValueMode::Duration
    } else {
        EdgeValueMode::Probability
    };
    let mut g = load_edge_list(open(path)?, mode)?.graph;
    if let Some(p) = disease.p {
        g.set_uniform_prob(p)?;
    } else if let Some(beta) = disease.beta {
        g.set_probs_from_durations(beta)?;
    }
    Ok(g)
}

fn read_observed_pools(path: &Path) -> anyhow::Result<(PoolSet, Observation)> {
    let (ps, obs) = read_pools(open(path)?)?;
    let obs = obs.ok_or_else(|| {
        anyhow!("pool file {} carries no 0/1 results; evaluate it first", path.display())
    })?;
    Ok((ps, obs))
}

fn gen_graph(cli: &Cli, a: &GenGraphArgs, rng: &mut ChaCha8Rng) -> anyhow::Result<()> {
    let spec: NetworkSpec = a.model.parse()?;
    let mut g = match spec {
        NetworkSpec::Gnq { n, q } => generate_gnq(n, q, rng)?,
        NetworkSpec::Ba { n, m } => generate_ba(n, m, rng)?,
        NetworkSpec::EdgeList { .. } => {
            return Err(anyhow!("gen-graph builds random models; load edge lists directly"))
        }
    };
    g.set_uniform_prob(a.p)?;
    let mut w = output(cli)?;
    g.write_edge_list(&mut w)?;
    log::info!("generated {} nodes, {} edges", g.node_count(), g.edge_count());
    Ok(())
}

fn parse_mode(mode: &str) -> anyhow::Result<bool> {
    match mode {
        "single-seed" => Ok(false),
        "one-hop" => Ok(true),
        other => Err(anyhow!("unknown mode {other:?} (expected single-seed or one-hop)")),
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs, rng: &mut ChaCha8Rng) -> anyhow::Result<()> {
    let g = load_graph(&a.graph, &a.disease)?;
    let one_hop = parse_mode(&a.mode)?;
    let cascade = if one_hop {
        simulate_one_hop(&time_expand(&g), a.p0, rng)?
    } else {
        let root = a.root.unwrap_or_else(|| rng.gen_range(0..g.node_count()));
        simulate_single_seed(&g, root, rng)?
    };
    let mut w = output(cli)?;
    write_cascade(&cascade, &mut w)?;
    log::info!("{} nodes infected", cascade.infected().len());
    Ok(())
}

fn pool(cli: &Cli, a: &PoolArgs, rng: &mut ChaCha8Rng) -> anyhow::Result<()> {
    let g = load_graph(&a.graph, &DiseaseArgs { p: Some(0.5), beta: None })?;
    let one_hop = parse_mode(&a.mode)?;
    let ids: Vec<usize> = if one_hop {
        time_expand(&g).combined_right_ids()
    } else {
        (0..g.node_count()).collect()
    };
    let ps = cascade_recon::design_random_pools(&ids, a.ratio, a.size, rng)?;
    let obs = match &a.cascade {
        Some(path) => {
            let cascade = read_cascade(open(path)?, g.node_count())?;
            Some(cascade_recon::evaluate_pools(&ps, &cascade.infected()))
        }
        None => None,
    };
    let mut w = output(cli)?;
    write_pools(&ps, obs.as_ref(), &mut w)?;
    Ok(())
}

fn write_reconstruction(
    cli: &Cli,
    cascade: &Cascade,
    cost: &cascade_recon::cost::CostBreakdown,
    preamble: &[String],
) -> anyhow::Result<()> {
    let mut w = output(cli)?;
    write_cascade(cascade, &mut w)?;
    drop(w);
    let stdout = std::io::stdout();
    let mut so = stdout.lock();
    for line in preamble {
        writeln!(so, "{line}")?;
    }
    writeln!(so, "{}", cascade_recon::cost::CostBreakdown::CSV_HEADER)?;
    cost.write_csv_row(&mut so)?;
    Ok(())
}

fn reconstruct(cli: &Cli, a: &ReconstructArgs) -> anyhow::Result<()> {
    let g = load_graph(&a.graph, &a.disease)?;
    let cm = compute_costs(&g, None)?;
    let (ps, obs) = read_observed_pools(&a.pools)?;
    let r = approx_cascade(&g, &cm, a.root, &ps, &obs, a.level)?;
    write_reconstruction(cli, &r.cascade, &r.cost, &[])?;
    Ok(())
}

fn reconstruct_noisy(cli: &Cli, a: &ReconstructNoisyArgs) -> anyhow::Result<()> {
    let g = load_graph(&a.base.graph, &a.base.disease)?;
    let cm = compute_costs(&g, None)?;
    let (ps, obs) = read_observed_pools(&a.base.pools)?;
    let nm = NoiseModel::new(a.p_fp, a.p_fn)?;
    let r = approx_cascade_noisy_with_cap(
        &g, &cm, a.base.root, &ps, &obs, &nm, a.base.level, a.prune, a.cap,
    )?;
    let flipped: Vec<String> = (0..ps.len())
        .filter(|&p| obs.is_positive(p) != r.outcome_used.is_positive(p))
        .map(|p| p.to_string())
        .collect();
    let preamble = vec![
        format!("# flipped_pools: {}", flipped.join(" ")),
        format!("# noisy_penalty: {}", r.noisy_penalty),
    ];
    write_reconstruction(cli, &r.cascade, &r.cost, &preamble)?;
    Ok(())
}

fn reconstruct_onehop(cli: &Cli, a: &ReconstructOnehopArgs, rng: &mut ChaCha8Rng) -> anyhow::Result<()> {
    let g = load_graph(&a.graph, &a.disease)?;
    let bip = time_expand(&g);
    let p0 = vec![a.p0; g.node_count()];
    let cm = compute_costs_bipartite(&bip, &p0)?;
    let (ps, obs) = read_observed_pools(&a.pools)?;
    let (sol, rounding) = one_hop_reconstruct(&bip, &cm, &ps, &obs, rng, a.retries)?;
    let cost = one_hop_cost(&rounding.cascade, &bip, &cm)?;
    let cascade = Cascade::OneHop(rounding.cascade.clone());
    let mut w = output(cli)?;
    write_cascade(&cascade, &mut w)?;
    drop(w);
    println!("# lp_objective: {}", sol.absolute_objective());
    println!("# draws: {}", rounding.draws);
    println!("# repaired: {}", rounding.repaired);
    println!("# total_cost: {}", cost.total);
    Ok(())
}

fn oracle(cli: &Cli, a: &OracleArgs) -> anyhow::Result<()> {
    let g = load_graph(&a.graph, &a.disease)?;
    let (ps, obs) = read_observed_pools(&a.pools)?;
    let one_hop = parse_mode(&a.mode)?;
    let r: OracleResult = if one_hop {
        let bip = time_expand(&g);
        let p0 = vec![a.p0; g.node_count()];
        let cm = compute_costs_bipartite(&bip, &p0)?;
        brute_force_one_hop_mle(&bip, &cm, &ps, &obs, a.n_cap)?
    } else {
        let root = a.root.ok_or_else(|| anyhow!("--root is required in single-seed mode"))?;
        let cm = compute_costs(&g, None)?;
        brute_force_pool_mle(&g, &cm, root, &ps, &obs, a.n_cap)?
    };
    let mut w = output(cli)?;
    write_cascade(&r.optimal_cascade, &mut w)?;
    drop(w);
    println!("# optimal_cost: {}", r.optimal_cost);
    println!("# instances_enumerated: {}", r.instances_enumerated);
    Ok(())
}

fn experiment(cli: &Cli, a: &ExperimentArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&a.config)
        .with_context(|| format!("reading {}", a.config.display()))?;
    let cfg = parse_experiment_config(&text)?;
    log::info!(
        "grid: {} p values, {} ratios, {} sizes, {} replicates, {} methods",
        cfg.p.len(),
        cfg.pool_ratios.len(),
        cfg.pool_sizes.len(),
        cfg.replicates,
        cfg.methods.len()
    );
    let rows = run_experiment(&cfg)?;
    let mut w = output(cli)?;
    write_csv(&rows, &mut w)?;
    if let Some(path) = &a.timing_out {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_timing_csv(&rows, f)?;
    }
    Ok(())
}
