//! Command line front end: simulations, scenario files, trace aggregation and
//! the live session server.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use elicit_core::experiment::{self, AggregateRow};
use elicit_core::{
    generate_scenario, run_experiment, CostModel, CriterionSpec, ExperimentConfig, ScenarioConfig, ScenarioFile,
    SubsetPolicy,
};
use elicit_service::SessionStore;

#[derive(Parser)]
#[command(
    name = "elicit",
    version,
    about = "Budgeted preference elicitation under a Plackett-Luce model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare criteria over simulated trials and write traces and aggregates.
    Simulate(SimulateArgs),
    /// Generate a random scenario file.
    Scenario(ScenarioArgs),
    /// Fold trace directories into TV curves and question-type counts.
    Aggregate(AggregateArgs),
    /// Serve live elicitation sessions over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ShapeArgs {
    /// Number of alternatives.
    #[arg(long, default_value_t = 10)]
    m: usize,
    /// Alternative attribute count.
    #[arg(long, default_value_t = 3)]
    alt_dim: usize,
    /// Agent attribute count.
    #[arg(long, default_value_t = 3)]
    agent_dim: usize,
    /// Key agents whose preferences are predicted.
    #[arg(long, default_value_t = 5)]
    n_key: usize,
    /// Regular agents that only supply initialization answers.
    #[arg(long, default_value_t = 20)]
    n_regular: usize,
}

impl ShapeArgs {
    fn config(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            m: self.m,
            alt_dim: self.alt_dim,
            agent_dim: self.agent_dim,
            n_key: self.n_key,
            n_regular: self.n_regular,
            seed,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 400)]
    trials: usize,
    /// Dollars available per run.
    #[arg(long, default_value_t = 0.9)]
    budget: f64,
    /// Comma-separated criteria: mpc, d-opt, e-opt, random, mpc-topK[@agent], mpc-rankedK[@agent].
    #[arg(long, value_delimiter = ',', default_value = "mpc,d-opt,e-opt,random")]
    criteria: Vec<CriterionSpec>,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated question templates as k:l.
    #[arg(long, value_delimiter = ',', value_parser = parse_template, default_value = "1:2,1:10,9:10")]
    templates: Vec<(usize, usize)>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Sampled responses per expected-gain estimate when enumeration is too large.
    #[arg(long, default_value_t = 32)]
    mc_samples: usize,
    /// Free pairwise answers each run starts from.
    #[arg(long, default_value_t = 50)]
    init_count: usize,
    /// Subsets sampled per agent and template.
    #[arg(long, default_value_t = 10)]
    subsets: usize,
    /// Cost table with `k,l,dollars` lines; the built-in hotel model otherwise.
    #[arg(long)]
    cost_table: Option<PathBuf>,
    #[command(flatten)]
    shape: ShapeArgs,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave the ground-truth matrix out of the file.
    #[arg(long)]
    no_truth: bool,
    #[command(flatten)]
    shape: ShapeArgs,
}

#[derive(Args)]
struct AggregateArgs {
    /// Directories holding trace files, or simulate output directories.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Probe grid end; the largest cumulative cost in the traces when omitted.
    #[arg(long)]
    budget: Option<f64>,
    /// Number of alternatives, used to classify question types.
    #[arg(long, default_value_t = 10)]
    m: usize,
    /// Where to write aggregate.csv and question_types.csv; the aggregate goes
    /// to standard output when omitted.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Persist sessions as event logs here and restore them on start.
    #[arg(long)]
    log_dir: Option<PathBuf>,
}

fn parse_template(s: &str) -> std::result::Result<(usize, usize), String> {
    let (k, l) = s.split_once(':').ok_or_else(|| format!("template {s:?} is not k:l"))?;
    let k = k.trim().parse().map_err(|_| format!("bad k in {s:?}"))?;
    let l = l.trim().parse().map_err(|_| format!("bad l in {s:?}"))?;
    Ok((k, l))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Scenario(a) => scenario(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Serve(a) => serve(a),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cost_model = match &a.cost_table {
        Some(p) => CostModel::load_table(p).with_context(|| format!("reading {}", p.display()))?,
        None => CostModel::MturkHotels,
    };
    let mut cfg = ExperimentConfig {
        scenario: a.shape.config(0),
        criteria: a.criteria,
        trials: a.trials,
        budget: a.budget,
        init_count: a.init_count,
        templates: a.templates,
        subsets: SubsetPolicy::Sampled {
            count: a.subsets,
            seed: 0,
        },
        cost_model,
        seed: a.seed,
        out_dir: Some(a.out_dir.clone()),
        ..ExperimentConfig::default()
    };
    cfg.gain.mc_samples = a.mc_samples;
    let result = run_experiment(&cfg)?;
    for f in &result.failures {
        eprintln!(
            "trial {} dropped ({}): {}",
            f.trial,
            f.criterion.as_deref().unwrap_or("setup"),
            f.message
        );
    }
    println!(
        "{} of {} trials completed; outputs in {}",
        result.trials.len(),
        cfg.trials,
        a.out_dir.display()
    );
    print_final(&result.curves);
    Ok(())
}

/// One line per criterion with the TV at the last probe cost.
fn print_final(curves: &[AggregateRow]) {
    let Some(last) = curves.iter().map(|r| r.probe_cost).reduce(f64::max) else {
        return;
    };
    for r in curves.iter().filter(|r| r.probe_cost == last) {
        println!(
            "{:>12} at ${:.2}: TV plurality {:.4} ± {:.4}, TV Borda {:.4} ± {:.4} ({} trials)",
            r.criterion,
            r.probe_cost,
            r.mean_tv_plurality,
            r.stderr_tv_plurality,
            r.mean_tv_borda,
            r.stderr_tv_borda,
            r.n_trials
        );
    }
}

fn scenario(a: ScenarioArgs) -> Result<()> {
    let (s, truth) = generate_scenario(&a.shape.config(a.seed))?;
    let file = ScenarioFile::new(&s, (!a.no_truth).then_some(&truth));
    match a.out {
        Some(path) => file.save(&path)?,
        None => println!("{}", serde_json::to_string_pretty(&file)?),
    }
    Ok(())
}

/// Accepts either a directory of trace files or one with a `traces` child.
fn trace_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("traces");
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

fn aggregate(a: AggregateArgs) -> Result<()> {
    let dirs: Vec<PathBuf> = a.dirs.iter().map(|d| trace_dir(d)).collect();
    let runs = experiment::load_trace_dirs(&dirs)?;
    let budget = match a.budget {
        Some(b) => b,
        None => runs
            .iter()
            .flat_map(|(_, rs)| rs.iter().filter_map(|r| r.last()))
            .map(|r| r.cumulative_cost)
            .fold(0.0, f64::max),
    };
    if !(budget >= 0.0 && budget.is_finite()) {
        bail!("budget must be a finite non-negative amount, got {budget}");
    }
    let curves = experiment::aggregate_curves(&runs, budget);
    let histogram = experiment::question_type_histogram(&runs, a.m);
    match a.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("aggregate.csv"), experiment::aggregate_csv(&curves))?;
            std::fs::write(dir.join("question_types.csv"), experiment::histogram_csv(&histogram))?;
        }
        None => print!("{}", experiment::aggregate_csv(&curves)),
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let store = match &a.log_dir {
        Some(dir) => SessionStore::with_log_dir(dir)?,
        None => SessionStore::in_memory(),
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        elicit_service::serve(listener, Arc::new(store)).await?;
        Ok(())
    })
}
