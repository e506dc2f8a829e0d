//! Command-line experiment runner: builds a run configuration from a task
//! preset, an optional JSON config file and flag overrides, runs the
//! algorithm, and writes trials.csv plus the resolved config.json.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use multidex::driver::{run_multidex, RunConfig};
use multidex::moea::AggregationMode;
use multidex::TaskId;

#[derive(Parser, Debug)]
#[command(
    name = "multidex",
    about = "Model-based policy search with multi-objective exploration"
)]
struct Args {
    /// Task: seq_goal, drawer or pendulum (required unless --config is given)
    #[arg(long)]
    task: Option<TaskId>,

    /// Master RNG seed
    #[arg(long)]
    seed: Option<u64>,

    /// Total episode budget (bootstraps included)
    #[arg(long)]
    episodes: Option<usize>,

    /// Probability of picking a random Pareto-front member
    #[arg(long)]
    epsilon: Option<f64>,

    /// Objective aggregation: pareto, fixed or stochastic
    #[arg(long)]
    aggregation: Option<AggregationMode>,

    /// NSGA-II population size
    #[arg(long)]
    pop: Option<usize>,

    /// NSGA-II generations per episode
    #[arg(long)]
    gens: Option<usize>,

    /// Output directory for trials.csv and config.json
    #[arg(long)]
    out: PathBuf,

    /// JSON file with a full run configuration (flags override its fields)
    #[arg(long)]
    config: Option<PathBuf>,

    /// Use the reduced desk-scale search budget and buffers
    #[arg(long)]
    desk_scale: bool,
}

fn resolve_config(args: &Args) -> Result<RunConfig, String> {
    let mut cfg = match (&args.config, args.task) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
            let mut cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| format!("invalid config file {}: {e}", path.display()))?;
            if let Some(task) = args.task {
                cfg.task = task;
            }
            cfg
        }
        (None, Some(task)) => {
            let seed = args.seed.unwrap_or(0);
            if args.desk_scale {
                RunConfig::desk_scale(task, seed)
            } else {
                RunConfig::for_task(task, seed)
            }
        }
        (None, None) => return Err("either --task or --config is required".into()),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(episodes) = args.episodes {
        cfg.max_episodes = episodes;
    }
    if let Some(epsilon) = args.epsilon {
        cfg.epsilon = epsilon;
    }
    if let Some(aggregation) = args.aggregation {
        cfg.aggregation = aggregation;
    }
    if let Some(pop) = args.pop {
        cfg.nsga2.population_size = pop;
    }
    if let Some(gens) = args.gens {
        cfg.nsga2.generations = gens;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn run(args: &Args) -> Result<(), String> {
    let cfg = resolve_config(args)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| format!("cannot create {}: {e}", args.out.display()))?;
    let config_json =
        serde_json::to_string_pretty(&cfg).map_err(|e| format!("config serialization: {e}"))?;
    std::fs::write(args.out.join("config.json"), config_json)
        .map_err(|e| format!("cannot write config.json: {e}"))?;
    let log = run_multidex(&cfg).map_err(|e| format!("run failed: {e}"))?;
    std::fs::write(args.out.join("trials.csv"), log.to_csv())
        .map_err(|e| format!("cannot write trials.csv: {e}"))?;
    eprintln!(
        "{}: {} episodes, best reward {}",
        cfg.task,
        log.records.len(),
        log.best_reward()
    );
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
