use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use aoi_vnf::experiment::{build_env, run_experiment_with, AgentChoice, ExperimentConfig, FULL_SCALE_EPISODES};
use aoi_vnf::learn::Checkpoint;
use aoi_vnf::util::fmt_sig9;

/// Train and evaluate VNF placement agents and greedy baselines.
#[derive(Debug, Parser)]
#[command(name = "aoi-vnf", version)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// dqn, ddpg, ca2c, ma-ca2c, greedy-aoi or greedy-cost.
    #[arg(long)]
    agent: Option<AgentChoice>,
    /// Training episodes per seed.
    #[arg(long)]
    episodes: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip training and evaluate the networks in this checkpoint.
    #[arg(long, value_name = "CHECKPOINT")]
    eval_only: Option<PathBuf>,
    /// Evaluation episodes per seed.
    #[arg(long)]
    eval_episodes: Option<usize>,
    /// Slots per episode.
    #[arg(long)]
    steps: Option<u64>,
    /// Comma-separated arrival rates to sweep.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    /// Concurrent seed workers (0: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Progress line every N episodes.
    #[arg(long)]
    log_every: Option<usize>,
    /// Train for the full 60000-episode protocol.
    #[arg(long)]
    full_scale: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dump_config: bool,
    /// Print the generated topology document and exit.
    #[arg(long)]
    dump_topology: bool,
}

fn resolve(cli: &Cli) -> aoi_vnf::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(a) = cli.agent {
        cfg.agent = a;
    }
    if let Some(e) = cli.episodes {
        cfg.episodes = e;
    }
    if cli.full_scale {
        cfg.episodes = FULL_SCALE_EPISODES;
    }
    if let Some(s) = &cli.seed {
        cfg.seeds = s.clone();
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(e) = cli.eval_episodes {
        cfg.eval_episodes = e;
    }
    if let Some(s) = cli.steps {
        cfg.env.steps_per_episode = s;
    }
    if let Some(r) = &cli.rates {
        cfg.rate_sweep = r.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(l) = cli.log_every {
        cfg.log_every = l;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> aoi_vnf::Result<()> {
    let cfg = resolve(cli)?;
    if cli.dump_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    if cli.dump_topology {
        print!("{}", build_env(&cfg)?.graph().to_toml()?);
        return Ok(());
    }
    let ckpt = cli.eval_only.as_deref().map(Checkpoint::load).transpose()?;
    let out = run_experiment_with(&cfg, ckpt.as_ref())?;
    for r in &out.rates {
        let [rw, aoi, cost, acc] = r.summary.stats;
        println!(
            "{} rate {}: reward {} ± {}, aoi {} ± {}, cost {} ± {}, acceptance {} ± {}",
            cfg.agent,
            fmt_sig9(r.rate),
            fmt_sig9(rw.0),
            fmt_sig9(rw.1),
            fmt_sig9(aoi.0),
            fmt_sig9(aoi.1),
            fmt_sig9(cost.0),
            fmt_sig9(cost.1),
            fmt_sig9(acc.0),
            fmt_sig9(acc.1),
        );
    }
    println!("results in {}", out.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
