//! Batch experiments: training and evaluation loops over seeds and arrival
//! rates, per-seed CSV export, checkpoints and a cross-seed summary.
//!
//! Per-seed CSV columns, in order: `episode, steps, mean_reward, avg_aoi,
//! total_cost, acceptance_rate, seed, phase, penalties, decisions,
//! infeasible, updates, critic_loss, actor_loss`. Multi-agent runs append
//! `critic_loss_n, actor_loss_n` for each agent `n`. Floats carry 9
//! significant digits.

pub mod config;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::run_greedy_episode;
use crate::env::Env;
use crate::error::{Error, Result};
use crate::learn::checkpoint::config_hash;
use crate::learn::{make_agent, run_episode, AgentLoss, Checkpoint, EpisodeReport};
use crate::service::ChainCatalog;
use crate::topology::{build_topology, NetworkGraph};
use crate::util::{derive_seed, fmt_sig9};

pub use config::{AgentChoice, ExperimentConfig, FULL_SCALE_EPISODES};

pub const CSV_COLUMNS: [&str; 14] = [
    "episode",
    "steps",
    "mean_reward",
    "avg_aoi",
    "total_cost",
    "acceptance_rate",
    "seed",
    "phase",
    "penalties",
    "decisions",
    "infeasible",
    "updates",
    "critic_loss",
    "actor_loss",
];

pub const SUMMARY_COLUMNS: [&str; 12] = [
    "agent",
    "arrival_rate",
    "seeds",
    "phase",
    "mean_reward_mean",
    "mean_reward_std",
    "avg_aoi_mean",
    "avg_aoi_std",
    "total_cost_mean",
    "total_cost_std",
    "acceptance_rate_mean",
    "acceptance_rate_std",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Eval,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub episode: usize,
    pub phase: Phase,
    pub seed: u64,
    pub report: EpisodeReport,
}

impl EpisodeRow {
    fn record(&self, agents: usize) -> Vec<String> {
        let m = &self.report.metrics;
        let mean = |f: fn(&AgentLoss) -> f64| {
            let ls = &self.report.losses;
            if ls.is_empty() {
                0.0
            } else {
                ls.iter().map(f).sum::<f64>() / ls.len() as f64
            }
        };
        let mut rec = vec![
            self.episode.to_string(),
            m.steps.to_string(),
            fmt_sig9(m.mean_reward()),
            fmt_sig9(m.avg_aoi),
            fmt_sig9(m.total_cost),
            fmt_sig9(m.acceptance_rate()),
            self.seed.to_string(),
            self.phase.name().to_string(),
            m.penalties.to_string(),
            self.report.decisions.to_string(),
            self.report.infeasible.to_string(),
            self.report.updates.to_string(),
            fmt_sig9(mean(|l| l.critic)),
            fmt_sig9(mean(|l| l.actor)),
        ];
        if agents > 1 {
            for n in 0..agents {
                let l = self.report.losses.get(n).copied().unwrap_or_default();
                rec.push(fmt_sig9(l.critic));
                rec.push(fmt_sig9(l.actor));
            }
        }
        rec
    }
}

/// Per-seed CSV header for `agents` learners.
pub fn csv_header(agents: usize) -> Vec<String> {
    let mut h: Vec<String> = CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
    if agents > 1 {
        for n in 0..agents {
            h.push(format!("critic_loss_{n}"));
            h.push(format!("actor_loss_{n}"));
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub agents: usize,
    pub rows: Vec<EpisodeRow>,
    pub csv: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

/// Mean statistics of one seed: (mean reward, average AoI, total cost,
/// acceptance rate).
pub type SeedStats = [f64; 4];

impl SeedResult {
    /// Evaluation episodes if any ran, else the final training window.
    pub fn stats(&self, final_window: usize) -> (Phase, SeedStats) {
        let eval: Vec<&EpisodeRow> = self.rows.iter().filter(|r| r.phase == Phase::Eval).collect();
        let (phase, rows) = if eval.is_empty() {
            let train: Vec<&EpisodeRow> = self.rows.iter().filter(|r| r.phase == Phase::Train).collect();
            let k = train.len().saturating_sub(final_window);
            (Phase::Train, train[k..].to_vec())
        } else {
            (Phase::Eval, eval)
        };
        (phase, mean_stats(&rows))
    }
}

pub fn mean_stats(rows: &[&EpisodeRow]) -> SeedStats {
    let mut s = [0.0; 4];
    if rows.is_empty() {
        return s;
    }
    for r in rows {
        let m = &r.report.metrics;
        s[0] += m.mean_reward();
        s[1] += m.avg_aoi;
        s[2] += m.total_cost;
        s[3] += m.acceptance_rate();
    }
    s.map(|v| v / rows.len() as f64)
}

/// Sample mean and standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub agent: AgentChoice,
    pub arrival_rate: f64,
    pub seeds: usize,
    pub phase: Phase,
    /// (mean, std) across seeds of reward, AoI, cost and acceptance rate.
    pub stats: [(f64, f64); 4],
}

impl SummaryRow {
    fn record(&self) -> Vec<String> {
        let mut rec = vec![
            self.agent.name().to_string(),
            fmt_sig9(self.arrival_rate),
            self.seeds.to_string(),
            self.phase.name().to_string(),
        ];
        for (m, s) in self.stats {
            rec.push(fmt_sig9(m));
            rec.push(fmt_sig9(s));
        }
        rec
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    pub rate: f64,
    pub seeds: Vec<SeedResult>,
    pub summary: SummaryRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub rates: Vec<RateResult>,
    pub summary_csv: PathBuf,
}

/// Environment of `cfg`, loading the topology and catalog documents when given.
pub fn build_env(cfg: &ExperimentConfig) -> Result<Env> {
    let graph = match &cfg.topology_file {
        Some(p) => NetworkGraph::from_toml(&std::fs::read_to_string(p)?)?,
        None => build_topology(&cfg.env.topology)?,
    };
    let catalog = match &cfg.catalog_file {
        Some(p) => ChainCatalog::from_toml(&std::fs::read_to_string(p)?)?,
        None => ChainCatalog::generate(&cfg.env.catalog)?,
    };
    Env::with_parts(cfg.env.clone(), graph, catalog)
}

pub fn train_seed(seed: u64, episode: usize) -> u64 {
    derive_seed(seed, &[0x7a, episode as u64])
}

/// Evaluation seeds come from a stream disjoint from training.
pub fn eval_seed(seed: u64, episode: usize) -> u64 {
    derive_seed(seed, &[0xe7, episode as u64])
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Trains (unless `eval_only` is given) and evaluates one seed, writing its
/// CSV and checkpoints into `dir`.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path, eval_only: Option<&Checkpoint>) -> Result<SeedResult> {
    let mut env = build_env(cfg)?;
    let mut rows = Vec::new();
    let mut checkpoint = None;
    let name = cfg.agent.name();
    let log = |phase: Phase, e: usize, r: &EpisodeReport| {
        if cfg.log_every > 0 && (e + 1) % cfg.log_every == 0 {
            eprintln!(
                "{name} seed {seed} {} {}: reward {} aoi {} cost {} acceptance {}",
                phase.name(),
                e + 1,
                fmt_sig9(r.metrics.mean_reward()),
                fmt_sig9(r.metrics.avg_aoi),
                fmt_sig9(r.metrics.total_cost),
                fmt_sig9(r.metrics.acceptance_rate()),
            );
        }
    };
    let agents;
    if let Some(kind) = cfg.agent.greedy() {
        agents = 1;
        if eval_only.is_some() {
            return Err(Error::Config("greedy baselines have no checkpoints".into()));
        }
        for e in 0..cfg.episodes {
            let report = run_greedy_episode(&mut env, kind, train_seed(seed, e))?;
            log(Phase::Train, e, &report);
            rows.push(EpisodeRow { episode: e, phase: Phase::Train, seed, report });
        }
        for e in 0..cfg.eval_episodes {
            let report = run_greedy_episode(&mut env, kind, eval_seed(seed, e))?;
            rows.push(EpisodeRow { episode: e, phase: Phase::Eval, seed, report });
        }
    } else {
        let kind = cfg.agent.learner().expect("learning agent");
        let mut lc = cfg.learning.clone();
        lc.seed = derive_seed(seed, &[0xa6, cfg.learning.seed]);
        let mut agent = make_agent(kind, &lc, &env)?;
        agents = agent.groups();
        let hash = config_hash(&cfg.to_toml()?);
        match eval_only {
            Some(ck) => ck.restore(agent.as_mut())?,
            None => {
                for e in 0..cfg.episodes {
                    let p = e as f64 / cfg.episodes as f64;
                    let report = run_episode(&mut env, agent.as_mut(), train_seed(seed, e), true, p)?;
                    log(Phase::Train, e, &report);
                    rows.push(EpisodeRow { episode: e, phase: Phase::Train, seed, report });
                    if cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0 && e + 1 < cfg.episodes {
                        Checkpoint::capture(agent.as_ref(), hash.clone())
                            .save(&dir.join(format!("{name}-seed{seed}-ep{}.json", e + 1)))?;
                    }
                }
                let path = dir.join(format!("{name}-seed{seed}.ckpt.json"));
                Checkpoint::capture(agent.as_ref(), hash).save(&path)?;
                checkpoint = Some(path);
            }
        }
        for e in 0..cfg.eval_episodes {
            let report = run_episode(&mut env, agent.as_mut(), eval_seed(seed, e), false, 1.0)?;
            rows.push(EpisodeRow { episode: e, phase: Phase::Eval, seed, report });
        }
    }
    let csv = dir.join(format!("{name}-seed{seed}.csv"));
    write_csv(&csv, &csv_header(agents), rows.iter().map(|r| r.record(agents)))?;
    Ok(SeedResult { seed, agents, rows, csv, checkpoint })
}

fn run_seeds(cfg: &ExperimentConfig, dir: &Path, eval_only: Option<&Checkpoint>) -> Result<Vec<SeedResult>> {
    let workers = match cfg.workers {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        w => w,
    }
    .min(cfg.seeds.len())
    .max(1);
    if workers == 1 {
        return cfg.seeds.iter().map(|&s| run_seed(cfg, s, dir, eval_only)).collect();
    }
    let mut slots: Vec<Option<Result<SeedResult>>> = (0..cfg.seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    cfg.seeds
                        .iter()
                        .enumerate()
                        .skip(w)
                        .step_by(workers)
                        .map(|(i, &s)| (i, run_seed(cfg, s, dir, eval_only)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("seed worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every seed ran")).collect()
}

/// Runs every seed at every rate of the sweep (or the configured rate) and
/// writes `config.toml` and `summary.csv` into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_with(cfg, None)
}

pub fn run_experiment_with(cfg: &ExperimentConfig, eval_only: Option<&Checkpoint>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if eval_only.is_some() && cfg.eval_episodes == 0 {
        return Err(Error::Config("evaluation needs eval_episodes > 0".into()));
    }
    let dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    let sweep: Vec<Option<f64>> =
        if cfg.rate_sweep.is_empty() { vec![None] } else { cfg.rate_sweep.iter().map(|r| Some(*r)).collect() };
    let mut rates = Vec::with_capacity(sweep.len());
    for rate in sweep {
        let mut c = cfg.clone();
        let sub = match rate {
            Some(r) => {
                c.env.arrivals.rate = r;
                let d = dir.join(format!("rate-{}", fmt_sig9(r)));
                std::fs::create_dir_all(&d)?;
                d
            }
            None => dir.clone(),
        };
        let seeds = run_seeds(&c, &sub, eval_only)?;
        let mut phase = Phase::Eval;
        let per_seed: Vec<SeedStats> = seeds
            .iter()
            .map(|s| {
                let (p, st) = s.stats(c.final_window());
                phase = p;
                st
            })
            .collect();
        let stats = std::array::from_fn(|k| mean_std(&per_seed.iter().map(|s| s[k]).collect::<Vec<_>>()));
        let summary =
            SummaryRow { agent: c.agent, arrival_rate: c.env.arrivals.rate, seeds: seeds.len(), phase, stats };
        rates.push(RateResult { rate: c.env.arrivals.rate, seeds, summary });
    }
    let summary_csv = dir.join("summary.csv");
    let header: Vec<String> = SUMMARY_COLUMNS.iter().map(|s| s.to_string()).collect();
    write_csv(&summary_csv, &header, rates.iter().map(|r| r.summary.record()))?;
    Ok(ExperimentOutput { dir, rates, summary_csv })
}
