//! Experiment commands behind the `aoi-lab` binary.
//!
//! Every command writes into one output directory and refuses to touch a
//! non-empty one unless forced. Evaluation episodes are indexed per seed, and
//! every policy, learned or not, sees the same environment seeds for a given
//! `(seed, episode)` pair.

mod config;

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{load_config, parse_config, ExperimentConfig, ExperimentSection, PolicyName, SweepAxis};

use crate::baselines::{ItlinqPolicy, RandomPolicy, ThresholdPolicy, WmmsePolicy};
use crate::env::{Episode, EpisodeMetrics, NoEmbedding, Policy, Scenario};
use crate::error::{CheckpointError, Error, Result};
use crate::mappo::checkpoint::{self, architecture_digest, Checkpoint};
use crate::mappo::{derive_seed, evaluate, CurveRow, PolicyParams, Stream, TrainConfig, Trainer};
use crate::queue::BatchDecision;

/// Evaluation episodes draw environment seeds from this index upward, far
/// away from the training episodes of the same base seed.
pub const EVAL_INDEX_BASE: u64 = 1 << 40;

pub fn eval_env_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    (0..episodes as u64).map(|k| derive_seed(seed, Stream::Environment, EVAL_INDEX_BASE + k)).collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub force: bool,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub seed: u64,
    pub sweep_value: Option<f64>,
    pub episode: usize,
    pub mean_aoi_ms: f64,
    pub mean_return: f64,
    pub drops: u64,
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub seed: u64,
    pub episode: usize,
    pub slot: usize,
    pub link: usize,
    pub drop_flag: u8,
    pub power_mw: f64,
    pub aoi_rx: u32,
    pub q1: u32,
    pub q2: u32,
    pub packets_sent: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummaryRow {
    pub policy: String,
    pub axis: String,
    pub sweep_value: f64,
    pub episodes: usize,
    pub mean_aoi_ms: f64,
    pub std_err_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub curves: Vec<(u64, Vec<CurveRow>)>,
    pub checkpoints: Vec<PathBuf>,
}

/// Creates `dir`, or accepts an existing one if it is empty or `force` is set.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = std::fs::read_dir(dir)
            .map_err(|source| Error::Unwritable { path: dir.to_path_buf(), source })?
            .next()
            .is_some();
        if occupied && !force {
            return Err(Error::OutputExists(dir.to_path_buf()));
        }
    }
    std::fs::create_dir_all(dir).map_err(|source| Error::Unwritable { path: dir.to_path_buf(), source })
}

fn create_file(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| Error::Unwritable { path: path.to_path_buf(), source })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| Error::Unwritable { path: path.to_path_buf(), source })
}

fn ckpt_error(path: &Path, e: CheckpointError) -> Error {
    match e {
        CheckpointError::Io(source) => Error::Unwritable { path: path.to_path_buf(), source },
        other => Error::Checkpoint(other),
    }
}

fn save_trainer(path: &Path, t: &Trainer) -> Result<()> {
    let ckpt = Checkpoint {
        links: t.scenario.network.num_links,
        episode: t.episode as u64,
        rng: t.policy_rng().clone(),
        policy: t.policy.clone(),
        critic: Some((t.critic.clone(), t.value_norm)),
    };
    checkpoint::save(path, &ckpt).map_err(|e| ckpt_error(path, e))
}

pub fn config_digest(cfg: &ExperimentConfig) -> u64 {
    architecture_digest(cfg.network.num_links, cfg.train.shared_actor, cfg.train.use_gnn)
}

fn metrics_rows(run_id: &str, seed: u64, sweep_value: Option<f64>, metrics: &[EpisodeMetrics]) -> Vec<MetricsRow> {
    metrics
        .iter()
        .enumerate()
        .map(|(k, m)| MetricsRow {
            run_id: run_id.to_string(),
            seed,
            sweep_value,
            episode: k,
            mean_aoi_ms: m.mean_aoi_ms,
            mean_return: m.total_return,
            drops: m.drops,
            throughput: m.throughput,
        })
        .collect()
}

fn trace_rows(seed: u64, metrics: &[EpisodeMetrics]) -> Vec<TraceRow> {
    let mut out = Vec::new();
    for (k, m) in metrics.iter().enumerate() {
        for r in &m.trace {
            out.push(TraceRow {
                seed,
                episode: k,
                slot: r.slot,
                link: r.link,
                drop_flag: u8::from(r.action.decision == BatchDecision::Drop),
                power_mw: r.action.power_mw,
                aoi_rx: r.queue.aoi_rx,
                q1: r.queue.q1,
                q2: r.queue.q2,
                packets_sent: r.events.packets_sent,
            });
        }
    }
    out
}

/// Runs a non-learning policy on the evaluation episodes of `seed`.
pub fn run_baseline(cfg: &ExperimentConfig, policy: PolicyName, scenario: &Scenario, seed: u64, keep_trace: bool) -> Vec<EpisodeMetrics> {
    eval_env_seeds(seed, cfg.experiment.eval_episodes)
        .into_iter()
        .enumerate()
        .map(|(k, env_seed)| {
            let mut p: Box<dyn Policy> = match policy {
                PolicyName::Wmmse => Box::new(WmmsePolicy { config: cfg.wmmse.clone() }),
                PolicyName::Itlinq => Box::new(ItlinqPolicy { config: cfg.itlinq.clone() }),
                PolicyName::Random => Box::new(RandomPolicy::new(derive_seed(seed, Stream::Policy, k as u64))),
                PolicyName::Threshold => Box::new(ThresholdPolicy),
                PolicyName::Mappo => unreachable!("learned policies go through evaluate"),
            };
            Episode::reset(scenario, env_seed, &mut NoEmbedding).run(p.as_mut(), keep_trace)
        })
        .collect()
}

/// Runs the learned policy on the evaluation episodes of `seed`.
pub fn run_learned(cfg: &ExperimentConfig, params: &PolicyParams, scenario: &Scenario, seed: u64, keep_trace: bool) -> Vec<EpisodeMetrics> {
    let seeds = eval_env_seeds(seed, cfg.experiment.eval_episodes);
    evaluate(params, scenario, &seeds, seed, cfg.experiment.deterministic_eval, keep_trace)
}

/// Actor and encoder weights only; critic tensors are never read.
pub fn load_policy(cfg: &ExperimentConfig, path: &Path) -> Result<PolicyParams> {
    Ok(checkpoint::load(path, config_digest(cfg), false)?.policy)
}

/// Trains one policy per seed. Writes `seed{s}/curve.csv`, periodic and final
/// checkpoints, the seed-averaged `curve_mean.csv` and the resolved config.
pub fn cmd_train(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<TrainSummary> {
    prepare_out_dir(&opts.out_dir, opts.force)?;
    std::fs::write(opts.out_dir.join("config.toml"), cfg.to_toml())
        .map_err(|source| Error::Unwritable { path: opts.out_dir.clone(), source })?;
    let scenario = cfg.scenario();
    let mut summary = TrainSummary { curves: Vec::new(), checkpoints: Vec::new() };
    for &seed in &cfg.experiment.seeds {
        let dir = opts.out_dir.join(format!("seed{seed}"));
        std::fs::create_dir_all(&dir).map_err(|source| Error::Unwritable { path: dir.clone(), source })?;
        let mut trainer = Trainer::new(&scenario, &cfg.train, seed);
        let mut rows = Vec::with_capacity(cfg.train.episodes);
        for _ in 0..cfg.train.episodes {
            match trainer.train_episode() {
                Ok(row) => rows.push(row),
                Err(e) => {
                    write_csv(&dir.join("curve.csv"), &rows)?;
                    save_trainer(&dir.join("diverged.ckpt"), &trainer)?;
                    return Err(e);
                }
            }
            let every = cfg.train.checkpoint_every;
            if every > 0 && trainer.episode.is_multiple_of(every) && trainer.episode < cfg.train.episodes {
                let p = dir.join(format!("checkpoint_ep{}.ckpt", trainer.episode));
                save_trainer(&p, &trainer)?;
                summary.checkpoints.push(p);
            }
        }
        write_csv(&dir.join("curve.csv"), &rows)?;
        let p = dir.join("final.ckpt");
        save_trainer(&p, &trainer)?;
        summary.checkpoints.push(p);
        summary.curves.push((seed, rows));
    }
    let n = summary.curves.len() as f64;
    let mean: Vec<CurveRow> = (0..cfg.train.episodes)
        .map(|e| {
            let avg = |f: fn(&CurveRow) -> f64| summary.curves.iter().map(|(_, r)| f(&r[e])).sum::<f64>() / n;
            CurveRow {
                episode: e,
                mean_return: avg(|r| r.mean_return),
                mean_aoi: avg(|r| r.mean_aoi),
                actor_loss: avg(|r| r.actor_loss),
                critic_loss: avg(|r| r.critic_loss),
                gnn_loss: avg(|r| r.gnn_loss),
                entropy: avg(|r| r.entropy),
            }
        })
        .collect();
    write_csv(&opts.out_dir.join("curve_mean.csv"), &mean)?;
    Ok(summary)
}

fn write_eval(opts: &RunOptions, rows: &[MetricsRow], trace: &[TraceRow]) -> Result<()> {
    write_csv(&opts.out_dir.join("metrics.csv"), rows)?;
    write_csv(&opts.out_dir.join("trace.csv"), trace)
}

/// Evaluates a checkpoint on every configured seed; writes `metrics.csv`
/// and the per-slot `trace.csv`.
pub fn cmd_eval(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<MetricsRow>> {
    let path = opts.checkpoint.as_ref().ok_or_else(|| Error::Usage("eval needs --checkpoint".into()))?;
    let params = load_policy(cfg, path)?;
    prepare_out_dir(&opts.out_dir, opts.force)?;
    let scenario = cfg.scenario();
    let (mut rows, mut trace) = (Vec::new(), Vec::new());
    for &seed in &cfg.experiment.seeds {
        let m = run_learned(cfg, &params, &scenario, seed, true);
        rows.extend(metrics_rows(PolicyName::Mappo.as_str(), seed, None, &m));
        trace.extend(trace_rows(seed, &m));
    }
    write_eval(opts, &rows, &trace)?;
    Ok(rows)
}

/// Same outputs as [`cmd_eval`] for a non-learning policy, on the same
/// environment seeds.
pub fn cmd_baseline(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<MetricsRow>> {
    let policy = cfg.experiment.policy;
    if policy == PolicyName::Mappo {
        return Err(Error::Usage("baseline needs --policy wmmse|itlinq|random|threshold; use eval for mappo".into()));
    }
    prepare_out_dir(&opts.out_dir, opts.force)?;
    let scenario = cfg.scenario();
    let (mut rows, mut trace) = (Vec::new(), Vec::new());
    for &seed in &cfg.experiment.seeds {
        let m = run_baseline(cfg, policy, &scenario, seed, true);
        rows.extend(metrics_rows(policy.as_str(), seed, None, &m));
        trace.extend(trace_rows(seed, &m));
    }
    write_eval(opts, &rows, &trace)?;
    Ok(rows)
}

/// Evaluates the configured policy at every value of the sweep axis. Packet
/// length and arrival sweeps reuse one trained checkpoint; the link-count
/// sweep trains a shared actor afresh for every `M`.
pub fn cmd_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<SweepSummaryRow>> {
    let axis = cfg.experiment.sweep_axis;
    let policy = cfg.experiment.policy;
    let learned = match (policy, axis) {
        (PolicyName::Mappo, SweepAxis::NumLinks) => None,
        (PolicyName::Mappo, _) => {
            let path = opts.checkpoint.as_ref().ok_or_else(|| Error::Usage("sweep with mappo needs --checkpoint".into()))?;
            Some(load_policy(cfg, path)?)
        }
        _ => None,
    };
    prepare_out_dir(&opts.out_dir, opts.force)?;
    let base = cfg.scenario();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for value in cfg.experiment.sweep_values() {
        let scenario = axis.apply(&base, value);
        scenario.network.validate()?;
        scenario.arrival.validate()?;
        let run_id = format!("{}:{}={value}", policy.as_str(), axis.as_str());
        let mut aois = Vec::new();
        for &seed in &cfg.experiment.seeds {
            let m = match (policy, &learned) {
                (PolicyName::Mappo, Some(params)) => run_learned(cfg, params, &scenario, seed, false),
                (PolicyName::Mappo, None) => {
                    let tc = TrainConfig { shared_actor: true, ..cfg.train.clone() };
                    let mut trainer = Trainer::new(&scenario, &tc, seed);
                    for _ in 0..tc.episodes {
                        trainer.train_episode()?;
                    }
                    run_learned(cfg, &trainer.policy, &scenario, seed, false)
                }
                _ => run_baseline(cfg, policy, &scenario, seed, false),
            };
            aois.extend(m.iter().map(|e| e.mean_aoi_ms));
            rows.extend(metrics_rows(&run_id, seed, Some(value), &m));
        }
        let n = aois.len() as f64;
        let mean = aois.iter().sum::<f64>() / n;
        let var = if n > 1.0 { aois.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        summary.push(SweepSummaryRow {
            policy: policy.as_str().into(),
            axis: axis.as_str().into(),
            sweep_value: value,
            episodes: aois.len(),
            mean_aoi_ms: mean,
            std_err_ms: (var / n).sqrt(),
        });
    }
    write_csv(&opts.out_dir.join(format!("sweep_{}.csv", axis.as_str())), &rows)?;
    write_csv(&opts.out_dir.join(format!("sweep_{}_summary.csv", axis.as_str())), &summary)?;
    Ok(summary)
}
