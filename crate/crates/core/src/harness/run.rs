//! Seeded multi-run execution and result files.
//!
//! Every (point, run) pair is independent: it builds its own environment and
//! learners from its derived seed, so results do not depend on the thread
//! count or on which other runs are present.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::spec::{derive_seed, splitmix64, ExperimentSpec, PolicyKind, SweepPoint};
use crate::agents::{
    self, baseline_episode, drlo_episode, rlo_episode, BaselineKind, DqnAgent, EpsilonSchedule,
    QTable,
};
use crate::config::SimConfig;
use crate::env::{action_count, MecEnv};
use crate::error::{AgentError, HarnessError};
use crate::metrics::{convergence_slot, mean, std_dev, EpisodeMetrics, MetricMeans};
use crate::nn::Mlp;

/// Version of the CSV column layout, recorded in the manifest.
pub const SCHEMA_VERSION: u32 = 1;

/// Columns of the per-slot series files.
pub const SERIES_COLUMNS: [&str; 10] = [
    "slot",
    "reward",
    "privacy",
    "energy_j",
    "latency_s",
    "cost",
    "mining_reward",
    "deadline_violations",
    "offload_fraction",
    "queue_cycles",
];

/// Stream constant separating learner randomness from the environment's.
const AGENT_STREAM: u64 = 0x5DEE_CE66_D1CE_F00D;

/// Optional policy checkpoint directories.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Write every learned policy here at the end of its run.
    pub save_policies: Option<PathBuf>,
    /// Start learners from the policies stored here.
    pub load_policies: Option<PathBuf>,
}

/// Final learned policy of one miner.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySnapshot {
    Table(QTable),
    Network(Mlp),
}

impl PolicySnapshot {
    pub fn to_json(&self) -> String {
        match self {
            PolicySnapshot::Table(t) => t.to_json(),
            PolicySnapshot::Network(n) => n.to_json(),
        }
    }
}

/// One run's episode and learned policies.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: EpisodeMetrics,
    pub policies: Vec<PolicySnapshot>,
}

/// Plays one episode of `policy` on `cfg` with environment seed `seed`.
/// `initial` optionally seeds the learners, one entry per miner.
pub fn run_single(
    cfg: &SimConfig,
    policy: PolicyKind,
    seed: u64,
    initial: Option<Vec<PolicySnapshot>>,
) -> Result<RunOutcome, AgentError> {
    let mut cfg = cfg.clone();
    cfg.rng_seed = seed;
    let mut env = MecEnv::new(cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ AGENT_STREAM));
    let learning = &cfg.learning;
    let schedule = EpsilonSchedule::from_config(learning);
    let n = cfg.num_miners;
    match policy {
        PolicyKind::No | PolicyKind::Eo | PolicyKind::Random => {
            let kind = match policy {
                PolicyKind::No => BaselineKind::No,
                PolicyKind::Eo => BaselineKind::Eo,
                _ => BaselineKind::Random,
            };
            let metrics = baseline_episode(&mut env, kind, &mut rng)?;
            Ok(RunOutcome {
                metrics,
                policies: Vec::new(),
            })
        }
        PolicyKind::Rlo => {
            let states = agents::num_discrete_states(&cfg);
            let actions = action_count(cfg.num_tasks);
            let mut tables = match initial {
                Some(snaps) => snaps
                    .into_iter()
                    .map(|s| match s {
                        PolicySnapshot::Table(t)
                            if t.num_states == states && t.num_actions == actions =>
                        {
                            Ok(t)
                        }
                        _ => Err(AgentError::Checkpoint(
                            "stored table does not fit this configuration".into(),
                        )),
                    })
                    .collect::<Result<Vec<_>, _>>()?,
                None => (0..n)
                    .map(|_| {
                        QTable::new(
                            states,
                            actions,
                            learning.tabular_learning_rate,
                            learning.discount,
                        )
                    })
                    .collect(),
            };
            if tables.len() != n {
                return Err(AgentError::Checkpoint(format!(
                    "expected {n} tables, found {}",
                    tables.len()
                )));
            }
            let metrics = rlo_episode(&mut env, &mut tables, &schedule, &mut rng)?;
            Ok(RunOutcome {
                metrics,
                policies: tables.into_iter().map(PolicySnapshot::Table).collect(),
            })
        }
        PolicyKind::Drlo => {
            let features = agents::feature_len(&cfg);
            let mut learners = match initial {
                Some(snaps) => snaps
                    .into_iter()
                    .map(|s| match s {
                        PolicySnapshot::Network(net) if net.input_size() == features => {
                            DqnAgent::with_network(net, cfg.num_tasks, learning)
                        }
                        _ => Err(AgentError::Checkpoint(
                            "stored network does not fit this configuration".into(),
                        )),
                    })
                    .collect::<Result<Vec<_>, _>>()?,
                None => (0..n)
                    .map(|_| DqnAgent::new(features, cfg.num_tasks, learning, &mut rng))
                    .collect::<Result<Vec<_>, _>>()?,
            };
            if learners.len() != n {
                return Err(AgentError::Checkpoint(format!(
                    "expected {n} networks, found {}",
                    learners.len()
                )));
            }
            let metrics = drlo_episode(&mut env, &mut learners, &schedule, &mut rng)?;
            Ok(RunOutcome {
                metrics,
                policies: learners
                    .into_iter()
                    .map(|a| PolicySnapshot::Network(a.online().clone()))
                    .collect(),
            })
        }
    }
}

/// Per-run row of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub policy: PolicyKind,
    pub point: usize,
    pub run: usize,
    pub seed: u64,
    // Means over the evaluation window.
    pub reward: f64,
    pub privacy: f64,
    pub energy_j: f64,
    pub latency_s: f64,
    pub cost: f64,
    pub mining_reward: f64,
    pub deadline_violations: f64,
    pub offload_fraction: f64,
    pub episode_reward: f64,
    pub episode_cost: f64,
    pub convergence_slot: Option<usize>,
}

/// Per-point row of `aggregate.csv`: mean and sample standard deviation over
/// runs of each run's evaluation-window means.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct AggregateRow {
    pub policy: PolicyKind,
    pub point: usize,
    pub beta: f64,
    pub num_miners: usize,
    pub num_tasks: usize,
    pub transaction_kb: Option<f64>,
    pub runs: usize,
    pub eval_window: usize,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub privacy_mean: f64,
    pub privacy_std: f64,
    pub energy_j_mean: f64,
    pub energy_j_std: f64,
    pub latency_s_mean: f64,
    pub latency_s_std: f64,
    pub cost_mean: f64,
    pub cost_std: f64,
    pub mining_reward_mean: f64,
    pub mining_reward_std: f64,
    pub deadline_violations_mean: f64,
    pub offload_fraction_mean: f64,
    pub episode_reward_mean: f64,
    pub converged_runs: usize,
    /// Mean convergence slot over runs that converged; empty when none did.
    pub convergence_slot_mean: Option<f64>,
}

/// Everything an experiment produced, also written to disk.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub points: Vec<SweepPoint>,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl ExperimentOutput {
    /// Run records of one point in run order.
    pub fn runs_at(&self, point: usize) -> Vec<&RunRecord> {
        self.runs.iter().filter(|r| r.point == point).collect()
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    crate_version: &'a str,
    spec: &'a ExperimentSpec,
    points: Vec<ManifestPoint<'a>>,
    series_columns: &'a [&'a str],
    files: ManifestFiles,
}

#[derive(Serialize)]
struct ManifestPoint<'a> {
    point: &'a SweepPoint,
    config: SimConfig,
    seeds: Vec<u64>,
}

#[derive(Serialize)]
struct ManifestFiles {
    aggregate: &'static str,
    runs: &'static str,
    series: Option<&'static str>,
}

fn series_name(point: usize, run: usize) -> String {
    format!("point{point:03}_run{run:03}.csv")
}

fn checkpoint_name(point: usize, run: usize, miner: usize) -> String {
    format!("point{point:03}_run{run:03}_miner{miner:02}.json")
}

fn write_series(path: &Path, m: &EpisodeMetrics) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(SERIES_COLUMNS)?;
    for t in 0..m.len() {
        w.write_record(&[
            t.to_string(),
            m.reward[t].to_string(),
            m.privacy[t].to_string(),
            m.energy_j[t].to_string(),
            m.latency_s[t].to_string(),
            m.cost[t].to_string(),
            m.mining_reward[t].to_string(),
            m.deadline_violations[t].to_string(),
            m.offload_fraction[t].to_string(),
            m.queue_cycles[t].to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

fn load_snapshots(
    dir: &Path,
    policy: PolicyKind,
    point: usize,
    run: usize,
    miners: usize,
) -> Result<Vec<PolicySnapshot>, HarnessError> {
    (0..miners)
        .map(|n| {
            let path = dir.join(checkpoint_name(point, run, n));
            let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
            let snap = match policy {
                PolicyKind::Rlo => PolicySnapshot::Table(QTable::from_json(&text)?),
                _ => PolicySnapshot::Network(Mlp::from_json(&text).map_err(AgentError::from)?),
            };
            Ok(snap)
        })
        .collect()
}

fn aggregate(
    spec: &ExperimentSpec,
    point: &SweepPoint,
    runs: &[&RunRecord],
) -> AggregateRow {
    let col = |f: fn(&RunRecord) -> f64| -> Vec<f64> { runs.iter().map(|r| f(r)).collect() };
    let reward = col(|r| r.reward);
    let privacy = col(|r| r.privacy);
    let energy = col(|r| r.energy_j);
    let latency = col(|r| r.latency_s);
    let cost = col(|r| r.cost);
    let mining = col(|r| r.mining_reward);
    let converged: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.convergence_slot.map(|s| s as f64))
        .collect();
    AggregateRow {
        policy: spec.policy,
        point: point.index,
        beta: point.beta,
        num_miners: point.num_miners,
        num_tasks: point.num_tasks,
        transaction_kb: point.transaction_kb,
        runs: runs.len(),
        eval_window: spec.eval_window,
        reward_mean: mean(&reward),
        reward_std: std_dev(&reward),
        privacy_mean: mean(&privacy),
        privacy_std: std_dev(&privacy),
        energy_j_mean: mean(&energy),
        energy_j_std: std_dev(&energy),
        latency_s_mean: mean(&latency),
        latency_s_std: std_dev(&latency),
        cost_mean: mean(&cost),
        cost_std: std_dev(&cost),
        mining_reward_mean: mean(&mining),
        mining_reward_std: std_dev(&mining),
        deadline_violations_mean: mean(&col(|r| r.deadline_violations)),
        offload_fraction_mean: mean(&col(|r| r.offload_fraction)),
        episode_reward_mean: mean(&col(|r| r.episode_reward)),
        converged_runs: converged.len(),
        convergence_slot_mean: if converged.is_empty() {
            None
        } else {
            Some(mean(&converged))
        },
    }
}

/// Runs every point × run of `spec` and writes its result files.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, HarnessError> {
    run_experiment_with(spec, &RunOptions::default())
}

/// [`run_experiment`] with checkpoint options.
///
/// Writes into `spec.output_dir`: `aggregate.csv`, `runs.csv`,
/// `manifest.json` and, when enabled, `series/pointIII_runJJJ.csv`.
pub fn run_experiment_with(
    spec: &ExperimentSpec,
    opts: &RunOptions,
) -> Result<ExperimentOutput, HarnessError> {
    spec.validate()?;
    let out = &spec.output_dir;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let series_dir = out.join("series");
    if spec.write_series {
        fs::create_dir_all(&series_dir).map_err(|e| HarnessError::io(&series_dir, e))?;
    }
    if let Some(dir) = &opts.save_policies {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }

    let points = spec.points();
    let jobs: Vec<(SweepPoint, usize)> = points
        .iter()
        .flat_map(|p| (0..spec.runs_per_point).map(move |j| (*p, j)))
        .collect();

    let runs: Vec<RunRecord> = jobs
        .par_iter()
        .map(|(point, j)| -> Result<RunRecord, HarnessError> {
            let cfg = point.apply(&spec.sim);
            let seed = derive_seed(spec.seed_base, point.index, *j);
            let initial = match (&opts.load_policies, spec.policy) {
                (Some(dir), PolicyKind::Rlo | PolicyKind::Drlo) => Some(load_snapshots(
                    dir,
                    spec.policy,
                    point.index,
                    *j,
                    cfg.num_miners,
                )?),
                _ => None,
            };
            let outcome = run_single(&cfg, spec.policy, seed, initial)?;
            if spec.write_series {
                write_series(&series_dir.join(series_name(point.index, *j)), &outcome.metrics)?;
            }
            if let Some(dir) = &opts.save_policies {
                for (n, snap) in outcome.policies.iter().enumerate() {
                    let path = dir.join(checkpoint_name(point.index, *j, n));
                    fs::write(&path, snap.to_json()).map_err(|e| HarnessError::io(&path, e))?;
                }
            }
            let m = &outcome.metrics;
            let tail: MetricMeans = m.tail_summary(spec.eval_window);
            Ok(RunRecord {
                policy: spec.policy,
                point: point.index,
                run: *j,
                seed,
                reward: tail.reward,
                privacy: tail.privacy,
                energy_j: tail.energy_j,
                latency_s: tail.latency_s,
                cost: tail.cost,
                mining_reward: tail.mining_reward,
                deadline_violations: tail.deadline_violations,
                offload_fraction: tail.offload_fraction,
                episode_reward: mean(&m.reward),
                episode_cost: mean(&m.cost),
                convergence_slot: convergence_slot(&m.reward),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let aggregates: Vec<AggregateRow> = points
        .iter()
        .map(|p| {
            let rs: Vec<&RunRecord> = runs.iter().filter(|r| r.point == p.index).collect();
            aggregate(spec, p, &rs)
        })
        .collect();

    write_csv(&out.join("runs.csv"), &runs)?;
    write_csv(&out.join("aggregate.csv"), &aggregates)?;

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        crate_version: env!("CARGO_PKG_VERSION"),
        spec,
        points: points
            .iter()
            .map(|p| ManifestPoint {
                point: p,
                config: p.apply(&spec.sim),
                seeds: (0..spec.runs_per_point)
                    .map(|j| derive_seed(spec.seed_base, p.index, j))
                    .collect(),
            })
            .collect(),
        series_columns: &SERIES_COLUMNS,
        files: ManifestFiles {
            aggregate: "aggregate.csv",
            runs: "runs.csv",
            series: spec.write_series.then_some("series/pointIII_runJJJ.csv"),
        },
    };
    let path = out.join("manifest.json");
    let mut f = BufWriter::new(File::create(&path).map_err(|e| HarnessError::io(&path, e))?);
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n").map_err(|e| HarnessError::io(&path, e))?;
    f.flush().map_err(|e| HarnessError::io(&path, e))?;

    Ok(ExperimentOutput {
        points,
        runs,
        aggregates,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}
