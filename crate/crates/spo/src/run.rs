//! Training runs and evaluation on datasets and run directories.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spo_core::trainer::{self, evaluate_agent, Agent, DemonstrationAgent, EpochSummary, EvalReport, TrainError, TrainHooks, TrainOutcome};
use spo_core::world::execution_error_with;
use spo_core::{ActionId, EnvConfig, Policy, Task, WorldState};

use crate::config::RunConfig;
use crate::dataset::{write_json, Dataset};
use crate::{checkpoint, metrics, Error, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub mean_error: f64,
    pub median_error: f64,
    pub mean_episode_len: f64,
    pub episodes: usize,
}

impl From<EvalReport> for EvalRecord {
    fn from(r: EvalReport) -> Self {
        Self {
            mean_error: r.mean_error,
            median_error: r.median_error,
            mean_episode_len: r.mean_episode_len,
            episodes: r.episodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub shuffle_seed: u64,
    pub lfd_updates: usize,
    pub rl_updates: usize,
    pub mean_entropy: f64,
    pub dev: Option<EvalRecord>,
}

impl From<&EpochSummary> for EpochRecord {
    fn from(s: &EpochSummary) -> Self {
        Self {
            epoch: s.epoch,
            lr: s.lr,
            shuffle_seed: s.shuffle_seed,
            lfd_updates: s.lfd_updates,
            rl_updates: s.rl_updates,
            mean_entropy: s.mean_entropy,
            dev: s.dev.map(EvalRecord::from),
        }
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algo: String,
    pub best_epoch: usize,
    pub best_dev: Option<EvalRecord>,
    pub stopped_early: bool,
    pub epochs: Vec<EpochRecord>,
}

/// Logs epoch summaries and stamps records with seconds since the start.
struct LogHooks {
    start: Instant,
}

impl TrainHooks for LogHooks {
    fn now_secs(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_epoch(&mut self, s: &EpochSummary) {
        let dev = s
            .dev
            .map(|d| format!(" dev mean {:.3} median {:.2} len {:.2}", d.mean_error, d.median_error, d.mean_episode_len))
            .unwrap_or_default();
        log::info!(
            "epoch {} lr {:.2e} lfd {} rl {} entropy {:.3}{dev} ({:.1}s)",
            s.epoch,
            s.lr,
            s.lfd_updates,
            s.rl_updates,
            s.mean_entropy,
            self.now_secs()
        );
    }
}

/// Trains on `data` and writes the effective config, metrics CSV, best
/// checkpoint and summary into `out`.
pub fn train_run(cfg: &RunConfig, data: &Dataset, out: &Path) -> Result<TrainOutcome> {
    let tc = cfg.train_config()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cfg.save(&out.join(CONFIG_FILE))?;
    let mut hooks = LogHooks { start: Instant::now() };
    let outcome = trainer::train(&data.train, &data.dev, data.vocab.len(), &tc, &mut hooks)?;
    metrics::save(&outcome.metrics, &out.join(METRICS_FILE))?;
    checkpoint::save(&outcome.best_policy, &out.join(CHECKPOINT_FILE))?;
    let summary = Summary {
        algo: tc.algo.as_str().into(),
        best_epoch: outcome.best_epoch,
        best_dev: outcome.best_dev.map(EvalRecord::from),
        stopped_early: outcome.stopped_early,
        epochs: outcome.epochs.iter().map(EpochRecord::from).collect(),
    };
    write_json(&summary, &out.join(SUMMARY_FILE))?;
    Ok(outcome)
}

/// Reference agents evaluated without a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// No action at all: the error of the initial state.
    Initial,
    /// Uniform random actions until STOP or the step limit.
    Random,
    /// Replays the stored demonstrations.
    Expert,
}

struct RandomAgent(ChaCha8Rng);

impl Agent for RandomAgent {
    fn act(&mut self, _task: &Task, state: &WorldState, _prev: Option<ActionId>) -> Result<ActionId, TrainError> {
        Ok(ActionId(self.0.gen_range(0..state.action_space().size() as u32)))
    }
}

pub fn evaluate_baseline(baseline: Baseline, tasks: &[Task], env: &EnvConfig, seed: u64) -> Result<EvalReport> {
    Ok(match baseline {
        Baseline::Initial => {
            if tasks.is_empty() {
                return Err(Error::Data("no tasks to evaluate".into()));
            }
            let errors: Vec<f64> = tasks
                .iter()
                .map(|t| execution_error_with(&t.initial_world, &t.goal, env.unreachable_penalty) as f64)
                .collect();
            EvalReport {
                mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
                median_error: trainer::median(&errors),
                mean_episode_len: 0.0,
                episodes: tasks.len(),
            }
        }
        Baseline::Random => evaluate_agent(&mut RandomAgent(ChaCha8Rng::seed_from_u64(seed)), tasks, env)?,
        Baseline::Expert => evaluate_agent(&mut DemonstrationAgent, tasks, env)?,
    })
}

/// Checks that a checkpoint fits a dataset before evaluating it.
pub fn evaluate_policy(policy: &Policy, data: &Dataset, tasks: &[Task], env: &EnvConfig, greedy: bool, seed: u64) -> Result<EvalReport> {
    let pc = policy.config();
    if (pc.grid_size, pc.num_blocks) != (data.meta.grid_size, data.meta.num_blocks) {
        return Err(Error::Mismatch(format!(
            "checkpoint is for grid {} with {} blocks, dataset is grid {} with {} blocks",
            pc.grid_size, pc.num_blocks, data.meta.grid_size, data.meta.num_blocks
        )));
    }
    if pc.vocab_size != data.vocab.len() {
        return Err(Error::Mismatch(format!(
            "checkpoint vocabulary has {} words, dataset vocabulary has {}",
            pc.vocab_size,
            data.vocab.len()
        )));
    }
    Ok(trainer::evaluate(policy, tasks, env, greedy, seed)?)
}
