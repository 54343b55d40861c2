//! Training loop: per sample, the scheduler picks an LfD (behavior cloning)
//! update on the task's expert trajectory or an RL update on a fresh rollout.
//! After every epoch the policy is evaluated on the dev split and the best
//! checkpoint is kept; training stops after `patience` epochs without a dev
//! improvement or at the epoch cap.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::AdamConfig;
use crate::learners::{Demonstration, Learner, LearnerConfig, LearnerError, LossComponents, Step, Trajectory};
use crate::math;
use crate::policy::{Policy, PolicyConfig, PolicyError};
use crate::scheduler::{Mode, Scheduler, SchedulerConfig, SchedulerError, DEFAULT_WINDOW, EXPERT_ERROR};
use crate::tasks::Task;
use crate::world::{execution_error_with, observe, step, ActionId, EnvConfig, WorldError, WorldState};

/// The schedule candidates, under the name used by the training config.
pub type ScheduleKind = SchedulerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    /// Behavior cloning only; every sample is an LfD update.
    Bc,
    Reinforce,
    A2c,
    Ppo,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Bc => "bc",
            Algo::Reinforce => "reinforce",
            Algo::A2c => "a2c",
            Algo::Ppo => "ppo",
        }
    }
}

/// Network sizes that do not depend on the dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelDims {
    pub word_dim: usize,
    pub action_dim: usize,
    pub lstm_hidden: usize,
    pub obs_hidden: usize,
    pub obs_dim: usize,
    pub trunk_hidden: usize,
    pub instruction_gate: bool,
    pub init_bound: f64,
}

impl Default for ModelDims {
    fn default() -> Self {
        let d = PolicyConfig::new(1, 1, 1);
        Self {
            word_dim: d.word_dim,
            action_dim: d.action_dim,
            lstm_hidden: d.lstm_hidden,
            obs_hidden: d.obs_hidden,
            obs_dim: d.obs_dim,
            trunk_hidden: d.trunk_hidden,
            instruction_gate: d.instruction_gate,
            init_bound: d.init_bound,
        }
    }
}

impl ModelDims {
    pub fn policy_config(&self, grid_size: usize, num_blocks: usize, vocab_size: usize) -> PolicyConfig {
        PolicyConfig {
            grid_size,
            num_blocks,
            vocab_size,
            word_dim: self.word_dim,
            action_dim: self.action_dim,
            lstm_hidden: self.lstm_hidden,
            obs_hidden: self.obs_hidden,
            obs_dim: self.obs_dim,
            trunk_hidden: self.trunk_hidden,
            instruction_gate: self.instruction_gate,
            init_bound: self.init_bound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub algo: Algo,
    pub schedule: ScheduleKind,
    pub epochs: usize,
    /// Learning rate of epoch 0.
    pub lr: f64,
    /// The learning rate halves every this many epochs.
    pub lr_halving_period: usize,
    pub seed: u64,
    pub env: EnvConfig,
    pub learner: LearnerConfig,
    pub adam: AdamConfig,
    pub model: ModelDims,
    pub history_window: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub greedy_eval: bool,
    pub eval_every_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Ppo,
            schedule: SchedulerConfig::History { lambda: 1.0 },
            epochs: 20,
            lr: 1e-4,
            lr_halving_period: 4,
            seed: 0,
            env: EnvConfig::default(),
            learner: LearnerConfig::default(),
            adam: AdamConfig::default(),
            model: ModelDims::default(),
            history_window: DEFAULT_WINDOW,
            patience: 3,
            greedy_eval: true,
            eval_every_epoch: true,
        }
    }
}

impl TrainConfig {
    /// `lr / 2^floor(epoch / period)`.
    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        let halvings = if self.lr_halving_period == 0 {
            0
        } else {
            epoch / self.lr_halving_period
        };
        self.lr / math::powi(2.0, halvings as i32)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1"));
        }
        if !(self.lr > 0.0) {
            return Err(TrainError::Config("learning rate must be positive"));
        }
        if self.env.max_steps == 0 {
            return Err(TrainError::Config("max_steps must be positive"));
        }
        if self.algo == Algo::Bc && self.schedule != SchedulerConfig::None {
            return Err(TrainError::Config("bc cannot be combined with a schedule"));
        }
        self.learner.validate()?;
        Scheduler::new(self.schedule, self.history_window)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    Config(&'static str),
    EmptySplit(&'static str),
    /// Tasks disagree with each other or with the model about grid size,
    /// block count or vocabulary.
    Mismatch(&'static str),
    Learner(LearnerError),
    Scheduler(SchedulerError),
    /// A failure while processing one training sample.
    Sample { epoch: usize, task: usize, source: Box<TrainError> },
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Config(why) => write!(f, "invalid training config: {why}"),
            TrainError::EmptySplit(which) => write!(f, "{which} split is empty"),
            TrainError::Mismatch(why) => write!(f, "dataset/model mismatch: {why}"),
            TrainError::Learner(e) => write!(f, "{e}"),
            TrainError::Scheduler(e) => write!(f, "{e}"),
            TrainError::Sample { epoch, task, source } => write!(f, "epoch {epoch}, task {task}: {source}"),
        }
    }
}

impl From<LearnerError> for TrainError {
    fn from(e: LearnerError) -> Self {
        TrainError::Learner(e)
    }
}

impl From<PolicyError> for TrainError {
    fn from(e: PolicyError) -> Self {
        TrainError::Learner(LearnerError::Policy(e))
    }
}

impl From<WorldError> for TrainError {
    fn from(e: WorldError) -> Self {
        TrainError::Learner(LearnerError::World(e))
    }
}

impl From<SchedulerError> for TrainError {
    fn from(e: SchedulerError) -> Self {
        TrainError::Scheduler(e)
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub epoch: usize,
    /// Index of the task in the training split.
    pub task: usize,
    pub mode: Mode,
    /// Mean joint policy entropy over the episode's states.
    pub entropy: f64,
    /// Rollout error for RL, expert error for LfD.
    pub error: f64,
    pub episode_len: usize,
    pub baseline: Option<f64>,
    pub hist_size: usize,
    pub loss: LossComponents,
    pub wall_clock: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub mean_error: f64,
    pub median_error: f64,
    pub mean_episode_len: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub lr: f64,
    /// Seed of this epoch's shuffle.
    pub shuffle_seed: u64,
    pub lfd_updates: usize,
    pub rl_updates: usize,
    pub mean_entropy: f64,
    pub dev: Option<EvalReport>,
}

pub struct TrainOutcome {
    /// Parameters with the lowest dev mean error (the final ones when dev
    /// evaluation is disabled).
    pub best_policy: Policy,
    pub best_epoch: usize,
    pub best_dev: Option<EvalReport>,
    pub final_policy: Policy,
    pub epochs: Vec<EpochSummary>,
    pub metrics: Vec<MetricsRecord>,
    pub stopped_early: bool,
}

/// Observer for a training run. The clock is only used for the
/// `wall_clock` field, never for control flow.
pub trait TrainHooks {
    fn now_secs(&self) -> f64 {
        0.0
    }

    fn on_record(&mut self, _record: &MetricsRecord) {}

    fn on_epoch(&mut self, _summary: &EpochSummary) {}
}

pub struct NoHooks;

impl TrainHooks for NoHooks {}

/// Something that picks actions in an episode.
pub trait Agent {
    fn act(&mut self, task: &Task, state: &WorldState, prev: Option<ActionId>) -> Result<ActionId, TrainError>;
}

/// Acts with a policy, greedily or by sampling.
pub struct PolicyAgent<'a, R> {
    pub policy: &'a Policy,
    pub greedy: bool,
    pub rng: R,
}

impl<R: Rng> Agent for PolicyAgent<'_, R> {
    fn act(&mut self, task: &Task, state: &WorldState, prev: Option<ActionId>) -> Result<ActionId, TrainError> {
        let (dist, _) = self.policy.evaluate(&task.instruction_tokens, &observe(state, &task.goal), prev)?;
        Ok(if self.greedy {
            dist.greedy()
        } else {
            dist.sample(&mut self.rng)
        })
    }
}

/// Replays each task's stored demonstration.
pub struct DemonstrationAgent;

impl Agent for DemonstrationAgent {
    fn act(&mut self, task: &Task, state: &WorldState, _prev: Option<ActionId>) -> Result<ActionId, TrainError> {
        let stop = state.action_space().stop();
        Ok(task.demonstration.get(state.steps_taken()).copied().unwrap_or(stop))
    }
}

/// Runs one episode to termination; returns the final state and its length.
pub fn run_episode(agent: &mut impl Agent, task: &Task, env: &EnvConfig) -> Result<(WorldState, usize), TrainError> {
    let mut state = task.initial_world.clone();
    let mut prev = None;
    let mut len = 0;
    while !state.is_terminated() {
        let action = agent.act(task, &state, prev)?;
        state = step(&state, action, &task.goal, env)?.next_state;
        prev = Some(action);
        len += 1;
    }
    Ok((state, len))
}

/// Mean of the two central values for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}

pub fn evaluate_agent(agent: &mut impl Agent, tasks: &[Task], env: &EnvConfig) -> Result<EvalReport, TrainError> {
    if tasks.is_empty() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    let mut errors = Vec::with_capacity(tasks.len());
    let mut total_len = 0;
    for task in tasks {
        let (state, len) = run_episode(agent, task, env)?;
        errors.push(execution_error_with(&state, &task.goal, env.unreachable_penalty) as f64);
        total_len += len;
    }
    let n = tasks.len() as f64;
    Ok(EvalReport {
        mean_error: errors.iter().sum::<f64>() / n,
        median_error: median(&errors),
        mean_episode_len: total_len as f64 / n,
        episodes: tasks.len(),
    })
}

/// Evaluates a policy. `seed` only matters when `greedy` is false.
pub fn evaluate(policy: &Policy, tasks: &[Task], env: &EnvConfig, greedy: bool, seed: u64) -> Result<EvalReport, TrainError> {
    let mut agent = PolicyAgent {
        policy,
        greedy,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    evaluate_agent(&mut agent, tasks, env)
}

/// Samples an episode from the policy and records everything the RL updates
/// need.
pub fn rollout(policy: &Policy, task: &Task, env: &EnvConfig, gamma: f64, rng: &mut impl Rng) -> Result<Trajectory, TrainError> {
    let mut graph = policy.graph(&task.instruction_tokens)?;
    let mut state = task.initial_world.clone();
    let mut prev = None;
    let mut steps = Vec::new();
    while !state.is_terminated() {
        let obs = observe(&state, &task.goal);
        let heads = graph.step(&obs, prev)?;
        let dist = graph.distribution(&heads);
        let action = dist.sample(rng);
        let out = step(&state, action, &task.goal, env)?;
        steps.push(Step {
            obs,
            prev_action: prev,
            action,
            log_prob: dist.log_prob(action),
            reward: out.reward,
            value: graph.value(&heads),
            entropy: dist.entropy(),
        });
        state = out.next_state;
        prev = Some(action);
    }
    let error = execution_error_with(&state, &task.goal, env.unreachable_penalty);
    Ok(Trajectory::new(task.instruction_tokens.clone(), steps, gamma, error))
}

/// Geometry shared by every task, checked up front.
fn task_geometry(tasks: &[Task], which: &'static str) -> Result<(usize, usize), TrainError> {
    let first = tasks.first().ok_or(TrainError::EmptySplit(which))?;
    let dims = (first.grid_size(), first.num_blocks());
    if tasks.iter().any(|t| (t.grid_size(), t.num_blocks()) != dims) {
        return Err(TrainError::Mismatch("tasks have different grid sizes or block counts"));
    }
    Ok(dims)
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const INIT_STREAM: u64 = 0;
const ROLLOUT_STREAM: u64 = 1;
const SCHEDULE_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;
const EVAL_STREAM: u64 = 4;

/// Trains a fresh policy on `train`, selecting on `dev`.
pub fn train(
    train_tasks: &[Task],
    dev_tasks: &[Task],
    vocab_size: usize,
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let (grid, blocks) = task_geometry(train_tasks, "train")?;
    if task_geometry(dev_tasks, "dev")? != (grid, blocks) {
        return Err(TrainError::Mismatch("train and dev tasks differ in geometry"));
    }
    let mut init_rng = stream(cfg.seed, INIT_STREAM);
    let policy = Policy::new(cfg.model.policy_config(grid, blocks, vocab_size), init_rng.gen());
    train_from(policy, train_tasks, dev_tasks, cfg, hooks)
}

/// Continues training from an existing policy.
pub fn train_from(
    mut policy: Policy,
    train_tasks: &[Task],
    dev_tasks: &[Task],
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let (grid, blocks) = task_geometry(train_tasks, "train")?;
    let pc = policy.config();
    if (pc.grid_size, pc.num_blocks) != (grid, blocks) {
        return Err(TrainError::Mismatch("policy was built for a different world"));
    }
    let demos = train_tasks
        .iter()
        .map(|t| Demonstration::from_task(t, &cfg.env))
        .collect::<Result<Vec<_>, _>>()?;
    let mut learner = Learner::new(&policy, cfg.learner, cfg.adam)?;
    let mut scheduler = Scheduler::new(cfg.schedule, cfg.history_window)?;
    let mut rollout_rng = stream(cfg.seed, ROLLOUT_STREAM);
    let mut schedule_rng = stream(cfg.seed, SCHEDULE_STREAM);
    let mut shuffle_seeds = stream(cfg.seed, SHUFFLE_STREAM);

    let mut metrics: Vec<MetricsRecord> = Vec::with_capacity(cfg.epochs * train_tasks.len());
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, EvalReport, Policy)> = None;
    let mut since_improvement = 0;
    let mut stopped_early = false;
    let mut global_step = 0u64;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_for_epoch(epoch);
        let shuffle_seed: u64 = shuffle_seeds.gen();
        let mut order: Vec<usize> = (0..train_tasks.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let (mut lfd_updates, mut rl_updates, mut entropy_sum) = (0, 0, 0.0);

        for &idx in &order {
            let wrap = |e: TrainError| TrainError::Sample {
                epoch,
                task: idx,
                source: Box::new(e),
            };
            let task = &train_tasks[idx];
            let decision = if cfg.algo == Algo::Bc {
                crate::scheduler::ScheduleDecision {
                    mode: Mode::Lfd,
                    baseline: None,
                }
            } else {
                scheduler.decide(epoch, &mut schedule_rng).map_err(|e| wrap(e.into()))?
            };
            let (loss, entropy, error, episode_len) = match decision.mode {
                Mode::Lfd => {
                    let demo = &demos[idx];
                    let loss = learner.bc_update(&mut policy, demo, lr).map_err(|e| wrap(e.into()))?;
                    lfd_updates += 1;
                    (loss, -loss.entropy, EXPERT_ERROR, demo.pairs.len())
                }
                Mode::Rl => {
                    let traj = rollout(&policy, task, &cfg.env, cfg.learner.gamma, &mut rollout_rng).map_err(wrap)?;
                    let loss = match cfg.algo {
                        Algo::Ppo => learner.ppo_update(&mut policy, &traj, lr),
                        Algo::A2c => learner.a2c_update(&mut policy, &traj, lr),
                        Algo::Reinforce => learner.reinforce_update(&mut policy, &traj, lr),
                        Algo::Bc => unreachable!("bc never schedules RL"),
                    }
                    .map_err(|e| wrap(e.into()))?;
                    scheduler.record_rl(traj.final_error as f64).map_err(|e| wrap(e.into()))?;
                    rl_updates += 1;
                    (loss, traj.mean_entropy(), traj.final_error as f64, traj.len())
                }
            };
            entropy_sum += entropy;
            let record = MetricsRecord {
                step: global_step,
                epoch,
                task: idx,
                mode: decision.mode,
                entropy,
                error,
                episode_len,
                baseline: decision.baseline,
                hist_size: scheduler.history().len(),
                loss,
                wall_clock: hooks.now_secs(),
            };
            hooks.on_record(&record);
            metrics.push(record);
            global_step += 1;
        }

        let dev = if cfg.eval_every_epoch || epoch + 1 == cfg.epochs {
            Some(evaluate(&policy, dev_tasks, &cfg.env, cfg.greedy_eval, cfg.seed ^ EVAL_STREAM)?)
        } else {
            None
        };
        let summary = EpochSummary {
            epoch,
            lr,
            shuffle_seed,
            lfd_updates,
            rl_updates,
            mean_entropy: entropy_sum / train_tasks.len() as f64,
            dev,
        };
        hooks.on_epoch(&summary);
        epochs.push(summary);

        if let Some(report) = dev {
            let improved = best.as_ref().is_none_or(|(_, b, _)| report.mean_error < b.mean_error);
            if improved {
                best = Some((epoch, report, policy.clone()));
                since_improvement = 0;
            } else {
                since_improvement += 1;
                if cfg.eval_every_epoch && since_improvement >= cfg.patience && epoch + 1 < cfg.epochs {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let last_epoch = epochs.len() - 1;
    let (best_epoch, best_dev, best_policy) = match best {
        Some((e, r, p)) => (e, Some(r), p),
        None => (last_epoch, None, policy.clone()),
    };
    Ok(TrainOutcome {
        best_policy,
        best_epoch,
        best_dev,
        final_policy: policy,
        epochs,
        metrics,
        stopped_early,
    })
}

/// Number of LfD updates in each epoch.
pub fn lfd_counts_per_epoch(metrics: &[MetricsRecord]) -> Vec<usize> {
    let epochs = metrics.iter().map(|m| m.epoch + 1).max().unwrap_or(0);
    let mut counts = alloc::vec![0; epochs];
    for m in metrics.iter().filter(|m| m.mode == Mode::Lfd) {
        counts[m.epoch] += 1;
    }
    counts
}

/// `(step, episode-mean entropy)` in step order.
pub fn entropy_curve(metrics: &[MetricsRecord]) -> Vec<(u64, f64)> {
    let mut curve: Vec<(u64, f64)> = metrics.iter().map(|m| (m.step, m.entropy)).collect();
    curve.sort_by_key(|&(s, _)| s);
    curve
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize, mode: Mode, step: u64) -> MetricsRecord {
        MetricsRecord {
            step,
            epoch,
            task: 0,
            mode,
            entropy: step as f64,
            error: 0.0,
            episode_len: 1,
            baseline: None,
            hist_size: 0,
            loss: LossComponents::default(),
            wall_clock: 0.0,
        }
    }

    #[test]
    fn learning_rate_halves_every_four_epochs() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_for_epoch(0), 1e-4);
        assert_eq!(cfg.lr_for_epoch(3), 1e-4);
        assert_eq!(cfg.lr_for_epoch(4), 5e-5);
        assert_eq!(cfg.lr_for_epoch(8), 2.5e-5);
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[0.0, 1.0, 3.0]), 1.0);
        assert_eq!(median(&[3.0, 0.0, 1.0, 2.0]), 1.5);
        let errors = [0.0, 1.0, 3.0];
        assert!((errors.iter().sum::<f64>() / 3.0 - 1.3333).abs() < 1e-4);
    }

    #[test]
    fn lfd_counts() {
        let modes = [Mode::Rl, Mode::Lfd, Mode::Rl, Mode::Rl, Mode::Lfd];
        let log: Vec<_> = modes.iter().enumerate().map(|(i, &m)| record(0, m, i as u64)).collect();
        assert_eq!(lfd_counts_per_epoch(&log), [2]);
        let mut two = log.clone();
        two.push(record(1, Mode::Rl, 5));
        assert_eq!(lfd_counts_per_epoch(&two), [2, 0]);
        assert_eq!(entropy_curve(&two).len(), 6);
    }

    #[test]
    fn config_rejects_bc_with_schedule() {
        let cfg = TrainConfig {
            algo: Algo::Bc,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let ok = TrainConfig {
            algo: Algo::Bc,
            schedule: SchedulerConfig::None,
            ..TrainConfig::default()
        };
        assert!(ok.validate().is_ok());
        let zero = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(zero.validate().is_err());
    }
}
