//! Behavior cloning, REINFORCE, A2C and clipped PPO updates.
//!
//! Each rule is split into a pure `*_gradients` function that builds the
//! loss on a fresh tape and returns its gradients, and an update method on
//! [`Learner`] that feeds them to Adam. All losses are minimized:
//!
//! ```text
//! BC         L = -mean_i log π(a*_i | s_i)
//! REINFORCE  L = -mean_t log π(a_t | s_t) R̃_t          - c_H mean_t H_t
//! A2C        L = -mean_t log π(a_t | s_t) A_t          - c_H mean_t H_t + c_V mean_t (R_t - V_t)²
//! PPO        L = -mean_t min(ρ_t A_t, clip(ρ_t) A_t)   - c_H mean_t H_t + c_V mean_t (R_t - V_t)²
//! ```
//!
//! Advantages and whitened returns are constants inside the policy term.

use alloc::vec::Vec;
use core::fmt;

use crate::autodiff::{Adam, AdamConfig, AutodiffError, Gradients, Var};
use crate::math;
use crate::policy::{Policy, PolicyError, PolicyGraph};
use crate::tasks::Task;
use crate::world::{observe, step, ActionId, EnvConfig, Observation, WorldError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub gamma: f64,
    /// PPO ratios are clipped to `[1 - clip_eps, 1 + clip_eps]`.
    pub clip_eps: f64,
    pub ppo_epochs: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub normalize_advantages: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            clip_eps: 0.05,
            ppo_epochs: 4,
            entropy_coef: 0.1,
            value_coef: 0.5,
            normalize_advantages: true,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let ok = (0.0..1.0).contains(&self.gamma)
            && self.clip_eps > 0.0
            && self.clip_eps < 1.0
            && self.ppo_epochs >= 1
            && self.entropy_coef >= 0.0
            && self.value_coef >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(LearnerError::Config)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LearnerError {
    EmptyTrajectory,
    Config,
    Policy(PolicyError),
    World(WorldError),
}

impl fmt::Display for LearnerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerError::EmptyTrajectory => f.write_str("trajectory has no steps"),
            LearnerError::Config => f.write_str("learner coefficients out of range"),
            LearnerError::Policy(e) => write!(f, "{e}"),
            LearnerError::World(e) => write!(f, "{e}"),
        }
    }
}

impl From<PolicyError> for LearnerError {
    fn from(e: PolicyError) -> Self {
        LearnerError::Policy(e)
    }
}

impl From<AutodiffError> for LearnerError {
    fn from(e: AutodiffError) -> Self {
        LearnerError::Policy(PolicyError::Autodiff(e))
    }
}

impl From<WorldError> for LearnerError {
    fn from(e: WorldError) -> Self {
        LearnerError::World(e)
    }
}

/// Discounted returns by backward recursion `R_t = r_t + γ R_{t+1}`.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut returns = alloc::vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (r, out) in rewards.iter().zip(returns.iter_mut()).rev() {
        acc = r + gamma * acc;
        *out = acc;
    }
    returns
}

/// Shifts to mean 0 and scales to unit (population) standard deviation.
/// Constant inputs map to zeros.
pub fn whiten(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = math::sqrt(var);
    if std < 1e-8 {
        return alloc::vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - mean) / std).collect()
}

/// Per-step clipped surrogate `min(ρA, clip(ρ, 1-ε, 1+ε) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// One recorded environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Observation,
    pub prev_action: Option<ActionId>,
    pub action: ActionId,
    /// `log π_old(a_t | s_t)` under the rollout policy.
    pub log_prob: f64,
    pub reward: f64,
    /// `V(s_t)` under the rollout policy.
    pub value: f64,
    /// Joint policy entropy at `s_t`.
    pub entropy: f64,
}

/// A finished rollout with returns and advantages filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub tokens: Vec<u32>,
    pub steps: Vec<Step>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
    pub final_error: usize,
}

impl Trajectory {
    pub fn new(tokens: Vec<u32>, steps: Vec<Step>, gamma: f64, final_error: usize) -> Self {
        let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
        let returns = compute_returns(&rewards, gamma);
        let advantages = returns.iter().zip(&steps).map(|(r, s)| r - s.value).collect();
        Self {
            tokens,
            steps,
            returns,
            advantages,
            final_error,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn mean_entropy(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.entropy).sum::<f64>() / self.steps.len() as f64
    }
}

/// Expert state-action pairs for one instruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub tokens: Vec<u32>,
    /// `(observation, previous action, expert action)`.
    pub pairs: Vec<(Observation, Option<ActionId>, ActionId)>,
}

impl Demonstration {
    /// Replays the task's expert actions to recover the visited states.
    pub fn from_task(task: &Task, env: &EnvConfig) -> Result<Self, LearnerError> {
        let mut state = task.initial_world.clone();
        let mut prev = None;
        let mut pairs = Vec::with_capacity(task.demonstration.len());
        for &a in &task.demonstration {
            pairs.push((observe(&state, &task.goal), prev, a));
            state = step(&state, a, &task.goal, env)?.next_state;
            prev = Some(a);
        }
        Ok(Self {
            tokens: task.instruction_tokens.clone(),
            pairs,
        })
    }
}

/// Scalar loss terms of one update, as logged.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    /// Negated policy objective.
    pub policy: f64,
    /// Mean squared value error; 0 for rules without a critic.
    pub value: f64,
    /// Negated mean joint entropy.
    pub entropy: f64,
}

fn mean_of(tape: &mut crate::autodiff::Tape<'_>, terms: &[Var]) -> Result<Var, AutodiffError> {
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    tape.scale(total, 1.0 / terms.len() as f64)
}

/// `-J_BC` and its gradients.
pub fn bc_gradients(policy: &Policy, demo: &Demonstration) -> Result<(LossComponents, Gradients), LearnerError> {
    if demo.pairs.is_empty() {
        return Err(LearnerError::EmptyTrajectory);
    }
    let mut g = policy.graph(&demo.tokens)?;
    let mut log_probs = Vec::with_capacity(demo.pairs.len());
    let mut entropy = 0.0;
    for (obs, prev, action) in &demo.pairs {
        let heads = g.step(obs, *prev)?;
        log_probs.push(g.log_prob(&heads, *action)?);
        entropy += g.distribution(&heads).entropy();
    }
    let mean_lp = mean_of(&mut g.tape, &log_probs)?;
    let loss = g.tape.scale(mean_lp, -1.0)?;
    let grads = g.tape.backward(loss)?;
    let components = LossComponents {
        policy: g.tape.scalar(loss),
        value: 0.0,
        entropy: -entropy / demo.pairs.len() as f64,
    };
    Ok((components, grads))
}

/// Which policy term a trajectory loss uses.
#[derive(Debug, Clone, Copy, PartialEq)]
enum PolicyTerm {
    /// `log π · w_t`.
    LogLikelihood,
    /// Clipped ratio surrogate against the rollout log-probabilities.
    Clipped { eps: f64 },
}

struct TrajectoryLoss<'a> {
    term: PolicyTerm,
    weights: &'a [f64],
    entropy_coef: f64,
    /// `None` skips the value loss.
    value_coef: Option<f64>,
}

fn trajectory_gradients(
    policy: &Policy,
    traj: &Trajectory,
    terms: TrajectoryLoss<'_>,
) -> Result<(LossComponents, Gradients), LearnerError> {
    if traj.is_empty() {
        return Err(LearnerError::EmptyTrajectory);
    }
    let mut g: PolicyGraph<'_> = policy.graph(&traj.tokens)?;
    let mut surrogates = Vec::with_capacity(traj.len());
    let mut entropies = Vec::with_capacity(traj.len());
    let mut value_errors = Vec::with_capacity(traj.len());
    for ((s, &w), &ret) in traj.steps.iter().zip(terms.weights).zip(&traj.returns) {
        let heads = g.step(&s.obs, s.prev_action)?;
        let lp = g.log_prob(&heads, s.action)?;
        let t = &mut g.tape;
        let surrogate = match terms.term {
            PolicyTerm::LogLikelihood => t.scale(lp, w)?,
            PolicyTerm::Clipped { eps } => {
                let shifted = t.add_scalar(lp, -s.log_prob)?;
                let ratio = t.exp(shifted)?;
                let unclipped = t.scale(ratio, w)?;
                let clipped = t.clamp(ratio, 1.0 - eps, 1.0 + eps)?;
                let clipped = t.scale(clipped, w)?;
                t.min(unclipped, clipped)?
            }
        };
        surrogates.push(surrogate);
        entropies.push(g.entropy(&heads)?);
        if terms.value_coef.is_some() {
            let err = g.tape.add_scalar(heads.value, -ret)?;
            value_errors.push(g.tape.square(err)?);
        }
    }
    let t = &mut g.tape;
    let objective = mean_of(t, &surrogates)?;
    let mean_entropy = mean_of(t, &entropies)?;
    let policy_loss = t.scale(objective, -1.0)?;
    let entropy_loss = t.scale(mean_entropy, -1.0)?;
    let weighted_entropy = t.scale(entropy_loss, terms.entropy_coef)?;
    let mut loss = t.add(policy_loss, weighted_entropy)?;
    let mut value = 0.0;
    if let Some(c) = terms.value_coef {
        let mse = mean_of(t, &value_errors)?;
        value = t.scalar(mse);
        let weighted = t.scale(mse, c)?;
        loss = t.add(loss, weighted)?;
    }
    let grads = t.backward(loss)?;
    let components = LossComponents {
        policy: t.scalar(policy_loss),
        value,
        entropy: t.scalar(entropy_loss),
    };
    Ok((components, grads))
}

/// Advantages used by A2C and PPO: `R_t - V(s_t)`, whitened when configured.
pub fn policy_advantages(traj: &Trajectory, cfg: &LearnerConfig) -> Vec<f64> {
    if cfg.normalize_advantages {
        whiten(&traj.advantages)
    } else {
        traj.advantages.clone()
    }
}

/// REINFORCE weights: whitened returns, or raw returns with normalization off.
pub fn reinforce_weights(traj: &Trajectory, cfg: &LearnerConfig) -> Vec<f64> {
    if cfg.normalize_advantages {
        whiten(&traj.returns)
    } else {
        traj.returns.clone()
    }
}

pub fn ppo_gradients(
    policy: &Policy,
    traj: &Trajectory,
    advantages: &[f64],
    cfg: &LearnerConfig,
) -> Result<(LossComponents, Gradients), LearnerError> {
    trajectory_gradients(
        policy,
        traj,
        TrajectoryLoss {
            term: PolicyTerm::Clipped { eps: cfg.clip_eps },
            weights: advantages,
            entropy_coef: cfg.entropy_coef,
            value_coef: Some(cfg.value_coef),
        },
    )
}

pub fn a2c_gradients(
    policy: &Policy,
    traj: &Trajectory,
    advantages: &[f64],
    cfg: &LearnerConfig,
) -> Result<(LossComponents, Gradients), LearnerError> {
    trajectory_gradients(
        policy,
        traj,
        TrajectoryLoss {
            term: PolicyTerm::LogLikelihood,
            weights: advantages,
            entropy_coef: cfg.entropy_coef,
            value_coef: Some(cfg.value_coef),
        },
    )
}

pub fn reinforce_gradients(
    policy: &Policy,
    traj: &Trajectory,
    weights: &[f64],
    cfg: &LearnerConfig,
) -> Result<(LossComponents, Gradients), LearnerError> {
    trajectory_gradients(
        policy,
        traj,
        TrajectoryLoss {
            term: PolicyTerm::LogLikelihood,
            weights,
            entropy_coef: cfg.entropy_coef,
            value_coef: None,
        },
    )
}

/// Owns the optimizer state for one policy.
#[derive(Debug, Clone)]
pub struct Learner {
    pub cfg: LearnerConfig,
    optimizer: Adam,
}

impl Learner {
    pub fn new(policy: &Policy, cfg: LearnerConfig, adam: AdamConfig) -> Result<Self, LearnerError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            optimizer: Adam::new(policy.params(), adam),
        })
    }

    pub fn optimizer(&self) -> &Adam {
        &self.optimizer
    }

    fn apply(&mut self, policy: &mut Policy, grads: &Gradients, lr: f64) -> Result<(), LearnerError> {
        self.optimizer.step(policy.params_mut(), grads, lr)?;
        Ok(())
    }

    /// One gradient step on the demonstration log-likelihood.
    pub fn bc_update(&mut self, policy: &mut Policy, demo: &Demonstration, lr: f64) -> Result<LossComponents, LearnerError> {
        let (loss, grads) = bc_gradients(policy, demo)?;
        self.apply(policy, &grads, lr)?;
        Ok(loss)
    }

    /// `ppo_epochs` passes over the trajectory; reports the first pass.
    pub fn ppo_update(&mut self, policy: &mut Policy, traj: &Trajectory, lr: f64) -> Result<LossComponents, LearnerError> {
        let advantages = policy_advantages(traj, &self.cfg);
        let mut first = None;
        for _ in 0..self.cfg.ppo_epochs {
            let (loss, grads) = ppo_gradients(policy, traj, &advantages, &self.cfg)?;
            self.apply(policy, &grads, lr)?;
            first.get_or_insert(loss);
        }
        Ok(first.unwrap_or_default())
    }

    pub fn a2c_update(&mut self, policy: &mut Policy, traj: &Trajectory, lr: f64) -> Result<LossComponents, LearnerError> {
        let advantages = policy_advantages(traj, &self.cfg);
        let (loss, grads) = a2c_gradients(policy, traj, &advantages, &self.cfg)?;
        self.apply(policy, &grads, lr)?;
        Ok(loss)
    }

    pub fn reinforce_update(&mut self, policy: &mut Policy, traj: &Trajectory, lr: f64) -> Result<LossComponents, LearnerError> {
        let weights = reinforce_weights(traj, &self.cfg);
        let (loss, grads) = reinforce_gradients(policy, traj, &weights, &self.cfg)?;
        self.apply(policy, &grads, lr)?;
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn returns_by_hand() {
        let r = compute_returns(&[0.0, 0.0, 1.0], 0.9);
        let expected = [0.81, 0.9, 1.0];
        for (a, b) in r.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(compute_returns(&[0.5, -1.0, 2.0], 0.0), [0.5, -1.0, 2.0]);
        assert_eq!(compute_returns(&[0.0; 4], 0.95), [0.0; 4]);
        assert!(compute_returns(&[], 0.9).is_empty());
    }

    #[test]
    fn clipped_surrogate_by_hand() {
        assert!((clipped_surrogate(1.2, 2.0, 0.05) - 2.1).abs() < 1e-12);
        assert!((clipped_surrogate(0.8, -1.0, 0.05) + 0.95).abs() < 1e-12);
        assert_eq!(clipped_surrogate(1.0, 3.7, 0.05), 3.7);
        assert_eq!(clipped_surrogate(1.0, -0.4, 0.05), -0.4);
    }

    #[test]
    fn whitening() {
        assert_eq!(whiten(&[2.0, 2.0, 2.0]), [0.0; 3]);
        assert_eq!(whiten(&[5.0]), [0.0]);
        let w = whiten(&[1.0, 2.0, 3.0, 10.0]);
        let mean: f64 = w.iter().sum::<f64>() / 4.0;
        let var: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(LearnerConfig::default().validate().is_ok());
        for bad in [
            LearnerConfig { gamma: 1.0, ..Default::default() },
            LearnerConfig { clip_eps: 0.0, ..Default::default() },
            LearnerConfig { clip_eps: 1.0, ..Default::default() },
            LearnerConfig { entropy_coef: -0.1, ..Default::default() },
            LearnerConfig { ppo_epochs: 0, ..Default::default() },
        ] {
            assert_eq!(bad.validate(), Err(LearnerError::Config));
        }
    }
}
