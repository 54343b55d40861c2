//! Run configuration: every knob of data generation, environment, model,
//! learner, optimizer, scheduler and trainer, loadable from TOML. Unknown
//! keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spo_core::trainer::ModelDims;
use spo_core::world::RewardConfig;
use spo_core::{AdamConfig, Algo, EnvConfig, LearnerConfig, SchedulerConfig, TrainConfig};

use crate::dataset::GenSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct RunConfig {
    pub seed: u64,
    /// Dataset directory used by `train`.
    pub data: Option<PathBuf>,
    pub generate: GenerateSection,
    pub world: WorldSection,
    pub model: ModelSection,
    pub learner: LearnerSection,
    pub adam: AdamSection,
    pub scheduler: SchedulerSection,
    pub trainer: TrainerSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    pub grid_size: usize,
    pub num_blocks: usize,
    pub max_demo_steps: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSection {
    pub max_steps: usize,
    pub eta: f64,
    pub step_cost: f64,
    pub goal_bonus: f64,
    /// Extra error for an unreachable goal; absent means the grid size.
    pub unreachable_penalty: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub word_dim: usize,
    pub action_dim: usize,
    pub lstm_hidden: usize,
    pub obs_hidden: usize,
    pub obs_dim: usize,
    pub trunk_hidden: usize,
    pub instruction_gate: bool,
    pub init_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoName {
    Bc,
    Reinforce,
    A2c,
    Ppo,
}

impl From<AlgoName> for Algo {
    fn from(a: AlgoName) -> Self {
        match a {
            AlgoName::Bc => Algo::Bc,
            AlgoName::Reinforce => Algo::Reinforce,
            AlgoName::A2c => Algo::A2c,
            AlgoName::Ppo => Algo::Ppo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerSection {
    pub algo: AlgoName,
    pub gamma: f64,
    pub clip_eps: f64,
    pub ppo_epochs: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub normalize_advantages: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamSection {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; 0 disables it.
    pub max_grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleName {
    None,
    LfdInit,
    Deterministic,
    Epsilon,
    History,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerSection {
    pub kind: ScheduleName,
    pub lambda: f64,
    pub lfd_init_epochs: usize,
    pub period: u64,
    pub eps_initial: f64,
    pub eps_decay: f64,
    pub eps_floor: f64,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSection {
    pub epochs: usize,
    pub lr: f64,
    pub lr_halving_period: usize,
    pub patience: usize,
    pub greedy_eval: bool,
    pub eval_every_epoch: bool,
}


impl Default for GenerateSection {
    fn default() -> Self {
        Self {
            grid_size: 6,
            num_blocks: 5,
            max_demo_steps: 40,
            train: 500,
            dev: 100,
            test: 100,
            seed: 0,
        }
    }
}

impl Default for WorldSection {
    fn default() -> Self {
        let env = EnvConfig::default();
        Self {
            max_steps: env.max_steps,
            eta: env.reward.eta,
            step_cost: env.reward.step_cost,
            goal_bonus: env.reward.goal_bonus,
            unreachable_penalty: env.unreachable_penalty,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelDims::default();
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

impl Default for LearnerSection {
    fn default() -> Self {
        let l = LearnerConfig::default();
        Self {
            algo: AlgoName::Ppo,
            gamma: l.gamma,
            clip_eps: l.clip_eps,
            ppo_epochs: l.ppo_epochs,
            entropy_coef: l.entropy_coef,
            value_coef: l.value_coef,
            normalize_advantages: l.normalize_advantages,
        }
    }
}

impl Default for AdamSection {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            max_grad_norm: a.max_grad_norm.unwrap_or(0.0),
        }
    }
}

impl Default for SchedulerSection {
    fn default() -> Self {
        Self {
            kind: ScheduleName::History,
            lambda: 1.0,
            lfd_init_epochs: 2,
            period: 4,
            eps_initial: 0.5,
            eps_decay: 0.8,
            eps_floor: 0.05,
            window: spo_core::scheduler::DEFAULT_WINDOW,
        }
    }
}

impl Default for TrainerSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            lr: t.lr,
            lr_halving_period: t.lr_halving_period,
            patience: t.patience,
            greedy_eval: t.greedy_eval,
            eval_every_epoch: t.eval_every_epoch,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().replace('\n', " ")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run configs always serialize")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn gen_spec(&self) -> GenSpec {
        let g = &self.generate;
        GenSpec {
            grid_size: g.grid_size,
            num_blocks: g.num_blocks,
            max_demo_steps: g.max_demo_steps,
            train: g.train,
            dev: g.dev,
            test: g.test,
            seed: g.seed,
        }
    }

    pub fn env(&self) -> EnvConfig {
        let w = &self.world;
        EnvConfig {
            reward: RewardConfig {
                eta: w.eta,
                step_cost: w.step_cost,
                goal_bonus: w.goal_bonus,
            },
            max_steps: w.max_steps,
            unreachable_penalty: w.unreachable_penalty,
        }
    }

    pub fn schedule(&self) -> SchedulerConfig {
        let s = &self.scheduler;
        match s.kind {
            ScheduleName::None => SchedulerConfig::None,
            ScheduleName::LfdInit => SchedulerConfig::LfdInit {
                epochs: s.lfd_init_epochs,
            },
            ScheduleName::Deterministic => SchedulerConfig::Deterministic { period: s.period },
            ScheduleName::Epsilon => SchedulerConfig::Epsilon {
                initial: s.eps_initial,
                decay: s.eps_decay,
                floor: s.eps_floor,
            },
            ScheduleName::History => SchedulerConfig::History { lambda: s.lambda },
        }
    }

    /// The trainer configuration, validated.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let m = &self.model;
        let l = &self.learner;
        let a = &self.adam;
        let t = &self.trainer;
        let cfg = TrainConfig {
            algo: l.algo.into(),
            schedule: self.schedule(),
            epochs: t.epochs,
            lr: t.lr,
            lr_halving_period: t.lr_halving_period,
            seed: self.seed,
            env: self.env(),
            learner: LearnerConfig {
                gamma: l.gamma,
                clip_eps: l.clip_eps,
                ppo_epochs: l.ppo_epochs,
                entropy_coef: l.entropy_coef,
                value_coef: l.value_coef,
                normalize_advantages: l.normalize_advantages,
            },
            adam: AdamConfig {
                beta1: a.beta1,
                beta2: a.beta2,
                eps: a.eps,
                max_grad_norm: (a.max_grad_norm > 0.0).then_some(a.max_grad_norm),
            },
            model: ModelDims {
                word_dim: m.word_dim,
                action_dim: m.action_dim,
                lstm_hidden: m.lstm_hidden,
                obs_hidden: m.obs_hidden,
                obs_dim: m.obs_dim,
                trunk_hidden: m.trunk_hidden,
                instruction_gate: m.instruction_gate,
                init_bound: m.init_bound,
            },
            history_window: self.scheduler.window,
            patience: t.patience,
            greedy_eval: t.greedy_eval,
            eval_every_epoch: t.eval_every_epoch,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
