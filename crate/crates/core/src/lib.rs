//! Block-world instruction following with scheduled policy optimization.
//!
//! The crate is `no_std` (with `alloc`) and contains everything that does not
//! touch a filesystem: the simulator, the synthetic task generator and expert
//! planner, a small reverse-mode autodiff engine, the policy network, the
//! learning rules, the LfD/RL scheduler, and the training loop. File formats,
//! checkpoints, metrics files and the CLI live in the `spo` crate.
#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod autodiff;
pub mod learners;
mod math;
pub mod policy;
pub mod scheduler;
pub mod tasks;
pub mod trainer;
pub mod world;

pub use autodiff::{Adam, AdamConfig, AutodiffError, Gradients, ParamId, ParamSet, Tape, Tensor, Var};
pub use learners::{LearnerConfig, LossComponents, Trajectory};
pub use policy::{ActionDistribution, Policy, PolicyConfig};
pub use scheduler::{Mode, ScheduleDecision, Scheduler, SchedulerConfig};
pub use tasks::{RawTask, Task, Vocabulary};
pub use trainer::{Algo, MetricsRecord, ScheduleKind, TrainConfig};
pub use world::{Action, ActionId, ActionSpace, Cell, Direction, EnvConfig, Goal, WorldState};
