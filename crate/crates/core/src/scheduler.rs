//! Per-sample choice between a demonstration (LfD) update and an RL update.
//!
//! The history-baseline rule keeps a FIFO window `H` of recent execution
//! errors. Before each RL rollout it computes
//! `b = mean(H) + λ · std(H) / sqrt(|H|)` from the window as it stands; the
//! rollout's error `e` is then appended, and `e > b` schedules one LfD update
//! for the next sample. An LfD update appends the expert's error (0 for the
//! optimal planner) and clears the flag.

use alloc::collections::VecDeque;
use core::fmt;

use rand::Rng;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Lfd,
    Rl,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Lfd => "lfd",
            Mode::Rl => "rl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleDecision {
    pub mode: Mode,
    /// Baseline the next RL error will be compared against (history mode).
    pub baseline: Option<f64>,
}

impl ScheduleDecision {
    fn lfd() -> Self {
        Self {
            mode: Mode::Lfd,
            baseline: None,
        }
    }

    fn rl(baseline: Option<f64>) -> Self {
        Self {
            mode: Mode::Rl,
            baseline,
        }
    }
}

/// `mean(H) + λ σ_c`, with `σ_c` the sample standard deviation (n - 1) over
/// `sqrt(|H|)`. One element gives `σ_c = 0`; an empty window gives `-∞`.
pub fn baseline<'a>(history: impl IntoIterator<Item = &'a f64>, lambda: f64) -> f64 {
    let values: alloc::vec::Vec<f64> = history.into_iter().copied().collect();
    let n = values.len();
    if n == 0 {
        return f64::NEG_INFINITY;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return mean;
    }
    let sum_sq: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sample_std = math::sqrt(sum_sq / (n - 1) as f64);
    mean + lambda * sample_std / math::sqrt(n as f64)
}

/// Bounded FIFO of execution errors.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    window: usize,
    values: VecDeque<f64>,
}

impl History {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            values: VecDeque::with_capacity(window),
        }
    }

    pub fn push(&mut self, error: f64) {
        if self.values.len() == self.window {
            self.values.pop_front();
        }
        if self.window > 0 {
            self.values.push_back(error);
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.values.iter()
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.values.is_empty()).then(|| self.values.iter().sum::<f64>() / self.values.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchedulerConfig {
    /// RL on every sample.
    None,
    /// LfD on every sample for the first `epochs` epochs, then RL.
    LfdInit { epochs: usize },
    /// LfD on every `period`-th update.
    Deterministic { period: u64 },
    /// LfD with probability `max(floor, initial · decay^epoch)`.
    Epsilon { initial: f64, decay: f64, floor: f64 },
    /// History baseline with coefficient `lambda`.
    History { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchedulerError {
    Config(&'static str),
    /// An RL error was recorded without a preceding RL decision.
    NoPendingRollout,
}

impl fmt::Display for SchedulerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulerError::Config(why) => write!(f, "invalid schedule: {why}"),
            SchedulerError::NoPendingRollout => f.write_str("recorded an RL error without an RL decision"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    cfg: SchedulerConfig,
    history: History,
    flag: bool,
    update_counter: u64,
    pending: Option<Option<f64>>,
}

/// Window of the history baseline.
pub const DEFAULT_WINDOW: usize = 100;

/// Error appended to the history for an expert (planner) trajectory.
pub const EXPERT_ERROR: f64 = 0.0;

impl Scheduler {
    pub fn new(cfg: SchedulerConfig, window: usize) -> Result<Self, SchedulerError> {
        match cfg {
            SchedulerConfig::Deterministic { period: 0 } => return Err(SchedulerError::Config("period must be positive")),
            SchedulerConfig::Epsilon { initial, decay, floor }
                if !(0.0..=1.0).contains(&initial) || !(0.0..=1.0).contains(&decay) || !(0.0..=1.0).contains(&floor) =>
            {
                return Err(SchedulerError::Config("epsilon parameters must lie in [0, 1]"))
            }
            SchedulerConfig::History { lambda } if !(lambda >= 0.0) => {
                return Err(SchedulerError::Config("lambda must be non-negative"))
            }
            _ => {}
        }
        if window == 0 {
            return Err(SchedulerError::Config("history window must be positive"));
        }
        Ok(Self {
            cfg,
            history: History::new(window),
            flag: false,
            update_counter: 0,
            pending: None,
        })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.cfg
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn flag(&self) -> bool {
        self.flag
    }

    /// Current LfD probability of the epsilon schedule.
    pub fn epsilon(initial: f64, decay: f64, floor: f64, epoch: usize) -> f64 {
        (initial * math::powi(decay, epoch as i32)).max(floor)
    }

    /// Chooses the update for the next sample. LfD decisions are recorded in
    /// the history immediately; RL decisions wait for [`Scheduler::record_rl`].
    pub fn decide(&mut self, epoch: usize, rng: &mut impl Rng) -> Result<ScheduleDecision, SchedulerError> {
        if self.pending.is_some() {
            return Err(SchedulerError::Config("previous RL decision was never recorded"));
        }
        self.update_counter += 1;
        let decision = match self.cfg {
            SchedulerConfig::None => ScheduleDecision::rl(None),
            SchedulerConfig::LfdInit { epochs } if epoch < epochs => ScheduleDecision::lfd(),
            SchedulerConfig::LfdInit { .. } => ScheduleDecision::rl(None),
            SchedulerConfig::Deterministic { period } if self.update_counter.is_multiple_of(period) => ScheduleDecision::lfd(),
            SchedulerConfig::Deterministic { .. } => ScheduleDecision::rl(None),
            SchedulerConfig::Epsilon { initial, decay, floor } => {
                let eps = Self::epsilon(initial, decay, floor, epoch);
                if rng.gen::<f64>() < eps {
                    ScheduleDecision::lfd()
                } else {
                    ScheduleDecision::rl(None)
                }
            }
            SchedulerConfig::History { .. } if self.flag => ScheduleDecision::lfd(),
            SchedulerConfig::History { lambda } => ScheduleDecision::rl(Some(baseline(self.history.iter(), lambda))),
        };
        match decision.mode {
            Mode::Lfd => {
                self.history.push(EXPERT_ERROR);
                self.flag = false;
            }
            Mode::Rl => self.pending = Some(decision.baseline),
        }
        Ok(decision)
    }

    /// Records the finished rollout's error. Returns whether the next sample
    /// is scheduled for LfD (`e > b`, history mode only).
    pub fn record_rl(&mut self, error: f64) -> Result<bool, SchedulerError> {
        let baseline = self.pending.take().ok_or(SchedulerError::NoPendingRollout)?;
        self.history.push(error);
        if let Some(b) = baseline {
            if error > b {
                self.flag = true;
            }
        }
        Ok(self.flag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn history_scheduler(lambda: f64, prefill: &[f64]) -> Scheduler {
        let mut s = Scheduler::new(SchedulerConfig::History { lambda }, DEFAULT_WINDOW).unwrap();
        for &e in prefill {
            s.history.push(e);
        }
        s
    }

    #[test]
    fn baseline_by_hand() {
        assert_eq!(baseline(&[2.0, 2.0, 2.0, 2.0], 1.0), 2.0);
        // mean 2, sample std sqrt(8), σ_c = sqrt(8) / sqrt(2) = 2.
        assert!((baseline(&[4.0, 0.0], 1.0) - 4.0).abs() < 1e-12);
        assert_eq!(baseline(&[], 1.0), f64::NEG_INFINITY);
        assert_eq!(baseline(&[], 0.0), f64::NEG_INFINITY);
        assert_eq!(baseline(&[3.5], 10.0), 3.5);
    }

    #[test]
    fn fresh_scheduler_forces_lfd_after_first_rollout() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = history_scheduler(1.0, &[]);
        let d = s.decide(0, &mut rng).unwrap();
        assert_eq!(d.mode, Mode::Rl);
        assert_eq!(d.baseline, Some(f64::NEG_INFINITY));
        assert!(s.record_rl(0.0).unwrap());
        assert_eq!(s.decide(0, &mut rng).unwrap().mode, Mode::Lfd);
        assert!(!s.flag());
        assert_eq!(s.history().iter().copied().collect::<Vec<_>>(), [0.0, 0.0]);
    }

    #[test]
    fn strict_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = history_scheduler(1.0, &[2.0, 2.0, 2.0, 2.0]);
        assert_eq!(s.decide(0, &mut rng).unwrap().baseline, Some(2.0));
        assert!(!s.record_rl(2.0).unwrap());
        assert_eq!(s.decide(0, &mut rng).unwrap().mode, Mode::Rl);
    }

    #[test]
    fn two_element_history_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = history_scheduler(1.0, &[4.0, 0.0]);
        s.decide(0, &mut rng).unwrap();
        assert!(s.record_rl(5.0).unwrap());
        let mut s = history_scheduler(1.0, &[4.0, 0.0]);
        s.decide(0, &mut rng).unwrap();
        assert!(!s.record_rl(3.0).unwrap());
    }

    #[test]
    fn recording_without_decision_is_a_contract_violation() {
        let mut s = history_scheduler(1.0, &[]);
        assert_eq!(s.record_rl(1.0), Err(SchedulerError::NoPendingRollout));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        s.decide(0, &mut rng).unwrap();
        assert!(s.decide(0, &mut rng).is_err());
    }

    #[test]
    fn deterministic_every_nth_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = Scheduler::new(SchedulerConfig::Deterministic { period: 4 }, 100).unwrap();
        let mut lfd_at = Vec::new();
        for update in 1..=12 {
            if s.decide(0, &mut rng).unwrap().mode == Mode::Lfd {
                lfd_at.push(update);
            } else {
                s.record_rl(1.0).unwrap();
            }
        }
        assert_eq!(lfd_at, [4, 8, 12]);
        assert!(Scheduler::new(SchedulerConfig::Deterministic { period: 0 }, 100).is_err());
    }

    #[test]
    fn epsilon_decay_and_floor() {
        assert!((Scheduler::epsilon(0.5, 0.8, 0.05, 2) - 0.32).abs() < 1e-12);
        assert_eq!(Scheduler::epsilon(0.5, 0.8, 0.05, 40), 0.05);
        assert_eq!(Scheduler::epsilon(0.5, 0.8, 0.05, 0), 0.5);
    }

    #[test]
    fn epsilon_sampling_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SchedulerConfig::Epsilon {
            initial: 0.5,
            decay: 0.8,
            floor: 0.05,
        };
        let mut s = Scheduler::new(cfg, 100).unwrap();
        let n = 20_000;
        let mut lfd = 0;
        for _ in 0..n {
            if s.decide(2, &mut rng).unwrap().mode == Mode::Lfd {
                lfd += 1;
            } else {
                s.record_rl(0.0).unwrap();
            }
        }
        let p = lfd as f64 / n as f64;
        let sigma = (0.32f64 * 0.68 / n as f64).sqrt();
        assert!((p - 0.32).abs() < 4.0 * sigma, "{p}");
    }

    #[test]
    fn lfd_init_switches_after_warm_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = Scheduler::new(SchedulerConfig::LfdInit { epochs: 2 }, 100).unwrap();
        assert_eq!(s.decide(0, &mut rng).unwrap().mode, Mode::Lfd);
        assert_eq!(s.decide(1, &mut rng).unwrap().mode, Mode::Lfd);
        assert_eq!(s.decide(2, &mut rng).unwrap().mode, Mode::Rl);
    }

    #[test]
    fn window_evicts_oldest() {
        let mut h = History::new(3);
        for e in [1.0, 2.0, 3.0, 4.0, 5.0] {
            h.push(e);
        }
        assert_eq!(h.iter().copied().collect::<Vec<_>>(), [3.0, 4.0, 5.0]);
        assert_eq!(h.mean(), Some(4.0));
    }

    #[test]
    fn invalid_configs() {
        assert!(Scheduler::new(SchedulerConfig::History { lambda: -1.0 }, 100).is_err());
        assert!(Scheduler::new(SchedulerConfig::History { lambda: f64::NAN }, 100).is_err());
        assert!(Scheduler::new(SchedulerConfig::None, 0).is_err());
        let bad_eps = SchedulerConfig::Epsilon {
            initial: 1.5,
            decay: 0.8,
            floor: 0.0,
        };
        assert!(Scheduler::new(bad_eps, 100).is_err());
    }
}
