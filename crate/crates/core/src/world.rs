//! Deterministic block world: a `G x G` grid holding `B` uniquely numbered
//! blocks. Each action moves a single block one cell or ends the episode.
//!
//! Rewards are potential-based on the execution error (the number of moves
//! the target block still needs), so the shaped return of an episode
//! telescopes to `eta * (d_0 - d_final)` plus step costs and the goal bonus.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tasks::Task;

/// A grid coordinate. Row 0 is the northern edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    /// The neighbouring cell in `dir`, or `None` when it falls off a grid of
    /// side `grid_size`.
    pub fn neighbor(self, dir: Direction, grid_size: usize) -> Option<Cell> {
        let (row, col) = match dir {
            Direction::North => (self.row.checked_sub(1)?, self.col),
            Direction::South => (self.row + 1, self.col),
            Direction::East => (self.row, self.col + 1),
            Direction::West => (self.row, self.col.checked_sub(1)?),
        };
        (row < grid_size && col < grid_size).then_some(Cell { row, col })
    }

    fn index(self, grid_size: usize) -> usize {
        self.row * grid_size + self.col
    }
}

/// Movement direction. The numeric codes are part of the dataset format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    North = 0,
    South = 1,
    East = 2,
    West = 3,
}

impl Direction {
    /// Fixed order used for codes and for planner tie-breaking.
    pub const ALL: [Direction; 4] = [Direction::North, Direction::South, Direction::East, Direction::West];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Direction> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::North => "north",
            Direction::South => "south",
            Direction::East => "east",
            Direction::West => "west",
        }
    }
}

/// Integer action code in `[0, 4B]`. `4B` is STOP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub u32);

impl ActionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Decoded action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Move { block: usize, dir: Direction },
    Stop,
}

/// The factorized action codec for a world with `num_blocks` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    pub num_blocks: usize,
}

impl ActionSpace {
    pub const fn new(num_blocks: usize) -> Self {
        Self { num_blocks }
    }

    /// `4B + 1`.
    pub const fn size(self) -> usize {
        4 * self.num_blocks + 1
    }

    pub const fn stop(self) -> ActionId {
        ActionId((4 * self.num_blocks) as u32)
    }

    pub fn encode(self, action: Action) -> ActionId {
        match action {
            Action::Move { block, dir } => ActionId((block * 4 + dir.code()) as u32),
            Action::Stop => self.stop(),
        }
    }

    pub fn decode(self, id: ActionId) -> Result<Action, WorldError> {
        let code = id.index();
        if code == 4 * self.num_blocks {
            Ok(Action::Stop)
        } else if code < 4 * self.num_blocks {
            Ok(Action::Move {
                block: code / 4,
                dir: Direction::ALL[code % 4],
            })
        } else {
            Err(WorldError::InvalidAction {
                code: id.0,
                action_count: self.size(),
            })
        }
    }

    pub fn iter(self) -> impl Iterator<Item = ActionId> {
        (0..self.size() as u32).map(ActionId)
    }
}

/// The instructed outcome: `target_block` should end on `target_cell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Goal {
    pub target_block: usize,
    pub target_cell: Cell,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldState {
    grid_size: usize,
    blocks: Vec<Cell>,
    steps_taken: usize,
    terminated: bool,
}

impl WorldState {
    /// Validates bounds and occupancy.
    pub fn new(grid_size: usize, blocks: Vec<Cell>) -> Result<Self, WorldError> {
        if grid_size == 0 {
            return Err(WorldError::InvalidState("grid size must be positive"));
        }
        let mut seen = vec![false; grid_size * grid_size];
        for &cell in &blocks {
            if cell.row >= grid_size || cell.col >= grid_size {
                return Err(WorldError::InvalidState("block outside the grid"));
            }
            let idx = cell.index(grid_size);
            if seen[idx] {
                return Err(WorldError::InvalidState("two blocks share a cell"));
            }
            seen[idx] = true;
        }
        Ok(Self {
            grid_size,
            blocks,
            steps_taken: 0,
            terminated: false,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Cell] {
        &self.blocks
    }

    pub fn block(&self, id: usize) -> Cell {
        self.blocks[id]
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace::new(self.blocks.len())
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.blocks.contains(&cell)
    }

    pub fn check_goal(&self, goal: &Goal) -> Result<(), WorldError> {
        if goal.target_block >= self.blocks.len() {
            return Err(WorldError::InvalidGoal("target block does not exist"));
        }
        if goal.target_cell.row >= self.grid_size || goal.target_cell.col >= self.grid_size {
            return Err(WorldError::InvalidGoal("target cell outside the grid"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    /// Weight of the potential difference `d_before - d_after`.
    pub eta: f64,
    pub step_cost: f64,
    /// Paid on STOP when the execution error is zero.
    pub goal_bonus: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            step_cost: 0.02,
            goal_bonus: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub reward: RewardConfig,
    pub max_steps: usize,
    /// Added to the Manhattan distance when the goal is unreachable.
    /// `None` means the grid size.
    pub unreachable_penalty: Option<usize>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            reward: RewardConfig::default(),
            max_steps: 40,
            unreachable_penalty: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: WorldState,
    pub reward: f64,
    pub invalid: bool,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorldError {
    InvalidAction { code: u32, action_count: usize },
    Terminated,
    StepLimit { max_steps: usize },
    InvalidState(&'static str),
    InvalidGoal(&'static str),
    EmptyTaskSet,
}

impl fmt::Display for WorldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorldError::InvalidAction { code, action_count } => {
                write!(f, "action code {code} outside [0, {})", action_count)
            }
            WorldError::Terminated => f.write_str("cannot step a terminated episode"),
            WorldError::StepLimit { max_steps } => {
                write!(f, "episode already used its {max_steps} steps")
            }
            WorldError::InvalidState(why) => write!(f, "invalid world state: {why}"),
            WorldError::InvalidGoal(why) => write!(f, "invalid goal: {why}"),
            WorldError::EmptyTaskSet => f.write_str("task set is empty"),
        }
    }
}

/// Applies one action.
pub fn step(state: &WorldState, action: ActionId, goal: &Goal, cfg: &EnvConfig) -> Result<StepOutcome, WorldError> {
    if state.terminated {
        return Err(WorldError::Terminated);
    }
    if state.steps_taken >= cfg.max_steps {
        return Err(WorldError::StepLimit {
            max_steps: cfg.max_steps,
        });
    }
    let decoded = state.action_space().decode(action)?;
    let d_before = execution_error_with(state, goal, cfg.unreachable_penalty);

    let mut next = state.clone();
    next.steps_taken += 1;
    let mut invalid = false;
    let mut stopped = false;
    match decoded {
        Action::Stop => stopped = true,
        Action::Move { block, dir } => match state.blocks[block].neighbor(dir, state.grid_size) {
            Some(cell) if !state.is_occupied(cell) => next.blocks[block] = cell,
            _ => invalid = true,
        },
    }
    let done = stopped || next.steps_taken >= cfg.max_steps;
    next.terminated = done;

    let d_after = if invalid || stopped {
        d_before
    } else {
        execution_error_with(&next, goal, cfg.unreachable_penalty)
    };
    let r = &cfg.reward;
    let mut reward = r.eta * (d_before as f64 - d_after as f64) - r.step_cost;
    if stopped && d_after == 0 {
        reward += r.goal_bonus;
    }
    Ok(StepOutcome {
        next_state: next,
        reward,
        invalid,
        done,
    })
}

/// BFS distances (in single-cell moves) from every cell to `goal.target_cell`,
/// treating every block other than the target as a static obstacle. Indexed
/// by `row * G + col`; `None` for unreachable cells and obstacles.
pub fn distance_field(state: &WorldState, goal: &Goal) -> Vec<Option<u32>> {
    let g = state.grid_size;
    let mut blocked = vec![false; g * g];
    for (id, &cell) in state.blocks.iter().enumerate() {
        if id != goal.target_block {
            blocked[cell.index(g)] = true;
        }
    }
    let mut dist = vec![None; g * g];
    let start = goal.target_cell;
    if blocked[start.index(g)] {
        return dist;
    }
    dist[start.index(g)] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(cell) = queue.pop_front() {
        let d = dist[cell.index(g)].unwrap_or(0);
        for dir in Direction::ALL {
            if let Some(n) = cell.neighbor(dir, g) {
                let idx = n.index(g);
                if !blocked[idx] && dist[idx].is_none() {
                    dist[idx] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
    }
    dist
}

/// Minimum number of moves the target block needs to reach the goal cell,
/// with the default unreachable penalty (the grid size).
pub fn execution_error(state: &WorldState, goal: &Goal) -> usize {
    execution_error_with(state, goal, None)
}

pub fn execution_error_with(state: &WorldState, goal: &Goal, unreachable_penalty: Option<usize>) -> usize {
    let from = state.blocks[goal.target_block];
    if from == goal.target_cell {
        return 0;
    }
    match distance_field(state, goal)[from.index(state.grid_size)] {
        Some(d) => d as usize,
        None => from.manhattan(goal.target_cell) + unreachable_penalty.unwrap_or(state.grid_size),
    }
}

/// One-hot symbolic observation with `B + 1` channels of `G x G` cells:
/// channel `b` marks block `b`, the last channel marks the goal cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub channels: usize,
    pub grid_size: usize,
    pub data: Vec<f64>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.grid_size + row) * self.grid_size + col]
    }
}

pub fn observation_len(num_blocks: usize, grid_size: usize) -> usize {
    (num_blocks + 1) * grid_size * grid_size
}

pub fn observe(state: &WorldState, goal: &Goal) -> Observation {
    let g = state.grid_size;
    let channels = state.blocks.len() + 1;
    let mut data = vec![0.0; channels * g * g];
    for (b, &cell) in state.blocks.iter().enumerate() {
        data[b * g * g + cell.index(g)] = 1.0;
    }
    data[(channels - 1) * g * g + goal.target_cell.index(g)] = 1.0;
    Observation {
        channels,
        grid_size: g,
        data,
    }
}

/// INITIAL baseline: mean execution error before any action.
pub fn initial_error_baseline(tasks: &[Task]) -> Result<f64, WorldError> {
    if tasks.is_empty() {
        return Err(WorldError::EmptyTaskSet);
    }
    let total: usize = tasks.iter().map(|t| execution_error(&t.initial_world, &t.goal)).sum();
    Ok(total as f64 / tasks.len() as f64)
}

/// RANDOM baseline: uniform actions until STOP or the step limit; mean final
/// execution error.
pub fn random_policy_baseline(tasks: &[Task], cfg: &EnvConfig, seed: u64) -> Result<f64, WorldError> {
    if tasks.is_empty() {
        return Err(WorldError::EmptyTaskSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0usize;
    for task in tasks {
        let space = task.initial_world.action_space();
        let mut state = task.initial_world.clone();
        loop {
            let action = ActionId(rng.gen_range(0..space.size() as u32));
            let out = step(&state, action, &task.goal, cfg)?;
            state = out.next_state;
            if out.done {
                break;
            }
        }
        total += execution_error_with(&state, &task.goal, cfg.unreachable_penalty);
    }
    Ok(total as f64 / tasks.len() as f64)
}
