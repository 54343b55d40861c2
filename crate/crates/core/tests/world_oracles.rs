//! Distances, planner optimality, demonstrations and observations against
//! independent oracles.

use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spo_core::tasks::{generate_tasks, plan_expert, GeneratorConfig, Split};
use spo_core::world::{execution_error, observe, step};
use spo_core::{Action, ActionId, Cell, Direction, EnvConfig, Goal, RawTask, WorldState};

#[test]
fn open_grid_distance_is_manhattan_for_all_pairs() {
    for start in 0..25 {
        for target in 0..25 {
            let from = Cell::new(start / 5, start % 5);
            let to = Cell::new(target / 5, target % 5);
            let world = WorldState::new(5, vec![from]).unwrap();
            let goal = Goal {
                target_block: 0,
                target_cell: to,
            };
            assert_eq!(execution_error(&world, &goal), from.manhattan(to));
        }
    }
}

#[test]
fn wall_detour() {
    let world = WorldState::new(5, vec![Cell::new(2, 0), Cell::new(1, 3), Cell::new(2, 3), Cell::new(3, 3)]).unwrap();
    let goal = Goal {
        target_block: 0,
        target_cell: Cell::new(2, 4),
    };
    assert_eq!(execution_error(&world, &goal), 8);
}

/// Fewest target-block moves reaching the goal, by iterative deepening over
/// move sequences of the target block simulated with `world::step`. Other
/// blocks never move, matching the definition of execution error, so the
/// target's cell is the whole search state and revisiting a cell with no more
/// depth left than before can be pruned.
fn exhaustive_target_moves(world: &WorldState, goal: &Goal, limit: usize) -> Option<usize> {
    let env = EnvConfig {
        max_steps: limit + 1,
        ..EnvConfig::default()
    };
    fn search(state: &WorldState, goal: &Goal, env: &EnvConfig, depth: usize, seen: &mut HashMap<Cell, usize>) -> bool {
        let at = state.block(goal.target_block);
        if at == goal.target_cell {
            return true;
        }
        if depth == 0 || seen.get(&at).is_some_and(|&d| d >= depth) {
            return false;
        }
        seen.insert(at, depth);
        Direction::ALL.iter().any(|&dir| {
            let a = state.action_space().encode(Action::Move {
                block: goal.target_block,
                dir,
            });
            let out = step(state, a, goal, env).unwrap();
            !out.invalid && search(&out.next_state, goal, env, depth - 1, seen)
        })
    }
    (0..=limit).find(|&d| search(world, goal, &env, d, &mut HashMap::new()))
}

#[test]
fn planner_is_optimal_on_small_grids() {
    for (grid, blocks) in [(3, 2), (4, 2), (4, 3)] {
        let cfg = GeneratorConfig {
            grid_size: grid,
            num_blocks: blocks,
            ..GeneratorConfig::default()
        };
        for task in generate_tasks(&cfg, Split::Train, 60, grid as u64 * 10 + blocks as u64).unwrap() {
            let moves = task.demonstration.len() - 1;
            assert_eq!(exhaustive_target_moves(&task.initial_world, &task.goal, moves + 2), Some(moves), "{task:?}");
        }
    }
}

/// Random positions and goals on 4x4 grids, including ones the generator
/// would not produce (goal cells far from any reference block).
#[test]
fn planner_is_optimal_on_random_layouts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 200 {
        let blocks = rng.gen_range(1..=3);
        let mut cells: Vec<Cell> = Vec::new();
        while cells.len() < blocks {
            let c = Cell::new(rng.gen_range(0..4), rng.gen_range(0..4));
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        let world = WorldState::new(4, cells).unwrap();
        let goal = Goal {
            target_block: rng.gen_range(0..blocks),
            target_cell: Cell::new(rng.gen_range(0..4), rng.gen_range(0..4)),
        };
        let Ok(plan) = plan_expert(&world, &goal) else {
            assert_eq!(exhaustive_target_moves(&world, &goal, 15), None);
            continue;
        };
        assert_eq!(exhaustive_target_moves(&world, &goal, plan.len() + 1), Some(plan.len() - 1));
        checked += 1;
    }
}

fn replay(task: &RawTask, env: &EnvConfig) -> (WorldState, usize) {
    let mut state = task.initial_world.clone();
    for &a in &task.demonstration {
        let out = step(&state, a, &task.goal, env).unwrap();
        assert!(!out.invalid);
        state = out.next_state;
    }
    (state, task.demonstration.len())
}

#[test]
fn thousand_demonstrations_replay_to_zero_error() {
    let env = EnvConfig::default();
    let tasks = generate_tasks(&GeneratorConfig::default(), Split::Train, 1000, 99).unwrap();
    for task in &tasks {
        let (end, len) = replay(task, &env);
        assert!(end.is_terminated());
        assert_eq!(execution_error(&end, &task.goal), 0);
        assert_eq!(len, execution_error(&task.initial_world, &task.goal) + 1);
        assert_eq!(*task.demonstration.last().unwrap(), task.initial_world.action_space().stop());
    }
}

#[test]
fn splits_do_not_share_tasks() {
    let cfg = GeneratorConfig::default();
    let train = generate_tasks(&cfg, Split::Train, 200, 5).unwrap();
    let dev = generate_tasks(&cfg, Split::Dev, 200, 5).unwrap();
    let same = train.iter().zip(&dev).filter(|(a, b)| a == b).count();
    assert_eq!(same, 0);
}

proptest! {
    /// After any action sequence blocks stay on distinct in-grid cells, each
    /// block channel has a single one at its block, and the goal channel a
    /// single one at the goal.
    #[test]
    fn occupancy_and_observation_stay_consistent(seed in any::<u64>(), actions in prop::collection::vec(0u32..21, 0..40)) {
        let task = &generate_tasks(&GeneratorConfig::default(), Split::Train, 1, seed).unwrap()[0];
        let env = EnvConfig::default();
        let mut state = task.initial_world.clone();
        for &a in &actions {
            if state.is_terminated() {
                break;
            }
            state = step(&state, ActionId(a), &task.goal, &env).unwrap().next_state;
            prop_assert!(state.steps_taken() <= env.max_steps);
        }
        let g = state.grid_size();
        let blocks = state.blocks();
        for (i, a) in blocks.iter().enumerate() {
            prop_assert!(a.row < g && a.col < g);
            prop_assert!(blocks[i + 1..].iter().all(|b| b != a));
        }
        let obs = observe(&state, &task.goal);
        prop_assert_eq!(obs.data.iter().sum::<f64>(), (blocks.len() + 1) as f64);
        for (b, cell) in blocks.iter().enumerate() {
            prop_assert_eq!(obs.get(b, cell.row, cell.col), 1.0);
        }
        let goal = task.goal.target_cell;
        prop_assert_eq!(obs.get(blocks.len(), goal.row, goal.col), 1.0);
    }
}
