//! Synthetic instructions, vocabulary, and the optimal expert planner.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::world::{
    distance_field, execution_error, Action, ActionId, Cell, Direction, Goal, WorldError, WorldState,
};

/// Block names, indexed by block id.
pub const BLOCK_NAMES: [&str; 20] = [
    "red", "blue", "green", "yellow", "orange", "purple", "pink", "brown", "black", "white", "gray", "cyan",
    "magenta", "gold", "silver", "teal", "navy", "maroon", "olive", "lime",
];

/// Instruction templates. `{a}` is the block to move, `{b}` the reference
/// block and `{rel}` the direction word.
pub const TEMPLATES: [&str; 6] = [
    "move the {a} block to the {rel} of the {b} block",
    "put the {a} block {rel} of the {b} block",
    "place the {a} block directly {rel} of the {b} block",
    "slide the {a} block so it sits {rel} of the {b} block",
    "the {a} block should go to the {rel} side of the {b} block",
    "push the {a} block next to the {b} block on its {rel} side",
];

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Lowercases and splits on anything that is not alphanumeric.
pub fn split_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(ToString::to_string)
        .collect()
}

/// Dense token ids. Ids 0 and 1 are PAD and UNK; the remaining ids follow
/// first occurrence in the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    ids: BTreeMap<String, u32>,
}

impl Vocabulary {
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Self::from_words([PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]);
        for text in corpus {
            for word in split_words(text) {
                if !vocab.ids.contains_key(&word) {
                    vocab.ids.insert(word.clone(), vocab.words.len() as u32);
                    vocab.words.push(word);
                }
            }
        }
        vocab
    }

    /// Rebuilds a vocabulary from its id-ordered word list, as stored on disk.
    /// Duplicates keep their first id.
    pub fn from_words(words: impl IntoIterator<Item = String>) -> Self {
        let mut vocab = Self {
            words: Vec::new(),
            ids: BTreeMap::new(),
        };
        for word in words {
            vocab.ids.entry(word.clone()).or_insert(vocab.words.len() as u32);
            vocab.words.push(word);
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn lookup(&self, word: &str) -> u32 {
        self.ids.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        split_words(text).iter().map(|w| self.lookup(w)).collect()
    }

    pub fn detokenize(&self, ids: &[u32]) -> String {
        let words: Vec<&str> = ids.iter().map(|&id| self.word(id).unwrap_or(UNK_TOKEN)).collect();
        words.join(" ")
    }
}

/// A task as stored on disk: text, world, goal and demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTask {
    pub instruction: String,
    pub initial_world: WorldState,
    pub goal: Goal,
    pub demonstration: Vec<ActionId>,
}

/// A task with its instruction indexed against a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub instruction_text: String,
    pub instruction_tokens: Vec<u32>,
    pub initial_world: WorldState,
    pub goal: Goal,
    pub demonstration: Vec<ActionId>,
}

impl Task {
    pub fn from_raw(raw: RawTask, vocab: &Vocabulary) -> Self {
        Self {
            instruction_tokens: vocab.tokenize(&raw.instruction),
            instruction_text: raw.instruction,
            initial_world: raw.initial_world,
            goal: raw.goal,
            demonstration: raw.demonstration,
        }
    }

    pub fn to_raw(&self) -> RawTask {
        RawTask {
            instruction: self.instruction_text.clone(),
            initial_world: self.initial_world.clone(),
            goal: self.goal,
            demonstration: self.demonstration.clone(),
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.initial_world.num_blocks()
    }

    pub fn grid_size(&self) -> usize {
        self.initial_world.grid_size()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskError {
    Unreachable,
    Generation(String),
    World(WorldError),
}

impl fmt::Display for TaskError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskError::Unreachable => f.write_str("goal is unreachable for the target block"),
            TaskError::Generation(why) => write!(f, "task generation failed: {why}"),
            TaskError::World(e) => write!(f, "{e}"),
        }
    }
}

impl From<WorldError> for TaskError {
    fn from(e: WorldError) -> Self {
        TaskError::World(e)
    }
}

/// Shortest move sequence for the target block, followed by STOP. Among
/// shortest paths, each step prefers N, S, E, W in that order.
pub fn plan_expert(world: &WorldState, goal: &Goal) -> Result<Vec<ActionId>, TaskError> {
    world.check_goal(goal)?;
    let space = world.action_space();
    let g = world.grid_size();
    let dist = distance_field(world, goal);
    let mut at = world.block(goal.target_block);
    let mut remaining = dist[at.row * g + at.col].ok_or(TaskError::Unreachable)?;
    let mut plan = Vec::with_capacity(remaining as usize + 1);
    while remaining > 0 {
        let (dir, next) = Direction::ALL
            .iter()
            .filter_map(|&d| at.neighbor(d, g).map(|n| (d, n)))
            .find(|(_, n)| dist[n.row * g + n.col] == Some(remaining - 1))
            .ok_or(TaskError::Unreachable)?;
        plan.push(space.encode(Action::Move {
            block: goal.target_block,
            dir,
        }));
        at = next;
        remaining -= 1;
    }
    plan.push(space.stop());
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train = 0,
    Dev = 1,
    Test = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub grid_size: usize,
    pub num_blocks: usize,
    /// Tasks whose demonstration would exceed this many actions are resampled.
    pub max_steps: usize,
    pub max_attempts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            grid_size: 6,
            num_blocks: 5,
            max_steps: 40,
            max_attempts: 1000,
        }
    }
}

/// Generates `count` tasks for `split`. Task `i` draws from ChaCha stream
/// `(split << 32) | i` of `seed`, so splits never share a random stream and
/// the output depends only on `(cfg, split, count, seed)`.
pub fn generate_tasks(cfg: &GeneratorConfig, split: Split, count: usize, seed: u64) -> Result<Vec<RawTask>, TaskError> {
    if cfg.num_blocks < 2 || cfg.grid_size < 3 || count == 0 {
        return Err(TaskError::Generation(format!(
            "need blocks >= 2, grid >= 3, count >= 1 (got {}, {}, {count})",
            cfg.num_blocks, cfg.grid_size
        )));
    }
    if cfg.num_blocks > BLOCK_NAMES.len() {
        return Err(TaskError::Generation(format!("at most {} named blocks", BLOCK_NAMES.len())));
    }
    if cfg.num_blocks >= cfg.grid_size * cfg.grid_size {
        return Err(TaskError::Generation("grid too small for the block count".into()));
    }
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((split as u64) << 32) | i as u64);
            sample_task(cfg, &mut rng)
        })
        .collect()
}

fn sample_task(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<RawTask, TaskError> {
    let g = cfg.grid_size;
    for _ in 0..cfg.max_attempts {
        let mut blocks: Vec<Cell> = Vec::with_capacity(cfg.num_blocks);
        while blocks.len() < cfg.num_blocks {
            let cell = Cell::new(rng.gen_range(0..g), rng.gen_range(0..g));
            if !blocks.contains(&cell) {
                blocks.push(cell);
            }
        }
        let target_block = rng.gen_range(0..cfg.num_blocks);
        let mut reference = rng.gen_range(0..cfg.num_blocks - 1);
        if reference >= target_block {
            reference += 1;
        }
        let relation = Direction::ALL[rng.gen_range(0..4)];
        let template = TEMPLATES[rng.gen_range(0..TEMPLATES.len())];

        let Some(target_cell) = blocks[reference].neighbor(relation, g) else {
            continue;
        };
        if blocks.contains(&target_cell) {
            continue;
        }
        let world = WorldState::new(g, blocks)?;
        let goal = Goal {
            target_block,
            target_cell,
        };
        let demonstration = match plan_expert(&world, &goal) {
            Ok(plan) if plan.len() <= cfg.max_steps => plan,
            _ => continue,
        };
        debug_assert_eq!(demonstration.len(), execution_error(&world, &goal) + 1);
        let instruction = template
            .replace("{a}", BLOCK_NAMES[target_block])
            .replace("{b}", BLOCK_NAMES[reference])
            .replace("{rel}", relation.name());
        return Ok(RawTask {
            instruction,
            initial_world: world,
            goal,
            demonstration,
        });
    }
    Err(TaskError::Generation(format!(
        "no feasible task after {} attempts",
        cfg.max_attempts
    )))
}
