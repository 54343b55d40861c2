//! JSON-lines task files, the vocabulary file, and the dataset header.
//!
//! A dataset directory holds `train.jsonl`, `dev.jsonl`, `test.jsonl`,
//! `vocab.txt` (one word per line, line number = token id) and `meta.json`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use spo_core::tasks::{generate_tasks, GeneratorConfig, Split};
use spo_core::{ActionId, ActionSpace, Cell, Goal, RawTask, Task, Vocabulary, WorldState};

use crate::{Error, Result};

pub const SPLITS: [(Split, &str); 3] = [(Split::Train, "train"), (Split::Dev, "dev"), (Split::Test, "test")];
pub const VOCAB_FILE: &str = "vocab.txt";
pub const META_FILE: &str = "meta.json";

pub fn split_file(name: &str) -> String {
    format!("{name}.jsonl")
}

/// One line of a task file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRecord {
    pub instruction: String,
    pub grid_size: usize,
    pub blocks: Vec<[usize; 2]>,
    pub goal: GoalRecord,
    pub demo: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalRecord {
    pub block: usize,
    pub cell: [usize; 2],
}

impl From<&RawTask> for TaskRecord {
    fn from(t: &RawTask) -> Self {
        Self {
            instruction: t.instruction.clone(),
            grid_size: t.initial_world.grid_size(),
            blocks: t.initial_world.blocks().iter().map(|c| [c.row, c.col]).collect(),
            goal: GoalRecord {
                block: t.goal.target_block,
                cell: [t.goal.target_cell.row, t.goal.target_cell.col],
            },
            demo: t.demonstration.iter().map(|a| a.0).collect(),
        }
    }
}

impl TryFrom<TaskRecord> for RawTask {
    type Error = String;

    fn try_from(r: TaskRecord) -> Result<Self, String> {
        let blocks = r.blocks.iter().map(|&[row, col]| Cell::new(row, col)).collect();
        let world = WorldState::new(r.grid_size, blocks).map_err(|e| e.to_string())?;
        let goal = Goal {
            target_block: r.goal.block,
            target_cell: Cell::new(r.goal.cell[0], r.goal.cell[1]),
        };
        world.check_goal(&goal).map_err(|e| e.to_string())?;
        let space = ActionSpace::new(world.num_blocks());
        if let Some(bad) = r.demo.iter().find(|&&a| a as usize >= space.size()) {
            return Err(format!("action code {bad} outside [0, {}]", space.size() - 1));
        }
        Ok(RawTask {
            instruction: r.instruction,
            initial_world: world,
            goal,
            demonstration: r.demo.into_iter().map(ActionId).collect(),
        })
    }
}

pub fn save_tasks(tasks: &[RawTask], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for task in tasks {
        let line = serde_json::to_string(&TaskRecord::from(task)).expect("task records always serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a task file; errors name the 1-based line. Blank lines are skipped.
pub fn load_tasks(path: &Path) -> Result<Vec<RawTask>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut tasks = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TaskRecord = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?;
        tasks.push(RawTask::try_from(record).map_err(|e| Error::parse(path, i + 1, e))?);
    }
    Ok(tasks)
}

pub fn save_vocab(vocab: &Vocabulary, path: &Path) -> Result<()> {
    let mut text = vocab.words().join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Vocabulary::from_words(text.lines().map(str::to_string)))
}

/// Dataset header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub grid_size: usize,
    pub num_blocks: usize,
    /// `4 * num_blocks + 1`.
    pub action_count: usize,
    pub max_demo_steps: usize,
    pub seed: u64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenSpec {
    pub grid_size: usize,
    pub num_blocks: usize,
    pub max_demo_steps: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub seed: u64,
}

/// Generates the three splits into `dir`. The vocabulary comes from the
/// training split only. Output is a pure function of `params`.
pub fn generate(params: &GenSpec, dir: &Path) -> Result<Meta> {
    let cfg = GeneratorConfig {
        grid_size: params.grid_size,
        num_blocks: params.num_blocks,
        max_steps: params.max_demo_steps,
        ..GeneratorConfig::default()
    };
    let counts = [params.train, params.dev, params.test];
    let mut splits = Vec::with_capacity(3);
    for ((split, name), count) in SPLITS.iter().zip(counts) {
        let tasks = generate_tasks(&cfg, *split, count, params.seed).map_err(|e| Error::Data(format!("{name}: {e}")))?;
        splits.push(tasks);
    }
    let vocab = Vocabulary::build(splits[0].iter().map(|t| t.instruction.as_str()));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for ((_, name), tasks) in SPLITS.iter().zip(&splits) {
        save_tasks(tasks, &dir.join(split_file(name)))?;
    }
    save_vocab(&vocab, &dir.join(VOCAB_FILE))?;
    let meta = Meta {
        grid_size: params.grid_size,
        num_blocks: params.num_blocks,
        action_count: ActionSpace::new(params.num_blocks).size(),
        max_demo_steps: params.max_demo_steps,
        seed: params.seed,
        train: params.train,
        dev: params.dev,
        test: params.test,
        vocab_size: vocab.len(),
    };
    write_json(&meta, &dir.join(META_FILE))?;
    Ok(meta)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data always serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e))
}

/// A loaded dataset directory with instructions indexed against its vocabulary.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: Meta,
    pub vocab: Vocabulary,
    pub train: Vec<Task>,
    pub dev: Vec<Task>,
    pub test: Vec<Task>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Data(format!("{}: dataset directory not found", dir.display())));
        }
        let meta: Meta = read_json(&dir.join(META_FILE))?;
        let vocab = load_vocab(&dir.join(VOCAB_FILE))?;
        let mut splits = Vec::with_capacity(3);
        for (_, name) in SPLITS {
            let path = dir.join(split_file(name));
            let tasks: Vec<Task> = load_tasks(&path)?.into_iter().map(|t| Task::from_raw(t, &vocab)).collect();
            if let Some(t) = tasks.iter().find(|t| (t.grid_size(), t.num_blocks()) != (meta.grid_size, meta.num_blocks)) {
                return Err(Error::Mismatch(format!(
                    "{}: task with grid {} and {} blocks in a dataset declared as grid {} with {} blocks",
                    path.display(),
                    t.grid_size(),
                    t.num_blocks(),
                    meta.grid_size,
                    meta.num_blocks
                )));
            }
            splits.push(tasks);
        }
        let test = splits.pop().unwrap_or_default();
        let dev = splits.pop().unwrap_or_default();
        let train = splits.pop().unwrap_or_default();
        Ok(Self {
            meta,
            vocab,
            train,
            dev,
            test,
        })
    }

    pub fn split(&self, name: &str) -> Result<&[Task]> {
        match name {
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            other => Err(Error::Config(format!("unknown split `{other}` (expected train, dev or test)"))),
        }
    }
}
