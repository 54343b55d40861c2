//! `spo` command-line driver: dataset generation, training, evaluation and
//! plotting series.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spo::config::{AlgoName, RunConfig, ScheduleName};
use spo::dataset::{self, Dataset};
use spo::run::{self, Baseline, CONFIG_FILE};
use spo::{checkpoint, report, Error, Result};
use spo_core::trainer::EvalReport;

#[derive(Parser)]
#[command(name = "spo", version, about = "Block-world instruction following with scheduled policy optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/dev/test task files, the vocabulary and the dataset header.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// TOML run config; its [generate] table supplies defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        blocks: Option<usize>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        dev: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
        /// Longest allowed demonstration, STOP included.
        #[arg(long)]
        max_demo_steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a policy and write config, metrics, checkpoint and summary.
    Train {
        /// Dataset directory (overrides `data` in the config).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Run directory.
        #[arg(long, env = "SPO_RUN_DIR")]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        algo: Option<AlgoArg>,
        #[arg(long, value_enum)]
        sched: Option<SchedArg>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Evaluate a checkpoint or a reference baseline on one split.
    Eval {
        #[arg(long, required_unless_present = "baseline")]
        model: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "dev")]
        split: String,
        #[arg(long, value_enum, conflicts_with = "model")]
        baseline: Option<BaselineArg>,
        /// Run config for environment settings; defaults to the config
        /// stored next to the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<usize>,
        /// Sample actions instead of taking the most likely one.
        #[arg(long)]
        sample: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Turn metrics logs into per-run CSV series.
    Report {
        /// Run directories or metrics CSV files.
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Bc,
    Reinforce,
    A2c,
    Ppo,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchedArg {
    None,
    LfdInit,
    Deterministic,
    Epsilon,
    History,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Initial,
    Random,
    Expert,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn print_report(label: &str, r: &EvalReport) {
    println!(
        "{label}: mean_error {:.4} median_error {:.4} mean_episode_len {:.4} episodes {}",
        r.mean_error, r.median_error, r.mean_episode_len, r.episodes
    );
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            out,
            config,
            grid,
            blocks,
            train,
            dev,
            test,
            max_demo_steps,
            seed,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            let g = &mut cfg.generate;
            g.grid_size = grid.unwrap_or(g.grid_size);
            g.num_blocks = blocks.unwrap_or(g.num_blocks);
            g.train = train.unwrap_or(g.train);
            g.dev = dev.unwrap_or(g.dev);
            g.test = test.unwrap_or(g.test);
            g.max_demo_steps = max_demo_steps.unwrap_or(g.max_demo_steps);
            g.seed = seed.unwrap_or(g.seed);
            let meta = dataset::generate(&cfg.gen_spec(), &out)?;
            println!(
                "wrote {} train / {} dev / {} test tasks to {} (grid {}, {} blocks, {} actions, {} words)",
                meta.train,
                meta.dev,
                meta.test,
                out.display(),
                meta.grid_size,
                meta.num_blocks,
                meta.action_count,
                meta.vocab_size
            );
        }
        Command::Train {
            data,
            out,
            config,
            algo,
            sched,
            lambda,
            epochs,
            seed,
            lr,
            patience,
            gamma,
            max_steps,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(d) = data {
                cfg.data = Some(d);
            }
            if let Some(a) = algo {
                cfg.learner.algo = match a {
                    AlgoArg::Bc => AlgoName::Bc,
                    AlgoArg::Reinforce => AlgoName::Reinforce,
                    AlgoArg::A2c => AlgoName::A2c,
                    AlgoArg::Ppo => AlgoName::Ppo,
                };
            }
            // Behavior cloning takes no schedule unless one is asked for
            // explicitly, which is then rejected.
            if matches!(algo, Some(AlgoArg::Bc)) && sched.is_none() {
                cfg.scheduler.kind = ScheduleName::None;
            }
            if let Some(s) = sched {
                cfg.scheduler.kind = match s {
                    SchedArg::None => ScheduleName::None,
                    SchedArg::LfdInit => ScheduleName::LfdInit,
                    SchedArg::Deterministic => ScheduleName::Deterministic,
                    SchedArg::Epsilon => ScheduleName::Epsilon,
                    SchedArg::History => ScheduleName::History,
                };
            }
            cfg.scheduler.lambda = lambda.unwrap_or(cfg.scheduler.lambda);
            cfg.trainer.epochs = epochs.unwrap_or(cfg.trainer.epochs);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.trainer.lr = lr.unwrap_or(cfg.trainer.lr);
            cfg.trainer.patience = patience.unwrap_or(cfg.trainer.patience);
            cfg.learner.gamma = gamma.unwrap_or(cfg.learner.gamma);
            cfg.world.max_steps = max_steps.unwrap_or(cfg.world.max_steps);
            let data_dir = cfg
                .data
                .clone()
                .ok_or_else(|| Error::Config("no dataset given (use --data or `data` in the config)".into()))?;
            let data = Dataset::load(&data_dir)?;
            let outcome = run::train_run(&cfg, &data, &out)?;
            match outcome.best_dev {
                Some(d) => print_report(&format!("best epoch {}", outcome.best_epoch), &d),
                None => println!("trained {} epochs", outcome.epochs.len()),
            }
            println!("run written to {}", out.display());
        }
        Command::Eval {
            model,
            data,
            split,
            baseline,
            config,
            max_steps,
            sample,
            seed,
        } => {
            let sibling = model
                .as_deref()
                .and_then(Path::parent)
                .map(|d| d.join(CONFIG_FILE))
                .filter(|p| p.is_file());
            let mut cfg = load_config(config.as_deref().or(sibling.as_deref()))?;
            cfg.world.max_steps = max_steps.unwrap_or(cfg.world.max_steps);
            let env = cfg.env();
            let ds = Dataset::load(&data)?;
            let tasks = ds.split(&split)?;
            let report = match (baseline, model) {
                (Some(b), _) => {
                    let b = match b {
                        BaselineArg::Initial => Baseline::Initial,
                        BaselineArg::Random => Baseline::Random,
                        BaselineArg::Expert => Baseline::Expert,
                    };
                    run::evaluate_baseline(b, tasks, &env, seed)?
                }
                (None, Some(path)) => {
                    let policy = checkpoint::load(&path)?;
                    run::evaluate_policy(&policy, &ds, tasks, &env, !sample, seed)?
                }
                (None, None) => return Err(Error::Config("give --model or --baseline".into())),
            };
            print_report(&split, &report);
        }
        Command::Report { runs, out } => {
            let series = report::load_runs(&runs)?;
            for path in report::write_report(&series, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
