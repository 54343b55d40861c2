//! Dataset, checkpoint, metrics, config and report file formats.

use std::fs;

use proptest::prelude::*;
use spo::config::RunConfig;
use spo::dataset::{self, Dataset, GenSpec};
use spo::{checkpoint, metrics, report, Error};
use spo_core::tasks::{generate_tasks, GeneratorConfig, Split};
use spo_core::trainer::{self, NoHooks};
use spo_core::{Policy, PolicyConfig};

fn gen_spec(train: usize, seed: u64) -> GenSpec {
    GenSpec {
        grid_size: 5,
        num_blocks: 3,
        max_demo_steps: 40,
        train,
        dev: 7,
        test: 5,
        seed,
    }
}

#[test]
fn task_file_roundtrip_is_identity() {
    let tasks = generate_tasks(&GeneratorConfig::default(), Split::Train, 100, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    dataset::save_tasks(&tasks, &path).unwrap();
    assert_eq!(dataset::load_tasks(&path).unwrap(), tasks);
    let records: Vec<dataset::TaskRecord> = fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(records.iter().all(|r| r.demo.iter().all(|&a| a <= 4 * 5)));
}

#[test]
fn truncated_file_reports_the_broken_line() {
    let tasks = generate_tasks(&GeneratorConfig::default(), Split::Dev, 5, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    dataset::save_tasks(&tasks, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let cut = text.len() - text.lines().last().unwrap().len() / 2 - 1;
    fs::write(&path, &text[..cut]).unwrap();
    match dataset::load_tasks(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn out_of_range_action_code_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let line = r#"{"instruction":"x","grid_size":4,"blocks":[[0,0],[1,1]],"goal":{"block":0,"cell":[0,1]},"demo":[9]}"#;
    fs::write(&path, format!("{line}\n")).unwrap();
    assert!(matches!(dataset::load_tasks(&path), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn generation_is_deterministic_and_sized() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    dataset::generate(&gen_spec(30, 9), a.path()).unwrap();
    dataset::generate(&gen_spec(30, 9), b.path()).unwrap();
    for name in ["train.jsonl", "dev.jsonl", "test.jsonl", "vocab.txt", "meta.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    for (name, n) in [("train", 30), ("dev", 7), ("test", 5)] {
        let text = fs::read_to_string(a.path().join(format!("{name}.jsonl"))).unwrap();
        assert_eq!(text.lines().count(), n);
    }
    let ds = Dataset::load(a.path()).unwrap();
    assert_eq!((ds.train.len(), ds.dev.len(), ds.test.len()), (30, 7, 5));
}

#[test]
fn twenty_blocks_report_81_actions() {
    let dir = tempfile::tempdir().unwrap();
    let meta = dataset::generate(
        &GenSpec {
            grid_size: 8,
            num_blocks: 20,
            max_demo_steps: 40,
            train: 3,
            dev: 1,
            test: 1,
            seed: 0,
        },
        dir.path(),
    )
    .unwrap();
    assert_eq!(meta.action_count, 81);
    let stored: dataset::Meta = dataset::read_json(&dir.path().join("meta.json")).unwrap();
    assert_eq!(stored.action_count, 81);
}

#[test]
fn vocabulary_file_keeps_ids() {
    let dir = tempfile::tempdir().unwrap();
    dataset::generate(&gen_spec(20, 2), dir.path()).unwrap();
    let ds = Dataset::load(dir.path()).unwrap();
    let rebuilt = spo_core::Vocabulary::build(
        dataset::load_tasks(&dir.path().join("train.jsonl")).unwrap().iter().map(|t| t.instruction.as_str()),
    );
    assert_eq!(ds.vocab, rebuilt);
}

fn bits(policy: &Policy) -> Vec<u64> {
    policy.params().iter().flat_map(|(_, _, t)| t.data().iter().map(|v| v.to_bits())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoint_roundtrip_is_bit_faithful(seed in any::<u64>(), scale in -300i32..300) {
        let mut policy = Policy::new(PolicyConfig::new(4, 2, 9), seed);
        // Spread magnitudes over most of the f64 exponent range.
        let factor = 10f64.powi(scale);
        let ids: Vec<_> = policy.params().iter().map(|(id, _, _)| id).collect();
        for id in ids {
            for (k, v) in policy.params_mut().get_mut(id).data_mut().iter_mut().enumerate() {
                *v *= factor * (1.0 + k as f64 / 7.0);
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        checkpoint::save(&policy, &path).unwrap();
        let loaded = checkpoint::load(&path).unwrap();
        prop_assert_eq!(loaded.config(), policy.config());
        prop_assert_eq!(bits(&loaded), bits(&policy));
    }
}

fn small_run() -> (Dataset, trainer::TrainOutcome, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    dataset::generate(&gen_spec(12, 5), dir.path()).unwrap();
    let ds = Dataset::load(dir.path()).unwrap();
    let mut cfg = RunConfig::default();
    cfg.trainer.epochs = 2;
    cfg.world.max_steps = 10;
    let outcome = trainer::train(&ds.train, &ds.dev, ds.vocab.len(), &cfg.train_config().unwrap(), &mut NoHooks).unwrap();
    (ds, outcome, dir)
}

#[test]
fn metrics_csv_roundtrip() {
    let (_, outcome, dir) = small_run();
    let path = dir.path().join("m.csv");
    metrics::save(&outcome.metrics, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "step,epoch,mode,entropy,error,episode_len,baseline,hist_size,loss_policy,loss_value,loss_entropy"
    );
    let rows = metrics::load(&path).unwrap();
    assert_eq!(rows.len(), outcome.metrics.len());
    for (row, rec) in rows.iter().zip(&outcome.metrics) {
        assert_eq!(row.step, rec.step);
        assert_eq!(row.mode, rec.mode);
        assert_eq!(row.entropy.to_bits(), rec.entropy.to_bits());
        assert_eq!(row.baseline.map(f64::to_bits), rec.baseline.map(f64::to_bits));
        assert_eq!(row.loss_policy.to_bits(), rec.loss.policy.to_bits());
    }
}

#[test]
fn config_rejects_unknown_keys() {
    assert!(matches!(RunConfig::from_toml("seeed = 3"), Err(Error::Config(_))));
    assert!(matches!(RunConfig::from_toml("[trainer]\nepoch = 3"), Err(Error::Config(_))));
    let cfg = RunConfig::from_toml("[trainer]\nepochs = 3\n[scheduler]\nkind = \"lfd-init\"").unwrap();
    assert_eq!(cfg.trainer.epochs, 3);
    assert_eq!(cfg.schedule(), spo_core::SchedulerConfig::LfdInit { epochs: 2 });
}

#[test]
fn config_echo_roundtrips() {
    let mut cfg = RunConfig::default();
    cfg.trainer.lr = 3e-3;
    cfg.learner.gamma = 0.5;
    cfg.data = Some("some/data".into());
    assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn config_defaults() {
    let tc = RunConfig::default().train_config().unwrap();
    assert_eq!(tc.lr, 1e-4);
    assert_eq!(tc.lr_halving_period, 4);
    assert_eq!(tc.patience, 3);
    assert_eq!(tc.env.max_steps, 40);
    assert_eq!(tc.schedule, spo_core::SchedulerConfig::History { lambda: 1.0 });
    let mut bad = RunConfig::default();
    bad.learner.algo = spo::config::AlgoName::Bc;
    assert!(matches!(bad.train_config(), Err(Error::Config(_))));
}

#[test]
fn report_aligns_three_runs_by_step() {
    let (_, outcome, dir) = small_run();
    let mut runs = Vec::new();
    for name in ["a", "b", "c"] {
        let run = dir.path().join(name);
        fs::create_dir_all(&run).unwrap();
        metrics::save(&outcome.metrics, &run.join("metrics.csv")).unwrap();
        runs.push(run);
    }
    let out = dir.path().join("report");
    let series = report::load_runs(&runs).unwrap();
    report::write_report(&series, &out).unwrap();
    let merged = fs::read_to_string(out.join("entropy.csv")).unwrap();
    let mut lines = merged.lines();
    assert_eq!(lines.next().unwrap(), "step,a,b,c");
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), outcome.metrics.len());
    for line in body {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 4);
        assert!(cols[1] == cols[2] && cols[2] == cols[3]);
    }
    let counts = fs::read_to_string(out.join("a_lfd_counts.csv")).unwrap();
    let expected = trainer::lfd_counts_per_epoch(&outcome.metrics);
    let parsed: Vec<usize> = counts.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(parsed, expected);
}
