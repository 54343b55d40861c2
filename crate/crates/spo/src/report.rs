//! Per-run plotting series from metrics CSVs.
//!
//! For each run `<name>` the report directory receives
//! `<name>_entropy.csv` (step, entropy), `<name>_lfd_counts.csv`
//! (epoch, lfd_updates) and `<name>_episode_len.csv` (epoch, mean episode
//! length per mode). `entropy.csv` aligns all entropy series by step, one
//! column per run, empty where a run has no record.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use spo_core::Mode;

use crate::metrics::{self, Row};
use crate::run::METRICS_FILE;
use crate::{Error, Result};

pub struct RunSeries {
    pub name: String,
    pub rows: Vec<Row>,
}

/// Accepts run directories or metrics files. Names come from the directory
/// name and are made unique with a numeric suffix.
pub fn load_runs(paths: &[PathBuf]) -> Result<Vec<RunSeries>> {
    let mut seen = BTreeSet::new();
    let mut runs = Vec::with_capacity(paths.len());
    for path in paths {
        let (file, dir) = if path.is_dir() {
            (path.join(METRICS_FILE), path.as_path())
        } else {
            (path.clone(), path.parent().unwrap_or(Path::new(".")))
        };
        let base = dir
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "run".into());
        let mut name = base.clone();
        let mut k = 2;
        while !seen.insert(name.clone()) {
            name = format!("{base}_{k}");
            k += 1;
        }
        runs.push(RunSeries {
            name,
            rows: metrics::load(&file)?,
        });
    }
    Ok(runs)
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Mean episode length per (epoch, mode).
fn episode_lengths(rows: &[Row]) -> BTreeMap<usize, [(usize, usize); 2]> {
    let mut acc: BTreeMap<usize, [(usize, usize); 2]> = BTreeMap::new();
    for r in rows {
        let slot = &mut acc.entry(r.epoch).or_default()[usize::from(r.mode == Mode::Rl)];
        slot.0 += r.episode_len;
        slot.1 += 1;
    }
    acc
}

fn mean_field((total, count): (usize, usize)) -> String {
    if count == 0 {
        String::new()
    } else {
        (total as f64 / count as f64).to_string()
    }
}

/// Writes the report files; returns the paths written.
pub fn write_report(runs: &[RunSeries], out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    let mut aligned: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
    for (k, run) in runs.iter().enumerate() {
        let mut entropy = String::from("step,entropy\n");
        for r in &run.rows {
            entropy.push_str(&format!("{},{}\n", r.step, r.entropy));
            aligned.entry(r.step).or_insert_with(|| vec![None; runs.len()])[k] = Some(r.entropy);
        }
        let max_epoch = run.rows.iter().map(|r| r.epoch).max();
        let mut counts = vec![0usize; max_epoch.map_or(0, |e| e + 1)];
        for r in run.rows.iter().filter(|r| r.mode == Mode::Lfd) {
            counts[r.epoch] += 1;
        }
        let mut lfd = String::from("epoch,lfd_updates\n");
        for (epoch, c) in counts.iter().enumerate() {
            lfd.push_str(&format!("{epoch},{c}\n"));
        }
        let mut lens = String::from("epoch,lfd_episode_len,rl_episode_len\n");
        for (epoch, [l, r]) in episode_lengths(&run.rows) {
            lens.push_str(&format!("{epoch},{},{}\n", mean_field(l), mean_field(r)));
        }
        for (suffix, text) in [("entropy", entropy), ("lfd_counts", lfd), ("episode_len", lens)] {
            let path = out.join(format!("{}_{suffix}.csv", run.name));
            write(&path, text)?;
            written.push(path);
        }
    }
    let mut text = String::from("step");
    for run in runs {
        text.push(',');
        text.push_str(&run.name);
    }
    text.push('\n');
    for (step, values) in aligned {
        text.push_str(&step.to_string());
        for v in values {
            text.push(',');
            if let Some(v) = v {
                text.push_str(&v.to_string());
            }
        }
        text.push('\n');
    }
    let path = out.join("entropy.csv");
    write(&path, text)?;
    written.push(path);
    Ok(written)
}
