//! Training log CSV. Wall-clock time is kept out of the file so that equal
//! seeds give byte-identical logs.

use std::fs;
use std::io::Write;
use std::path::Path;

use spo_core::{MetricsRecord, Mode};

use crate::{Error, Result};

pub const HEADER: [&str; 11] = [
    "step",
    "epoch",
    "mode",
    "entropy",
    "error",
    "episode_len",
    "baseline",
    "hist_size",
    "loss_policy",
    "loss_value",
    "loss_entropy",
];

/// Writes the log. An absent baseline is an empty field; the empty-history
/// baseline is `-inf`.
pub fn write_csv<W: Write>(records: &[MetricsRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in records {
        w.write_record([
            r.step.to_string(),
            r.epoch.to_string(),
            r.mode.as_str().to_string(),
            r.entropy.to_string(),
            r.error.to_string(),
            r.episode_len.to_string(),
            r.baseline.map(|b| b.to_string()).unwrap_or_default(),
            r.hist_size.to_string(),
            r.loss.policy.to_string(),
            r.loss.value.to_string(),
            r.loss.entropy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(records, std::io::BufWriter::new(file)).map_err(|e| Error::Train(format!("{}: {e}", path.display())))
}

/// One parsed row of a metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub step: u64,
    pub epoch: usize,
    pub mode: Mode,
    pub entropy: f64,
    pub error: f64,
    pub episode_len: usize,
    pub baseline: Option<f64>,
    pub hist_size: usize,
    pub loss_policy: f64,
    pub loss_value: f64,
    pub loss_entropy: f64,
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path, line: usize) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::parse(path, line, format!("bad {} value `{raw}`", HEADER[i])))
}

pub fn load(path: &Path) -> Result<Vec<Row>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let header = reader.headers().map_err(|e| Error::parse(path, 1, e))?.clone();
    if header.iter().ne(HEADER) {
        return Err(Error::parse(path, 1, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(path, line, e))?;
        let mode = match rec.get(2) {
            Some("lfd") => Mode::Lfd,
            Some("rl") => Mode::Rl,
            other => return Err(Error::parse(path, line, format!("bad mode {other:?}"))),
        };
        let baseline = match rec.get(6) {
            Some("") | None => None,
            Some(_) => Some(field(&rec, 6, path, line)?),
        };
        rows.push(Row {
            step: field(&rec, 0, path, line)?,
            epoch: field(&rec, 1, path, line)?,
            mode,
            entropy: field(&rec, 3, path, line)?,
            error: field(&rec, 4, path, line)?,
            episode_len: field(&rec, 5, path, line)?,
            baseline,
            hist_size: field(&rec, 7, path, line)?,
            loss_policy: field(&rec, 8, path, line)?,
            loss_value: field(&rec, 9, path, line)?,
            loss_entropy: field(&rec, 10, path, line)?,
        });
    }
    Ok(rows)
}
