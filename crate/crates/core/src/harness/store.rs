//! Run-directory files.
//!
//! ```text
//! <run>/config.json     echoed RunConfig plus code version
//! <run>/eval.csv        step, ep_ret_1..ep_ret_k, mean
//! <run>/train.csv       per-update (off-policy) or per-epoch (PPO) losses
//! <run>/checkpoint.bin  final agent state
//! <run>/summary.json    written last; its presence marks the run complete
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, CODE_VERSION};
use super::metrics::EvalRecord;
use crate::error::{Error, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const EVAL_FILE: &str = "eval.csv";
pub const TRAIN_FILE: &str = "train.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub code_version: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub code_version: String,
    pub complete: bool,
    pub total_steps: usize,
    pub eval_records: usize,
    pub max_avg_return: f64,
}

/// Formats a float so that it parses back to the same bits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let echo = ConfigEcho {
        code_version: CODE_VERSION.to_string(),
        config: cfg.clone(),
    };
    let mut text = serde_json::to_string_pretty(&echo)?;
    text.push('\n');
    std::fs::write(dir.join(CONFIG_FILE), text)?;
    Ok(())
}

pub fn read_config(dir: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(dir.join(CONFIG_FILE))?;
    let echo: ConfigEcho = serde_json::from_str(&text)?;
    Ok(echo.config)
}

pub fn write_summary(dir: &Path, summary: &RunSummary) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    write_atomic(&dir.join(SUMMARY_FILE), &text)
}

pub fn read_summary(dir: &Path) -> Result<Option<RunSummary>> {
    let path = dir.join(SUMMARY_FILE);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&std::fs::read_to_string(path)?)?))
}

/// Appends rows to a CSV file, flushing after each so partial runs stay
/// readable.
pub struct CsvLog {
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvLog {
    pub fn create(path: &Path, header: &[String]) -> Result<Self> {
        let file = File::create(path)?;
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(file));
        writer.write_record(header)?;
        writer.flush()?;
        Ok(Self { writer })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer.write_record(fields)?;
        self.writer.flush()?;
        Ok(())
    }
}

pub fn eval_header(episodes: usize) -> Vec<String> {
    let mut h = vec!["step".to_string()];
    h.extend((1..=episodes).map(|i| format!("ep_ret_{i}")));
    h.push("mean".into());
    h
}

pub fn eval_row(r: &EvalRecord) -> Vec<String> {
    let mut row = vec![r.step.to_string()];
    row.extend(r.returns.iter().map(|&v| fmt_f64(v)));
    row.push(fmt_f64(r.mean));
    row
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalRecord>> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.len() < 3 || &header[0] != "step" || &header[header.len() - 1] != "mean" {
        return Err(bad("expected columns step, ep_ret_*, mean".into()));
    }
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parse = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("row {}: {e}", line + 1)));
        let step = rec[0]
            .parse::<usize>()
            .map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
        let returns = (1..rec.len() - 1).map(|i| parse(&rec[i])).collect::<Result<Vec<_>>>()?;
        let mean = parse(&rec[rec.len() - 1])?;
        out.push(EvalRecord { step, returns, mean });
    }
    Ok(out)
}

/// A run directory as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub records: Vec<EvalRecord>,
    pub complete: bool,
}

pub fn load_run(dir: &Path) -> Result<RunData> {
    let config = read_config(dir)?;
    let eval_path = dir.join(EVAL_FILE);
    let records = if eval_path.exists() {
        read_eval_csv(&eval_path)?
    } else {
        Vec::new()
    };
    let complete = read_summary(dir)?.is_some_and(|s| s.complete);
    Ok(RunData {
        dir: dir.to_path_buf(),
        config,
        records,
        complete,
    })
}

/// Every directory under `root` (inclusive) that holds a `config.json`,
/// in sorted order.
pub fn find_run_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join(CONFIG_FILE).is_file() {
            found.push(dir);
            continue;
        }
        if dir.is_dir() {
            for entry in std::fs::read_dir(&dir)? {
                let path = entry?.path();
                if path.is_dir() {
                    stack.push(path);
                }
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Writes `text` to `path` only through a complete temporary file.
pub fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
    }
    std::fs::rename(tmp, path)?;
    Ok(())
}
