//! Result records, curve files, the append-only ledger and the summary report.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::SCHEMA_VERSION;
use crate::Failure;

pub const LEDGER: &str = "ledger.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Measurement without an exact statement to check.
    Info,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Info => "INFO",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub software_version: String,
    pub config_hash: String,
    pub experiment: String,
    pub model: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub verdict: Verdict,
    pub metric_name: String,
    pub metric: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub payload: Value,
}

/// Comma-separated table with a header row.
pub struct Curve {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Curve {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Curve { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row);
    }
}

pub fn now_ms() -> u128 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Writes `<experiment>-<hash>.json`, the curves, and appends the record to the ledger.
pub fn persist(dir: &Path, rec: &ResultRecord, curves: &[Curve]) -> Result<Vec<PathBuf>, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    let stem = format!("{}-{}", rec.experiment, &rec.config_hash[..12]);
    let mut written = Vec::new();
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string_pretty(rec).map_err(|e| Failure::Config(e.to_string()))? + "\n")
        .map_err(|e| Failure::Config(format!("cannot write {}: {e}", json.display())))?;
    written.push(json);
    for c in curves {
        let path = dir.join(format!("{stem}-{}.csv", c.name));
        let mut w = csv::Writer::from_path(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        w.write_record(&c.header).map_err(|e| Failure::Config(e.to_string()))?;
        for row in &c.rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| Failure::Config(e.to_string()))?;
        }
        w.flush()?;
        written.push(path);
    }
    let mut ledger = OpenOptions::new().create(true).append(true).open(dir.join(LEDGER))?;
    writeln!(ledger, "{}", serde_json::to_string(rec).map_err(|e| Failure::Config(e.to_string()))?)?;
    Ok(written)
}

fn read_records(dir: &Path) -> Result<(Vec<ResultRecord>, Vec<String>), Failure> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    for p in paths {
        let parsed = fs::read_to_string(&p)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<ResultRecord>(&t).map_err(|e| e.to_string()));
        match parsed {
            Ok(r) if r.schema_version == SCHEMA_VERSION => records.push(r),
            Ok(r) => skipped.push(format!("{}: schema version {}", p.display(), r.schema_version)),
            Err(e) => skipped.push(format!("{}: {e}", p.display())),
        }
    }
    records.sort_by(|a, b| (&a.config_hash, &a.experiment).cmp(&(&b.config_hash, &b.experiment)));
    Ok((records, skipped))
}

/// Writes `summary.txt` and `summary.csv` into `dir` and returns the text table.
pub fn report(dir: &Path) -> Result<String, Failure> {
    let (records, skipped) = read_records(dir)?;
    let header = ["config_hash", "experiment", "model", "L", "metric", "value", "verdict"];
    let rows: Vec<[String; 7]> = records
        .iter()
        .map(|r| {
            [
                r.config_hash[..12].to_string(),
                r.experiment.clone(),
                r.model.clone(),
                r.l.to_string(),
                r.metric_name.clone(),
                format!("{:.6e}", r.metric),
                r.verdict.as_str().to_string(),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String]| -> String {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut out = String::new();
    for s in &skipped {
        out.push_str(&format!("warning: skipped corrupt record {s}\n"));
    }
    out.push_str(&line(&header.map(String::from)));
    out.push('\n');
    for row in &rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    let attention = records.iter().filter(|r| r.verdict == Verdict::Fail).count();
    out.push_str(&format!("records: {}  attention: {attention}  skipped: {}\n", records.len(), skipped.len()));
    fs::write(dir.join("summary.txt"), &out)?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv")).map_err(|e| Failure::Config(e.to_string()))?;
    w.write_record(header).map_err(|e| Failure::Config(e.to_string()))?;
    for row in &rows {
        w.write_record(row).map_err(|e| Failure::Config(e.to_string()))?;
    }
    w.flush()?;
    Ok(out)
}
