use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};

use super::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Ok,
    Timeout,
    Error,
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub requested: TaskKind,
    /// What actually ran after classification.
    pub effective: TaskKind,
    pub status: TaskStatus,
    pub repo_id: String,
    pub commit_id: String,
    pub language: String,
    /// Seconds since the Unix epoch at task start.
    pub started_at: i64,
    pub wall_ms: f64,
    pub peak_bytes: u64,
    pub cache_hit: bool,
    pub rationale: String,
    /// Pools the task ran on, in order.
    #[serde(default)]
    pub pools: Vec<String>,
    #[serde(default)]
    pub estimated_cost: Option<f64>,
    #[serde(default)]
    pub plan_nodes_before: Option<usize>,
    #[serde(default)]
    pub plan_nodes_after: Option<usize>,
    #[serde(default)]
    pub rule_evaluations: u64,
    #[serde(default)]
    pub result_rows: u64,
    #[serde(default)]
    pub files_total: Option<usize>,
    #[serde(default)]
    pub files_extracted: Option<usize>,
    #[serde(default)]
    pub files_carried: Option<usize>,
    #[serde(default)]
    pub error: Option<String>,
}

impl TaskRecord {
    pub fn new(task_id: impl Into<String>, requested: TaskKind, started_at: i64) -> Self {
        TaskRecord {
            task_id: task_id.into(),
            requested,
            effective: requested,
            status: TaskStatus::Ok,
            repo_id: String::new(),
            commit_id: String::new(),
            language: String::new(),
            started_at,
            wall_ms: 0.0,
            peak_bytes: 0,
            cache_hit: false,
            rationale: String::new(),
            pools: Vec::new(),
            estimated_cost: None,
            plan_nodes_before: None,
            plan_nodes_after: None,
            rule_evaluations: 0,
            result_rows: 0,
            files_total: None,
            files_extracted: None,
            files_carried: None,
            error: None,
        }
    }

    pub fn day(&self) -> NaiveDate {
        DateTime::from_timestamp(self.started_at, 0).unwrap_or_default().date_naive()
    }

    fn is_query(&self) -> bool {
        self.requested != TaskKind::Extract
    }
}

/// Append-only JSON-lines log.
#[derive(Debug)]
pub struct MetricsLog {
    path: PathBuf,
    lock: Mutex<()>,
}

impl MetricsLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        MetricsLog { path: path.into(), lock: Mutex::new(()) }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &TaskRecord) -> io::Result<()> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut line = serde_json::to_string(record).expect("records serialize");
        line.push('\n');
        // One write per record so concurrent appenders do not interleave lines.
        OpenOptions::new().create(true).append(true).open(&self.path)?.write_all(line.as_bytes())
    }

    pub fn read(&self) -> Result<Vec<TaskRecord>, MetricsError> {
        read_metrics(&self.path)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
}

/// Parses a metrics log. Blank lines are skipped; anything else that is
/// not a record is an error.
pub fn read_metrics(path: &Path) -> Result<Vec<TaskRecord>, MetricsError> {
    let io_err = |source| MetricsError::Io { path: path.display().to_string(), source };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| MetricsError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReuseRow {
    pub day: NaiveDate,
    pub queries: usize,
    pub extractions: usize,
    /// None when nothing was extracted that day.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReuseReport {
    pub rows: Vec<ReuseRow>,
    pub total_queries: usize,
    pub total_extractions: usize,
    /// Queries per extraction over the whole window.
    pub average: Option<f64>,
}

fn ratio(q: usize, e: usize) -> Option<f64> {
    (e > 0).then(|| q as f64 / e as f64)
}

/// Queries served per extraction, per day. With `window_days`, only the
/// last that many days up to the latest recorded day count. Failed tasks
/// are ignored.
pub fn reuse_report(records: &[TaskRecord], window_days: Option<u32>) -> ReuseReport {
    let ok: Vec<&TaskRecord> = records.iter().filter(|r| r.status == TaskStatus::Ok).collect();
    let Some(latest) = ok.iter().map(|r| r.day()).max() else { return ReuseReport::default() };
    let first = window_days.map(|w| latest - chrono::Days::new(u64::from(w.max(1)) - 1));
    let mut days: BTreeMap<NaiveDate, (usize, usize)> = BTreeMap::new();
    for r in ok {
        let day = r.day();
        if first.is_some_and(|f| day < f) {
            continue;
        }
        let e = days.entry(day).or_default();
        if r.is_query() {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    let rows: Vec<ReuseRow> =
        days.into_iter().map(|(day, (q, e))| ReuseRow { day, queries: q, extractions: e, ratio: ratio(q, e) }).collect();
    let total_queries = rows.iter().map(|r| r.queries).sum();
    let total_extractions = rows.iter().map(|r| r.extractions).sum();
    ReuseReport { rows, total_queries, total_extractions, average: ratio(total_queries, total_extractions) }
}

impl ReuseReport {
    /// A plain-text table with one line per day and an average line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        if self.rows.is_empty() {
            return s;
        }
        let fmt_ratio = |r: Option<f64>| r.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let _ = writeln!(s, "{:<10}  {:>8}  {:>11}  {:>8}", "day", "queries", "extractions", "ratio");
        for r in &self.rows {
            let _ = writeln!(s, "{:<10}  {:>8}  {:>11}  {:>8}", r.day.to_string(), r.queries, r.extractions, fmt_ratio(r.ratio));
        }
        let _ = writeln!(
            s,
            "{:<10}  {:>8}  {:>11}  {:>8}",
            "average",
            self.total_queries,
            self.total_extractions,
            fmt_ratio(self.average)
        );
        s
    }
}
