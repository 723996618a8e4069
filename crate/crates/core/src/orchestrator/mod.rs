//! Task classification, cost estimation, pool routing, result caching and
//! per-task metrics on one machine.

pub mod cache;
pub mod config;
pub mod metrics;
pub mod runner;
pub mod sim;

pub use cache::{CacheKey, ResultCache};
pub use config::{Config, ConfigError, CostModel, PoolConfig, PoolSpec};
pub use metrics::{read_metrics, reuse_report, MetricsError, MetricsLog, ReuseReport, ReuseRow, TaskRecord, TaskStatus};
pub use runner::{run_batch, run_task, Attempt, BatchJob, Clock, Deadline, ManualClock, PoolKind, RunOutcome, RunStatus, SystemClock};

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::datalog::EvalError;
use crate::facts::{read_archive, ArchiveError, FactsArchive, Manifest};
use crate::godel::{detect_language, CompileError};
use crate::incremental::{restrict_to_changed, BuildReport, Snapshot, SnapshotStore, StoreError, UnknownPaths};
use crate::query::{PreparedQuery, QueryError, QueryOutput};
use crate::Language;

pub const CACHE_DIR: &str = "cache";
pub const METRICS_FILE: &str = "metrics.jsonl";
/// Loaded archives kept in memory between queries.
const LOADED_ARCHIVES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Extract,
    /// Full repository analysis.
    Fra,
    /// Full analysis over an incrementally built snapshot.
    Ifra,
    /// Analysis restricted to changed files.
    Dca,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Extract => "EXTRACT",
            TaskKind::Fra => "FRA",
            TaskKind::Ifra => "IFRA",
            TaskKind::Dca => "DCA",
        })
    }
}

/// A unit of work as the orchestrator sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub kind: TaskKind,
    pub repo_id: String,
    pub commit_id: String,
    pub baseline_commit: Option<String>,
    pub query_source_hash: Option<String>,
    pub changed_files: Option<BTreeSet<String>>,
    pub time_limit: Duration,
    pub estimated_cost: f64,
}

impl Task {
    pub fn new(kind: TaskKind, repo_id: impl Into<String>, commit_id: impl Into<String>) -> Self {
        static NEXT: AtomicU64 = AtomicU64::new(0);
        let n = NEXT.fetch_add(1, Ordering::Relaxed);
        Task {
            id: format!("{}-{}-{n}", std::process::id(), unix_now()),
            kind,
            repo_id: repo_id.into(),
            commit_id: commit_id.into(),
            baseline_commit: None,
            query_source_hash: None,
            changed_files: None,
            time_limit: Duration::from_secs(3600),
            estimated_cost: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.kind == TaskKind::Dca && self.changed_files.is_none() {
            return Err("a DCA task needs a changed-file set".into());
        }
        if self.kind == TaskKind::Extract && self.query_source_hash.is_some() {
            return Err("an extraction task carries no query".into());
        }
        Ok(())
    }
}

fn unix_now() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs() as i64).unwrap_or(0)
}

/// `alpha * lines + beta * files` for the manifest's language; infinite
/// when no manifest is known.
pub fn estimate_cost(manifest: Option<&Manifest>, config: &Config) -> f64 {
    let Some(m) = manifest else { return f64::INFINITY };
    let c = config.cost_model(m.subject_language);
    c.alpha * m.total_lines() as f64 + c.beta * m.files.len() as f64
}

/// Whether a task of this cost should start on the long-run pool. Unknown
/// (infinite) cost never does.
pub fn pre_route(cost: f64, config: &Config) -> bool {
    cost.is_finite() && cost >= config.hdt_threshold && config.pools.longrun.workers > 0
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub kind: TaskKind,
    pub cache_hit: bool,
    pub rationale: String,
}

/// Decides what a requested task actually runs as.
pub fn classify(requested: TaskKind, baseline_available: bool, cache_hit: bool) -> Classification {
    let (kind, rationale) = match requested {
        TaskKind::Extract => (TaskKind::Extract, "extraction".to_string()),
        TaskKind::Dca => (TaskKind::Dca, "delta analysis over the changed files".to_string()),
        TaskKind::Fra if baseline_available => (TaskKind::Ifra, "baseline snapshot present; facts rebuilt incrementally".to_string()),
        TaskKind::Fra => (TaskKind::Fra, "no baseline snapshot; full extraction".to_string()),
        TaskKind::Ifra if baseline_available => (TaskKind::Ifra, "incremental from baseline".to_string()),
        TaskKind::Ifra => (TaskKind::Fra, "requested incremental but no baseline; full extraction".to_string()),
    };
    if cache_hit && kind != TaskKind::Extract {
        return Classification { kind, cache_hit: true, rationale: "cached result for the same script and input relations".into() };
    }
    Classification { kind, cache_hit: false, rationale }
}

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("changed files {0}")]
    UnknownPaths(#[from] UnknownPaths),
    #[error("task {task} timed out after {attempts} attempt(s)")]
    Timeout { task: String, attempts: usize },
    #[error("{0}")]
    InvalidTask(String),
    #[error("cached result for {0} differs from a fresh evaluation")]
    CacheMismatch(CacheKey),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl From<CompileError> for OrchestratorError {
    fn from(e: CompileError) -> Self {
        OrchestratorError::Query(QueryError::Compile(e))
    }
}

impl From<EvalError> for OrchestratorError {
    fn from(e: EvalError) -> Self {
        OrchestratorError::Query(QueryError::Eval(e))
    }
}

/// Where a query reads its facts from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Snapshot { repo: String, commit: String },
    /// An archive directory anywhere on disk.
    Archive(PathBuf),
}

#[derive(Debug, Clone)]
pub struct QueryRequest {
    pub source: String,
    pub target: Target,
    /// Restricts the analysis to these files (a DCA task).
    pub changed: Option<BTreeSet<String>>,
    pub use_cache: bool,
    pub time_limit: Option<Duration>,
}

impl QueryRequest {
    pub fn new(source: impl Into<String>, target: Target) -> Self {
        QueryRequest { source: source.into(), target, changed: None, use_cache: true, time_limit: None }
    }

    pub fn changed(mut self, files: BTreeSet<String>) -> Self {
        self.changed = Some(files);
        self
    }

    pub fn no_cache(mut self) -> Self {
        self.use_cache = false;
        self
    }
}

#[derive(Debug, Clone)]
pub struct QueryRun {
    pub output: QueryOutput,
    pub record: TaskRecord,
}

#[derive(Debug, Clone)]
pub struct ExtractRequest {
    pub worktree: PathBuf,
    pub repo: String,
    pub commit: String,
    pub language: Language,
    pub baseline: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExtractRun {
    pub snapshot: Snapshot,
    pub report: BuildReport,
    pub record: TaskRecord,
}

/// Snapshot store, result cache and metrics log under one root directory.
pub struct Orchestrator {
    store: SnapshotStore,
    config: Config,
    cache: Mutex<ResultCache>,
    metrics: MetricsLog,
    clock: Arc<dyn Clock>,
    verify: bool,
    loaded: Mutex<VecDeque<(PathBuf, SystemTime, Arc<FactsArchive>)>>,
}

impl Orchestrator {
    /// Opens (creating if needed) `root` with the store, `cache/` and
    /// `metrics.jsonl` inside it.
    pub fn open(root: &Path, config: Config) -> Result<Self, OrchestratorError> {
        config.validate().map_err(|e| OrchestratorError::InvalidTask(e.to_string()))?;
        let store = SnapshotStore::open(root)?;
        let cache_dir = root.join(CACHE_DIR);
        let cache = ResultCache::open(&cache_dir, config.cache_bytes)
            .map_err(|source| OrchestratorError::Io { path: cache_dir, source })?;
        Ok(Orchestrator {
            store,
            cache: Mutex::new(cache),
            metrics: MetricsLog::new(root.join(METRICS_FILE)),
            config,
            clock: Arc::new(SystemClock::new()),
            verify: false,
            loaded: Mutex::new(VecDeque::new()),
        })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// On a cache hit, evaluate anyway and fail if the results differ.
    pub fn with_verify(mut self, verify: bool) -> Self {
        self.verify = verify;
        self
    }

    pub fn store(&self) -> &SnapshotStore {
        &self.store
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn metrics(&self) -> &MetricsLog {
        &self.metrics
    }

    fn record(&self, rec: &TaskRecord) {
        if let Err(e) = self.metrics.append(rec) {
            log::warn!("cannot append to {}: {e}", self.metrics.path().display());
        }
    }

    /// Builds a snapshot, incrementally when `baseline` names one in the store.
    pub fn extract(&self, req: &ExtractRequest) -> Result<ExtractRun, OrchestratorError> {
        let mut task = Task::new(TaskKind::Extract, &req.repo, &req.commit);
        task.baseline_commit = req.baseline.clone();
        let baseline_ok = req.baseline.as_ref().is_some_and(|b| self.store.contains(&req.repo, req.language, b));
        let mut rec = TaskRecord::new(&task.id, TaskKind::Extract, unix_now());
        rec.repo_id = req.repo.clone();
        rec.commit_id = req.commit.clone();
        rec.language = req.language.to_string();
        let started = Instant::now();
        let result = match (&req.baseline, baseline_ok) {
            (Some(b), true) => {
                rec.rationale = format!("incremental from baseline {b}");
                self.store.incremental_extract(b, &req.worktree, &req.repo, &req.commit, req.language)
            }
            (Some(b), false) => {
                rec.rationale = format!("baseline {b} not in the store; full extraction");
                self.store.full_extract(&req.worktree, &req.repo, &req.commit, req.language)
            }
            (None, _) => {
                rec.rationale = "full extraction".into();
                self.store.full_extract(&req.worktree, &req.repo, &req.commit, req.language)
            }
        };
        rec.wall_ms = started.elapsed().as_secs_f64() * 1000.0;
        match result {
            Ok((snapshot, report)) => {
                rec.files_total = Some(report.total_files);
                rec.files_extracted = Some(report.extracted);
                rec.files_carried = Some(report.carried);
                rec.estimated_cost = Some(estimate_cost(Some(snapshot.archive.manifest()), &self.config));
                self.record(&rec);
                Ok(ExtractRun { snapshot, report, record: rec })
            }
            Err(e) => {
                rec.status = TaskStatus::Error;
                rec.error = Some(e.to_string());
                self.record(&rec);
                Err(e.into())
            }
        }
    }

    /// Full analysis of a worktree at `commit`: reuses the commit's
    /// snapshot if stored, otherwise extracts it, incrementally from the
    /// newest stored snapshot of the repository when there is one.
    pub fn analyze(
        &self,
        worktree: &Path,
        repo: &str,
        commit: &str,
        source: &str,
    ) -> Result<(QueryRun, Option<ExtractRun>), OrchestratorError> {
        let language = detect_language(source)?;
        let extract = if self.store.contains(repo, language, commit) {
            None
        } else {
            let baseline = self.latest_snapshot(repo, language, commit)?;
            let c = classify(TaskKind::Fra, baseline.is_some(), false);
            log::info!("{}: {}", c.kind, c.rationale);
            let req = ExtractRequest {
                worktree: worktree.to_path_buf(),
                repo: repo.into(),
                commit: commit.into(),
                language,
                baseline,
            };
            Some(self.extract(&req)?)
        };
        let requested = match &extract {
            Some(e) if e.snapshot.info.baseline_commit.is_some() => TaskKind::Ifra,
            _ => TaskKind::Fra,
        };
        let req = QueryRequest::new(source, Target::Snapshot { repo: repo.into(), commit: commit.into() });
        let run = self.run_query(&req, requested)?;
        Ok((run, extract))
    }

    fn latest_snapshot(&self, repo: &str, language: Language, except: &str) -> Result<Option<String>, OrchestratorError> {
        let best = self
            .store
            .list()?
            .into_iter()
            .filter(|i| i.repo_id == repo && i.language == language && i.commit_id != except)
            .max_by(|a, b| (a.created_at, &a.commit_id).cmp(&(b.created_at, &b.commit_id)));
        Ok(best.map(|i| i.commit_id))
    }

    /// Reads the target archive, reusing a recent load while its manifest
    /// is unmodified on disk.
    fn load_target(&self, target: &Target, language: Language) -> Result<Arc<FactsArchive>, OrchestratorError> {
        let dir = match target {
            Target::Snapshot { repo, commit } => self.store.snapshot_dir(repo, language, commit),
            Target::Archive(path) => path.clone(),
        };
        let stamp = std::fs::metadata(dir.join(crate::facts::MANIFEST_FILE)).and_then(|m| m.modified()).ok();
        if let Some(stamp) = stamp {
            let loaded = self.loaded.lock().unwrap_or_else(|e| e.into_inner());
            if let Some((_, _, a)) = loaded.iter().find(|(d, t, _)| *d == dir && *t == stamp) {
                return Ok(a.clone());
            }
        }
        let archive = Arc::new(match target {
            Target::Snapshot { repo, commit } => self.store.load(repo, language, commit)?.archive,
            Target::Archive(path) => read_archive(path)?,
        });
        if let Some(stamp) = stamp {
            let mut loaded = self.loaded.lock().unwrap_or_else(|e| e.into_inner());
            loaded.retain(|(d, _, _)| *d != dir);
            if loaded.len() == LOADED_ARCHIVES {
                loaded.pop_front();
            }
            loaded.push_back((dir, stamp, archive.clone()));
        }
        Ok(archive)
    }

    /// Runs a script as an FRA task, or a DCA task when `changed` is set.
    pub fn query(&self, req: &QueryRequest) -> Result<QueryRun, OrchestratorError> {
        let kind = if req.changed.is_some() { TaskKind::Dca } else { TaskKind::Fra };
        self.run_query(req, kind)
    }

    fn run_query(&self, req: &QueryRequest, requested: TaskKind) -> Result<QueryRun, OrchestratorError> {
        let (repo, commit) = match &req.target {
            Target::Snapshot { repo, commit } => (repo.clone(), commit.clone()),
            Target::Archive(p) => (String::new(), p.display().to_string()),
        };
        let mut task = Task::new(requested, repo, commit);
        task.query_source_hash = Some(crate::godel::source_hash(&req.source));
        task.changed_files = req.changed.clone();
        task.time_limit = req.time_limit.unwrap_or(self.config.pools.standard.limit());
        task.validate().map_err(OrchestratorError::InvalidTask)?;

        let mut rec = TaskRecord::new(&task.id, requested, unix_now());
        let started = Instant::now();
        let result = self.query_inner(req, &mut task, &mut rec);
        rec.wall_ms = started.elapsed().as_secs_f64() * 1000.0;
        match &result {
            Ok(_) => {}
            Err(OrchestratorError::Timeout { .. }) => rec.status = TaskStatus::Timeout,
            Err(e) => {
                rec.status = TaskStatus::Error;
                rec.error = Some(e.to_string());
            }
        }
        self.record(&rec);
        result.map(|output| QueryRun { output, record: rec })
    }

    fn query_inner(&self, req: &QueryRequest, task: &mut Task, rec: &mut TaskRecord) -> Result<QueryOutput, OrchestratorError> {
        let language = detect_language(&req.source)?;
        rec.language = language.to_string();
        let mut archive = self.load_target(&req.target, language)?;
        rec.repo_id = archive.manifest().repo_id.clone();
        rec.commit_id = archive.manifest().commit_id.clone();
        task.repo_id = rec.repo_id.clone();
        task.commit_id = rec.commit_id.clone();
        if let Some(changed) = &task.changed_files {
            archive = Arc::new(restrict_to_changed(&archive, changed)?);
        }
        let prepared = PreparedQuery::new(&req.source, language, Some(archive.manifest()))?;
        prepared.check_language(&archive)?;
        rec.plan_nodes_before = Some(prepared.plan.node_count_before);
        rec.plan_nodes_after = Some(prepared.plan.node_count_after);
        task.estimated_cost = estimate_cost(Some(archive.manifest()), &self.config);
        rec.estimated_cost = Some(task.estimated_cost);

        let key = CacheKey::compute(&prepared, &archive);
        let cached = if req.use_cache { self.cache.lock().unwrap_or_else(|e| e.into_inner()).lookup(&key) } else { None };
        let class = classify(task.kind, task.kind == TaskKind::Ifra, cached.is_some());
        rec.effective = class.kind;
        rec.rationale = class.rationale;
        rec.cache_hit = class.cache_hit;
        if let Some(out) = &cached {
            log::info!("cache hit {key}");
            if !self.verify {
                rec.result_rows = out.row_count() as u64;
                return Ok(out.clone());
            }
        }

        let mut pools = self.config.pools;
        pools.standard.time_limit = task.time_limit.as_secs_f64();
        if pools.longrun.time_limit <= pools.standard.time_limit {
            pools.longrun.time_limit = pools.standard.time_limit * 4.0;
        }
        let edb = prepared.edb(&archive);
        let outcome = run_task(&pools, &*self.clock, pre_route(task.estimated_cost, &self.config), |pool, deadline| {
            let mut run = prepared.start(&edb);
            run.set_parallel(pool == PoolKind::LongRun);
            match run.run_while(|_| deadline.may_continue()) {
                Ok(true) => match run.finish() {
                    Ok(eval) => Attempt::Done(eval),
                    Err(e) => Attempt::Failed(e),
                },
                Ok(false) => Attempt::Cancelled,
                Err(e) => Attempt::Failed(e),
            }
        });
        rec.pools = outcome.attempts.iter().map(|a| a.pool.to_string()).collect();
        let eval = match outcome.status {
            RunStatus::Ok(eval) => eval,
            RunStatus::Timeout => return Err(OrchestratorError::Timeout { task: task.id.clone(), attempts: outcome.attempts.len() }),
            RunStatus::Error(e) => return Err(e.into()),
        };
        rec.peak_bytes = eval.stats.peak_bytes as u64;
        rec.rule_evaluations = eval.stats.rule_evaluations() as u64;
        let output = prepared.collect(&eval);
        rec.result_rows = output.row_count() as u64;

        if let Some(hit) = cached {
            if hit != output {
                return Err(OrchestratorError::CacheMismatch(key));
            }
        } else if req.use_cache {
            if let Err(e) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).store(&key, &output) {
                log::warn!("cannot cache result {key}: {e}");
            }
        }
        Ok(output)
    }
}
