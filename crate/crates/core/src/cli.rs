//! The `codefacts` command line.
//!
//! Exit status: 0 ok, 1 usage error, 2 input or script error, 3 evaluation
//! error, 4 timeout, 5 snapshot busy (another extraction holds the lease).
//!
//! Result rows go to stdout; diagnostics, timings and cache notes go to
//! stderr.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};

use crate::godel::{compile, detect_language};
use crate::incremental::StoreError;
use crate::orchestrator::{
    read_metrics, reuse_report, Config, ExtractRequest, Orchestrator, OrchestratorError, QueryRequest, Target,
};
use crate::planner::lower_to_plan;
use crate::query::{QueryError, QueryOutput};
use crate::{Language, ENGINE_VERSION};

/// Store root override.
pub const STORE_ENV: &str = "CODEFACTS_STORE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    Usage = 1,
    Input = 2,
    Eval = 3,
    Timeout = 4,
    Busy = 5,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Parser)]
#[command(name = "codefacts", version = ENGINE_VERSION, about = "Extract code facts and query them")]
struct Cli {
    /// Snapshot store, result cache and metrics log root.
    #[arg(long, global = true, env = STORE_ENV, default_value = ".codefacts")]
    store: PathBuf,
    /// Orchestrator settings (TOML). Defaults to <store>/config.toml if present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Lang {
    Python,
    Xml,
}

impl From<Lang> for Language {
    fn from(l: Lang) -> Self {
        match l {
            Lang::Python => Language::Python,
            Lang::Xml => Language::Xml,
        }
    }
}

#[derive(Debug, clap::Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
    /// Skip the result cache.
    #[arg(long)]
    no_cache: bool,
    /// Evaluate even on a cache hit and fail if the results differ.
    #[arg(long)]
    verify: bool,
    /// Standard-pool time limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract a worktree (or a single file) into a snapshot.
    Extract {
        #[arg(long, value_enum)]
        lang: Lang,
        /// Directory or file to extract.
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        commit: String,
        /// Build incrementally from this commit's snapshot.
        #[arg(long)]
        baseline: Option<String>,
        /// Repository id in the store; defaults to the directory name.
        #[arg(long)]
        repo_id: Option<String>,
    },
    /// Run a script over a snapshot or an archive directory.
    Query {
        #[arg(long)]
        script: PathBuf,
        /// Archive directory to read instead of a stored snapshot.
        #[arg(long, conflicts_with_all = ["repo", "commit"])]
        db: Option<PathBuf>,
        #[arg(long, requires = "commit")]
        repo: Option<String>,
        #[arg(long, requires = "repo")]
        commit: Option<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a script over only the files listed in --changed.
    Delta {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        repo: String,
        #[arg(long)]
        commit: String,
        /// File with one repository-relative path per line.
        #[arg(long)]
        changed: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Print the staged execution plan of a script.
    Plan {
        #[arg(long)]
        script: PathBuf,
        /// Defaults to the language the script uses.
        #[arg(long, value_enum)]
        lang: Option<Lang>,
    },
    /// Queries served per extraction, per day.
    Report {
        /// Defaults to <store>/metrics.jsonl.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Only the last N days up to the latest recorded one.
        #[arg(long)]
        window: Option<u32>,
    },
    /// Delete a repository's snapshots except the listed commits.
    Gc {
        #[arg(long)]
        repo: String,
        #[arg(long = "keep")]
        keep: Vec<String>,
    },
}

/// Runs the command line `args` (program name first) and returns the exit
/// status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    ExitStatus::Ok.code()
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    if !text.contains("Usage:") {
                        use clap::CommandFactory;
                        let _ = writeln!(err, "\n{}", Cli::command().render_usage());
                    }
                    ExitStatus::Usage.code()
                }
            };
        }
    };
    let status = match dispatch(cli, out, err) {
        Ok(()) => ExitStatus::Ok,
        Err(Failure(status, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            status
        }
    };
    let _ = out.flush();
    status.code()
}

struct Failure(ExitStatus, String);

fn input(msg: impl ToString) -> Failure {
    Failure(ExitStatus::Input, msg.to_string())
}

impl From<OrchestratorError> for Failure {
    fn from(e: OrchestratorError) -> Self {
        let status = match &e {
            OrchestratorError::Store(StoreError::Busy(_)) => ExitStatus::Busy,
            OrchestratorError::Query(QueryError::Eval(_)) | OrchestratorError::CacheMismatch(_) => ExitStatus::Eval,
            OrchestratorError::Timeout { .. } => ExitStatus::Timeout,
            _ => ExitStatus::Input,
        };
        let msg = match &e {
            OrchestratorError::Query(QueryError::Compile(c)) if !c.diagnostics().is_empty() => {
                c.diagnostics().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\nerror: ")
            }
            _ => e.to_string(),
        };
        Failure(status, msg)
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            let p = cli.store.join("config.toml");
            if !p.is_file() {
                return Ok(Config::default());
            }
            p
        }
    };
    Config::load(&path).map_err(input)
}

fn read_script(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Extract { lang, repo, commit, baseline, repo_id } => {
            let repo_id = match repo_id {
                Some(r) => r,
                None => default_repo_id(&repo)?,
            };
            let orch = Orchestrator::open(&cli.store, config)?;
            let started = Instant::now();
            let req = ExtractRequest { worktree: repo, repo: repo_id, commit, language: lang.into(), baseline };
            let run = orch.extract(&req)?;
            let r = &run.report;
            let _ = writeln!(out, "snapshot: {}", run.snapshot.path.display());
            let _ = writeln!(
                out,
                "files: {}, re-extracted: {}, carried: {}, removed: {}",
                r.total_files, r.extracted, r.carried, r.removed
            );
            if r.fell_back {
                let _ = writeln!(err, "note: baseline unusable; ran a full extraction");
            }
            let _ = writeln!(err, "wall time: {:.3}s", started.elapsed().as_secs_f64());
            Ok(())
        }
        Command::Query { script, db, repo, commit, output } => {
            let source = read_script(&script)?;
            let target = match (db, repo, commit) {
                (Some(db), _, _) => Target::Archive(db),
                (None, Some(repo), Some(commit)) => Target::Snapshot { repo, commit },
                _ => return Err(Failure(ExitStatus::Usage, "give --db, or --repo and --commit".into())),
            };
            let orch = Orchestrator::open(&cli.store, config)?.with_verify(output.verify);
            run_and_print(&orch, request(source, target, &output, None)?, &output, out, err)
        }
        Command::Delta { script, repo, commit, changed, output } => {
            let source = read_script(&script)?;
            let list = std::fs::read_to_string(&changed).map_err(|e| input(format!("{}: {e}", changed.display())))?;
            let files: BTreeSet<String> = list.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect();
            let orch = Orchestrator::open(&cli.store, config)?.with_verify(output.verify);
            let req = request(source, Target::Snapshot { repo, commit }, &output, Some(files))?;
            run_and_print(&orch, req, &output, out, err)
        }
        Command::Plan { script, lang } => {
            let source = read_script(&script)?;
            let language = match lang {
                Some(l) => l.into(),
                None => detect_language(&source).map_err(|e| Failure::from(OrchestratorError::from(e)))?,
            };
            let compiled = compile(&source, language, true).map_err(|e| Failure::from(OrchestratorError::from(e)))?;
            let plan = lower_to_plan(compiled.program(), None).map_err(|e| Failure::from(OrchestratorError::from(e)))?;
            let _ = out.write_all(plan.render().as_bytes());
            Ok(())
        }
        Command::Report { metrics, window } => {
            let path = metrics.unwrap_or_else(|| cli.store.join(crate::orchestrator::METRICS_FILE));
            let records = read_metrics(&path).map_err(input)?;
            let _ = out.write_all(reuse_report(&records, window).render().as_bytes());
            Ok(())
        }
        Command::Gc { repo, keep } => {
            let orch = Orchestrator::open(&cli.store, config)?;
            let keep: BTreeSet<String> = keep.into_iter().collect();
            let removed = orch.store().gc(&repo, &keep).map_err(|e| Failure::from(OrchestratorError::from(e)))?;
            for info in removed {
                let _ = writeln!(out, "removed {}/{}/{}", info.repo_id, info.language, info.commit_id);
            }
            Ok(())
        }
    }
}

fn default_repo_id(path: &Path) -> Result<String, Failure> {
    let abs = std::fs::canonicalize(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let name = if abs.is_file() { abs.file_stem() } else { abs.file_name() };
    name.map(|n| n.to_string_lossy().to_string()).filter(|n| !n.is_empty()).ok_or_else(|| input("cannot derive a repository id; pass --repo-id"))
}

fn request(source: String, target: Target, o: &OutputArgs, changed: Option<BTreeSet<String>>) -> Result<QueryRequest, Failure> {
    let mut req = QueryRequest::new(source, target);
    req.changed = changed;
    req.use_cache = !o.no_cache;
    if let Some(t) = o.time_limit {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure(ExitStatus::Usage, "--time-limit must be a positive number of seconds".into()));
        }
        req.time_limit = Some(Duration::from_secs_f64(t));
    }
    Ok(req)
}

fn run_and_print(
    orch: &Orchestrator,
    req: QueryRequest,
    o: &OutputArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), Failure> {
    let run = orch.query(&req)?;
    let rec = &run.record;
    if rec.cache_hit {
        let _ = writeln!(err, "cache hit");
    }
    let _ = writeln!(
        err,
        "{} ({}): {} rows in {:.3}s; plan nodes {} -> {}",
        rec.effective,
        rec.rationale,
        rec.result_rows,
        rec.wall_ms / 1000.0,
        rec.plan_nodes_before.unwrap_or(0),
        rec.plan_nodes_after.unwrap_or(0)
    );
    let _ = out.write_all(render(&run.output, o.format).as_bytes());
    Ok(())
}

fn render(output: &QueryOutput, format: Format) -> String {
    match format {
        Format::Tsv => output.to_tsv(),
        Format::Json => output.to_json(),
    }
}
