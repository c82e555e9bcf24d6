//! The `pangea` administrator command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Duration;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::clock::{IdGenerator, UuidIds};
use crate::config::Config;
use crate::environment::{self, ingest_environment};
use crate::navgraph::NavPath;
use crate::server::jobs::AlignmentWorkers;
use crate::server::{http, Service};
use crate::store::{
    AnnotationDoc, AnnotationFilter, AnnotationStatus, Instruction, Store, TaskKind, TaskRecord,
};

#[derive(Debug, Parser)]
#[command(
    name = "pangea",
    version,
    about = "Navigation instruction annotation service"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "PANGEA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides `data_dir` from the configuration.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the annotation server.
    Serve {
        /// Overrides `bind` from the configuration.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Validate and import an environment directory (graph.json + panoramas).
    IngestEnv { dir: PathBuf },
    /// Create open tasks from a seed file; nothing is created unless every
    /// entry is valid.
    SeedTasks { file: PathBuf },
    /// Align guide transcripts to their audio.
    Align {
        /// Every raw guide annotation.
        #[arg(long, conflicts_with = "id", required_unless_present = "id")]
        all: bool,
        /// One annotation; repeatable.
        #[arg(long)]
        id: Vec<String>,
    },
    /// Print the follower metrics report as JSON.
    Metrics {
        #[arg(long)]
        env: Option<String>,
    },
    /// Write `annotations.jsonl` with every annotation document.
    Export {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Seed file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    pub environment_id: String,
    #[serde(default)]
    pub guide_paths: Vec<NavPath>,
    #[serde(default)]
    pub follower_tasks: Vec<FollowerSeed>,
    #[serde(default)]
    pub restrict_movement: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowerSeed {
    pub start_node: String,
    pub instruction: Instruction,
    #[serde(default)]
    pub reference_path: Option<NavPath>,
}

/// Validates every entry of `spec` and, only if all pass, stores the tasks.
/// Errors name the offending entry.
pub fn seed_tasks(
    store: &Store,
    ids: &dyn IdGenerator,
    spec: &SeedSpec,
) -> Result<Vec<TaskRecord>, Vec<String>> {
    let graph = environment::load_graph(store, &spec.environment_id)
        .map_err(|e| vec![format!("environment {:?}: {e}", spec.environment_id)])?;
    let mut errors = Vec::new();
    for (i, path) in spec.guide_paths.iter().enumerate() {
        if let Err(e) = graph.check_path(path) {
            errors.push(format!("guide_paths[{i}]: {e}"));
        }
    }
    for (i, f) in spec.follower_tasks.iter().enumerate() {
        if !graph.contains(&f.start_node) {
            errors.push(format!(
                "follower_tasks[{i}]: unknown start node {:?}",
                f.start_node
            ));
        }
        if let Some(p) = &f.reference_path {
            if let Err(e) = graph.check_path(p) {
                errors.push(format!("follower_tasks[{i}].reference_path: {e}"));
            } else if p.first() != Some(f.start_node.as_str()) {
                errors.push(format!(
                    "follower_tasks[{i}].reference_path does not begin at {:?}",
                    f.start_node
                ));
            }
        }
        if let Instruction::Audio { annotation_id } = &f.instruction {
            match store.get_doc::<AnnotationDoc>(annotation_id) {
                Ok(doc)
                    if doc.kind == TaskKind::Guide && doc.environment_id == spec.environment_id => {
                }
                Ok(_) => errors.push(format!(
                    "follower_tasks[{i}]: {annotation_id:?} is not a guide annotation in {:?}",
                    spec.environment_id
                )),
                Err(e) => errors.push(format!("follower_tasks[{i}]: {e}")),
            }
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    // Spaced creation times keep claim order equal to file order.
    let now = store.now();
    let tasks: Vec<TaskRecord> = spec
        .guide_paths
        .iter()
        .map(|p| {
            TaskRecord::new_guide(
                ids.next_id("task"),
                &spec.environment_id,
                p.clone(),
                spec.restrict_movement,
                now,
            )
        })
        .chain(spec.follower_tasks.iter().map(|f| {
            TaskRecord::new_follower(
                ids.next_id("task"),
                &spec.environment_id,
                &f.start_node,
                f.instruction.clone(),
                f.reference_path.clone(),
                now,
            )
        }))
        .enumerate()
        .map(|(i, mut t)| {
            t.created_at = now + Duration::microseconds(i as i64);
            t
        })
        .collect();
    store.put_tasks(&tasks).map_err(|e| vec![e.to_string()])?;
    Ok(tasks)
}

/// Every annotation document, oldest first, one JSON object per line.
pub fn export_annotations(store: &Store, out_dir: &Path) -> Result<(PathBuf, usize), String> {
    let mut docs = store
        .list_annotations(&AnnotationFilter::default())
        .map_err(|e| e.to_string())?;
    docs.sort_by(|a, b| (a.created_at, &a.annotation_id).cmp(&(b.created_at, &b.annotation_id)));
    let mut text = String::new();
    for d in &docs {
        text.push_str(&serde_json::to_string(d).expect("annotation serializes"));
        text.push('\n');
    }
    std::fs::create_dir_all(out_dir).map_err(|e| format!("{}: {e}", out_dir.display()))?;
    let path = out_dir.join("annotations.jsonl");
    std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((path, docs.len()))
}

fn open_store(config: &Config) -> Result<Store, String> {
    Store::local(&config.data_dir).map_err(|e| format!("{}: {e}", config.data_dir.display()))
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), Vec<String>> {
    let one = |e: String| vec![e];
    let mut config = Config::load(cli.config.as_deref()).map_err(|e| one(e.to_string()))?;
    if let Some(dir) = cli.data_dir {
        config.data_dir = dir;
    }
    let store = open_store(&config).map_err(one)?;
    let w = |out: &mut dyn Write, line: String| {
        writeln!(out, "{line}").map_err(|e| vec![e.to_string()])
    };

    match cli.command {
        Command::Serve { bind } => {
            let bind = bind.unwrap_or_else(|| config.bind.clone());
            let workers = AlignmentWorkers::start(
                store.clone(),
                config.transcriber(),
                config.retry_policy(),
                config.workers,
            );
            let service = Service::new(store, Arc::new(UuidIds), config.service_settings())
                .with_alignment(workers)
                .map_err(|e| one(e.to_string()))?;
            let server =
                http::spawn(Arc::new(service), &bind).map_err(|e| one(format!("{bind}: {e}")))?;
            w(out, format!("listening on {}", server.base_url()))?;
            out.flush().ok();
            server.join().map_err(|e| one(e.to_string()))
        }
        Command::IngestEnv { dir } => {
            let report = ingest_environment(&store, &dir).map_err(|e| one(e.to_string()))?;
            w(out, format!("{}: {report}", report.environment_id))
        }
        Command::SeedTasks { file } => {
            let text = std::fs::read_to_string(&file)
                .map_err(|e| one(format!("{}: {e}", file.display())))?;
            let spec: SeedSpec =
                serde_json::from_str(&text).map_err(|e| one(format!("{}: {e}", file.display())))?;
            let tasks = seed_tasks(&store, &UuidIds, &spec)?;
            let guides = tasks.iter().filter(|t| t.kind == TaskKind::Guide).count();
            w(
                out,
                format!(
                    "{} guide and {} follower tasks created in {}",
                    guides,
                    tasks.len() - guides,
                    spec.environment_id
                ),
            )
        }
        Command::Align { all, id } => {
            let targets: Vec<String> = if all {
                store
                    .list_annotations(&AnnotationFilter {
                        kind: Some(TaskKind::Guide),
                        status: Some(AnnotationStatus::Raw),
                        ..Default::default()
                    })
                    .map_err(|e| one(e.to_string()))?
                    .into_iter()
                    .map(|d| d.annotation_id)
                    .collect()
            } else {
                id
            };
            let mut errors = Vec::new();
            let mut queued = Vec::new();
            {
                let workers = AlignmentWorkers::start(
                    store.clone(),
                    config.transcriber(),
                    config.retry_policy(),
                    config.workers,
                );
                for t in targets {
                    match store.get_doc::<AnnotationDoc>(&t) {
                        Ok(_) => {
                            workers.enqueue(t.clone());
                            queued.push(t);
                        }
                        Err(e) => errors.push(e.to_string()),
                    }
                }
                workers.wait_idle();
            }
            for t in &queued {
                match store.get_doc::<AnnotationDoc>(t) {
                    Ok(d) => {
                        let status = serde_json::to_value(d.status).expect("status serializes");
                        let note = d
                            .alignment_note
                            .map(|n| format!(" ({n})"))
                            .unwrap_or_default();
                        w(
                            out,
                            format!("{t}: {}{note}", status.as_str().unwrap_or("?")),
                        )?;
                    }
                    Err(e) => errors.push(e.to_string()),
                }
            }
            if queued.is_empty() && errors.is_empty() {
                w(out, "nothing to align".into())?;
            }
            if errors.is_empty() {
                Ok(())
            } else {
                Err(errors)
            }
        }
        Command::Metrics { env } => {
            let service = Service::new(store, Arc::new(UuidIds), config.service_settings());
            let report = service
                .dashboard_summary(env.as_deref())
                .map_err(|e| one(e.to_string()))?;
            w(
                out,
                serde_json::to_string_pretty(&report).expect("report serializes"),
            )
        }
        Command::Export { out: dir } => {
            let (path, n) = export_annotations(&store, &dir).map_err(one)?;
            w(
                out,
                format!("{n} annotations written to {}", path.display()),
            )
        }
    }
}

/// Parses `args` and runs the command. Returns the process exit code: 0 on
/// success, 1 if the command reported errors, 2 on usage errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(errors) => {
            for e in errors {
                let _ = writeln!(err, "error: {e}");
            }
            1
        }
    }
}
