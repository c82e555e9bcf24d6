//! Environment ingestion: a directory holding `graph.json` and the
//! panorama images it references.

use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::navgraph::{GraphError, NavigationGraph};
use crate::store::{check_key, Document, Store, StoreError};

pub const GRAPH_FILE: &str = "graph.json";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file}:{line}:{column}: {message}")]
    Syntax {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{file}: {source}")]
    Graph { file: String, source: GraphError },
    #[error("node {node:?}: panorama {}: {reason}", path.display())]
    Panorama {
        node: String,
        path: PathBuf,
        reason: String,
    },
    #[error("invalid environment id {0:?}")]
    BadEnvironmentId(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub environment_id: String,
    pub nodes: usize,
    pub edges: usize,
    pub panoramas: usize,
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, {}, {} ingested",
            plural(self.nodes, "node"),
            plural(self.edges, "edge"),
            plural(self.panoramas, "panorama")
        )
    }
}

/// Stored summary of an ingested environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentRecord {
    pub environment_id: String,
    pub nodes: usize,
    pub edges: usize,
    pub panoramas: usize,
    pub ingested_at: DateTime<Utc>,
}

impl Document for EnvironmentRecord {
    const COLLECTION: &'static str = "environments";

    fn id(&self) -> &str {
        &self.environment_id
    }
}

pub fn graph_key(environment_id: &str) -> String {
    format!("environments/{environment_id}/{GRAPH_FILE}")
}

pub fn panorama_key(environment_id: &str, panorama: &str) -> String {
    format!("environments/{environment_id}/panoramas/{panorama}")
}

/// MIME type from the leading magic bytes.
pub fn image_content_type(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        "image/png"
    } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        "image/jpeg"
    } else {
        "application/octet-stream"
    }
}

fn check_panorama(node: &str, path: &Path, bytes: &[u8]) -> Result<(), IngestError> {
    let fail = |reason: String| IngestError::Panorama {
        node: node.to_owned(),
        path: path.to_owned(),
        reason,
    };
    if image_content_type(bytes) == "application/octet-stream" {
        return Err(fail("not a PNG or JPEG image".into()));
    }
    let (w, h) = image::ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| fail(e.to_string()))?
        .into_dimensions()
        .map_err(|e| fail(e.to_string()))?;
    if w != 2 * h {
        return Err(fail(format!("{w}x{h} is not a 2:1 equirectangular image")));
    }
    Ok(())
}

/// Validates everything first, then writes the graph document verbatim and
/// every panorama. Re-ingesting the same directory overwrites in place.
pub fn ingest_environment(store: &Store, dir: &Path) -> Result<IngestReport, IngestError> {
    let graph_path = dir.join(GRAPH_FILE);
    let raw = std::fs::read(&graph_path).map_err(|source| IngestError::Read {
        path: graph_path.clone(),
        source,
    })?;
    let file = graph_path.display().to_string();
    let doc: crate::navgraph::GraphDocument =
        serde_json::from_slice(&raw).map_err(|e| IngestError::Syntax {
            file: file.clone(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    let graph = NavigationGraph::from_document(doc)
        .map_err(|source| IngestError::Graph { file, source })?;
    let env = graph.environment_id().to_owned();
    if env.contains('/') || check_key(&env).is_err() {
        return Err(IngestError::BadEnvironmentId(env));
    }

    let mut panoramas = Vec::new();
    for node in graph.nodes() {
        let path = dir.join(&node.panorama);
        if check_key(&node.panorama).is_err() {
            return Err(IngestError::Panorama {
                node: node.id.clone(),
                path,
                reason: "panorama must be a relative path inside the environment directory".into(),
            });
        }
        let bytes = std::fs::read(&path).map_err(|e| IngestError::Panorama {
            node: node.id.clone(),
            path: path.clone(),
            reason: e.to_string(),
        })?;
        check_panorama(&node.id, &path, &bytes)?;
        panoramas.push((node.panorama.clone(), bytes));
    }
    panoramas.sort_by(|a, b| a.0.cmp(&b.0));
    panoramas.dedup_by(|a, b| a.0 == b.0);

    store.blob_put(&graph_key(&env), &raw)?;
    for (name, bytes) in &panoramas {
        store.blob_put(&panorama_key(&env, name), bytes)?;
    }
    let report = IngestReport {
        environment_id: env.clone(),
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        panoramas: panoramas.len(),
    };
    store.put_doc(&EnvironmentRecord {
        environment_id: env,
        nodes: report.nodes,
        edges: report.edges,
        panoramas: report.panoramas,
        ingested_at: store.now(),
    })?;
    Ok(report)
}

/// The stored graph document, byte for byte.
pub fn graph_document(store: &Store, environment_id: &str) -> Result<Vec<u8>, StoreError> {
    store.blob_get(&graph_key(environment_id))
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("stored graph for {env} is invalid: {source}")]
    Graph { env: String, source: GraphError },
}

pub fn load_graph(store: &Store, environment_id: &str) -> Result<NavigationGraph, LoadError> {
    let raw = graph_document(store, environment_id)?;
    NavigationGraph::load(&raw).map_err(|source| LoadError::Graph {
        env: environment_id.to_owned(),
        source,
    })
}
