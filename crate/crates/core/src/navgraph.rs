//! Panoramic navigation graphs.
//!
//! An environment is a set of viewpoints (nodes) with 3D positions and a
//! panorama each, joined by undirected traversability edges. Edge weights
//! are Euclidean distances between node positions.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("malformed graph document: {0}")]
    Parse(String),
    #[error("edge {index} references unknown node {node:?}")]
    UnknownEndpoint { index: usize, node: String },
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("edge {index} is a self-loop on {node:?}")]
    SelfLoop { index: usize, node: String },
    #[error("node {0:?} has an empty id")]
    EmptyId(String),
    #[error("node {0:?} has a non-finite position")]
    NonFinitePosition(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("{from:?} and {to:?} are not connected")]
    Unreachable { from: String, to: String },
    #[error("invalid path: {0}")]
    InvalidPath(String),
}

/// A viewpoint in the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    /// Meters.
    pub position: [f64; 3],
    /// Blob key of the node's equirectangular panorama.
    pub panorama: String,
}

impl Node {
    pub fn distance_to(&self, other: &Node) -> f64 {
        let [dx, dy, dz] = [
            self.position[0] - other.position[0],
            self.position[1] - other.position[1],
            self.position[2] - other.position[2],
        ];
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Serialized graph document, exactly as exchanged on disk and over HTTP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub environment_id: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<[String; 2]>,
}

/// Ordered sequence of node ids through a graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NavPath(Vec<String>);

impl NavPath {
    pub fn new<I, S>(nodes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        NavPath(nodes.into_iter().map(Into::into).collect())
    }

    pub fn nodes(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<&str> {
        self.0.first().map(String::as_str)
    }

    pub fn last(&self) -> Option<&str> {
        self.0.last().map(String::as_str)
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl From<Vec<String>> for NavPath {
    fn from(nodes: Vec<String>) -> Self {
        NavPath(nodes)
    }
}

impl fmt::Display for NavPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.0.join(", "))
    }
}

/// One problem found by [`NavigationGraph::validate_path`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathViolation {
    Empty,
    UnknownNode {
        index: usize,
        node: String,
    },
    ConsecutiveDuplicate {
        index: usize,
        node: String,
    },
    NotAnEdge {
        index: usize,
        from: String,
        to: String,
    },
}

impl fmt::Display for PathViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathViolation::Empty => write!(f, "path is empty"),
            PathViolation::UnknownNode { index, node } => {
                write!(f, "unknown node {node:?} at index {index}")
            }
            PathViolation::ConsecutiveDuplicate { index, node } => {
                write!(f, "consecutive duplicate {node:?} at index {index}")
            }
            PathViolation::NotAnEdge { index, from, to } => {
                write!(f, "({from}, {to}) at index {index} is not an edge")
            }
        }
    }
}

/// Validated, immutable navigation graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NavigationGraph {
    environment_id: String,
    nodes: BTreeMap<String, Node>,
    // Each undirected edge stored once with endpoints in ascending order.
    edges: BTreeSet<(String, String)>,
    adjacency: BTreeMap<String, BTreeSet<String>>,
}

fn edge_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

impl NavigationGraph {
    /// Parses and validates a UTF-8 JSON graph document.
    pub fn load(document: &[u8]) -> Result<Self, GraphError> {
        let doc: GraphDocument =
            serde_json::from_slice(document).map_err(|e| GraphError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn from_document(doc: GraphDocument) -> Result<Self, GraphError> {
        let mut nodes = BTreeMap::new();
        let mut adjacency = BTreeMap::new();
        for node in doc.nodes {
            if node.id.is_empty() {
                return Err(GraphError::EmptyId(node.panorama));
            }
            if node.position.iter().any(|c| !c.is_finite()) {
                return Err(GraphError::NonFinitePosition(node.id));
            }
            if nodes.contains_key(&node.id) {
                return Err(GraphError::DuplicateNode(node.id));
            }
            adjacency.insert(node.id.clone(), BTreeSet::new());
            nodes.insert(node.id.clone(), node);
        }

        let mut edges = BTreeSet::new();
        for (index, [a, b]) in doc.edges.into_iter().enumerate() {
            for end in [&a, &b] {
                if !nodes.contains_key(end) {
                    return Err(GraphError::UnknownEndpoint {
                        index,
                        node: end.clone(),
                    });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop { index, node: a });
            }
            adjacency.get_mut(&a).expect("checked").insert(b.clone());
            adjacency.get_mut(&b).expect("checked").insert(a.clone());
            edges.insert(edge_key(&a, &b));
        }

        Ok(NavigationGraph {
            environment_id: doc.environment_id,
            nodes,
            edges,
            adjacency,
        })
    }

    /// Canonical document form: nodes sorted by id, each edge once.
    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            environment_id: self.environment_id.clone(),
            nodes: self.nodes.values().cloned().collect(),
            edges: self
                .edges
                .iter()
                .map(|(a, b)| [a.clone(), b.clone()])
                .collect(),
        }
    }

    pub fn environment_id(&self) -> &str {
        &self.environment_id
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.adjacency.get(a).is_some_and(|n| n.contains(b))
    }

    pub fn neighbors(&self, node: &str) -> Result<&BTreeSet<String>, GraphError> {
        self.adjacency
            .get(node)
            .ok_or_else(|| GraphError::UnknownNode(node.to_owned()))
    }

    /// Euclidean length of the edge (or straight line) between two nodes.
    pub fn euclidean(&self, a: &str, b: &str) -> Result<f64, GraphError> {
        Ok(self.require(a)?.distance_to(self.require(b)?))
    }

    fn require(&self, id: &str) -> Result<&Node, GraphError> {
        self.nodes
            .get(id)
            .ok_or_else(|| GraphError::UnknownNode(id.to_owned()))
    }

    /// Shortest path between `from` and `to`. Among equal-cost paths the
    /// lexicographically smallest node-id sequence is returned.
    pub fn geodesic(&self, from: &str, to: &str) -> Result<(f64, NavPath), GraphError> {
        self.require(to)?;
        let unreachable = || GraphError::Unreachable {
            from: from.to_owned(),
            to: to.to_owned(),
        };
        let (mut dist, path) = self
            .shortest_paths_from(from)?
            .remove(to)
            .ok_or_else(unreachable)?;
        // Float sums depend on direction; take the distance from the
        // smaller id so (a, b) and (b, a) agree bit for bit.
        if to < from {
            dist = self.shortest_paths_from(to)?[from].0;
        }
        Ok((dist, NavPath(path)))
    }

    /// Geodesic distance only.
    pub fn geodesic_distance(&self, from: &str, to: &str) -> Result<f64, GraphError> {
        self.geodesic(from, to).map(|(d, _)| d)
    }

    /// Distances from `from` to every reachable node.
    pub fn distances_from(&self, from: &str) -> Result<BTreeMap<String, f64>, GraphError> {
        Ok(self
            .shortest_paths_from(from)?
            .into_iter()
            .map(|(k, (d, _))| (k, d))
            .collect())
    }

    fn shortest_paths_from(
        &self,
        from: &str,
    ) -> Result<BTreeMap<String, (f64, Vec<String>)>, GraphError> {
        self.require(from)?;

        #[derive(PartialEq)]
        struct Entry {
            dist: f64,
            path: Vec<String>,
        }
        impl Eq for Entry {}
        impl Ord for Entry {
            // BinaryHeap is a max-heap; reverse for min (dist, path).
            fn cmp(&self, other: &Self) -> Ordering {
                other
                    .dist
                    .total_cmp(&self.dist)
                    .then_with(|| other.path.cmp(&self.path))
            }
        }
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        let mut best: BTreeMap<String, (f64, Vec<String>)> = BTreeMap::new();
        let mut settled: BTreeSet<String> = BTreeSet::new();
        let mut heap = BinaryHeap::new();
        best.insert(from.to_owned(), (0.0, vec![from.to_owned()]));
        heap.push(Entry {
            dist: 0.0,
            path: vec![from.to_owned()],
        });

        while let Some(Entry { dist, path }) = heap.pop() {
            let here = path.last().expect("non-empty").clone();
            if !settled.insert(here.clone()) {
                continue;
            }
            let here_node = &self.nodes[&here];
            for next in &self.adjacency[&here] {
                if settled.contains(next) {
                    continue;
                }
                let cand = dist + here_node.distance_to(&self.nodes[next]);
                let better = match best.get(next) {
                    None => true,
                    Some((d, p)) => {
                        cand < *d || (cand == *d && path.iter().chain([next]).lt(p.iter()))
                    }
                };
                if better {
                    let mut cand_path = path.clone();
                    cand_path.push(next.clone());
                    best.insert(next.clone(), (cand, cand_path.clone()));
                    heap.push(Entry {
                        dist: cand,
                        path: cand_path,
                    });
                }
            }
        }
        Ok(best)
    }

    /// Every problem with `path` on this graph; empty when the path is valid.
    pub fn validate_path(&self, path: &NavPath) -> Vec<PathViolation> {
        let mut violations = Vec::new();
        if path.is_empty() {
            violations.push(PathViolation::Empty);
            return violations;
        }
        for (index, node) in path.nodes().iter().enumerate() {
            if !self.contains(node) {
                violations.push(PathViolation::UnknownNode {
                    index,
                    node: node.clone(),
                });
            }
        }
        for (index, pair) in path.nodes().windows(2).enumerate() {
            let (from, to) = (&pair[0], &pair[1]);
            if from == to {
                violations.push(PathViolation::ConsecutiveDuplicate {
                    index,
                    node: from.clone(),
                });
            } else if self.contains(from) && self.contains(to) && !self.has_edge(from, to) {
                violations.push(PathViolation::NotAnEdge {
                    index,
                    from: from.clone(),
                    to: to.clone(),
                });
            }
        }
        violations
    }

    /// Like [`validate_path`](Self::validate_path) but as a `Result`.
    pub fn check_path(&self, path: &NavPath) -> Result<(), GraphError> {
        let violations = self.validate_path(path);
        if violations.is_empty() {
            Ok(())
        } else {
            let msg: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(GraphError::InvalidPath(msg.join("; ")))
        }
    }
}
