//! Navigation quality metrics: navigation error, success, SPL, and a
//! DTW-based path similarity, plus per-annotator aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtw;
use crate::navgraph::{GraphError, NavPath, NavigationGraph};

pub const DEFAULT_SUCCESS_THRESHOLD_M: f64 = 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("paths start at different nodes: {pred:?} vs {reference:?}")]
    StartMismatch { pred: String, reference: String },
    #[error("success threshold must be positive and finite, got {0}")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub success_threshold_m: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            success_threshold_m: DEFAULT_SUCCESS_THRESHOLD_M,
        }
    }
}

impl EvalParams {
    pub fn new(success_threshold_m: f64) -> Result<Self, MetricsError> {
        if success_threshold_m > 0.0 && success_threshold_m.is_finite() {
            Ok(EvalParams {
                success_threshold_m,
            })
        } else {
            Err(MetricsError::BadThreshold(success_threshold_m))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEval {
    /// Geodesic distance from the predicted endpoint to the reference goal.
    pub ne_m: f64,
    pub success: bool,
    pub pred_length_m: f64,
    /// Geodesic distance from the start to the reference goal.
    pub shortest_m: f64,
    pub spl: f64,
    pub path_sim: f64,
}

/// Sum of Euclidean lengths between consecutive nodes.
pub fn path_length(graph: &NavigationGraph, path: &NavPath) -> Result<f64, MetricsError> {
    graph.check_path(path)?;
    let mut total = 0.0;
    for pair in path.nodes().windows(2) {
        total += graph.euclidean(&pair[0], &pair[1])?;
    }
    Ok(total)
}

fn endpoints(path: &NavPath) -> Result<(&str, &str), MetricsError> {
    match (path.first(), path.last()) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(GraphError::InvalidPath("path is empty".into()).into()),
    }
}

pub fn navigation_error(
    graph: &NavigationGraph,
    pred: &NavPath,
    reference: &NavPath,
) -> Result<f64, MetricsError> {
    graph.check_path(pred)?;
    graph.check_path(reference)?;
    let (_, pred_end) = endpoints(pred)?;
    let (_, ref_end) = endpoints(reference)?;
    Ok(graph.geodesic_distance(pred_end, ref_end)?)
}

/// DTW over node sequences with geodesic local cost.
pub fn path_dtw(
    graph: &NavigationGraph,
    pred: &NavPath,
    reference: &NavPath,
) -> Result<f64, MetricsError> {
    let mut from_ref: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    for node in reference.nodes() {
        if !from_ref.contains_key(node.as_str()) {
            from_ref.insert(node, graph.distances_from(node)?);
        }
    }
    // Every pair must be connected for the cost to be defined.
    for p in pred.nodes() {
        for r in reference.nodes() {
            if !from_ref[r.as_str()].contains_key(p) {
                return Err(GraphError::Unreachable {
                    from: r.clone(),
                    to: p.clone(),
                }
                .into());
            }
        }
    }
    let (_, cost) = dtw::dtw(pred.len(), reference.len(), |i, j| {
        from_ref[reference.nodes()[j].as_str()][&pred.nodes()[i]]
    })
    .ok_or_else(|| GraphError::InvalidPath("path is empty".into()))?;
    Ok(cost)
}

pub fn evaluate(
    graph: &NavigationGraph,
    pred: &NavPath,
    reference: &NavPath,
    params: &EvalParams,
) -> Result<PathEval, MetricsError> {
    graph.check_path(pred)?;
    graph.check_path(reference)?;
    let (pred_start, _) = endpoints(pred)?;
    let (ref_start, ref_goal) = endpoints(reference)?;
    if pred_start != ref_start {
        return Err(MetricsError::StartMismatch {
            pred: pred_start.to_owned(),
            reference: ref_start.to_owned(),
        });
    }

    let ne_m = navigation_error(graph, pred, reference)?;
    let success = ne_m < params.success_threshold_m;
    let shortest_m = graph.geodesic_distance(ref_start, ref_goal)?;
    let pred_length_m = path_length(graph, pred)?;
    let denom = pred_length_m.max(shortest_m);
    let spl = match (success, denom > 0.0) {
        (false, _) => 0.0,
        (true, false) => 1.0,
        (true, true) => shortest_m / denom,
    };
    let dtw_cost = path_dtw(graph, pred, reference)?;
    let path_sim = (-dtw_cost / (reference.len() as f64 * params.success_threshold_m)).exp();

    Ok(PathEval {
        ne_m,
        success,
        pred_length_m,
        shortest_m,
        spl,
        path_sim,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub ne_mean_m: f64,
    pub success_rate: f64,
    pub spl_mean: f64,
    pub path_sim_mean: f64,
    pub count: usize,
}

impl Aggregate {
    fn of<'a>(evals: impl Iterator<Item = &'a PathEval>) -> Option<Self> {
        let (mut ne, mut sr, mut spl, mut sim, mut n) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for e in evals {
            ne += e.ne_m;
            sr += f64::from(u8::from(e.success));
            spl += e.spl;
            sim += e.path_sim;
            n += 1;
        }
        (n > 0).then(|| {
            let c = n as f64;
            Aggregate {
                ne_mean_m: ne / c,
                success_rate: sr / c,
                spl_mean: spl / c,
                path_sim_mean: sim / c,
                count: n,
            }
        })
    }
}

/// Dashboard report: `{"overall": {...} | null, "workers": {id: {...}}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: Option<Aggregate>,
    pub workers: BTreeMap<String, Aggregate>,
}

pub fn summarize(evals: &[(String, PathEval)]) -> MetricsReport {
    let mut by_worker: BTreeMap<&str, Vec<&PathEval>> = BTreeMap::new();
    for (worker, eval) in evals {
        by_worker.entry(worker).or_default().push(eval);
    }
    MetricsReport {
        overall: Aggregate::of(evals.iter().map(|(_, e)| e)),
        workers: by_worker
            .into_iter()
            .filter_map(|(w, es)| Aggregate::of(es.into_iter()).map(|a| (w.to_owned(), a)))
            .collect(),
    }
}
