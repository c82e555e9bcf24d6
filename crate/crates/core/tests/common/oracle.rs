//! Slow reference implementations, written without reference to the
//! library code they check.

use std::collections::HashMap;

use pangea::navgraph::{GraphDocument, NavPath, NavigationGraph, Node};
use rand::seq::SliceRandom;
use rand::Rng;

/// Edit distance by memoized recursion over suffixes.
pub fn levenshtein(a: &str, b: &str) -> usize {
    fn go(a: &[char], b: &[char], memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        if let Some(&v) = memo.get(&(a.len(), b.len())) {
            return v;
        }
        let v = if a[0] == b[0] {
            go(&a[1..], &b[1..], memo)
        } else {
            1 + go(&a[1..], b, memo)
                .min(go(a, &b[1..], memo))
                .min(go(&a[1..], &b[1..], memo))
        };
        memo.insert((a.len(), b.len()), v);
        v
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    go(&a, &b, &mut HashMap::new())
}

pub fn word_cost(a: &str, b: &str) -> f64 {
    let n = a.chars().count().max(b.chars().count());
    if n == 0 {
        0.0
    } else {
        levenshtein(a, b) as f64 / n as f64
    }
}

/// Minimum over every monotone path from (0,0) to (rows-1,cols-1) with
/// unit steps, each path's cost summed from its start.
pub fn exhaustive_dtw(rows: usize, cols: usize, cost: &dyn Fn(usize, usize) -> f64) -> f64 {
    fn walk(
        i: usize,
        j: usize,
        acc: f64,
        rows: usize,
        cols: usize,
        cost: &dyn Fn(usize, usize) -> f64,
        best: &mut f64,
    ) {
        let acc = acc + cost(i, j);
        if i + 1 == rows && j + 1 == cols {
            *best = best.min(acc);
            return;
        }
        for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
            if i + di < rows && j + dj < cols {
                walk(i + di, j + dj, acc, rows, cols, cost, best);
            }
        }
    }
    let mut best = f64::INFINITY;
    walk(0, 0, 0.0, rows, cols, cost, &mut best);
    best
}

pub fn euclid(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Shortest simple-path length by depth-first enumeration.
pub fn brute_geodesic(doc: &GraphDocument, from: &str, to: &str) -> Option<f64> {
    let pos: HashMap<&str, [f64; 3]> = doc
        .nodes
        .iter()
        .map(|n| (n.id.as_str(), n.position))
        .collect();
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for [a, b] in &doc.edges {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    fn dfs<'a>(
        at: &'a str,
        to: &str,
        len: f64,
        seen: &mut Vec<&'a str>,
        adj: &HashMap<&'a str, Vec<&'a str>>,
        pos: &HashMap<&str, [f64; 3]>,
        best: &mut Option<f64>,
    ) {
        if at == to {
            *best = Some(best.map_or(len, |b: f64| b.min(len)));
            return;
        }
        for &next in adj.get(at).into_iter().flatten() {
            if !seen.contains(&next) {
                seen.push(next);
                dfs(
                    next,
                    to,
                    len + euclid(pos[at], pos[next]),
                    seen,
                    adj,
                    pos,
                    best,
                );
                seen.pop();
            }
        }
    }
    let mut best = None;
    dfs(from, to, 0.0, &mut vec![from], &adj, &pos, &mut best);
    best
}

pub fn node_id(i: usize) -> String {
    format!("v{i}")
}

/// `n` nodes on a 10 m grid (integer coordinates, so distances tie often),
/// a random spanning tree when `connected`, plus extra random edges.
pub fn random_graph(rng: &mut impl Rng, n: usize, connected: bool) -> GraphDocument {
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            id: node_id(i),
            position: [
                f64::from(rng.gen_range(0..10)),
                f64::from(rng.gen_range(0..10)),
                f64::from(rng.gen_range(0..2)),
            ],
            panorama: format!("{}.jpg", node_id(i)),
        })
        .collect();
    let mut edges: Vec<[String; 2]> = Vec::new();
    let add = |a: usize, b: usize, edges: &mut Vec<[String; 2]>| {
        let e = [node_id(a.min(b)), node_id(a.max(b))];
        if a != b && !edges.contains(&e) {
            edges.push(e);
        }
    };
    if connected {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for k in 1..n {
            let parent = order[rng.gen_range(0..k)];
            add(order[k], parent, &mut edges);
        }
    }
    for _ in 0..rng.gen_range(0..=n) {
        add(rng.gen_range(0..n), rng.gen_range(0..n), &mut edges);
    }
    GraphDocument {
        environment_id: "random".into(),
        nodes,
        edges,
    }
}

/// Random walk of `steps` moves from `start`, possibly revisiting nodes.
pub fn random_walk(rng: &mut impl Rng, g: &NavigationGraph, start: &str, steps: usize) -> NavPath {
    let mut path = vec![start.to_owned()];
    for _ in 0..steps {
        let here = path.last().unwrap();
        let next: Vec<&String> = g.neighbors(here).unwrap().iter().collect();
        match next.choose(rng) {
            Some(n) => path.push((*n).clone()),
            None => break,
        }
    }
    NavPath::new(path)
}
