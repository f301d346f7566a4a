//! Edge-list ingestion and biased second-order random-walk subgraph sampling.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::canonical::DEFAULT_N_MAX;
use crate::error::{Error, Result};
use crate::graphgen::Graph;
use crate::rng::rng_from;

/// Parsed edge list plus the number of self-loops that were dropped.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    pub dropped_self_loops: usize,
}

/// Reads whitespace-separated integer pairs, one edge per line. Lines
/// starting with `#` are comments. Node ids are remapped to `0..n` in order
/// of first appearance.
pub fn load_edge_list(path: &Path) -> Result<LoadedGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text).map_err(|(line, message)| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    })
}

/// Parser behind [`load_edge_list`]; errors carry a 1-based line number.
pub fn parse_edge_list(text: &str) -> std::result::Result<LoadedGraph, (usize, String)> {
    let mut ids: HashMap<i64, usize> = HashMap::new();
    let mut edges = BTreeSet::new();
    let mut dropped = 0;
    let intern = |raw: i64, ids: &mut HashMap<i64, usize>| {
        let next = ids.len();
        *ids.entry(raw).or_insert(next)
    };
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 {
            return Err((i + 1, format!("expected two node ids, found {}", fields.len())));
        }
        let parse = |s: &str| {
            s.parse::<i64>()
                .map_err(|_| (i + 1, format!("invalid node id {s:?}")))
        };
        let (a, b) = (parse(fields[0])?, parse(fields[1])?);
        let (a, b) = (intern(a, &mut ids), intern(b, &mut ids));
        if a == b {
            dropped += 1;
            continue;
        }
        edges.insert((a.min(b), a.max(b)));
    }
    if ids.is_empty() {
        return Err((0, "edge list contains no nodes".to_string()));
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} self-loop(s)");
    }
    Ok(LoadedGraph {
        graph: Graph::from_edge_set(ids.len(), &edges),
        dropped_self_loops: dropped,
    })
}

/// Parameters of the second-order walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub walk_length: usize,
    /// Return parameter; stepping back to the previous node has weight `1/p`.
    pub p_return: f64,
    /// In-out parameter; moving away from the previous node has weight `1/q`.
    pub q_inout: f64,
    pub max_nodes: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walk_length: 40,
            p_return: 1.0,
            q_inout: 1.0,
            max_nodes: DEFAULT_N_MAX,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walk_length < 1 {
            return Err(Error::validation("walk_length", "must be at least 1"));
        }
        if !(self.p_return > 0.0 && self.p_return.is_finite()) {
            return Err(Error::validation("p_return", "must be positive"));
        }
        if !(self.q_inout > 0.0 && self.q_inout.is_finite()) {
            return Err(Error::validation("q_inout", "must be positive"));
        }
        if self.max_nodes < 1 {
            return Err(Error::validation("max_nodes", "must be at least 1"));
        }
        Ok(())
    }
}

/// Normalized probabilities of stepping from `current` to each of its
/// neighbours (in sorted neighbour order), given the previous node.
pub fn transition_probs(g: &Graph, prev: Option<usize>, current: usize, cfg: &WalkConfig) -> Vec<f64> {
    let weights: Vec<f64> = g
        .neighbors(current)
        .iter()
        .map(|&x| match prev {
            None => 1.0,
            Some(t) if x == t => 1.0 / cfg.p_return,
            Some(t) if g.has_edge(t, x) => 1.0,
            Some(_) => 1.0 / cfg.q_inout,
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Node sequence of one walk starting at `start`. The walk stops early at a
/// node without neighbours.
pub fn walk_from(g: &Graph, start: usize, cfg: &WalkConfig, rng: &mut crate::rng::Rng) -> Vec<usize> {
    let mut path = vec![start];
    let mut prev = None;
    let mut current = start;
    for _ in 0..cfg.walk_length {
        if g.degree(current) == 0 {
            break;
        }
        let probs = transition_probs(g, prev, current, cfg);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let nb = g.neighbors(current);
        let mut next = nb[nb.len() - 1];
        for (&x, &p) in nb.iter().zip(&probs) {
            acc += p;
            if u < acc {
                next = x;
                break;
            }
        }
        prev = Some(current);
        current = next;
        path.push(current);
    }
    path
}

/// Induced subgraph on the distinct nodes of one walk from a uniformly drawn
/// start, truncated to the first `max_nodes` distinct nodes in visit order.
pub fn rw_sample(g: &Graph, cfg: &WalkConfig, seed: u64) -> Result<Graph> {
    Ok(g.induced_subgraph(&rw_sample_nodes(g, cfg, seed)?))
}

/// The node ids behind [`rw_sample`], in first-visit order.
pub fn rw_sample_nodes(g: &Graph, cfg: &WalkConfig, seed: u64) -> Result<Vec<usize>> {
    cfg.validate()?;
    if g.n() == 0 {
        return Err(Error::Empty("graph"));
    }
    let mut rng = rng_from(seed);
    let start = rng.random_range(0..g.n());
    let path = walk_from(g, start, cfg, &mut rng);
    let mut seen = BTreeSet::new();
    let mut nodes = Vec::new();
    for v in path {
        if nodes.len() == cfg.max_nodes {
            break;
        }
        if seen.insert(v) {
            nodes.push(v);
        }
    }
    Ok(nodes)
}
