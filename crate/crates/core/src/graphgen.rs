//! Random-graph generators, node attributes and datasets.
//!
//! Four families are supported: Erdős–Rényi `ER(n, p)`, Barabási–Albert
//! `BA(n, m)`, Watts–Strogatz small-world `SW(n, k, p_rewire)` and the
//! complete binary tree `TREE(depth)`. Every generator is a pure function of
//! its parameters and a seed.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, substream};

/// Deepest complete binary tree accepted (2^20 - 1 nodes).
pub const MAX_TREE_DEPTH: u32 = 20;

/// Simple undirected graph over nodes `0..n` with optional per-node scalar
/// attributes in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
    attrs: Option<Vec<f64>>,
}

impl Graph {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Graph {
            adj: vec![Vec::new(); n],
            attrs: None,
        }
    }

    /// Builds a graph from an edge list. Duplicates and reversed duplicates
    /// collapse to a single edge; self-loops and out-of-range endpoints are
    /// rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::validation(
                    "edge",
                    format!("({i}, {j}) out of range for {n} nodes"),
                ));
            }
            if i == j {
                return Err(Error::validation("edge", format!("self-loop at node {i}")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        Ok(Self::from_edge_set(n, &set))
    }

    pub(crate) fn from_edge_set(n: usize, edges: &BTreeSet<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Graph { adj, attrs: None }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n() && self.adj[i].binary_search(&j).is_ok()
    }

    /// Edges with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn attrs(&self) -> Option<&[f64]> {
        self.attrs.as_deref()
    }

    /// Replaces the attribute vector. Length must equal `n` and every value
    /// must lie in `[0, 1]`.
    pub fn with_attrs(mut self, attrs: Vec<f64>) -> Result<Self> {
        if attrs.len() != self.n() {
            return Err(Error::validation(
                "attributes",
                format!("length {} does not match {} nodes", attrs.len(), self.n()),
            ));
        }
        if let Some(bad) = attrs.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::validation(
                "attributes",
                format!("value {bad} outside [0, 1]"),
            ));
        }
        self.attrs = Some(attrs);
        Ok(self)
    }

    pub fn without_attrs(mut self) -> Self {
        self.attrs = None;
        self
    }

    /// Graph on `nodes` (in the given order) keeping every edge of `self`
    /// between them. Attributes follow their nodes.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Graph {
        let mut slot = vec![usize::MAX; self.n()];
        for (new, &old) in nodes.iter().enumerate() {
            slot[old] = new;
        }
        let mut set = BTreeSet::new();
        for (new_i, &old_i) in nodes.iter().enumerate() {
            for &old_j in &self.adj[old_i] {
                let new_j = slot[old_j];
                if new_j != usize::MAX && new_i < new_j {
                    set.insert((new_i, new_j));
                }
            }
        }
        let mut g = Graph::from_edge_set(nodes.len(), &set);
        g.attrs = self
            .attrs
            .as_ref()
            .map(|a| nodes.iter().map(|&v| a[v]).collect());
        g
    }

    /// Relabels node `v` to `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.n(), "permutation length");
        let set: BTreeSet<_> = self
            .edges()
            .map(|(i, j)| {
                let (a, b) = (perm[i], perm[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        let mut g = Graph::from_edge_set(self.n(), &set);
        if let Some(a) = &self.attrs {
            let mut out = vec![0.0; a.len()];
            for (v, &x) in a.iter().enumerate() {
                out[perm[v]] = x;
            }
            g.attrs = Some(out);
        }
        g
    }
}

/// Generator family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "ER")]
    Er,
    #[serde(rename = "BA")]
    Ba,
    #[serde(rename = "SW")]
    Sw,
    #[serde(rename = "TREE")]
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Int,
    EvenInt,
    Probability,
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
}

const ER_PARAMS: [ParamSpec; 2] = [
    ParamSpec { name: "n", kind: ParamKind::Int },
    ParamSpec { name: "p", kind: ParamKind::Probability },
];
const BA_PARAMS: [ParamSpec; 2] = [
    ParamSpec { name: "n", kind: ParamKind::Int },
    ParamSpec { name: "m", kind: ParamKind::Int },
];
const SW_PARAMS: [ParamSpec; 3] = [
    ParamSpec { name: "n", kind: ParamKind::Int },
    ParamSpec { name: "k", kind: ParamKind::EvenInt },
    ParamSpec { name: "p_rewire", kind: ParamKind::Probability },
];
const TREE_PARAMS: [ParamSpec; 1] = [ParamSpec { name: "depth", kind: ParamKind::Int }];

impl Family {
    pub const ALL: [Family; 4] = [Family::Er, Family::Ba, Family::Sw, Family::Tree];

    pub fn name(self) -> &'static str {
        match self {
            Family::Er => "ER",
            Family::Ba => "BA",
            Family::Sw => "SW",
            Family::Tree => "TREE",
        }
    }

    /// Parameters of the family, in the canonical order used by
    /// [`GenParams::values`].
    pub fn params(self) -> &'static [ParamSpec] {
        match self {
            Family::Er => &ER_PARAMS,
            Family::Ba => &BA_PARAMS,
            Family::Sw => &SW_PARAMS,
            Family::Tree => &TREE_PARAMS,
        }
    }

    pub fn param_names(self) -> Vec<&'static str> {
        self.params().iter().map(|p| p.name).collect()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ER" => Ok(Family::Er),
            "BA" => Ok(Family::Ba),
            "SW" => Ok(Family::Sw),
            "TREE" => Ok(Family::Tree),
            other => Err(Error::validation("family", format!("unknown family {other:?}"))),
        }
    }
}

/// A generator family together with its parameter values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GenParams {
    Er { n: usize, p: f64 },
    Ba { n: usize, m: usize },
    Sw { n: usize, k: usize, p_rewire: f64 },
    Tree { depth: u32 },
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::validation(name, format!("{p} outside [0, 1]")))
    }
}

impl GenParams {
    pub fn family(&self) -> Family {
        match self {
            GenParams::Er { .. } => Family::Er,
            GenParams::Ba { .. } => Family::Ba,
            GenParams::Sw { .. } => Family::Sw,
            GenParams::Tree { .. } => Family::Tree,
        }
    }

    /// Parameter vector `v` in the order of [`Family::params`].
    pub fn values(&self) -> Vec<f64> {
        match *self {
            GenParams::Er { n, p } => vec![n as f64, p],
            GenParams::Ba { n, m } => vec![n as f64, m as f64],
            GenParams::Sw { n, k, p_rewire } => vec![n as f64, k as f64, p_rewire],
            GenParams::Tree { depth } => vec![depth as f64],
        }
    }

    /// Inverse of [`GenParams::values`]; integer parameters must be integral.
    pub fn from_values(family: Family, values: &[f64]) -> Result<Self> {
        let specs = family.params();
        if values.len() != specs.len() {
            return Err(Error::validation(
                "parameters",
                format!("{family} takes {} values, got {}", specs.len(), values.len()),
            ));
        }
        let int = |i: usize| -> Result<usize> {
            let x = values[i];
            if x.fract() != 0.0 || x < 0.0 || !x.is_finite() {
                return Err(Error::validation(
                    specs[i].name,
                    format!("{x} is not a non-negative integer"),
                ));
            }
            Ok(x as usize)
        };
        let params = match family {
            Family::Er => GenParams::Er { n: int(0)?, p: values[1] },
            Family::Ba => GenParams::Ba { n: int(0)?, m: int(1)? },
            Family::Sw => GenParams::Sw {
                n: int(0)?,
                k: int(1)?,
                p_rewire: values[2],
            },
            Family::Tree => GenParams::Tree { depth: int(0)? as u32 },
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks the family bounds, naming the violated one on failure.
    pub fn validate(&self) -> Result<()> {
        match *self {
            GenParams::Er { n, p } => {
                if n < 1 {
                    return Err(Error::validation("n", "ER requires n >= 1"));
                }
                check_prob("p", p)
            }
            GenParams::Ba { n, m } => {
                if m < 1 {
                    return Err(Error::validation("m", "BA requires m >= 1"));
                }
                if m >= n {
                    return Err(Error::validation("m", format!("BA requires m < n (m={m}, n={n})")));
                }
                Ok(())
            }
            GenParams::Sw { n, k, p_rewire } => {
                if k % 2 != 0 {
                    return Err(Error::validation("k", format!("SW requires even k, got {k}")));
                }
                if k >= n {
                    return Err(Error::validation("k", format!("SW requires k < n (k={k}, n={n})")));
                }
                check_prob("p_rewire", p_rewire)
            }
            GenParams::Tree { depth } => {
                if depth < 1 {
                    return Err(Error::validation("depth", "TREE requires depth >= 1"));
                }
                if depth > MAX_TREE_DEPTH {
                    return Err(Error::validation(
                        "depth",
                        format!("TREE depth {depth} exceeds {MAX_TREE_DEPTH}"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Node count of a graph generated from these parameters.
    pub fn node_count(&self) -> usize {
        match *self {
            GenParams::Er { n, .. } | GenParams::Ba { n, .. } | GenParams::Sw { n, .. } => n,
            GenParams::Tree { depth } => (1usize << depth) - 1,
        }
    }

    fn to_json_map(self) -> Map<String, Value> {
        let mut map = Map::new();
        for (spec, v) in self.family().params().iter().zip(self.values()) {
            let value = match spec.kind {
                ParamKind::Int | ParamKind::EvenInt => Value::from(v as u64),
                ParamKind::Probability => Value::from(v),
            };
            map.insert(spec.name.to_string(), value);
        }
        map
    }

    fn from_json_map(family: Family, map: &Map<String, Value>) -> Result<Self> {
        let values = family
            .params()
            .iter()
            .map(|spec| {
                map.get(spec.name)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| Error::validation(spec.name, "missing or non-numeric parameter"))
            })
            .collect::<Result<Vec<_>>>()?;
        GenParams::from_values(family, &values)
    }
}

/// Samples a graph from `params`. Deterministic in `(params, seed)`; TREE
/// ignores the seed.
pub fn gen_graph(params: &GenParams, seed: u64) -> Result<Graph> {
    params.validate()?;
    let mut rng = rng_from(seed);
    let mut edges = BTreeSet::new();
    let n = params.node_count();
    match *params {
        GenParams::Er { n, p } => {
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < p {
                        edges.insert((i, j));
                    }
                }
            }
        }
        GenParams::Ba { n, m } => {
            // Nodes 0..m start isolated; node m links to all of them, and every
            // later node picks m distinct targets with probability proportional
            // to degree (sampled from the list of edge endpoints).
            let mut targets: Vec<usize> = (0..m).collect();
            let mut endpoints: Vec<usize> = Vec::with_capacity(2 * m * n);
            for source in m..n {
                for &t in &targets {
                    edges.insert((t.min(source), t.max(source)));
                }
                endpoints.extend_from_slice(&targets);
                endpoints.extend(std::iter::repeat_n(source, m));
                let mut chosen = BTreeSet::new();
                while chosen.len() < m {
                    chosen.insert(endpoints[rng.random_range(0..endpoints.len())]);
                }
                targets = chosen.into_iter().collect();
            }
        }
        GenParams::Sw { n, k, p_rewire } => {
            let half = k / 2;
            let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
            for u in 0..n {
                for j in 1..=half {
                    let v = (u + j) % n;
                    adj[u].insert(v);
                    adj[v].insert(u);
                }
            }
            for j in 1..=half {
                for u in 0..n {
                    let v = (u + j) % n;
                    if rng.random::<f64>() >= p_rewire || !adj[u].contains(&v) {
                        continue;
                    }
                    if adj[u].len() >= n - 1 {
                        continue;
                    }
                    let w = loop {
                        let w = rng.random_range(0..n);
                        if w != u && !adj[u].contains(&w) {
                            break w;
                        }
                    };
                    adj[u].remove(&v);
                    adj[v].remove(&u);
                    adj[u].insert(w);
                    adj[w].insert(u);
                }
            }
            for (u, list) in adj.iter().enumerate() {
                edges.extend(list.iter().filter(|&&v| v > u).map(|&v| (u, v)));
            }
        }
        GenParams::Tree { .. } => {
            for child in 1..n {
                edges.insert(((child - 1) / 2, child));
            }
        }
    }
    Ok(Graph::from_edge_set(n, &edges))
}

/// Gives every node the same attribute value, drawn uniformly from `[0, 1)`.
pub fn assign_uniform_attribute(g: &Graph, seed: u64) -> Graph {
    let c: f64 = rng_from(seed).random();
    let mut out = g.clone();
    out.attrs = Some(vec![c; g.n()]);
    out
}

/// Number of nodes re-randomized for fraction `delta_omega`, rounding half up.
pub fn randomized_count(n: usize, delta_omega: f64) -> usize {
    ((delta_omega * n as f64) + 0.5).floor().min(n as f64) as usize
}

/// Redraws the attributes of `round(delta_omega * n)` nodes chosen uniformly
/// without replacement.
pub fn randomize_attributes(g: &Graph, delta_omega: f64, seed: u64) -> Result<Graph> {
    let attrs = g.attrs().ok_or(Error::MissingAttributes)?;
    check_prob("delta_omega", delta_omega)?;
    let count = randomized_count(g.n(), delta_omega);
    let mut rng = rng_from(seed);
    let mut fresh = attrs.to_vec();
    for v in index::sample(&mut rng, g.n(), count) {
        fresh[v] = rng.random();
    }
    let mut out = g.clone();
    out.attrs = Some(fresh);
    Ok(out)
}

/// One dataset entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub graph: Graph,
    pub params: GenParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub n_max: usize,
}

/// Inclusive sampling interval for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }
}

/// Per-parameter sampling intervals, keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges(pub std::collections::BTreeMap<String, Interval>);

impl ParamRanges {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, lo: f64, hi: f64) -> Self {
        self.0.insert(name.to_string(), Interval::new(lo, hi));
        self
    }

    pub fn get(&self, name: &str) -> Option<Interval> {
        self.0.get(name).copied()
    }

    /// The paper-scale ER setup: `n` in 1..=24 and `p` in [0, 1].
    pub fn er_default() -> Self {
        ParamRanges::new().with("n", 1.0, 24.0).with("p", 0.0, 1.0)
    }

    /// Default sampling ranges per family. BA and SW start high enough that
    /// every drawable `m` or `k` stays below `n`.
    pub fn family_default(family: Family) -> Self {
        match family {
            Family::Er => Self::er_default(),
            Family::Ba => ParamRanges::new().with("n", 4.0, 24.0).with("m", 1.0, 3.0),
            Family::Sw => ParamRanges::new()
                .with("n", 5.0, 24.0)
                .with("k", 2.0, 4.0)
                .with("p_rewire", 0.0, 1.0),
            Family::Tree => ParamRanges::new().with("depth", 0.0, 3.0),
        }
    }

    /// Intervals in the canonical parameter order of `family`.
    pub fn ordered(&self, family: Family) -> Result<Vec<Interval>> {
        family
            .params()
            .iter()
            .map(|spec| {
                self.get(spec.name).ok_or_else(|| {
                    Error::validation("ranges", format!("missing range for {family} parameter {}", spec.name))
                })
            })
            .collect()
    }

    /// Checks that every parameter combination drawable from these ranges
    /// satisfies the family bounds.
    pub fn validate(&self, family: Family) -> Result<()> {
        let ivs = self.ordered(family)?;
        for (spec, iv) in family.params().iter().zip(&ivs) {
            if !(iv.lo.is_finite() && iv.hi.is_finite()) || iv.lo > iv.hi {
                return Err(Error::validation(
                    spec.name,
                    format!("empty or non-finite range {}:{}", iv.lo, iv.hi),
                ));
            }
            match spec.kind {
                ParamKind::Probability => {
                    if iv.lo < 0.0 || iv.hi > 1.0 {
                        return Err(Error::validation(
                            spec.name,
                            format!("range {}:{} outside [0, 1]", iv.lo, iv.hi),
                        ));
                    }
                }
                ParamKind::Int | ParamKind::EvenInt => {
                    if int_choices(*iv, spec.kind).is_empty() {
                        return Err(Error::validation(
                            spec.name,
                            format!("range {}:{} contains no admissible integer", iv.lo, iv.hi),
                        ));
                    }
                }
            }
        }
        let lo = |i: usize| ivs[i].lo.ceil().max(0.0) as usize;
        let hi = |i: usize| ivs[i].hi.floor().max(0.0) as usize;
        // The tightest corner of each coupled constraint.
        let corner = match family {
            Family::Er => GenParams::Er { n: lo(0), p: ivs[1].lo },
            Family::Ba => GenParams::Ba { n: lo(0), m: hi(1) },
            Family::Sw => {
                let k_max = *int_choices(ivs[1], ParamKind::EvenInt).last().unwrap_or(&0);
                GenParams::Sw { n: lo(0), k: k_max, p_rewire: ivs[2].lo }
            }
            Family::Tree => GenParams::Tree { depth: hi(0) as u32 },
        };
        corner.validate()?;
        if family == Family::Ba {
            GenParams::Ba { n: lo(0), m: lo(1) }.validate()?;
        }
        if family == Family::Tree {
            GenParams::Tree { depth: lo(0) as u32 }.validate()?;
        }
        Ok(())
    }
}

fn int_choices(iv: Interval, kind: ParamKind) -> Vec<usize> {
    let lo = iv.lo.ceil().max(0.0) as usize;
    let hi = iv.hi.floor();
    if hi < 0.0 || (hi as usize) < lo {
        return Vec::new();
    }
    (lo..=hi as usize)
        .filter(|v| kind != ParamKind::EvenInt || v % 2 == 0)
        .collect()
}

/// Draws one parameter set uniformly and independently per parameter.
pub fn sample_params(family: Family, ranges: &ParamRanges, rng: &mut crate::rng::Rng) -> Result<GenParams> {
    let ivs = ranges.ordered(family)?;
    let values: Vec<f64> = family
        .params()
        .iter()
        .zip(&ivs)
        .map(|(spec, &iv)| match spec.kind {
            ParamKind::Probability => {
                if iv.lo == iv.hi {
                    iv.lo
                } else {
                    rng.random_range(iv.lo..=iv.hi)
                }
            }
            kind => {
                let choices = int_choices(iv, kind);
                choices[rng.random_range(0..choices.len())] as f64
            }
        })
        .collect();
    GenParams::from_values(family, &values)
}

/// Generates `count` records with parameters drawn from `ranges`. Record `i`
/// only depends on `(seed, i)`, so generation runs in parallel without
/// affecting the output.
pub fn gen_dataset(
    family: Family,
    ranges: &ParamRanges,
    count: usize,
    attributes: bool,
    seed: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::validation("count", "must be at least 1"));
    }
    ranges.validate(family)?;
    let records = (0..count)
        .into_par_iter()
        .map(|i| {
            let rec_seed = derive_seed(seed, i as u64);
            let params = sample_params(family, ranges, &mut substream(rec_seed, 0))?;
            let mut graph = gen_graph(&params, derive_seed(rec_seed, 1))?;
            if attributes {
                graph = assign_uniform_attribute(&graph, derive_seed(rec_seed, 2));
            }
            Ok(Record { graph, params })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(records))
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    family: Family,
    params: Map<String, Value>,
    n: usize,
    edges: Vec<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    attrs: Option<Vec<f64>>,
}

impl Record {
    pub fn to_json_line(&self) -> String {
        let line = RecordLine {
            family: self.params.family(),
            params: self.params.to_json_map(),
            n: self.graph.n(),
            edges: self.graph.edges().map(|(i, j)| [i, j]).collect(),
            attrs: self.graph.attrs.clone(),
        };
        serde_json::to_string(&line).expect("record serialization is infallible")
    }

    pub fn from_json_line(s: &str) -> Result<Record> {
        let line: RecordLine = serde_json::from_str(s)?;
        let params = GenParams::from_json_map(line.family, &line.params)?;
        let mut graph = Graph::from_edges(line.n, line.edges.iter().map(|e| (e[0], e[1])))?;
        if let Some(a) = line.attrs {
            graph = graph.with_attrs(a)?;
        }
        Ok(Record { graph, params })
    }
}

impl Dataset {
    pub fn new(records: Vec<Record>) -> Self {
        let n_max = records.iter().map(|r| r.graph.n()).max().unwrap_or(0);
        Dataset { records, n_max }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Family shared by all records, or `None` when mixed or empty.
    pub fn family(&self) -> Option<Family> {
        let first = self.records.first()?.params.family();
        self.records
            .iter()
            .all(|r| r.params.family() == first)
            .then_some(first)
    }

    /// Observed per-parameter `[min, max]` in canonical order.
    pub fn param_ranges(&self) -> Option<Vec<Interval>> {
        let family = self.family()?;
        let k = family.params().len();
        let mut out = vec![Interval::new(f64::INFINITY, f64::NEG_INFINITY); k];
        for r in &self.records {
            for (iv, v) in out.iter_mut().zip(r.params.values()) {
                iv.lo = iv.lo.min(v);
                iv.hi = iv.hi.max(v);
            }
        }
        Some(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for r in &self.records {
            writeln!(w, "{}", r.to_json_line()).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Dataset> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = Record::from_json_line(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        if records.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        Ok(Dataset::new(records))
    }
}
