//! Canonical node ordering and conversion between [`Graph`] and the
//! fixed-size padded representation consumed by the model.
//!
//! The ordering is a degree-based colour refinement in the spirit of BOSAM:
//! nodes are ranked by degree (descending), then by the sorted degrees of
//! their neighbours, and the ranking is refined with neighbour ranks until it
//! stabilises. Nodes that stay in the same refined class are ordered by their
//! original index, which is the only label-dependent part of the order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphgen::Graph;

/// Padding size matching the 1..=24 node range of the ER experiments.
pub const DEFAULT_N_MAX: usize = 24;

/// Refined class of every node. Class 0 sorts first. Two nodes share a
/// class iff refinement could not distinguish them.
pub fn refined_classes(g: &Graph) -> Vec<usize> {
    let n = g.n();
    // Round 0: rank by degree, highest first.
    let mut rank = dense_rank(&(0..n).map(|v| std::cmp::Reverse(g.degree(v))).collect::<Vec<_>>());
    let mut classes = count_classes(&rank);
    for _ in 0..n {
        // Lower rank means a higher-degree class, so an ascending list of
        // neighbour ranks compared lexicographically puts nodes with
        // higher-degree neighbourhoods first.
        let keys: Vec<(usize, Vec<usize>)> = (0..n)
            .map(|v| {
                let mut nb: Vec<usize> = g.neighbors(v).iter().map(|&u| rank[u]).collect();
                nb.sort_unstable();
                (rank[v], nb)
            })
            .collect();
        let next = dense_rank(&keys);
        let next_classes = count_classes(&next);
        rank = next;
        if next_classes == classes {
            break;
        }
        classes = next_classes;
    }
    rank
}

fn dense_rank<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let distinct: BTreeMap<K, usize> = keys
        .iter()
        .cloned()
        .map(|k| (k, 0))
        .collect::<BTreeMap<_, _>>()
        .into_keys()
        .enumerate()
        .map(|(i, k)| (k, i))
        .collect();
    keys.iter().map(|k| distinct[k]).collect()
}

fn count_classes(rank: &[usize]) -> usize {
    rank.iter().max().map_or(0, |m| m + 1)
}

/// Canonical order: `order[slot]` is the original node placed at `slot`.
pub fn bosam_order(g: &Graph) -> Vec<usize> {
    let classes = refined_classes(g);
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by_key(|&v| (classes[v], v));
    order
}

/// True when refinement separates every node, i.e. the canonical order does
/// not depend on the input labelling.
pub fn has_singleton_classes(g: &Graph) -> bool {
    count_classes(&refined_classes(g)) == g.n()
}

/// Padded model tensor. `adj` is row-major `n_max x n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedSample {
    pub n_max: usize,
    pub adj: Vec<f64>,
    pub mask: Vec<f64>,
    pub attrs: Vec<f64>,
}

impl EncodedSample {
    pub fn zeros(n_max: usize) -> Self {
        EncodedSample {
            n_max,
            adj: vec![0.0; n_max * n_max],
            mask: vec![0.0; n_max],
            attrs: vec![0.0; n_max],
        }
    }

    pub fn adj_at(&self, i: usize, j: usize) -> f64 {
        self.adj[i * self.n_max + j]
    }

    /// Number of upper-triangle entries, `n_max (n_max - 1) / 2`.
    pub fn upper_len(n_max: usize) -> usize {
        n_max * n_max.saturating_sub(1) / 2
    }

    /// Upper-triangle entries in row-major order `(0,1), (0,2), ..., (n-2,n-1)`.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.n_max;
        let mut out = Vec::with_capacity(Self::upper_len(n));
        for i in 0..n {
            for j in i + 1..n {
                out.push(self.adj[i * n + j]);
            }
        }
        out
    }

    /// Builds a symmetric zero-diagonal sample from upper-triangle values.
    pub fn from_upper(n_max: usize, upper: &[f64], mask: Vec<f64>, attrs: Vec<f64>) -> Self {
        assert_eq!(upper.len(), Self::upper_len(n_max));
        let mut adj = vec![0.0; n_max * n_max];
        let mut it = upper.iter();
        for i in 0..n_max {
            for j in i + 1..n_max {
                let v = *it.next().unwrap();
                adj[i * n_max + j] = v;
                adj[j * n_max + i] = v;
            }
        }
        EncodedSample { n_max, adj, mask, attrs }
    }

    /// Number of leading slots marked as present.
    pub fn node_count(&self) -> usize {
        self.mask.iter().take_while(|&&m| m > 0.5).count()
    }
}

/// Relabels `g` into canonical order and pads it to `n_max` slots.
pub fn to_padded(g: &Graph, n_max: usize) -> Result<EncodedSample> {
    let n = g.n();
    if n > n_max {
        return Err(Error::Capacity { n, n_max });
    }
    let order = bosam_order(g);
    let mut slot = vec![0; n];
    for (s, &v) in order.iter().enumerate() {
        slot[v] = s;
    }
    let mut out = EncodedSample::zeros(n_max);
    for (i, j) in g.edges() {
        let (a, b) = (slot[i], slot[j]);
        out.adj[a * n_max + b] = 1.0;
        out.adj[b * n_max + a] = 1.0;
    }
    for s in 0..n {
        out.mask[s] = 1.0;
    }
    if let Some(attrs) = g.attrs() {
        for (v, &a) in attrs.iter().enumerate() {
            out.attrs[slot[v]] = a;
        }
    }
    Ok(out)
}

/// Turns a (probabilistic) sample back into a graph. The node count is the
/// number of mask entries at or above `threshold`; those nodes are taken to
/// be the leading slots, as in canonical samples. Edges are read from the
/// upper triangle, so the output is symmetric whatever the input.
pub fn threshold_decode(sample: &EncodedSample, threshold: f64) -> Result<Graph> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::validation(
            "threshold",
            format!("{threshold} outside (0, 1)"),
        ));
    }
    let n = sample.mask.iter().filter(|&&m| m >= threshold).count();
    let nm = sample.n_max;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if sample.adj[i * nm + j] >= threshold {
                edges.push((i, j));
            }
        }
    }
    let g = Graph::from_edges(n, edges)?;
    let attrs: Vec<f64> = sample.attrs[..n].iter().map(|a| a.clamp(0.0, 1.0)).collect();
    if attrs.iter().any(|&a| a != 0.0) {
        g.with_attrs(attrs)
    } else {
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::{gen_graph, GenParams};

    fn star(leaves: usize) -> Graph {
        Graph::from_edges(leaves + 1, (1..=leaves).map(|l| (0, l))).unwrap()
    }

    #[test]
    fn two_node_padding() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let s = to_padded(&g, 4).unwrap();
        assert_eq!(s.mask, vec![1.0, 1.0, 0.0, 0.0]);
        let ones: Vec<(usize, usize)> = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|&(i, j)| s.adj_at(i, j) == 1.0)
            .collect();
        assert_eq!(ones, vec![(0, 1), (1, 0)]);
        assert_eq!(s.attrs, vec![0.0; 4]);
    }

    #[test]
    fn empty_graph_padding() {
        let s = to_padded(&Graph::empty(0), 4).unwrap();
        assert_eq!(s, EncodedSample::zeros(4));
    }

    #[test]
    fn capacity_error() {
        let err = to_padded(&Graph::empty(5), 4).unwrap_err();
        assert!(matches!(err, Error::Capacity { n: 5, n_max: 4 }));
    }

    #[test]
    fn star_and_path_centres_first() {
        // Centre is node 2 in the input labelling.
        let s = star(4).permute(&[2, 0, 1, 3, 4]);
        assert_eq!(bosam_order(&s)[0], 2);
        let p3 = Graph::from_edges(3, [(0, 2), (2, 1)]).unwrap();
        assert_eq!(bosam_order(&p3)[0], 2);
    }

    #[test]
    fn neighbour_degrees_break_degree_ties() {
        // Path 0-1-2-3-4 plus a pendant 5 on node 3. Among the degree-2 nodes,
        // node 2 touches the degree-3 node and sorts first.
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (3, 5)]).unwrap();
        let order = bosam_order(&g);
        assert_eq!(order[0], 3);
        assert_eq!(order[1], 2);
        assert_eq!(order[2], 1);
    }

    #[test]
    fn attrs_follow_nodes() {
        let g = star(2).with_attrs(vec![0.9, 0.1, 0.2]).unwrap().permute(&[1, 0, 2]);
        let s = to_padded(&g, 4).unwrap();
        assert_eq!(s.attrs[0], 0.9);
        assert_eq!(s.mask[0], 1.0);
    }

    #[test]
    fn threshold_rules() {
        let mut s = EncodedSample::zeros(4);
        s.adj.iter_mut().for_each(|a| *a = 0.4);
        s.mask = vec![1.0; 4];
        assert_eq!(threshold_decode(&s, 0.5).unwrap().edge_count(), 0);

        s.mask = vec![0.9, 0.8, 0.2, 0.1];
        assert_eq!(threshold_decode(&s, 0.5).unwrap().n(), 2);

        assert!(threshold_decode(&s, 0.0).is_err());
        assert!(threshold_decode(&s, 1.0).is_err());
    }

    #[test]
    fn binary_round_trip_preserves_counts() {
        for seed in 0..50 {
            let g = gen_graph(&GenParams::Er { n: 9, p: 0.4 }, seed).unwrap();
            let back = threshold_decode(&to_padded(&g, 12).unwrap(), 0.5).unwrap();
            assert_eq!(back.n(), g.n());
            assert_eq!(back.edge_count(), g.edge_count());
            let mut a = g.degrees();
            let mut b = back.degrees();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn upper_triangle_round_trip() {
        let g = gen_graph(&GenParams::Er { n: 6, p: 0.5 }, 3).unwrap();
        let s = to_padded(&g, 6).unwrap();
        let rebuilt = EncodedSample::from_upper(6, &s.upper_triangle(), s.mask.clone(), s.attrs.clone());
        assert_eq!(rebuilt, s);
    }
}
