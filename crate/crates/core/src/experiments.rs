//! Experiment drivers: latent traversals, encode sweeps, attribute
//! randomization sweeps and sample-vs-population topology comparison.
//!
//! All drivers read frozen weights and parallelize over records. Results do
//! not depend on the thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canonical::{threshold_decode, to_padded, EncodedSample};
use crate::error::{Error, Result};
use crate::graphgen::{randomize_attributes, Dataset, Graph};
use crate::metrics::{graph_stats, mig, mig_attr, GraphStats, MigReport};
use crate::model::{GraphVae, LatentVector};
use crate::rng::derive_seed;

/// Evenly spaced decodes along one latent axis, other coordinates held at
/// `base_z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalSpec {
    pub axis: usize,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    pub base_z: Vec<f64>,
    pub threshold: f64,
}

impl TraversalSpec {
    /// Range `[-2, 2]`, 7 steps, anchored at the prior mean.
    pub fn new(axis: usize, j_latent: usize) -> Self {
        TraversalSpec {
            axis,
            lo: -2.0,
            hi: 2.0,
            steps: 7,
            base_z: vec![0.0; j_latent],
            threshold: 0.5,
        }
    }

    pub fn validate(&self, j_latent: usize) -> Result<()> {
        if self.axis >= j_latent {
            return Err(Error::validation(
                "axis",
                format!("{} is out of range for {j_latent} latents", self.axis),
            ));
        }
        if self.base_z.len() != j_latent {
            return Err(Error::Shape {
                op: "base_z",
                left: vec![j_latent],
                right: vec![self.base_z.len()],
            });
        }
        if self.lo.is_nan() || self.hi.is_nan() || self.lo >= self.hi {
            return Err(Error::validation("range", format!("need lo < hi, got {}:{}", self.lo, self.hi)));
        }
        if self.steps < 1 {
            return Err(Error::validation("steps", "must be at least 1"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::validation("threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Axis coordinates visited. A single step sits at `lo`.
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| if i + 1 == self.steps { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraversalPoint {
    pub z: Vec<f64>,
    pub graph: Graph,
    pub probs: EncodedSample,
}

fn decode_point(model: &GraphVae, z: Vec<f64>, threshold: f64) -> Result<TraversalPoint> {
    let probs = model.decode(&LatentVector { z: z.clone() })?;
    let graph = threshold_decode(&probs, threshold)?;
    Ok(TraversalPoint { z, graph, probs })
}

pub fn traverse(model: &GraphVae, spec: &TraversalSpec) -> Result<Vec<TraversalPoint>> {
    spec.validate(model.config.j_latent)?;
    spec.values()
        .into_par_iter()
        .map(|x| {
            let mut z = spec.base_z.clone();
            z[spec.axis] = x;
            decode_point(model, z, spec.threshold)
        })
        .collect()
}

/// Cross product of two traversals: `grid[r][c]` varies `rows.axis` by row
/// and `cols.axis` by column. Anchor and threshold come from `rows`.
pub fn traverse_grid(
    model: &GraphVae,
    rows: &TraversalSpec,
    cols: &TraversalSpec,
) -> Result<Vec<Vec<TraversalPoint>>> {
    let j = model.config.j_latent;
    rows.validate(j)?;
    cols.validate(j)?;
    if rows.axis == cols.axis {
        return Err(Error::validation("axis", "grid axes must differ"));
    }
    let cv = cols.values();
    rows.values()
        .into_iter()
        .map(|r| {
            cv.par_iter()
                .map(|&c| {
                    let mut z = rows.base_z.clone();
                    z[rows.axis] = r;
                    z[cols.axis] = c;
                    decode_point(model, z, rows.threshold)
                })
                .collect()
        })
        .collect()
}

fn point_json(p: &TraversalPoint) -> serde_json::Value {
    let edges: Vec<[usize; 2]> = p.graph.edges().map(|(i, j)| [i, j]).collect();
    let mut v = serde_json::json!({
        "z": p.z,
        "n": p.graph.n(),
        "edges": edges,
        "mask_probs": p.probs.mask,
    });
    if let Some(a) = p.graph.attrs() {
        v["attrs"] = serde_json::json!(a);
    }
    v
}

const CELL_PX: usize = 4;
const GAP_PX: usize = 8;

/// SVG contact sheet: one adjacency-probability heatmap per cell, in slot
/// order, darker for higher edge probability.
pub fn contact_sheet_svg(grid: &[Vec<TraversalPoint>]) -> String {
    let n = grid
        .first()
        .and_then(|r| r.first())
        .map_or(0, |p| p.probs.n_max);
    let cols = grid.iter().map(Vec::len).max().unwrap_or(0);
    let side = n * CELL_PX;
    let w = cols * (side + GAP_PX) + GAP_PX;
    let h = grid.len() * (side + GAP_PX) + GAP_PX;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (r, row) in grid.iter().enumerate() {
        for (c, p) in row.iter().enumerate() {
            let (ox, oy) = (GAP_PX + c * (side + GAP_PX), GAP_PX + r * (side + GAP_PX));
            let z: Vec<String> = p.z.iter().map(|x| format!("{x:.3}")).collect();
            let _ = writeln!(s, r#"<g transform="translate({ox},{oy})"><title>z = [{}]</title>"#, z.join(", "));
            let _ = writeln!(s, r#"<rect width="{side}" height="{side}" fill="none" stroke="gray"/>"#);
            for i in 0..n {
                for k in 0..n {
                    let shade = 255 - (p.probs.adj_at(i, k).clamp(0.0, 1.0) * 255.0).round() as u8;
                    if shade == 255 {
                        continue;
                    }
                    let _ = writeln!(
                        s,
                        r#"<rect x="{}" y="{}" width="{CELL_PX}" height="{CELL_PX}" fill="rgb({shade},{shade},{shade})"/>"#,
                        k * CELL_PX,
                        i * CELL_PX
                    );
                }
            }
            s.push_str("</g>\n");
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `cell_{row}_{col}.json` per point, `contact_sheet.svg` and
/// `traversal.csv` (row, col, z..., n, edges) into `dir`.
pub fn write_traversal(dir: &Path, grid: &[Vec<TraversalPoint>]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let j = grid.first().and_then(|r| r.first()).map_or(0, |p| p.z.len());
    let mut csv = String::from("row,col");
    for k in 0..j {
        let _ = write!(csv, ",z{k}");
    }
    csv.push_str(",n,edges\n");
    for (r, row) in grid.iter().enumerate() {
        for (c, p) in row.iter().enumerate() {
            let path = dir.join(format!("cell_{r}_{c}.json"));
            let text = serde_json::to_string_pretty(&point_json(p))?;
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            let _ = write!(csv, "{r},{c}");
            for x in &p.z {
                let _ = write!(csv, ",{x}");
            }
            let _ = writeln!(csv, ",{},{}", p.graph.n(), p.graph.edge_count());
        }
    }
    let svg = dir.join("contact_sheet.svg");
    fs::write(&svg, contact_sheet_svg(grid)).map_err(|e| Error::io(&svg, e))?;
    let csv_path = dir.join("traversal.csv");
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Posterior means, one row per record.
    pub z_matrix: Vec<Vec<f64>>,
    /// True generative parameters, one row per record.
    pub v_matrix: Vec<Vec<f64>>,
    pub mig: MigReport,
}

impl SweepResult {
    pub fn to_csv(&self, factor_names: &[String]) -> String {
        let j = self.z_matrix.first().map_or(0, Vec::len);
        let mut out = String::new();
        let mut head: Vec<String> = (0..j).map(|k| format!("z{k}")).collect();
        head.extend(factor_names.iter().cloned());
        let _ = writeln!(out, "{}", head.join(","));
        for (z, v) in self.z_matrix.iter().zip(&self.v_matrix) {
            let row: Vec<String> = z.iter().chain(v).map(|x| x.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// Posterior means of every record, canonicalized at the model's `n_max`.
pub fn encode_dataset(model: &GraphVae, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    let graphs: Vec<&Graph> = dataset.records.iter().map(|r| &r.graph).collect();
    encode_graphs(model, &graphs)
}

fn encode_graphs(model: &GraphVae, graphs: &[&Graph]) -> Result<Vec<Vec<f64>>> {
    let n_max = model.config.n_max;
    let xs = graphs
        .par_iter()
        .map(|g| to_padded(g, n_max))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&EncodedSample> = xs.iter().collect();
    Ok(model.encode_batch(&refs)?.into_iter().map(|d| d.mu).collect())
}

pub fn encode_sweep(model: &GraphVae, dataset: &Dataset, bins: usize) -> Result<SweepResult> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let z_matrix = encode_dataset(model, dataset)?;
    let v_matrix: Vec<Vec<f64>> = dataset.records.iter().map(|r| r.params.values()).collect();
    let report = mig(&z_matrix, &v_matrix, bins)?;
    Ok(SweepResult {
        z_matrix,
        v_matrix,
        mig: report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationResult {
    pub delta_omega: Vec<f64>,
    /// `|mu(randomized) - mu(original)|` per latent, aligned with `delta_omega`.
    pub delta_z_abs: Vec<Vec<f64>>,
    pub score: f64,
    pub j_max: usize,
    pub mi: Vec<f64>,
}

impl RandomizationResult {
    pub fn to_csv(&self) -> String {
        let j = self.delta_z_abs.first().map_or(0, Vec::len);
        let mut out = String::from("delta_omega");
        for k in 0..j {
            let _ = write!(out, ",dz{k}");
        }
        out.push('\n');
        for (w, dz) in self.delta_omega.iter().zip(&self.delta_z_abs) {
            let _ = write!(out, "{w}");
            for x in dz {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }
}

/// Default number of randomization draws per (graph, level).
pub const DEFAULT_REPEATS: usize = 5;

/// Encodes every graph before and after re-randomizing a fraction of its
/// node attributes, then scores which latent tracks that fraction.
///
/// Rows are ordered by record, then level, then repeat. Each draw is seeded
/// from `(seed, record, level, repeat)` alone.
pub fn randomization_sweep(
    model: &GraphVae,
    dataset: &Dataset,
    omega_grid: &[f64],
    repeats: usize,
    seed: u64,
    bins: usize,
) -> Result<RandomizationResult> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if repeats < 1 {
        return Err(Error::validation("repeats", "must be at least 1"));
    }
    for &w in omega_grid {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::validation("omega_grid", format!("level {w} is outside [0, 1]")));
        }
    }
    let mut levels = omega_grid.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() < 2 {
        return Err(Error::validation("omega_grid", "needs at least 2 distinct levels"));
    }
    if dataset.records.iter().any(|r| r.graph.attrs().is_none()) {
        return Err(Error::MissingAttributes);
    }

    let base = encode_dataset(model, dataset)?;
    let per_record = omega_grid.len() * repeats;
    let randomized = dataset
        .records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let rs = derive_seed(seed, i as u64);
            (0..per_record)
                .map(|k| randomize_attributes(&r.graph, omega_grid[k / repeats], derive_seed(rs, k as u64)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    let refs: Vec<&Graph> = randomized.iter().collect();
    let shifted = encode_graphs(model, &refs)?;

    let mut delta_omega = Vec::with_capacity(shifted.len());
    let mut delta_z_abs = Vec::with_capacity(shifted.len());
    for (row, z) in shifted.iter().enumerate() {
        let (i, k) = (row / per_record, row % per_record);
        delta_omega.push(omega_grid[k / repeats]);
        delta_z_abs.push(z.iter().zip(&base[i]).map(|(a, b)| (a - b).abs()).collect());
    }
    let am = mig_attr(&delta_omega, &delta_z_abs, bins)?;
    Ok(RandomizationResult {
        delta_omega,
        delta_z_abs,
        score: am.score,
        j_max: am.j_max,
        mi: am.mi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    MeanStd { mean, std: var.sqrt() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleComparison {
    pub population: GraphStats,
    pub avg_degree: MeanStd,
    pub clustering_coefficient: MeanStd,
    pub degree_assortativity: MeanStd,
    /// Population degree histogram padded to the common support.
    pub population_degree_histogram: Vec<f64>,
    /// Per-degree mean and spread of the sample histograms on the same support.
    pub sample_degree_histogram: Vec<MeanStd>,
}

impl SampleComparison {
    /// Sample mean minus population value for average degree, clustering
    /// and assortativity.
    pub fn differences(&self) -> [f64; 3] {
        [
            self.avg_degree.mean - self.population.avg_degree,
            self.clustering_coefficient.mean - self.population.clustering_coefficient,
            self.degree_assortativity.mean - self.population.degree_assortativity,
        ]
    }
}

/// Topology statistics of `full` next to the mean and spread over `samples`.
pub fn sample_vs_population_stats(full: &Graph, samples: &[Graph]) -> Result<SampleComparison> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let population = graph_stats(full)?;
    let stats = samples.par_iter().map(graph_stats).collect::<Result<Vec<_>>>()?;
    let support = stats
        .iter()
        .map(|s| s.degree_histogram.len())
        .chain([population.degree_histogram.len()])
        .max()
        .unwrap_or(0);
    let pad = |h: &[f64]| {
        let mut v = h.to_vec();
        v.resize(support, 0.0);
        v
    };
    let padded: Vec<Vec<f64>> = stats.iter().map(|s| pad(&s.degree_histogram)).collect();
    let sample_degree_histogram = (0..support)
        .map(|d| mean_std(&padded.iter().map(|h| h[d]).collect::<Vec<_>>()))
        .collect();
    let col = |f: fn(&GraphStats) -> f64| mean_std(&stats.iter().map(f).collect::<Vec<_>>());
    Ok(SampleComparison {
        avg_degree: col(|s| s.avg_degree),
        clustering_coefficient: col(|s| s.clustering_coefficient),
        degree_assortativity: col(|s| s.degree_assortativity),
        population_degree_histogram: pad(&population.degree_histogram),
        sample_degree_histogram,
        population,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn values_are_evenly_spaced() {
        let mut s = TraversalSpec::new(0, 4);
        s.steps = 5;
        assert_eq!(s.values(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        s.steps = 1;
        assert_eq!(s.values(), vec![-2.0]);
    }

    #[test]
    fn rejects_bad_specs() {
        let s = TraversalSpec::new(4, 4);
        assert!(s.validate(4).is_err());
        let mut s = TraversalSpec::new(0, 4);
        s.lo = 2.0;
        assert!(s.validate(4).is_err());
    }

    #[test]
    fn traverse_varies_only_the_axis() {
        let model = GraphVae::new(ModelConfig::default(), 3).unwrap();
        let mut s = TraversalSpec::new(2, 4);
        s.base_z = vec![0.5, -0.5, 0.0, 1.0];
        let pts = traverse(&model, &s).unwrap();
        assert_eq!(pts.len(), s.steps);
        for (p, x) in pts.iter().zip(s.values()) {
            assert_eq!(p.z, vec![0.5, -0.5, x, 1.0]);
        }
        assert_eq!(pts, traverse(&model, &s).unwrap());
    }

    #[test]
    fn grid_is_a_cross_product() {
        let model = GraphVae::new(ModelConfig::default(), 3).unwrap();
        let mut a = TraversalSpec::new(0, 4);
        a.steps = 3;
        let mut b = TraversalSpec::new(1, 4);
        b.steps = 2;
        let g = traverse_grid(&model, &a, &b).unwrap();
        assert_eq!(g.len(), 3);
        assert!(g.iter().all(|r| r.len() == 2));
        assert_eq!(g[2][0].z, vec![2.0, -2.0, 0.0, 0.0]);
        assert!(traverse_grid(&model, &a, &a).is_err());
    }

    #[test]
    fn identical_samples_give_zero_differences() {
        let g = Graph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)]).unwrap();
        let cmp = sample_vs_population_stats(&g, std::slice::from_ref(&g)).unwrap();
        assert_eq!(cmp.differences(), [0.0; 3]);
        assert!(cmp.sample_degree_histogram.iter().all(|m| m.std == 0.0));
    }
}
