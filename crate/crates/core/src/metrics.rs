//! Histogram-based information measures, the Mutual Information Gap and
//! topology statistics. All information quantities are in nats.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphgen::Graph;

/// Default bin count for continuous columns.
pub const DEFAULT_BINS: usize = 20;

/// Uniform-width binning over `[min, max]`. Constant input maps to label 0.
/// Integer-valued input with at most `bins` distinct values gets one label
/// per distinct value (in ascending order).
pub fn discretize(values: &[f64], bins: usize) -> Vec<usize> {
    let bins = bins.max(2);
    if values.is_empty() {
        return Vec::new();
    }
    if values.iter().all(|v| v.fract() == 0.0) {
        let mut distinct: Vec<f64> = values.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() <= bins {
            return values
                .iter()
                .map(|v| distinct.binary_search_by(|d| d.total_cmp(v)).expect("present"))
                .collect();
        }
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi <= lo {
        return vec![0; values.len()];
    }
    let width = (hi - lo) / bins as f64;
    values
        .iter()
        .map(|&v| (((v - lo) / width).floor() as usize).min(bins - 1))
        .collect()
}

/// Labels for a generative factor: integer-valued factors keep one label per
/// distinct value regardless of `bins`; others are binned uniformly.
pub fn discretize_factor(values: &[f64], bins: usize) -> Vec<usize> {
    if values.iter().all(|v| v.fract() == 0.0) {
        let mut distinct = values.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        return discretize(values, bins.max(distinct.len()));
    }
    discretize(values, bins)
}

fn counts(labels: &[usize]) -> HashMap<usize, usize> {
    let mut c = HashMap::new();
    for &l in labels {
        *c.entry(l).or_insert(0) += 1;
    }
    c
}

/// Plug-in Shannon entropy of the empirical label distribution.
pub fn entropy(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let mut c: Vec<usize> = counts(labels).into_values().collect();
    c.sort_unstable();
    -c.iter()
        .map(|&k| {
            let p = k as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Plug-in mutual information of two label sequences.
pub fn mutual_information(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Metric(format!(
            "label sequences differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Empty("label sequence"));
    }
    let n = a.len() as f64;
    let ca = counts(a);
    let cb = counts(b);
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0) += 1;
    }
    // Summing in a canonical cell order makes MI(a, b) == MI(b, a) exactly.
    let mut cells: Vec<(usize, usize, usize)> = joint
        .into_iter()
        .map(|((x, y), k)| {
            let (ka, kb) = (ca[&x], cb[&y]);
            (k, ka.min(kb), ka.max(kb))
        })
        .collect();
    cells.sort_unstable();
    let mi: f64 = cells
        .iter()
        .map(|&(k, c1, c2)| {
            let pxy = k as f64 / n;
            pxy * (k as f64 * n / (c1 as f64 * c2 as f64)).ln()
        })
        .sum();
    Ok(mi.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigReport {
    /// `mi[k][j] = MI(v_k; z_j)`.
    pub mi: Vec<Vec<f64>>,
    pub entropy: Vec<f64>,
    /// `(MI(top) - MI(second)) / H(v_k)`; `None` for factors with zero entropy.
    pub per_factor_gap: Vec<Option<f64>>,
    /// Mean gap over factors with positive entropy.
    pub score: f64,
    pub j_max: Vec<usize>,
    /// Factors excluded from the score because their entropy is zero.
    pub excluded: Vec<usize>,
}

impl MigReport {
    /// Flat CSV of the MI matrix with one row per factor.
    pub fn mi_csv(&self, factor_names: &[String]) -> String {
        let j = self.mi.first().map_or(0, Vec::len);
        let mut out = String::from("factor");
        for c in 0..j {
            let _ = write!(out, ",z{c}");
        }
        out.push_str(",entropy,gap\n");
        for (k, row) in self.mi.iter().enumerate() {
            let name = factor_names.get(k).cloned().unwrap_or_else(|| format!("v{k}"));
            out.push_str(&name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            let gap = self.per_factor_gap[k].map_or(String::new(), |g| g.to_string());
            let _ = writeln!(out, ",{},{gap}", self.entropy[k]);
        }
        out
    }
}

fn columns(rows: &[Vec<f64>], what: &str) -> Result<Vec<Vec<f64>>> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Metric(format!("ragged {what} matrix")));
    }
    Ok((0..width).map(|c| rows.iter().map(|r| r[c]).collect()).collect())
}

/// Indices and values of the largest and second-largest entries.
fn top_two(row: &[f64]) -> (usize, f64, f64) {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    let second = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != best)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    (best, row[best], second)
}

/// Mutual Information Gap between latent columns `z` (`N x J`) and factor
/// columns `v` (`N x K`).
pub fn mig(z: &[Vec<f64>], v: &[Vec<f64>], bins: usize) -> Result<MigReport> {
    if z.len() != v.len() {
        return Err(Error::Metric(format!(
            "latent and factor row counts differ ({} vs {})",
            z.len(),
            v.len()
        )));
    }
    if z.len() < 2 {
        return Err(Error::Metric("MIG requires at least 2 samples".into()));
    }
    let zc = columns(z, "latent")?;
    if zc.len() < 2 {
        return Err(Error::Metric("gap requires >= 2 latents".into()));
    }
    let vc = columns(v, "factor")?;
    let z_labels: Vec<Vec<usize>> = zc.iter().map(|c| discretize(c, bins)).collect();
    let mut report = MigReport {
        mi: Vec::new(),
        entropy: Vec::new(),
        per_factor_gap: Vec::new(),
        score: 0.0,
        j_max: Vec::new(),
        excluded: Vec::new(),
    };
    let mut gaps = Vec::new();
    for (k, col) in vc.iter().enumerate() {
        let labels = discretize_factor(col, bins);
        let h = entropy(&labels);
        let row = z_labels
            .iter()
            .map(|zl| mutual_information(&labels, zl))
            .collect::<Result<Vec<_>>>()?;
        let (best, top, second) = top_two(&row);
        let gap = if h > 0.0 {
            let g = ((top - second) / h).clamp(0.0, 1.0);
            gaps.push(g);
            Some(g)
        } else {
            report.excluded.push(k);
            None
        };
        report.mi.push(row);
        report.entropy.push(h);
        report.per_factor_gap.push(gap);
        report.j_max.push(best);
    }
    report.score = if gaps.is_empty() {
        0.0
    } else {
        gaps.iter().sum::<f64>() / gaps.len() as f64
    };
    Ok(report)
}

/// Attribute-randomization MIG: the single-factor gap of `delta_omega`
/// against `|Δz|` columns, normalized by `H(ΔΩ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrMig {
    pub score: f64,
    pub j_max: usize,
    pub mi: Vec<f64>,
    pub entropy: f64,
}

pub fn mig_attr(delta_omega: &[f64], delta_z_abs: &[Vec<f64>], bins: usize) -> Result<AttrMig> {
    if delta_omega.len() != delta_z_abs.len() {
        return Err(Error::Metric(format!(
            "row counts differ ({} vs {})",
            delta_omega.len(),
            delta_z_abs.len()
        )));
    }
    if delta_omega.len() < 2 {
        return Err(Error::Metric("MIG requires at least 2 samples".into()));
    }
    let zc = columns(delta_z_abs, "latent shift")?;
    if zc.len() < 2 {
        return Err(Error::Metric("gap requires >= 2 latents".into()));
    }
    let labels = discretize_factor(delta_omega, bins);
    let h = entropy(&labels);
    if h <= 0.0 {
        return Err(Error::Metric(
            "randomization degree has zero entropy (single level)".into(),
        ));
    }
    let mi = zc
        .iter()
        .map(|c| mutual_information(&labels, &discretize(c, bins)))
        .collect::<Result<Vec<_>>>()?;
    let (j_max, top, second) = top_two(&mi);
    Ok(AttrMig {
        score: ((top - second) / h).clamp(0.0, 1.0),
        j_max,
        mi,
        entropy: h,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    /// `degree_histogram[d]` is the fraction of nodes with degree `d`.
    pub degree_histogram: Vec<f64>,
    pub avg_degree: f64,
    pub clustering_coefficient: f64,
    pub degree_assortativity: f64,
}

pub fn graph_stats(g: &Graph) -> Result<GraphStats> {
    let n = g.n();
    if n == 0 {
        return Err(Error::Empty("graph"));
    }
    let deg = g.degrees();
    let max_deg = deg.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0.0; max_deg + 1];
    for &d in &deg {
        hist[d] += 1.0;
    }
    hist.iter_mut().for_each(|h| *h /= n as f64);
    let avg_degree = deg.iter().sum::<usize>() as f64 / n as f64;

    let mut clustering = 0.0;
    for v in 0..n {
        let nb = g.neighbors(v);
        let d = nb.len();
        if d < 2 {
            continue;
        }
        let mut tri = 0usize;
        for (a, &x) in nb.iter().enumerate() {
            for &y in &nb[a + 1..] {
                if g.has_edge(x, y) {
                    tri += 1;
                }
            }
        }
        clustering += tri as f64 / (d * (d - 1) / 2) as f64;
    }
    clustering /= n as f64;

    let mut xs = Vec::with_capacity(2 * g.edge_count());
    let mut ys = Vec::with_capacity(2 * g.edge_count());
    for (i, j) in g.edges() {
        xs.extend([deg[i] as f64, deg[j] as f64]);
        ys.extend([deg[j] as f64, deg[i] as f64]);
    }
    let degree_assortativity = pearson(&xs, &ys).unwrap_or(0.0);
    Ok(GraphStats {
        degree_histogram: hist,
        avg_degree,
        clustering_coefficient: clustering,
        degree_assortativity,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Metric(format!("lengths differ ({} vs {})", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::Metric("pearson requires at least 2 points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Metric("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
