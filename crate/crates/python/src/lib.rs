//! Python bindings: graphs and generators, the padded encoding, MI/MIG, and
//! training, loading and querying models.

use std::collections::HashMap;
use std::path::PathBuf;

use latentgraph::canonical::to_padded as core_to_padded;
use latentgraph::canonical::threshold_decode;
use latentgraph::experiments::encode_sweep;
use latentgraph::graphgen::{self, Family, GenParams, ParamRanges};
use latentgraph::metrics::{self, MigReport};
use latentgraph::model::{GraphVae, LatentVector, ModelConfig};
use latentgraph::training::{self, TrainConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: latentgraph::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn family(name: &str) -> PyResult<Family> {
    name.parse().map_err(err)
}

fn params_dict<'py>(py: Python<'py>, p: &GenParams) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (name, v) in p.family().param_names().into_iter().zip(p.values()) {
        d.set_item(name, v)?;
    }
    Ok(d)
}

#[pyclass(name = "Graph", module = "latentgraph_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: graphgen::Graph,
}

#[pymethods]
impl PyGraph {
    #[new]
    #[pyo3(signature = (n, edges, attrs=None))]
    fn new(n: usize, edges: Vec<(usize, usize)>, attrs: Option<Vec<f64>>) -> PyResult<Self> {
        let g = graphgen::Graph::from_edges(n, edges).map_err(err)?;
        let g = match attrs {
            Some(a) => g.with_attrs(a).map_err(err)?,
            None => g,
        };
        Ok(PyGraph { inner: g })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn attrs(&self) -> Option<Vec<f64>> {
        self.inner.attrs().map(<[f64]>::to_vec)
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().collect()
    }

    fn degrees(&self) -> Vec<usize> {
        self.inner.degrees()
    }

    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    /// Average degree, clustering coefficient, assortativity and degree histogram.
    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = metrics::graph_stats(&self.inner).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("avg_degree", s.avg_degree)?;
        d.set_item("clustering_coefficient", s.clustering_coefficient)?;
        d.set_item("degree_assortativity", s.degree_assortativity)?;
        d.set_item("degree_histogram", s.degree_histogram)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.inner.n(), self.inner.edge_count())
    }
}

#[pyclass(name = "Dataset", module = "latentgraph_py", frozen)]
struct PyDataset {
    inner: graphgen::Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn read_jsonl(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: graphgen::Dataset::read_jsonl(&path).map_err(err)?,
        })
    }

    fn write_jsonl(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_jsonl(&path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(graph, parameters)` of record `i`.
    fn __getitem__<'py>(&self, py: Python<'py>, i: usize) -> PyResult<(PyGraph, Bound<'py, PyDict>)> {
        let r = self
            .inner
            .records
            .get(i)
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(i))?;
        Ok((PyGraph { inner: r.graph.clone() }, params_dict(py, &r.params)?))
    }

    #[getter]
    fn family(&self) -> Option<&'static str> {
        self.inner.family().map(Family::name)
    }

    /// True parameter vectors in the family's parameter order.
    fn params(&self) -> Vec<Vec<f64>> {
        self.inner.records.iter().map(|r| r.params.values()).collect()
    }
}

/// One graph from `family` ("er", "ba", "sw", "tree") with the given parameters.
#[pyfunction]
#[pyo3(signature = (family_name, params, seed, attributes=false))]
fn gen_graph(family_name: &str, params: HashMap<String, f64>, seed: u64, attributes: bool) -> PyResult<PyGraph> {
    let fam = family(family_name)?;
    let values = fam
        .param_names()
        .into_iter()
        .map(|k| {
            params
                .get(k)
                .copied()
                .ok_or_else(|| PyValueError::new_err(format!("missing parameter {k}")))
        })
        .collect::<PyResult<Vec<f64>>>()?;
    let p = GenParams::from_values(fam, &values).map_err(err)?;
    let g = graphgen::gen_graph(&p, seed).map_err(err)?;
    let g = if attributes {
        graphgen::assign_uniform_attribute(&g, seed)
    } else {
        g
    };
    Ok(PyGraph { inner: g })
}

/// `count` graphs with parameters drawn uniformly from `ranges`
/// (`{"n": (1, 24), ...}`; family defaults when omitted).
#[pyfunction]
#[pyo3(signature = (family_name, count, seed, ranges=None, attributes=false))]
fn gen_dataset(
    family_name: &str,
    count: usize,
    seed: u64,
    ranges: Option<HashMap<String, (f64, f64)>>,
    attributes: bool,
) -> PyResult<PyDataset> {
    let fam = family(family_name)?;
    let mut r = ParamRanges::family_default(fam);
    for (k, (lo, hi)) in ranges.unwrap_or_default() {
        r = r.with(&k, lo, hi);
    }
    let d = graphgen::gen_dataset(fam, &r, count, attributes, seed).map_err(err)?;
    Ok(PyDataset { inner: d })
}

/// Canonically ordered padded encoding: `{"adj": [[..]], "mask": [..], "attrs": [..]}`.
#[pyfunction]
fn to_padded<'py>(py: Python<'py>, graph: &PyGraph, n_max: usize) -> PyResult<Bound<'py, PyDict>> {
    let s = core_to_padded(&graph.inner, n_max).map_err(err)?;
    let adj: Vec<Vec<f64>> = (0..n_max).map(|i| (0..n_max).map(|j| s.adj_at(i, j)).collect()).collect();
    let d = PyDict::new(py);
    d.set_item("adj", adj)?;
    d.set_item("mask", s.mask)?;
    d.set_item("attrs", s.attrs)?;
    Ok(d)
}

#[pyfunction]
fn entropy(labels: Vec<usize>) -> f64 {
    metrics::entropy(&labels)
}

/// Plug-in mutual information of two label sequences, in nats.
#[pyfunction]
fn mutual_information(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    metrics::mutual_information(&a, &b).map_err(err)
}

fn report_dict<'py>(py: Python<'py>, rep: &MigReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("score", rep.score)?;
    d.set_item("per_factor_gap", rep.per_factor_gap.clone())?;
    d.set_item("j_max", rep.j_max.clone())?;
    d.set_item("mi", rep.mi.clone())?;
    d.set_item("entropy", rep.entropy.clone())?;
    Ok(d)
}

/// Mutual Information Gap of latent codes `z` (N x J) against factors `v` (N x K).
#[pyfunction]
#[pyo3(signature = (z, v, bins=20))]
fn mig<'py>(py: Python<'py>, z: Vec<Vec<f64>>, v: Vec<Vec<f64>>, bins: usize) -> PyResult<Bound<'py, PyDict>> {
    let rep = metrics::mig(&z, &v, bins).map_err(err)?;
    report_dict(py, &rep)
}

#[pyclass(name = "Model", module = "latentgraph_py", frozen)]
struct PyModel {
    model: GraphVae,
    config: TrainConfig,
    history: Vec<(f64, f64, f64)>,
}

#[pymethods]
impl PyModel {
    /// Untrained model with freshly initialized weights.
    #[new]
    #[pyo3(signature = (j_latent=4, n_max=24, param_dim=2, use_attributes=false, seed=0))]
    fn new(j_latent: usize, n_max: usize, param_dim: usize, use_attributes: bool, seed: u64) -> PyResult<Self> {
        let model_cfg = ModelConfig {
            j_latent,
            n_max,
            param_dim,
            use_attributes,
            ..ModelConfig::default()
        };
        let config = TrainConfig {
            n_max,
            seed,
            model: model_cfg.clone(),
            ..TrainConfig::default()
        };
        let model = GraphVae::new(model_cfg, seed).map_err(err)?;
        Ok(PyModel { model, config, history: Vec::new() })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (model, config) = training::load_model(&path).map_err(err)?;
        Ok(PyModel { model, config, history: Vec::new() })
    }

    /// Trains a new model on `dataset`; the GIL is released meanwhile.
    #[staticmethod]
    #[pyo3(signature = (
        dataset, beta=5.0, lambda_param=1.0, epochs=200, batch_size=64,
        learning_rate=1e-3, j_latent=4, n_max=24, seed=0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        dataset: &PyDataset,
        beta: f64,
        lambda_param: f64,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        j_latent: usize,
        n_max: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let fam = dataset
            .inner
            .family()
            .ok_or_else(|| PyValueError::new_err("dataset is empty or mixes families"))?;
        let use_attributes = dataset.inner.records.iter().all(|r| r.graph.attrs().is_some());
        let cfg = TrainConfig {
            beta,
            lambda_param,
            epochs,
            batch_size,
            learning_rate,
            seed,
            n_max,
            model: ModelConfig {
                j_latent,
                n_max,
                param_dim: fam.params().len(),
                use_attributes,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        };
        let data = &dataset.inner;
        let trained = py.detach(|| training::train(data, &cfg)).map_err(err)?;
        let history = trained.history.epochs.iter().map(|e| (e.recon, e.kl, e.param_loss)).collect();
        Ok(PyModel {
            model: trained.model,
            config: trained.config,
            history,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        training::save_checkpoint(&self.model.weights, &self.config, &path).map_err(err)
    }

    #[getter]
    fn j_latent(&self) -> usize {
        self.model.config.j_latent
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.model.config.n_max
    }

    /// Per-epoch `(recon, kl, param_loss)` of the training run, if any.
    #[getter]
    fn history(&self) -> Vec<(f64, f64, f64)> {
        self.history.clone()
    }

    /// Posterior `(mu, log_var)` of one graph.
    fn encode(&self, graph: &PyGraph) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let x = core_to_padded(&graph.inner, self.model.config.n_max).map_err(err)?;
        let d = self.model.encode(&x).map_err(err)?;
        Ok((d.mu, d.log_var))
    }

    /// Decodes a latent vector into a graph by thresholding node and edge probabilities.
    #[pyo3(signature = (z, threshold=0.5))]
    fn decode(&self, z: Vec<f64>, threshold: f64) -> PyResult<PyGraph> {
        let s = self.model.decode(&LatentVector { z }).map_err(err)?;
        Ok(PyGraph {
            inner: threshold_decode(&s, threshold).map_err(err)?,
        })
    }

    /// Parameter-decoder output (normalized parameter scale).
    fn param_decode(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.model.param_decode(&LatentVector { z }).map_err(err)
    }

    /// MIG of posterior means on `dataset` against its true parameters.
    #[pyo3(signature = (dataset, bins=20))]
    fn mig<'py>(&self, py: Python<'py>, dataset: &PyDataset, bins: usize) -> PyResult<Bound<'py, PyDict>> {
        let sweep = encode_sweep(&self.model, &dataset.inner, bins).map_err(err)?;
        report_dict(py, &sweep.mig)
    }
}

#[pymodule]
fn latentgraph_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(gen_graph, m)?)?;
    m.add_function(wrap_pyfunction!(gen_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(to_padded, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(mutual_information, m)?)?;
    m.add_function(wrap_pyfunction!(mig, m)?)?;
    Ok(())
}
