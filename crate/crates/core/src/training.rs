//! The beta-VAE objective, the training loop and checkpoint persistence.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::canonical::{to_padded, EncodedSample, DEFAULT_N_MAX};
use crate::error::{Error, Result};
use crate::graphgen::{Dataset, GenParams, Interval};
use crate::model::{kl_per_dimension, GraphVae, LatentDistribution, ModelConfig};
use crate::numcore::{adam_step, AdamConfig, ParamStore, Tape, Tensor, Var};
use crate::rng::{derive_seed, rng_from};

/// Lower/upper clamp applied to probabilities inside binary cross-entropy.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta: f64,
    pub lambda_param: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub n_max: usize,
    pub model: ModelConfig,
    /// Min-max ranges used to normalize the parameter-decoder targets. When
    /// absent they are taken from the training set.
    #[serde(default)]
    pub param_ranges: Option<Vec<Interval>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 5.0,
            lambda_param: 1.0,
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            n_max: DEFAULT_N_MAX,
            model: ModelConfig::default(),
            param_ranges: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size < 1 {
            return Err(Error::validation("batch_size", "must be at least 1"));
        }
        if self.n_max != self.model.n_max {
            return Err(Error::validation(
                "n_max",
                format!("training n_max {} differs from model n_max {}", self.n_max, self.model.n_max),
            ));
        }
        if !(self.beta >= 0.0 && self.lambda_param >= 0.0 && self.learning_rate > 0.0) {
            return Err(Error::validation(
                "weights",
                "beta and lambda_param must be non-negative and learning_rate positive",
            ));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// Maps raw parameter values into `[0, 1]` per dimension.
    pub fn normalize_params(&self, values: &[f64]) -> Vec<f64> {
        match &self.param_ranges {
            Some(ranges) => values
                .iter()
                .zip(ranges)
                .map(|(&v, r)| if r.hi > r.lo { (v - r.lo) / (r.hi - r.lo) } else { 0.0 })
                .collect(),
            None => values.to_vec(),
        }
    }
}

/// Scalar components of the objective, averaged over a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub kl_per_dim: Vec<f64>,
    pub param_loss: f64,
}

struct LossVars {
    total: Var,
    recon: Var,
    kl: Var,
    param_loss: Option<Var>,
    mu: Var,
    log_var: Var,
}

/// Canonicalized training example with its normalized parameter target.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub x: EncodedSample,
    pub target: Vec<f64>,
}

fn bce_sum(tape: &mut Tape, probs: Var, target: &Tensor, weight: Option<&Tensor>) -> Result<Var> {
    let p = tape.clamp(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
    let log_p = tape.ln(p)?;
    let q = tape.affine(p, -1.0, 1.0)?;
    let log_q = tape.ln(q)?;
    let t = tape.constant(target.clone());
    let not_t = tape.constant(target.map(|x| 1.0 - x));
    let a = tape.mul(log_p, t)?;
    let b = tape.mul(log_q, not_t)?;
    let mut ll = tape.add(a, b)?;
    if let Some(w) = weight {
        let w = tape.constant(w.clone());
        ll = tape.mul(ll, w)?;
    }
    let s = tape.sum(ll)?;
    tape.scale(s, -1.0)
}

fn build_loss(
    tape: &mut Tape,
    model: &GraphVae,
    batch: &[&TrainSample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LossVars> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mc = &model.config;
    let (b, n, j) = (batch.len(), mc.n_max, mc.j_latent);
    let inv_b = 1.0 / b as f64;
    let xs: Vec<&EncodedSample> = batch.iter().map(|s| &s.x).collect();
    let input = model.encoder_batch(&xs)?;
    let (mu, log_var) = model.encode_on(tape, &input)?;

    let mut rng = rng_from(seed);
    let eps: Vec<f64> = (0..b * j).map(|_| StandardNormal.sample(&mut rng)).collect();
    let eps = tape.constant(Tensor::matrix(b, j, eps)?);
    let half = tape.scale(log_var, 0.5)?;
    let sigma = tape.exp(half)?;
    let noise = tape.mul(sigma, eps)?;
    let z = tape.add(mu, noise)?;

    let dec = model.decode_on(tape, z)?;
    let u = EncodedSample::upper_len(n);
    let mut adj_t = Vec::with_capacity(b * u);
    let mut adj_w = Vec::with_capacity(b * u);
    let mut mask_t = Vec::with_capacity(b * n);
    let mut attr_t = Vec::with_capacity(b * n);
    for s in batch {
        let x = &s.x;
        for i in 0..n {
            for k in i + 1..n {
                adj_t.push(x.adj_at(i, k));
                adj_w.push(x.mask[i] * x.mask[k]);
            }
        }
        mask_t.extend_from_slice(&x.mask);
        attr_t.extend_from_slice(&x.attrs);
    }
    let adj_t = Tensor::matrix(b, u, adj_t)?;
    let adj_w = Tensor::matrix(b, u, adj_w)?;
    let mask_t = Tensor::matrix(b, n, mask_t)?;

    let adj_term = bce_sum(tape, dec.adj_upper, &adj_t, Some(&adj_w))?;
    let mask_term = bce_sum(tape, dec.mask, &mask_t, None)?;
    let mut recon = tape.add(adj_term, mask_term)?;
    if mc.use_attributes {
        let target = tape.constant(Tensor::matrix(b, n, attr_t)?);
        let diff = tape.sub(dec.attrs, target)?;
        let sq = tape.mul(diff, diff)?;
        let m = tape.constant(mask_t.clone());
        let masked = tape.mul(sq, m)?;
        let s = tape.sum(masked)?;
        recon = tape.add(recon, s)?;
    }
    let recon = tape.scale(recon, inv_b)?;

    let mu_sq = tape.mul(mu, mu)?;
    let var = tape.exp(log_var)?;
    let kl = tape.add(mu_sq, var)?;
    let kl = tape.sub(kl, log_var)?;
    let kl = tape.sum(kl)?;
    // 0.5 * (sum(mu^2 + e^lv - lv) - b*j), averaged over the batch
    let kl = tape.affine(kl, 0.5 * inv_b, -0.5 * j as f64)?;

    let weighted_kl = tape.scale(kl, cfg.beta)?;
    let mut total = tape.add(recon, weighted_kl)?;

    let param_loss = if mc.param_dim > 0 {
        let k = mc.param_dim;
        let mut targets = Vec::with_capacity(b * k);
        for s in batch {
            if s.target.len() != k {
                return Err(Error::Shape {
                    op: "parameter target",
                    left: vec![k],
                    right: vec![s.target.len()],
                });
            }
            targets.extend_from_slice(&s.target);
        }
        let v = tape.constant(Tensor::matrix(b, k, targets)?);
        let v_hat = model.param_decode_on(tape, z)?;
        let d = tape.sub(v_hat, v)?;
        let sq = tape.mul(d, d)?;
        let mse = tape.mean(sq)?;
        let weighted = tape.scale(mse, cfg.lambda_param)?;
        total = tape.add(total, weighted)?;
        Some(mse)
    } else {
        None
    };

    Ok(LossVars {
        total,
        recon,
        kl,
        param_loss,
        mu,
        log_var,
    })
}

fn breakdown(tape: &Tape, vars: &LossVars, j: usize) -> LossBreakdown {
    let (mu, lv) = (tape.value(vars.mu).data(), tape.value(vars.log_var).data());
    let rows = mu.len() / j;
    let mut per_dim = vec![0.0; j];
    for r in 0..rows {
        let d = LatentDistribution {
            mu: mu[r * j..(r + 1) * j].to_vec(),
            log_var: lv[r * j..(r + 1) * j].to_vec(),
        };
        for (acc, k) in per_dim.iter_mut().zip(kl_per_dimension(&d)) {
            *acc += k;
        }
    }
    per_dim.iter_mut().for_each(|k| *k /= rows as f64);
    LossBreakdown {
        total: tape.value(vars.total).item(),
        recon: tape.value(vars.recon).item(),
        kl: tape.value(vars.kl).item(),
        kl_per_dim: per_dim,
        param_loss: vars.param_loss.map_or(0.0, |p| tape.value(p).item()),
    }
}

/// Canonicalizes records and normalizes their parameter vectors.
pub fn prepare_samples(
    records: &[(EncodedSample, GenParams)],
    cfg: &TrainConfig,
) -> Vec<TrainSample> {
    records
        .iter()
        .map(|(x, p)| TrainSample {
            x: x.clone(),
            target: cfg.normalize_params(&p.values()),
        })
        .collect()
}

/// Objective on one batch. `seed` drives the reparameterization noise.
pub fn compute_loss(
    model: &GraphVae,
    batch: &[(EncodedSample, GenParams)],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LossBreakdown> {
    let samples = prepare_samples(batch, cfg);
    let refs: Vec<&TrainSample> = samples.iter().collect();
    let mut tape = Tape::new();
    let vars = build_loss(&mut tape, model, &refs, cfg, seed)?;
    Ok(breakdown(&tape, &vars, model.config.j_latent))
}

/// Objective and its gradient; gradients are added into the model's
/// parameter store.
pub fn loss_and_grad(
    model: &mut GraphVae,
    batch: &[&TrainSample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let vars = build_loss(&mut tape, model, batch, cfg, seed)?;
    let grads = tape.backward(vars.total)?;
    grads.accumulate_into(&tape, &mut model.weights);
    Ok(breakdown(&tape, &vars, model.config.j_latent))
}

/// One row of [`TrainHistory`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
    pub kl_per_dim: Vec<f64>,
    pub param_loss: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// CSV with header `epoch,recon,kl,kl_dim_0..kl_dim_{J-1},param_loss,total`.
    pub fn to_csv(&self, j_latent: usize) -> String {
        let mut out = String::from("epoch,recon,kl");
        for j in 0..j_latent {
            let _ = write!(out, ",kl_dim_{j}");
        }
        out.push_str(",param_loss,total\n");
        for r in &self.epochs {
            let _ = write!(out, "{},{},{}", r.epoch, r.recon, r.kl);
            for k in &r.kl_per_dim {
                let _ = write!(out, ",{k}");
            }
            let _ = writeln!(out, ",{},{}", r.param_loss, r.total);
        }
        out
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: GraphVae,
    pub history: TrainHistory,
    /// Config with `param_ranges` resolved.
    pub config: TrainConfig,
}

/// Shuffled mini-batch training with Adam. Deterministic in `cfg.seed`.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    train_with(dataset, cfg, |_, _| {})
}

/// As [`train`], calling `on_epoch` after every completed epoch.
pub fn train_with(
    dataset: &Dataset,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord, &GraphVae),
) -> Result<Trained> {
    let mut cfg = cfg.clone();
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if cfg.param_ranges.is_none() && cfg.model.param_dim > 0 {
        cfg.param_ranges = dataset.param_ranges();
    }
    let k = cfg.model.param_dim;
    let mut samples = Vec::with_capacity(dataset.len());
    for r in &dataset.records {
        let values = r.params.values();
        if k > 0 && values.len() != k {
            return Err(Error::validation(
                "param_dim",
                format!("model expects {k} parameters, record has {}", values.len()),
            ));
        }
        samples.push(TrainSample {
            x: to_padded(&r.graph, cfg.n_max)?,
            target: if k > 0 { cfg.normalize_params(&values) } else { Vec::new() },
        });
    }
    let model = GraphVae::new(cfg.model.clone(), derive_seed(cfg.seed, 0x1417))?;
    train_samples_with(model, &samples, cfg, on_epoch)
}

/// Training loop over prepared samples, starting from `model`.
pub fn train_samples(model: GraphVae, samples: &[TrainSample], cfg: TrainConfig) -> Result<Trained> {
    train_samples_with(model, samples, cfg, |_, _| {})
}

/// As [`train_samples`], calling `on_epoch` after every completed epoch.
pub fn train_samples_with(
    mut model: GraphVae,
    samples: &[TrainSample],
    cfg: TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &GraphVae),
) -> Result<Trained> {
    let adam = cfg.adam();
    let j = model.config.j_latent;
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..cfg.epochs {
        let epoch_seed = derive_seed(cfg.seed, epoch as u64 + 1);
        order.shuffle(&mut rng_from(epoch_seed));
        let mut acc = EpochRecord {
            epoch,
            recon: 0.0,
            kl: 0.0,
            kl_per_dim: vec![0.0; j],
            param_loss: 0.0,
            total: 0.0,
        };
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&TrainSample> = idx.iter().map(|&i| &samples[i]).collect();
            let parts = loss_and_grad(&mut model, &batch, &cfg, derive_seed(epoch_seed, bi as u64))
                .map_err(|e| Error::Diverged {
                    epoch,
                    batch: bi,
                    source: Box::new(e),
                })?;
            adam_step(&mut model.weights, &adam);
            let w = batch.len() as f64;
            acc.recon += parts.recon * w;
            acc.kl += parts.kl * w;
            acc.param_loss += parts.param_loss * w;
            acc.total += parts.total * w;
            for (a, k) in acc.kl_per_dim.iter_mut().zip(&parts.kl_per_dim) {
                *a += k * w;
            }
        }
        let n = samples.len() as f64;
        acc.recon /= n;
        acc.kl /= n;
        acc.param_loss /= n;
        acc.total /= n;
        acc.kl_per_dim.iter_mut().for_each(|k| *k /= n);
        log::info!(
            "epoch {epoch}: total {:.4} recon {:.4} kl {:.4} param {:.5}",
            acc.total,
            acc.recon,
            acc.kl,
            acc.param_loss
        );
        on_epoch(&acc, &model);
        history.epochs.push(acc);
    }
    Ok(Trained { model, history, config: cfg })
}

/// Mean per-dimension KL of the posteriors of `samples`.
pub fn mean_kl_per_dimension(model: &GraphVae, samples: &[EncodedSample]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let refs: Vec<&EncodedSample> = samples.iter().collect();
    let dists = model.encode_batch(&refs)?;
    let mut out = vec![0.0; model.config.j_latent];
    for d in &dists {
        for (a, k) in out.iter_mut().zip(kl_per_dimension(d)) {
            *a += k;
        }
    }
    out.iter_mut().for_each(|k| *k /= dists.len() as f64);
    Ok(out)
}

const MAGIC: &[u8; 8] = b"LGVAECKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializes weights and config:
///
/// ```text
/// magic "LGVAECKP" | u32 version | u64 len | config JSON
/// u32 count | per parameter: u32 name len, name, u32 rank, u64 dims..., f64 data...
/// sha256 of everything above
/// ```
///
/// All integers and floats are little-endian.
pub fn checkpoint_bytes(weights: &ParamStore, cfg: &TrainConfig) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let json = serde_json::to_vec_pretty(cfg)?;
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(weights.len() as u32).to_le_bytes());
    for (name, t) in weights.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn save_checkpoint(weights: &ParamStore, cfg: &TrainConfig, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(weights, cfg)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format!("truncated at byte {}", self.pos)),
        }
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses bytes produced by [`checkpoint_bytes`].
pub fn parse_checkpoint(bytes: &[u8]) -> std::result::Result<(ParamStore, TrainConfig), String> {
    if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..8] != MAGIC {
        return Err("not a checkpoint file (bad magic or too short)".into());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(format!(
            "unsupported format version {version} (expected {CHECKPOINT_VERSION})"
        ));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err("checksum mismatch (truncated or corrupt file)".into());
    }
    let mut r = Reader { buf: body, pos: 12 };
    let json_len = r.u64()? as usize;
    let cfg: TrainConfig =
        serde_json::from_slice(r.take(json_len)?).map_err(|e| format!("config: {e}"))?;
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| "parameter name is not UTF-8".to_string())?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let numel: usize = shape.iter().product();
        let raw = r.take(numel.checked_mul(8).ok_or("parameter too large")?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| e.to_string())?;
        store.insert(name, t);
    }
    if r.pos != body.len() {
        return Err(format!("{} trailing bytes", body.len() - r.pos));
    }
    Ok((store, cfg))
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, TrainConfig)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes).map_err(|reason| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    })
}

/// Loads a checkpoint into a ready model.
pub fn load_model(path: &Path) -> Result<(GraphVae, TrainConfig)> {
    let (weights, cfg) = load_checkpoint(path)?;
    let model = GraphVae::from_parts(cfg.model.clone(), weights)?;
    Ok((model, cfg))
}
