//! The graph beta-VAE.
//!
//! Encoder: node features `[degree / (n - 1), attribute, present]` are
//! propagated through GCN layers `tanh(Â H W)` with
//! `Â = D̃^{-1/2} (A + I) D̃^{-1/2}`, node embeddings of padded slots are
//! zeroed, and the slot-ordered concatenation goes through dense layers to
//! `(mu, log_var)`.
//!
//! Decoder: dense layers expand `z` to upper-triangle adjacency logits, mask
//! logits and attribute logits; all pass through a sigmoid.
//!
//! Parameter decoder `h`: affine map `z -> v_hat`.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canonical::{EncodedSample, DEFAULT_N_MAX};
use crate::error::{Error, Result};
use crate::numcore::{ParamStore, Tape, Tensor, Var};
use crate::rng::rng_from;

/// Number of per-node input features.
pub const NODE_FEATURES: usize = 3;

/// Row of the first GCN weight matrix that reads the attribute feature.
pub const ATTR_FEATURE: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub j_latent: usize,
    pub n_max: usize,
    pub gcn_layers: Vec<usize>,
    /// Hidden widths between the node-embedding readout and `(mu, log_var)`.
    pub encoder_dense_layers: Vec<usize>,
    pub dense_decoder_layers: Vec<usize>,
    /// Length `K` of the generative parameter vector.
    pub param_dim: usize,
    pub use_attributes: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            j_latent: 4,
            n_max: DEFAULT_N_MAX,
            gcn_layers: vec![16, 16],
            encoder_dense_layers: vec![64],
            dense_decoder_layers: vec![64, 256],
            param_dim: 2,
            use_attributes: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.j_latent < 1 {
            return Err(Error::validation("j_latent", "must be at least 1"));
        }
        if self.n_max < 1 {
            return Err(Error::validation("n_max", "must be at least 1"));
        }
        if self.gcn_layers.is_empty() {
            return Err(Error::validation("gcn_layers", "at least one GCN layer is required"));
        }
        let widths = self
            .gcn_layers
            .iter()
            .chain(&self.encoder_dense_layers)
            .chain(&self.dense_decoder_layers);
        if widths.into_iter().any(|&w| w == 0) {
            return Err(Error::validation("layer widths", "must be positive"));
        }
        Ok(())
    }

    fn upper_len(&self) -> usize {
        EncodedSample::upper_len(self.n_max)
    }

    fn decoder_out(&self) -> usize {
        self.upper_len() + 2 * self.n_max
    }
}

/// Diagonal-Gaussian posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDistribution {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector {
    pub z: Vec<f64>,
}

/// `z = mu + exp(log_var / 2) * eps` with standard-normal `eps`.
pub fn reparameterize(dist: &LatentDistribution, seed: u64) -> LatentVector {
    let mut rng = rng_from(seed);
    let z = dist
        .mu
        .iter()
        .zip(&dist.log_var)
        .map(|(&m, &lv)| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            m + (0.5 * lv).exp() * eps
        })
        .collect();
    LatentVector { z }
}

/// `KL(N(mu, sigma^2) || N(0, 1))` in nats.
pub fn kl_divergence(dist: &LatentDistribution) -> f64 {
    kl_per_dimension(dist).iter().sum()
}

pub fn kl_per_dimension(dist: &LatentDistribution) -> Vec<f64> {
    dist.mu
        .iter()
        .zip(&dist.log_var)
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .collect()
}

/// Tape-side tensors for a batch of encoder inputs.
pub(crate) struct EncoderBatch {
    pub features: Tensor,
    pub propagation: Tensor,
    pub mask: Tensor,
    pub batch: usize,
}

/// Decoder outputs on a tape, all probabilities.
pub(crate) struct DecoderVars {
    pub adj_upper: Var,
    pub mask: Var,
    pub attrs: Var,
}

/// Model architecture plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphVae {
    pub config: ModelConfig,
    pub weights: ParamStore,
}

fn glorot(rng: &mut crate::rng::Rng, fan_in: usize, fan_out: usize, gain: f64) -> Tensor {
    let limit = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Tensor::matrix(fan_in, fan_out, data).expect("shape")
}

impl GraphVae {
    /// Fresh Glorot-uniform weights; biases start at zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from(seed);
        let mut w = ParamStore::new();
        let mut width = NODE_FEATURES;
        for (i, &out) in config.gcn_layers.iter().enumerate() {
            w.insert(format!("enc.gcn{i}.w"), glorot(&mut rng, width, out, 1.0));
            width = out;
        }
        width *= config.n_max;
        for (i, &out) in config.encoder_dense_layers.iter().enumerate() {
            w.insert(format!("enc.dense{i}.w"), glorot(&mut rng, width, out, 1.0));
            w.insert(format!("enc.dense{i}.b"), Tensor::zeros(&[out]));
            width = out;
        }
        w.insert("enc.out.w", glorot(&mut rng, width, 2 * config.j_latent, 1.0));
        w.insert("enc.out.b", Tensor::zeros(&[2 * config.j_latent]));

        let mut width = config.j_latent;
        for (i, &out) in config.dense_decoder_layers.iter().enumerate() {
            w.insert(format!("dec.dense{i}.w"), glorot(&mut rng, width, out, 1.0));
            w.insert(format!("dec.dense{i}.b"), Tensor::zeros(&[out]));
            width = out;
        }
        w.insert("dec.out.w", glorot(&mut rng, width, config.decoder_out(), 1.0));
        w.insert("dec.out.b", Tensor::zeros(&[config.decoder_out()]));

        if config.param_dim > 0 {
            w.insert("h.w", glorot(&mut rng, config.j_latent, config.param_dim, 1.0));
            w.insert("h.b", Tensor::zeros(&[config.param_dim]));
        }
        Ok(GraphVae { config, weights: w })
    }

    /// Rebuilds a model from stored weights, checking every expected
    /// parameter is present with the right shape.
    pub fn from_parts(config: ModelConfig, weights: ParamStore) -> Result<Self> {
        let reference = GraphVae::new(config.clone(), 0)?;
        for (name, t) in reference.weights.iter() {
            match weights.get(name) {
                Some(w) if w.shape() == t.shape() => {}
                Some(w) => {
                    return Err(Error::Shape {
                        op: "load weights",
                        left: t.shape().to_vec(),
                        right: w.shape().to_vec(),
                    })
                }
                None => {
                    return Err(Error::validation("weights", format!("missing parameter {name}")));
                }
            }
        }
        if weights.len() != reference.weights.len() {
            return Err(Error::validation("weights", "unexpected extra parameters"));
        }
        Ok(GraphVae { config, weights })
    }

    pub(crate) fn encoder_batch(&self, xs: &[&EncodedSample]) -> Result<EncoderBatch> {
        let n = self.config.n_max;
        let f_last = *self.config.gcn_layers.last().expect("validated");
        let b = xs.len();
        let mut features = Vec::with_capacity(b * n * NODE_FEATURES);
        let mut prop = Vec::with_capacity(b * n * n);
        let mut mask = Vec::with_capacity(b * n * f_last);
        for x in xs {
            if x.n_max != n || x.adj.len() != n * n || x.mask.len() != n || x.attrs.len() != n {
                return Err(Error::Shape {
                    op: "encode",
                    left: vec![n, n],
                    right: vec![x.n_max, x.adj.len()],
                });
            }
            let a = |i: usize, j: usize| x.adj[i * n + j] * x.mask[i] * x.mask[j];
            let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a(i, j)).sum()).collect();
            let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / (1.0 + d).sqrt()).collect();
            // degree centrality: fraction of the other present nodes adjacent
            let present: f64 = x.mask.iter().sum();
            let deg_scale = if present > 1.0 { 1.0 / (present - 1.0) } else { 0.0 };
            for i in 0..n {
                let attr = if self.config.use_attributes { x.attrs[i] * x.mask[i] } else { 0.0 };
                features.extend_from_slice(&[deg[i] * deg_scale, attr, x.mask[i]]);
                for j in 0..n {
                    let aij = a(i, j) + if i == j { 1.0 } else { 0.0 };
                    prop.push(inv_sqrt[i] * aij * inv_sqrt[j]);
                }
                mask.extend(std::iter::repeat_n(x.mask[i], f_last));
            }
        }
        Ok(EncoderBatch {
            features: Tensor::new(vec![b, n, NODE_FEATURES], features)?,
            propagation: Tensor::new(vec![b, n, n], prop)?,
            mask: Tensor::new(vec![b, n * f_last], mask)?,
            batch: b,
        })
    }

    fn dense(&self, tape: &mut Tape, x: Var, prefix: &str, act: bool) -> Result<Var> {
        let w = tape.param(&self.weights, &format!("{prefix}.w"))?;
        let b = tape.param(&self.weights, &format!("{prefix}.b"))?;
        let y = tape.matmul(x, w)?;
        let y = tape.add(y, b)?;
        if act {
            tape.tanh(y)
        } else {
            Ok(y)
        }
    }

    /// Records the encoder on `tape`; returns `(mu, log_var)`, each `[B, J]`.
    pub(crate) fn encode_on(&self, tape: &mut Tape, input: &EncoderBatch) -> Result<(Var, Var)> {
        let n = self.config.n_max;
        let b = input.batch;
        let prop = tape.constant(input.propagation.clone());
        let mut h = tape.constant(input.features.clone());
        let mut width = NODE_FEATURES;
        for (i, &out) in self.config.gcn_layers.iter().enumerate() {
            let mixed = tape.bmm(prop, h)?;
            let flat = tape.reshape(mixed, &[b * n, width])?;
            let w = tape.param(&self.weights, &format!("enc.gcn{i}.w"))?;
            let y = tape.matmul(flat, w)?;
            let y = tape.tanh(y)?;
            h = tape.reshape(y, &[b, n, out])?;
            width = out;
        }
        let flat = tape.reshape(h, &[b, n * width])?;
        let mask = tape.constant(input.mask.clone());
        let mut x = tape.mul(flat, mask)?;
        for i in 0..self.config.encoder_dense_layers.len() {
            x = self.dense(tape, x, &format!("enc.dense{i}"), true)?;
        }
        let out = self.dense(tape, x, "enc.out", false)?;
        let j = self.config.j_latent;
        let mu = tape.slice(out, 1, 0, j)?;
        let log_var = tape.slice(out, 1, j, j)?;
        Ok((mu, log_var))
    }

    /// Records the decoder for latent batch `z` (`[B, J]`).
    pub(crate) fn decode_on(&self, tape: &mut Tape, z: Var) -> Result<DecoderVars> {
        let mut x = z;
        for i in 0..self.config.dense_decoder_layers.len() {
            x = self.dense(tape, x, &format!("dec.dense{i}"), true)?;
        }
        let logits = self.dense(tape, x, "dec.out", false)?;
        let probs = tape.sigmoid(logits)?;
        let u = self.config.upper_len();
        let n = self.config.n_max;
        Ok(DecoderVars {
            adj_upper: tape.slice(probs, 1, 0, u)?,
            mask: tape.slice(probs, 1, u, n)?,
            attrs: tape.slice(probs, 1, u + n, n)?,
        })
    }

    /// Records `h(z) = z W + b`; `[B, K]`.
    pub(crate) fn param_decode_on(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let w = tape.param(&self.weights, "h.w")?;
        let b = tape.param(&self.weights, "h.b")?;
        let y = tape.matmul(z, w)?;
        tape.add(y, b)
    }

    fn check_z(&self, z: &LatentVector) -> Result<()> {
        if z.z.len() != self.config.j_latent {
            return Err(Error::Shape {
                op: "latent",
                left: vec![self.config.j_latent],
                right: vec![z.z.len()],
            });
        }
        Ok(())
    }

    /// Posterior of one canonicalized sample.
    pub fn encode(&self, x: &EncodedSample) -> Result<LatentDistribution> {
        Ok(self.encode_batch(&[x])?.pop().expect("one output"))
    }

    /// Posteriors of many samples. Chunks are evaluated in parallel; each
    /// chunk is independent so results do not depend on the pool size.
    pub fn encode_batch(&self, xs: &[&EncodedSample]) -> Result<Vec<LatentDistribution>> {
        const CHUNK: usize = 128;
        let chunks: Vec<Vec<LatentDistribution>> = xs
            .par_chunks(CHUNK)
            .map(|chunk| {
                let input = self.encoder_batch(chunk)?;
                let mut tape = Tape::new();
                let (mu, lv) = self.encode_on(&mut tape, &input)?;
                let j = self.config.j_latent;
                let (mu, lv) = (tape.value(mu).data(), tape.value(lv).data());
                Ok((0..chunk.len())
                    .map(|r| LatentDistribution {
                        mu: mu[r * j..(r + 1) * j].to_vec(),
                        log_var: lv[r * j..(r + 1) * j].to_vec(),
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Probabilistic sample decoded from `z`.
    pub fn decode(&self, z: &LatentVector) -> Result<EncodedSample> {
        self.check_z(z)?;
        let mut tape = Tape::new();
        let zv = tape.constant(Tensor::matrix(1, z.z.len(), z.z.clone())?);
        let out = self.decode_on(&mut tape, zv)?;
        Ok(EncodedSample::from_upper(
            self.config.n_max,
            tape.value(out.adj_upper).data(),
            tape.value(out.mask).data().to_vec(),
            tape.value(out.attrs).data().to_vec(),
        ))
    }

    /// Parameter estimate `h(z)` (in the normalized parameter scale used
    /// during training).
    pub fn param_decode(&self, z: &LatentVector) -> Result<Vec<f64>> {
        self.check_z(z)?;
        if self.config.param_dim == 0 {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let zv = tape.constant(Tensor::matrix(1, z.z.len(), z.z.clone())?);
        let out = self.param_decode_on(&mut tape, zv)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Zeroes the encoder weights that read node attributes, making the
    /// encoder blind to them.
    pub fn zero_attribute_inputs(&mut self) {
        let w = self.weights.get_mut("enc.gcn0.w").expect("first GCN layer");
        let cols = w.shape()[1];
        w.data_mut()[ATTR_FEATURE * cols..(ATTR_FEATURE + 1) * cols]
            .iter_mut()
            .for_each(|x| *x = 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::to_padded;
    use crate::graphgen::{gen_graph, GenParams};

    fn small_config() -> ModelConfig {
        ModelConfig {
            n_max: 6,
            gcn_layers: vec![4, 4],
            encoder_dense_layers: vec![8],
            dense_decoder_layers: vec![8],
            ..ModelConfig::default()
        }
    }

    #[test]
    fn encode_shapes_and_determinism() {
        let model = GraphVae::new(small_config(), 1).unwrap();
        let g = gen_graph(&GenParams::Er { n: 5, p: 0.5 }, 2).unwrap();
        let x = to_padded(&g, 6).unwrap();
        let a = model.encode(&x).unwrap();
        assert_eq!(a.mu.len(), 4);
        assert_eq!(a.log_var.len(), 4);
        assert_eq!(model.encode(&x.clone()).unwrap(), a);
    }

    #[test]
    fn all_zero_mask_is_finite() {
        let model = GraphVae::new(small_config(), 1).unwrap();
        let d = model.encode(&EncodedSample::zeros(6)).unwrap();
        assert!(d.mu.iter().chain(&d.log_var).all(|v| v.is_finite()));
    }

    #[test]
    fn batch_matches_single() {
        let model = GraphVae::new(small_config(), 3).unwrap();
        let xs: Vec<EncodedSample> = (0..5)
            .map(|s| to_padded(&gen_graph(&GenParams::Er { n: 6, p: 0.4 }, s).unwrap(), 6).unwrap())
            .collect();
        let refs: Vec<&EncodedSample> = xs.iter().collect();
        let batch = model.encode_batch(&refs).unwrap();
        for (x, d) in xs.iter().zip(&batch) {
            assert_eq!(&model.encode(x).unwrap(), d);
        }
    }

    #[test]
    fn n_max_mismatch_is_shape_error() {
        let model = GraphVae::new(small_config(), 1).unwrap();
        assert!(matches!(
            model.encode(&EncodedSample::zeros(5)),
            Err(Error::Shape { .. })
        ));
        assert!(model.decode(&LatentVector { z: vec![0.0; 3] }).is_err());
    }

    #[test]
    fn decoder_is_symmetric_and_bounded() {
        let model = GraphVae::new(small_config(), 4).unwrap();
        let mut rng = rng_from(9);
        for _ in 0..1000 {
            let z = LatentVector {
                z: (0..4).map(|_| rng.random_range(-3.0..3.0)).collect(),
            };
            let s = model.decode(&z).unwrap();
            for i in 0..6 {
                assert_eq!(s.adj_at(i, i), 0.0);
                for j in 0..6 {
                    assert_eq!(s.adj_at(i, j), s.adj_at(j, i));
                    if i != j {
                        let p = s.adj_at(i, j);
                        assert!(p > 0.0 && p < 1.0);
                    }
                }
            }
            assert!(s.mask.iter().chain(&s.attrs).all(|&p| p > 0.0 && p < 1.0));
        }
        let z = LatentVector { z: vec![0.3, -0.1, 0.0, 1.0] };
        assert_eq!(model.decode(&z).unwrap(), model.decode(&z).unwrap());
    }

    #[test]
    fn param_decoder_is_affine() {
        let mut model = GraphVae::new(ModelConfig { param_dim: 4, ..small_config() }, 5).unwrap();
        let b0 = vec![0.5, -1.0, 2.0, 0.25];
        *model.weights.get_mut("h.b").unwrap() = Tensor::vector(b0.clone());
        let z1 = LatentVector { z: vec![0.1, 0.2, -0.3, 0.4] };
        let z2 = LatentVector { z: vec![-1.0, 0.5, 0.7, 0.0] };
        let z12 = LatentVector {
            z: z1.z.iter().zip(&z2.z).map(|(a, b)| a + b).collect(),
        };
        let f = |z: &LatentVector| -> Vec<f64> {
            model.param_decode(z).unwrap().iter().zip(&b0).map(|(v, b)| v - b).collect()
        };
        for ((s, a), b) in f(&z12).iter().zip(f(&z1)).zip(f(&z2)) {
            assert!((s - (a + b)).abs() < 1e-12);
        }

        model.weights.get_mut("h.w").unwrap().data_mut().iter_mut().for_each(|w| *w = 0.0);
        assert_eq!(model.param_decode(&z1).unwrap(), b0);

        let w = model.weights.get_mut("h.w").unwrap();
        for i in 0..4 {
            w.data_mut()[i * 4 + i] = 1.0;
        }
        *model.weights.get_mut("h.b").unwrap() = Tensor::zeros(&[4]);
        assert_eq!(model.param_decode(&z1).unwrap(), z1.z);
    }

    #[test]
    fn kl_closed_forms() {
        let d = LatentDistribution { mu: vec![0.0; 3], log_var: vec![0.0; 3] };
        assert_eq!(kl_divergence(&d), 0.0);
        let d = LatentDistribution { mu: vec![1.0], log_var: vec![0.0] };
        assert_eq!(kl_divergence(&d), 0.5);
    }

    #[test]
    fn reparameterize_limits() {
        let d = LatentDistribution { mu: vec![1.5, -2.0], log_var: vec![-50.0, -50.0] };
        let z = reparameterize(&d, 3);
        assert!((z.z[0] - 1.5).abs() < 1e-9 && (z.z[1] + 2.0).abs() < 1e-9);
        let d = LatentDistribution { mu: vec![0.0; 2], log_var: vec![0.0; 2] };
        assert_eq!(reparameterize(&d, 8), reparameterize(&d, 8));
        assert_ne!(reparameterize(&d, 8), reparameterize(&d, 9));
    }

    #[test]
    fn zeroing_attribute_inputs_blinds_encoder() {
        let mut model = GraphVae::new(ModelConfig { use_attributes: true, ..small_config() }, 6).unwrap();
        let g = gen_graph(&GenParams::Er { n: 5, p: 0.5 }, 1).unwrap();
        let a = to_padded(&g.clone().with_attrs(vec![0.1; 5]).unwrap(), 6).unwrap();
        let b = to_padded(&g.with_attrs(vec![0.9; 5]).unwrap(), 6).unwrap();
        assert_ne!(model.encode(&a).unwrap(), model.encode(&b).unwrap());
        model.zero_attribute_inputs();
        assert_eq!(model.encode(&a).unwrap(), model.encode(&b).unwrap());
    }
}
