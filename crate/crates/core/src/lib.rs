//! Disentangled discovery of graph generative parameters.
//!
//! A graph beta-VAE (GCN encoder, dense adjacency decoder, linear parameter
//! decoder) is trained on procedurally generated graphs, and the alignment
//! between latents and generative parameters is scored with the Mutual
//! Information Gap.
//!
//! Module map:
//!
//! - [`graphgen`]: random-graph families (ER, BA, SW, complete binary tree),
//!   node attributes and JSON Lines datasets.
//! - [`canonical`]: degree-refinement node ordering and the padded tensor
//!   encoding consumed by the model.
//! - [`sampler`]: edge-list ingestion and biased second-order random-walk
//!   subgraph sampling.
//! - [`numcore`]: dense tensors, a reverse-mode tape and Adam.
//! - [`model`]: encoder, decoder, parameter decoder and KL divergence.
//! - [`training`]: the beta-VAE objective, training loop and checkpoints.
//! - [`metrics`]: entropy, mutual information, MIG and topology statistics.
//! - [`experiments`]: latent traversals, encode sweeps and attribute
//!   randomization sweeps.
//! - [`recipes`]: executable reproduction recipes.

pub mod canonical;
pub mod error;
pub mod experiments;
pub mod graphgen;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod recipes;
pub mod rng;
pub mod sampler;
pub mod training;

pub use canonical::{bosam_order, threshold_decode, to_padded, EncodedSample, DEFAULT_N_MAX};
pub use error::{Error, Result};
pub use graphgen::{Dataset, Family, GenParams, Graph, Record};
pub use metrics::MigReport;
pub use model::{LatentDistribution, LatentVector, ModelConfig};
pub use numcore::{ParamStore, Tape, Tensor, Var};
pub use training::{TrainConfig, TrainHistory};
