//! Actor and critic networks.
//!
//! Both networks share one architecture for the node-embedding trunk:
//! a linear input projection plus sinusoidal positional encodings, followed
//! by `n_blocks` blocks of single-head self-attention and a ReLU
//! feed-forward layer, each wrapped in a skip connection and batch
//! normalization. The actor max-pools the trunk output into a graph
//! embedding and scores every position pair with a clipped bilinear
//! compatibility; the critic mean-pools and regresses one value per node,
//! averaged into the state value.
//!
//! Gradients are hand-derived and checked against central finite
//! differences in [`gradcheck`].

pub mod checkpoint;
mod dist;
mod features;
pub mod gradcheck;
mod layout;
mod model;
mod params;

pub use dist::PairDistribution;
pub use features::{node_features, node_features_with, positional_encoding, Batch};
pub use model::{log_prob_and_grad, value_and_grad, ActorOutput, BnStats, CriticOutput};
pub use params::Network;

use serde::{Deserialize, Serialize};

/// Which of the two networks a parameter set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Actor,
    Critic,
}

/// Batch normalization behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Normalize with statistics of the current batch (all rows of all
    /// sequences); the caller folds them into the running averages.
    Train,
    /// Normalize with the running averages; sequences are independent.
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub d_model: usize,
    pub n_blocks: usize,
    /// Hidden width of the feed-forward sublayers.
    pub ff_hidden: usize,
    /// Hidden width of the critic's per-node value head.
    pub head_hidden: usize,
    pub feature_dim: usize,
    /// Logit clipping constant `C` in `C * tanh(Y)`.
    pub clip: f64,
    /// Multiplier on the bilinear scores `Y = Kc Qcᵀ` before the tanh.
    pub compat_scale: f64,
    pub bn_eps: f64,
    /// Weight on the previous running statistic.
    pub bn_momentum: f64,
}

impl NetConfig {
    /// Full-size configuration: d_m = 128, three blocks, 512-wide hidden
    /// layers, C = 10.
    pub fn full(feature_dim: usize) -> Self {
        Self::with_width(feature_dim, 128)
    }

    /// Same architecture at width `d_model`; hidden layers stay 4x wide.
    pub fn with_width(feature_dim: usize, d_model: usize) -> Self {
        NetConfig {
            d_model,
            n_blocks: 3,
            ff_hidden: 4 * d_model,
            head_hidden: 4 * d_model,
            feature_dim,
            clip: 10.0,
            compat_scale: 1.0 / (d_model as f64).sqrt(),
            bn_eps: 1e-5,
            bn_momentum: 0.9,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.d_model > 0
            && self.n_blocks > 0
            && self.ff_hidden > 0
            && self.head_hidden > 0
            && self.feature_dim > 0
            && self.clip > 0.0
            && self.compat_scale > 0.0
            && self.compat_scale.is_finite()
            && self.bn_eps > 0.0
            && (0.0..1.0).contains(&self.bn_momentum);
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("invalid network config {self:?}")))
        }
    }
}
