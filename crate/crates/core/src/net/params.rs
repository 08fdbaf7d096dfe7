use std::sync::Arc;

use rand::Rng;

use super::layout::{Init, Layout, TensorSpec};
use super::model::BnStats;
use super::{NetConfig, Role};
use crate::error::{Error, Result};

/// Trainable weights plus batch-norm running statistics of one network.
///
/// All weights live in a single flat buffer; gradients and optimizer
/// moments use the same layout.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetConfig,
    role: Role,
    pub(crate) layout: Arc<Layout>,
    weights: Vec<f64>,
    running: Vec<f64>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.role == other.role
            && self.weights == other.weights
            && self.running == other.running
    }
}

impl Network {
    /// Fresh network with fan-in uniform initialization.
    pub fn new<R: Rng + ?Sized>(config: NetConfig, role: Role, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(config, role)?;
        let layout = net.layout.clone();
        for spec in &layout.tensors {
            let slice = &mut net.weights[spec.offset..spec.offset + spec.rows * spec.cols];
            match spec.init {
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    slice.iter_mut().for_each(|w| *w = rng.gen_range(-bound..=bound));
                }
                Init::One => slice.fill(1.0),
                Init::Zero => slice.fill(0.0),
            }
        }
        Ok(net)
    }

    /// Every weight zero (batch-norm scales included); running variance 1.
    pub fn zeros(config: NetConfig, role: Role) -> Result<Self> {
        config.validate()?;
        let layout = Arc::new(Layout::new(&config, role));
        let mut running = vec![0.0; layout.n_running];
        for spec in &layout.running {
            if spec.init == Init::One {
                running[spec.offset..spec.offset + spec.cols].fill(1.0);
            }
        }
        Ok(Network {
            config,
            role,
            weights: vec![0.0; layout.n_weights],
            running,
            layout,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn running_stats(&self) -> &[f64] {
        &self.running
    }

    pub fn num_weights(&self) -> usize {
        self.weights.len()
    }

    /// Named trainable tensors in layout order.
    pub fn tensors(&self) -> &[TensorSpec] {
        &self.layout.tensors
    }

    /// Named running-statistic tensors in layout order.
    pub fn running_tensors(&self) -> &[TensorSpec] {
        &self.layout.running
    }

    pub fn zero_grad(&self) -> Vec<f64> {
        vec![0.0; self.weights.len()]
    }

    pub(crate) fn replace_buffers(&mut self, weights: Vec<f64>, running: Vec<f64>) -> Result<()> {
        if weights.len() != self.weights.len() || running.len() != self.running.len() {
            return Err(Error::Checkpoint("parameter count does not match layout".into()));
        }
        self.weights = weights;
        self.running = running;
        Ok(())
    }

    /// Folds batch statistics from a training-mode forward pass into the
    /// running averages: `running = m * running + (1 - m) * batch`, with the
    /// unbiased batch variance.
    pub fn update_running(&mut self, stats: &BnStats) {
        let m = self.config.bn_momentum;
        for (idx, (mean, var, count)) in self.bn_indices().into_iter().zip(stats.layers.iter()) {
            let correction = if *count > 1 {
                *count as f64 / (*count as f64 - 1.0)
            } else {
                1.0
            };
            let rm = &mut self.running[idx.0.range()];
            rm.iter_mut()
                .zip(mean.iter())
                .for_each(|(r, &b)| *r = m * *r + (1.0 - m) * b);
            let rv = &mut self.running[idx.1.range()];
            rv.iter_mut()
                .zip(var.iter())
                .for_each(|(r, &b)| *r = m * *r + (1.0 - m) * b * correction);
        }
    }

    fn bn_indices(&self) -> Vec<(super::layout::TensorRef, super::layout::TensorRef)> {
        self.layout
            .blocks
            .iter()
            .flat_map(|b| [(b.bn1.mean, b.bn1.var), (b.bn2.mean, b.bn2.var)])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.running.iter()).all(|w| w.is_finite())
    }
}
