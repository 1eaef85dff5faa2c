use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{backward, spectral_norm, Dataset, Gradients, LossKind, Network};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    /// Multiply the learning rate by `lr_decay_factor` every this many epochs.
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub max_weight_spectral_norm: Option<f64>,
    pub loss: LossKind,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr: 0.1,
            lr_decay_every: 20,
            lr_decay_factor: 0.5,
            weight_decay: 5e-4,
            momentum: 0.0,
            epochs: 60,
            batch_size: 64,
            seed: 0,
            max_weight_spectral_norm: None,
            loss: LossKind::CrossEntropy,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("lr_decay_factor", self.lr_decay_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("weight_decay >= 0 and momentum in [0, 1) required".into()));
        }
        if self.batch_size == 0 || self.lr_decay_every == 0 {
            return Err(Error::Config("batch_size and lr_decay_every must be positive".into()));
        }
        if let Some(b) = self.max_weight_spectral_norm {
            if !(b > 0.0) {
                return Err(Error::Config(format!("spectral bound must be positive, got {b}")));
            }
        }
        Ok(())
    }

    /// Step-decay learning rate at `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay_factor.powi((epoch / self.lr_decay_every) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
}

/// Mini-batch SGD on the training split (train + alignment tags).
pub fn train_sgd(net: &Network, data: &Dataset, config: &SgdConfig) -> Result<(Network, TrainingLog)> {
    train_with(net, data, config, |_, x, _| Ok(x))
}

/// SGD loop with a hook that may replace each batch's inputs before the
/// gradient step (adversarial training plugs in here).
pub(crate) fn train_with<F>(
    net: &Network,
    data: &Dataset,
    config: &SgdConfig,
    mut perturb: F,
) -> Result<(Network, TrainingLog)>
where
    F: FnMut(&Network, Array2<f64>, &[usize]) -> Result<Array2<f64>>,
{
    config.validate()?;
    let mut log = TrainingLog::default();
    if config.epochs == 0 {
        return Ok((net.clone(), log));
    }
    if data.n_classes != net.spec.output_dim() {
        return Err(Error::dim("dataset classes vs output width", net.spec.output_dim(), data.n_classes));
    }
    let (x_all, y_all) = data.train();
    if y_all.is_empty() {
        return Err(Error::Empty("training split".into()));
    }
    let mut shuffle_rng = rng::rng(config.seed);
    let mut current = net.clone();
    let mut velocity = (config.momentum > 0.0).then(|| Gradients::zeros_like(net));
    let mut order: Vec<usize> = (0..y_all.len()).collect();
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let x = x_all.select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| y_all[i]).collect();
            let x = perturb(&current, x, &y)?;
            let (value, mut grad) = backward(&current, x.view(), &y, config.loss)?;
            if !value.is_finite() || !grad.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: value,
                    last_finite: Box::new(current),
                });
            }
            if config.weight_decay > 0.0 {
                for (g, w) in grad.weights.iter_mut().zip(&current.weights) {
                    g.scaled_add(config.weight_decay, w);
                }
            }
            match velocity.as_mut() {
                Some(v) => {
                    v.scale(config.momentum);
                    v.add_scaled(1.0, &grad);
                    current.add_scaled_grad(-lr, v);
                }
                None => current.add_scaled_grad(-lr, &grad),
            }
            if let Some(bound) = config.max_weight_spectral_norm {
                project_spectral(&mut current, bound)?;
            }
            loss_sum += value * chunk.len() as f64;
            seen += chunk.len();
            step += 1;
        }
        let logits = current.logits(x_all.view())?;
        log.epochs.push(EpochRecord {
            epoch,
            lr,
            mean_loss: loss_sum / seen as f64,
            train_accuracy: super::accuracy(logits.view(), &y_all),
        });
    }
    Ok((current, log))
}

/// Rescale every weight matrix whose spectral norm exceeds `bound`.
pub(crate) fn project_spectral(net: &mut Network, bound: f64) -> Result<()> {
    for w in &mut net.weights {
        let sigma = match spectral_norm(w, 1e-12, 5_000) {
            Ok(s) => s,
            // Frobenius norm bounds the spectral norm from above.
            Err(Error::NoConvergence { .. }) => w.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Err(e) => return Err(e),
        };
        if sigma > bound {
            *w *= bound / sigma * (1.0 - 1e-12);
        }
    }
    Ok(())
}
