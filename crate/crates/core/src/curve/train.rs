use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::BezierCurve;
use crate::nn::{Dataset, Gradients, LossKind};
use crate::robust::{pgd_attack, PgdConfig};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    Step { every: usize, factor: f64 },
    /// Cosine decay from `lr` to 0 over all epochs.
    Cosine,
}

impl LrSchedule {
    pub fn rate(&self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Step { every, factor } => base * factor.powi((epoch / every.max(1)) as i32),
            LrSchedule::Cosine => {
                let frac = epoch as f64 / epochs.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
    pub lr_schedule: LrSchedule,
    pub loss: LossKind,
}

impl Default for CurveTrainConfig {
    fn default() -> Self {
        CurveTrainConfig {
            lr: 0.05,
            epochs: 100,
            batch_size: 64,
            momentum: 0.9,
            seed: 0,
            lr_schedule: LrSchedule::Cosine,
            loss: LossKind::CrossEntropy,
        }
    }
}

impl CurveTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("curve lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("curve batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("curve momentum {} not in [0, 1)", self.momentum)));
        }
        if let LrSchedule::Step { every, factor } = self.lr_schedule {
            if every == 0 || !(factor > 0.0) {
                return Err(Error::Config("step schedule needs every > 0 and factor > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveLog {
    /// Mean batch loss of every epoch (at the sampled `t` of each batch).
    pub epoch_loss: Vec<f64>,
}

/// Stochastic training of the control point: each batch samples one
/// `t ~ U[0, 1]` and steps along `2(1−t)t ∇L(r(t))`. With `attack` set, the
/// batch is first perturbed against the sampled network `r(t)`.
pub fn train_curve(
    curve: &BezierCurve,
    data: &Dataset,
    cfg: &CurveTrainConfig,
    attack: Option<&PgdConfig>,
) -> Result<(BezierCurve, CurveLog)> {
    cfg.validate()?;
    let mut log = CurveLog::default();
    let mut out = curve.clone();
    if cfg.epochs == 0 {
        return Ok((out, log));
    }
    let (x_all, y_all) = data.train();
    if y_all.is_empty() {
        return Err(Error::Empty("training split".into()));
    }
    let mut r = rng::rng(cfg.seed);
    let mut attack_rng = rng::rng(attack.map_or(0, |a| a.seed));
    let mut velocity = Gradients::zeros_like(&out.control);
    let mut order: Vec<usize> = (0..y_all.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_schedule.rate(cfg.lr, epoch, cfg.epochs);
        order.shuffle(&mut r);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let t: f64 = r.random();
            let mut x = x_all.select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| y_all[i]).collect();
            if let Some(a) = attack {
                let net = out.point(t)?;
                x = pgd_attack(&net, x.view(), &y, a, &mut attack_rng)?;
            }
            let (value, grad) = out.control_gradient(t, x.view(), &y, cfg.loss)?;
            if !value.is_finite() || !grad.is_finite() {
                return Err(Error::NonFinite(format!("curve loss at epoch {epoch}, t = {t}")));
            }
            velocity.scale(cfg.momentum);
            velocity.add_scaled(1.0, &grad);
            out.control.add_scaled_grad(-lr, &velocity);
            sum += value * chunk.len() as f64;
        }
        log.epoch_loss.push(sum / y_all.len() as f64);
    }
    Ok((out, log))
}
