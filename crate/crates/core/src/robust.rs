//! L∞ projected gradient attacks and adversarial training.

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::curve::{evaluate_curve, BezierCurve, CurveMetrics};
use crate::nn::{input_gradient, predictions, sample_losses, train_with, Dataset, LossKind, Network, SgdConfig};
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgdConfig {
    /// L∞ radius in input units.
    pub epsilon: f64,
    pub step_size: f64,
    pub n_steps: usize,
    pub random_start: bool,
    /// Valid input box `(lo, hi)` applied to every coordinate.
    pub clip_range: Option<(f64, f64)>,
    /// Seed of the random-start stream.
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for PgdConfig {
    fn default() -> Self {
        PgdConfig {
            epsilon: 0.1,
            step_size: 0.025,
            n_steps: 10,
            random_start: true,
            clip_range: None,
            seed: 0,
            loss: LossKind::CrossEntropy,
        }
    }
}

impl PgdConfig {
    /// `ε = fraction · (largest feature span)`, step `ε/4`, 10 steps.
    pub fn scaled_to(data: &Dataset, fraction: f64) -> Self {
        let epsilon = fraction * data.max_feature_span();
        PgdConfig {
            epsilon,
            step_size: epsilon / 4.0,
            ..PgdConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("PGD epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("PGD step size must be > 0, got {}", self.step_size)));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("PGD needs at least one step".into()));
        }
        if let Some((lo, hi)) = self.clip_range {
            if !(lo < hi) {
                return Err(Error::Config(format!("empty clip range ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

/// Maximize the loss within the L∞ ball around `x` (intersected with the
/// clip box) by signed gradient ascent.
///
/// Per sample the iterate with the highest loss seen is returned, so the
/// attacked loss is never below the clean loss.
pub fn pgd_attack(net: &Network, x: ArrayView2<f64>, labels: &[usize], cfg: &PgdConfig, rng: &mut Rng) -> Result<Array2<f64>> {
    cfg.validate()?;
    if let Some((lo, hi)) = cfg.clip_range {
        if x.iter().any(|&v| v < lo || v > hi) {
            return Err(Error::Config(format!("input lies outside the clip range ({lo}, {hi})")));
        }
    }
    if cfg.epsilon == 0.0 || x.nrows() == 0 {
        return Ok(x.to_owned());
    }
    let project = |adv: &mut Array2<f64>| {
        Zip::from(adv).and(&x).for_each(|a, &x0| {
            let mut lo = x0 - cfg.epsilon;
            let mut hi = x0 + cfg.epsilon;
            if let Some((clo, chi)) = cfg.clip_range {
                lo = lo.max(clo);
                hi = hi.min(chi);
            }
            *a = a.clamp(lo, hi);
        });
    };
    let mut adv = x.to_owned();
    if cfg.random_start {
        adv.mapv_inplace(|v| v + rng.random_range(-cfg.epsilon..=cfg.epsilon));
        project(&mut adv);
    }
    let mut best = x.to_owned();
    let mut best_loss = sample_losses(net.logits(x)?.view(), labels, cfg.loss)?;
    let track = |adv: &Array2<f64>, best: &mut Array2<f64>, best_loss: &mut Vec<f64>| -> Result<()> {
        let losses = sample_losses(net.logits(adv.view())?.view(), labels, cfg.loss)?;
        for (i, &l) in losses.iter().enumerate() {
            if l > best_loss[i] {
                best_loss[i] = l;
                best.row_mut(i).assign(&adv.row(i));
            }
        }
        Ok(())
    };
    if cfg.random_start {
        track(&adv, &mut best, &mut best_loss)?;
    }
    for _ in 0..cfg.n_steps {
        let (_, grad) = input_gradient(net, adv.view(), labels, cfg.loss)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("PGD input gradient".into()));
        }
        Zip::from(&mut adv).and(&grad).for_each(|a, &g| {
            if g != 0.0 {
                *a += cfg.step_size * g.signum();
            }
        });
        project(&mut adv);
        track(&adv, &mut best, &mut best_loss)?;
    }
    Ok(best)
}

/// Loss and accuracy on PGD-perturbed inputs, random start seeded by `cfg.seed`.
pub fn robust_evaluate(net: &Network, x: ArrayView2<f64>, labels: &[usize], cfg: &PgdConfig) -> Result<(f64, f64)> {
    let adv = pgd_attack(net, x, labels, cfg, &mut rng::rng(cfg.seed))?;
    let logits = net.logits(adv.view())?;
    let losses = sample_losses(logits.view(), labels, cfg.loss)?;
    let n = labels.len().max(1) as f64;
    let correct = predictions(logits.view())
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok((losses.iter().sum::<f64>() / n, correct as f64 / n))
}

/// SGD where every batch is replaced by its PGD perturbation against the
/// current weights.
pub fn adversarial_train(net: &Network, data: &Dataset, sgd: &SgdConfig, pgd: &PgdConfig) -> Result<Network> {
    pgd.validate()?;
    let mut attack_rng = rng::rng(pgd.seed);
    let (trained, _) = train_with(net, data, sgd, |current, x, y| {
        pgd_attack(current, x.view(), y, pgd, &mut attack_rng)
    })?;
    Ok(trained)
}

/// Clean and robust metrics along a curve; each grid point is attacked
/// independently with the same seed.
pub fn robust_curve_report(
    curve: &BezierCurve,
    x: ArrayView2<f64>,
    labels: &[usize],
    t_grid: &[f64],
    cfg: &PgdConfig,
) -> Result<(CurveMetrics, CurveMetrics)> {
    let clean = evaluate_curve(curve, x, labels, t_grid, None)?;
    let robust = evaluate_curve(curve, x, labels, t_grid, Some(cfg))?;
    Ok((clean, robust))
}
