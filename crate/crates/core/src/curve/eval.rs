use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::BezierCurve;
use crate::nn::{evaluate, LossKind, Network};
use crate::robust::{robust_evaluate, PgdConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetrics {
    pub t_grid: Vec<f64>,
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
    /// Largest excess of the loss over the chord between the endpoint losses.
    pub max_barrier: f64,
    pub min_accuracy: f64,
}

impl CurveMetrics {
    pub fn mean_accuracy(&self) -> f64 {
        self.accuracy.iter().sum::<f64>() / self.accuracy.len() as f64
    }

    pub fn mean_loss(&self) -> f64 {
        self.loss.iter().sum::<f64>() / self.loss.len() as f64
    }

    pub fn from_values(t_grid: Vec<f64>, loss: Vec<f64>, accuracy: Vec<f64>) -> Self {
        let (l0, l1) = (loss[0], *loss.last().unwrap());
        let max_barrier = t_grid
            .iter()
            .zip(&loss)
            .map(|(&t, &l)| l - ((1.0 - t) * l0 + t * l1))
            .fold(f64::NEG_INFINITY, f64::max);
        let min_accuracy = accuracy.iter().copied().fold(f64::INFINITY, f64::min);
        CurveMetrics {
            t_grid,
            loss,
            accuracy,
            max_barrier,
            min_accuracy,
        }
    }
}

/// `n` evenly spaced points from 0 to 1 inclusive.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
    }
}

pub fn validate_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.len() < 2 || t_grid[0] != 0.0 || *t_grid.last().unwrap() != 1.0 {
        return Err(Error::Config("t grid must start at 0 and end at 1".into()));
    }
    if t_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("t grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Cross-entropy and accuracy at every grid point. With `attack` set, each
/// grid network is evaluated on its own PGD perturbation of the inputs.
pub fn evaluate_curve(
    curve: &BezierCurve,
    x: ArrayView2<f64>,
    labels: &[usize],
    t_grid: &[f64],
    attack: Option<&PgdConfig>,
) -> Result<CurveMetrics> {
    evaluate_path(|t| curve.point(t), x, labels, t_grid, attack)
}

pub(crate) fn evaluate_path<F>(
    point: F,
    x: ArrayView2<f64>,
    labels: &[usize],
    t_grid: &[f64],
    attack: Option<&PgdConfig>,
) -> Result<CurveMetrics>
where
    F: Fn(f64) -> Result<Network>,
{
    validate_grid(t_grid)?;
    let mut loss = Vec::with_capacity(t_grid.len());
    let mut accuracy = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let net = point(t)?;
        let (l, a) = match attack {
            Some(cfg) => robust_evaluate(&net, x, labels, cfg)?,
            None => evaluate(&net, x, labels, LossKind::CrossEntropy)?,
        };
        loss.push(l);
        accuracy.push(a);
    }
    Ok(CurveMetrics::from_values(t_grid.to_vec(), loss, accuracy))
}

/// Metrics along the straight segment `(1−t)θ₁ + tθ₂`.
pub fn evaluate_linear(
    theta1: &Network,
    theta2: &Network,
    x: ArrayView2<f64>,
    labels: &[usize],
    t_grid: &[f64],
    attack: Option<&PgdConfig>,
) -> Result<CurveMetrics> {
    theta1.check_same_spec(theta2)?;
    evaluate_path(
        |t| Network::combine(&[(1.0 - t, theta1), (t, theta2)]),
        x,
        labels,
        t_grid,
        attack,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, NetworkSpec};
    use crate::rng;
    use ndarray::Array2;

    #[test]
    fn constant_loss_has_no_barrier() {
        let m = CurveMetrics::from_values(vec![0.0, 0.5, 1.0], vec![2.0; 3], vec![0.5; 3]);
        assert_eq!(m.max_barrier, 0.0);
        assert_eq!(m.min_accuracy, 0.5);
    }

    #[test]
    fn barrier_against_chord() {
        let m = CurveMetrics::from_values(vec![0.0, 0.5, 1.0], vec![1.0, 3.0, 2.0], vec![1.0, 0.2, 0.9]);
        assert_eq!(m.max_barrier, 1.5);
        assert_eq!(m.min_accuracy, 0.2);
    }

    #[test]
    fn grid_checks() {
        assert_eq!(uniform_grid(3), vec![0.0, 0.5, 1.0]);
        assert!(validate_grid(&[0.0, 1.0]).is_ok());
        assert!(validate_grid(&[0.1, 1.0]).is_err());
        assert!(validate_grid(&[0.0, 0.5, 0.5, 1.0]).is_err());
    }

    #[test]
    fn linear_init_matches_segment_and_endpoints() {
        let spec = NetworkSpec::new(vec![2, 6, 3], Activation::Relu).unwrap();
        let mut r = rng::rng(7);
        let a = Network::init(&spec, &mut r).unwrap();
        let b = Network::init(&spec, &mut r).unwrap();
        let x = Array2::from_shape_fn((50, 2), |(i, j)| ((i * 7 + j) % 10) as f64 / 5.0 - 1.0);
        let y: Vec<usize> = (0..50).map(|i| i % 3).collect();
        let c = BezierCurve::init_linear(&a, &b).unwrap();
        let grid = uniform_grid(21);
        let m1 = evaluate_curve(&c, x.view(), &y, &grid, None).unwrap();
        let m2 = evaluate_linear(&a, &b, x.view(), &y, &grid, None).unwrap();
        for (p, q) in m1.loss.iter().zip(&m2.loss) {
            assert!((p - q).abs() < 1e-10);
        }
        let ends = evaluate_curve(&c, x.view(), &y, &[0.0, 1.0], None).unwrap();
        assert_eq!(ends.loss[0], evaluate(&a, x.view(), &y, LossKind::CrossEntropy).unwrap().0);
        assert_eq!(ends.loss[1], evaluate(&b, x.view(), &y, LossKind::CrossEntropy).unwrap().0);
    }
}
