use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    CrossEntropy,
    /// Mean over samples of the squared distance to one-hot targets.
    Mse,
}

fn check_labels(logits: &ArrayView2<f64>, labels: &[usize]) -> Result<()> {
    if logits.nrows() != labels.len() {
        return Err(Error::dim("label count", logits.nrows(), labels.len()));
    }
    if logits.nrows() == 0 {
        return Err(Error::Empty("loss over zero samples".into()));
    }
    let k = logits.ncols();
    if let Some(&label) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::LabelOutOfRange {
            label,
            n_classes: k,
        });
    }
    Ok(())
}

/// Per-sample losses.
pub fn sample_losses(logits: ArrayView2<f64>, labels: &[usize], kind: LossKind) -> Result<Vec<f64>> {
    check_labels(&logits, labels)?;
    Ok(logits
        .outer_iter()
        .zip(labels)
        .map(|(row, &y)| match kind {
            LossKind::CrossEntropy => {
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                lse - row[y]
            }
            LossKind::Mse => row
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let t = if j == y { 1.0 } else { 0.0 };
                    (v - t) * (v - t)
                })
                .sum(),
        })
        .collect())
}

pub fn loss(logits: ArrayView2<f64>, labels: &[usize], kind: LossKind) -> Result<f64> {
    let per = sample_losses(logits, labels, kind)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Mean loss and its gradient with respect to the logits.
pub fn loss_and_grad(
    logits: ArrayView2<f64>,
    labels: &[usize],
    kind: LossKind,
) -> Result<(f64, Array2<f64>)> {
    check_labels(&logits, labels)?;
    let n = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for ((row, mut g), &y) in logits.outer_iter().zip(grad.outer_iter_mut()).zip(labels) {
        match kind {
            LossKind::CrossEntropy => {
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
                total += max + sum.ln() - row[y];
                for (j, gv) in g.iter_mut().enumerate() {
                    let p = (row[j] - max).exp() / sum;
                    *gv = (p - if j == y { 1.0 } else { 0.0 }) / n;
                }
            }
            LossKind::Mse => {
                for (j, gv) in g.iter_mut().enumerate() {
                    let d = row[j] - if j == y { 1.0 } else { 0.0 };
                    total += d * d;
                    *gv = 2.0 * d / n;
                }
            }
        }
    }
    Ok((total / n, grad))
}

/// Mean squared distance to dense targets and its gradient.
pub fn mse_dense(logits: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if logits.dim() != targets.dim() {
        return Err(Error::dim("target rows", logits.nrows(), targets.nrows()));
    }
    let n = logits.nrows() as f64;
    let diff = &logits - &targets;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((value, diff * (2.0 / n)))
}

pub fn predictions(logits: ArrayView2<f64>) -> Vec<usize> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(logits: ArrayView2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions(logits)
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    hits as f64 / labels.len() as f64
}

pub fn one_hot(labels: &[usize], n_classes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), n_classes));
    for (i, &y) in labels.iter().enumerate() {
        out[[i, y]] = 1.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Array2::from_elem((3, 5), 0.7);
        let v = loss(logits.view(), &[0, 2, 4], LossKind::CrossEntropy).unwrap();
        assert!((v - 5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn two_class_closed_form() {
        let v = loss(array![[1.0, 0.0]].view(), &[0], LossKind::CrossEntropy).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn confident_logits_decrease_to_zero() {
        let mut prev = f64::INFINITY;
        for m in [1.0, 2.0, 5.0, 10.0, 40.0] {
            let v = loss(array![[m, 0.0, 0.0]].view(), &[0], LossKind::CrossEntropy).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-15);
    }

    #[test]
    fn label_out_of_range() {
        let err = loss(array![[0.0, 1.0]].view(), &[2], LossKind::CrossEntropy).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 2, n_classes: 2 }));
    }

    #[test]
    fn mse_uses_one_hot() {
        let v = loss(array![[1.0, 0.0], [0.0, 0.0]].view(), &[0, 1], LossKind::Mse).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn large_logits_stay_finite() {
        let (v, g) =
            loss_and_grad(array![[1000.0, -1000.0]].view(), &[1], LossKind::CrossEntropy).unwrap();
        assert!((v - 2000.0).abs() < 1e-9);
        assert!(g.iter().all(|x| x.is_finite()));
    }
}
