use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    /// Training samples additionally reserved for neuron alignment.
    Alignment,
}

/// Labeled feature vectors with per-sample split tags.
///
/// Samples tagged [`Split::Alignment`] belong to the training data as well;
/// [`Dataset::train_indices`] returns both tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
    pub n_classes: usize,
}

impl Dataset {
    /// All samples start in the training split.
    pub fn new(features: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::dim("dataset labels", features.nrows(), labels.len()));
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::LabelOutOfRange { label, n_classes });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        let n = labels.len();
        Ok(Dataset {
            features,
            labels,
            splits: vec![Split::Train; n],
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Tag a random `validation_frac` of the samples as validation, then a
    /// random `alignment_frac` of the remaining training samples as alignment.
    pub fn assign_splits(&mut self, validation_frac: f64, alignment_frac: f64, rng: &mut Rng) -> Result<()> {
        for (name, f) in [("validation", validation_frac), ("alignment", alignment_frac)] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Config(format!("{name} fraction {f} not in [0, 1)")));
            }
        }
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let n_val = (validation_frac * n as f64).round() as usize;
        let n_train = n - n_val;
        let n_align = (alignment_frac * n_train as f64).round() as usize;
        for (rank, &i) in order.iter().enumerate() {
            self.splits[i] = if rank < n_val {
                Split::Validation
            } else if rank < n_val + n_align {
                Split::Alignment
            } else {
                Split::Train
            };
        }
        Ok(())
    }

    pub fn indices(&self, pred: impl Fn(Split) -> bool) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| pred(s))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices(|s| matches!(s, Split::Train | Split::Alignment))
    }

    pub fn validation_indices(&self) -> Vec<usize> {
        self.indices(|s| s == Split::Validation)
    }

    pub fn alignment_indices(&self) -> Vec<usize> {
        self.indices(|s| s == Split::Alignment)
    }

    pub fn select(&self, indices: &[usize]) -> (Array2<f64>, Vec<usize>) {
        let x = self.features.select(Axis(0), indices);
        let y = indices.iter().map(|&i| self.labels[i]).collect();
        (x, y)
    }

    pub fn train(&self) -> (Array2<f64>, Vec<usize>) {
        self.select(&self.train_indices())
    }

    pub fn validation(&self) -> (Array2<f64>, Vec<usize>) {
        self.select(&self.validation_indices())
    }

    pub fn alignment(&self) -> (Array2<f64>, Vec<usize>) {
        self.select(&self.alignment_indices())
    }

    /// Per-feature `(min, max)` over all samples.
    pub fn feature_range(&self) -> Vec<(f64, f64)> {
        self.features
            .axis_iter(Axis(1))
            .map(|col| {
                col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                })
            })
            .collect()
    }

    /// Largest per-feature range, used to scale attack budgets.
    pub fn max_feature_span(&self) -> f64 {
        self.feature_range()
            .iter()
            .map(|(lo, hi)| hi - lo)
            .fold(0.0, f64::max)
    }
}
