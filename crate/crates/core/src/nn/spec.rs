use serde::{Deserialize, Serialize};

use super::Activation;
use crate::{Error, Result};

/// Architecture of a dense feed-forward network.
///
/// `layer_widths[0]` is the input dimension and the last entry the number of
/// outputs. Layer `l` (1-based) maps width `l - 1` to width `l`; layers
/// `1..L-1` are hidden and carry the activation, layer `L` emits logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub residual_period: Option<usize>,
    #[serde(default = "default_true")]
    pub has_bias: bool,
}

fn default_true() -> bool {
    true
}

impl NetworkSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = NetworkSpec {
            layer_widths,
            activation,
            residual_period: None,
            has_bias: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_residual(mut self, period: usize) -> Result<Self> {
        self.residual_period = Some(period);
        self.validate()?;
        Ok(self)
    }

    pub fn without_bias(mut self) -> Self {
        self.has_bias = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least input and output widths, got {:?}",
                self.layer_widths
            )));
        }
        if let Some(i) = self.layer_widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidSpec(format!("layer width {i} is zero")));
        }
        if let Activation::HuberizedRelu { delta } = self.activation {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "huberized relu needs delta > 0, got {delta}"
                )));
            }
        }
        if let Some(p) = self.residual_period {
            if p == 0 {
                return Err(Error::InvalidSpec("residual period must be positive".into()));
            }
            for l in 1..self.n_layers() {
                if let Some(src) = self.skip_source(l) {
                    if self.layer_widths[src] != self.layer_widths[l] {
                        return Err(Error::InvalidSpec(format!(
                            "skip from layer {src} (width {}) into layer {l} (width {})",
                            self.layer_widths[src], self.layer_widths[l]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of weight layers `L`.
    pub fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn n_hidden(&self) -> usize {
        self.n_layers() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn width(&self, layer: usize) -> usize {
        self.layer_widths[layer]
    }

    pub fn n_params(&self) -> usize {
        (1..=self.n_layers())
            .map(|l| {
                let w = self.layer_widths[l] * self.layer_widths[l - 1];
                if self.has_bias {
                    w + self.layer_widths[l]
                } else {
                    w
                }
            })
            .sum()
    }

    /// Hidden layer whose post-activation output is added to hidden layer `l`.
    ///
    /// With period `p`, layer `l` receives `X_{l-p}` when `l > p` and
    /// `(l - 1) % p == 0`, i.e. `X_l = σ(W_l X_{l-1}) + X_{l-p}`. The output
    /// layer never receives a skip.
    pub fn skip_source(&self, l: usize) -> Option<usize> {
        let p = self.residual_period?;
        if l == 0 || l >= self.n_layers() {
            return None;
        }
        if l > p && (l - 1).is_multiple_of(p) {
            Some(l - p)
        } else {
            None
        }
    }

    /// Partition of hidden layers `1..L-1` into groups that must share one
    /// permutation because skip connections tie their unit ordering.
    pub fn permutation_groups(&self) -> Vec<Vec<usize>> {
        let n_hidden = self.n_hidden();
        let mut group_of: Vec<usize> = (0..=n_hidden).collect();
        for l in 1..=n_hidden {
            if let Some(src) = self.skip_source(l) {
                group_of[l] = group_of[src];
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_index = std::collections::BTreeMap::new();
        for l in 1..=n_hidden {
            let root = group_of[l];
            let idx = *root_index.entry(root).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[idx].push(l);
        }
        groups
    }

    pub fn is_residual(&self) -> bool {
        (1..self.n_layers()).any(|l| self.skip_source(l).is_some())
    }
}
