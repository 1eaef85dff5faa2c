use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::nn::{Capture, Network};
use crate::{Error, Result};

/// Which activations are matched and by which ground cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostVariant {
    /// `1 − correlation` of post-activations.
    #[default]
    CorrPost,
    CorrPre,
    /// Summed squared distance between raw post-activations.
    L2Post,
    L2Pre,
}

impl CostVariant {
    pub const ALL: [CostVariant; 4] = [
        CostVariant::CorrPost,
        CostVariant::CorrPre,
        CostVariant::L2Post,
        CostVariant::L2Pre,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CostVariant::CorrPost => "corr_post",
            CostVariant::CorrPre => "corr_pre",
            CostVariant::L2Post => "l2_post",
            CostVariant::L2Pre => "l2_pre",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        CostVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown alignment variant `{s}`")))
    }

    pub fn is_correlation(self) -> bool {
        matches!(self, CostVariant::CorrPost | CostVariant::CorrPre)
    }

    pub fn capture(self) -> Capture {
        match self {
            CostVariant::CorrPost | CostVariant::L2Post => Capture::PostActivations,
            CostVariant::CorrPre | CostVariant::L2Pre => Capture::PreActivations,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub layer: usize,
    pub values: Array2<f64>,
    pub variant: CostVariant,
}

/// Hidden-layer activations as `m_l × n` matrices (one row per unit).
///
/// Correlation variants return rows centered and scaled to unit norm; a row
/// with no variance becomes the zero vector.
pub fn collect_activations(net: &Network, x: ArrayView2<f64>, variant: CostVariant) -> Result<Vec<Array2<f64>>> {
    if x.nrows() == 0 {
        return Err(Error::Empty("alignment split".into()));
    }
    let captured = net.forward(x, variant.capture())?.captured.unwrap_or_default();
    Ok(captured
        .into_iter()
        .map(|a| {
            let z = a.reversed_axes().as_standard_layout().into_owned();
            if variant.is_correlation() {
                normalize_rows(z)
            } else {
                z
            }
        })
        .collect())
}

pub fn normalize_rows(mut z: Array2<f64>) -> Array2<f64> {
    for mut row in z.axis_iter_mut(Axis(0)) {
        let raw_norm = row.dot(&row).sqrt();
        let mean = row.mean().unwrap_or(0.0);
        row -= mean;
        let norm = row.dot(&row).sqrt();
        // Relative threshold: a constant row leaves only rounding noise.
        if norm == 0.0 || norm <= 1e-10 * raw_norm {
            row.fill(0.0);
        } else {
            row /= norm;
        }
    }
    z
}

/// Cost between unit `i` of network 1 and unit `j` of network 2.
///
/// Inputs are the outputs of [`collect_activations`] for the same variant.
pub fn build_cost(z1: &Array2<f64>, z2: &Array2<f64>, variant: CostVariant, layer: usize) -> Result<CostMatrix> {
    if z1.dim() != z2.dim() {
        return Err(Error::SpecMismatch(format!(
            "layer {layer} activation shapes {:?} vs {:?}",
            z1.dim(),
            z2.dim()
        )));
    }
    let values = if variant.is_correlation() {
        z1.dot(&z2.t()).mapv(|c| (1.0 - c).clamp(0.0, 2.0))
    } else {
        let m = z1.nrows();
        Array2::from_shape_fn((m, m), |(i, j)| {
            z1.row(i)
                .iter()
                .zip(z2.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("layer {layer} cost matrix")));
    }
    Ok(CostMatrix {
        layer,
        values,
        variant,
    })
}
