use ndarray::{s, ArrayView2};

use super::{build_cost, collect_activations, solve_assignment, BlockPermutation, CostMatrix, CostVariant};
use crate::nn::Network;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Alignment {
    pub permutation: BlockPermutation,
    /// `net2` with the permutation applied; computes the same function.
    pub aligned: Network,
    /// Cost matrix of every hidden layer (group-averaged in residual mode).
    pub costs: Vec<CostMatrix>,
    /// Matched cost `Σ_i C[i, p(i)]` of every hidden layer.
    pub cost_per_layer: Vec<f64>,
}

/// Match the hidden units of `net2` to those of `net1` layer by layer.
///
/// Layers are processed in order; the activations of `net2` are recomputed
/// after every permutation applied so far. In residual mode each group of
/// skip-tied layers is solved once on the average of its members' costs.
pub fn align_networks(
    net1: &Network,
    net2: &Network,
    x: ArrayView2<f64>,
    variant: CostVariant,
    residual_mode: bool,
) -> Result<Alignment> {
    net1.check_same_spec(net2)?;
    let spec = &net1.spec;
    if spec.is_residual() && !residual_mode {
        return Err(Error::Unsupported(
            "residual networks must be aligned in residual mode".into(),
        ));
    }
    let z1 = collect_activations(net1, x, variant)?;
    let mut current = net2.clone();
    let mut total = BlockPermutation::identity(spec);
    let mut costs: Vec<Option<CostMatrix>> = vec![None; spec.n_hidden()];
    let mut groups = spec.permutation_groups();
    groups.sort_by_key(|g| g[0]);
    for group in groups {
        let z2 = collect_activations(&current, x, variant)?;
        let mut avg = build_cost(&z1[group[0] - 1], &z2[group[0] - 1], variant, group[0])?.values;
        for &l in &group[1..] {
            avg += &build_cost(&z1[l - 1], &z2[l - 1], variant, l)?.values;
        }
        avg /= group.len() as f64;
        let solution = solve_assignment(&avg)?;
        let mut step = BlockPermutation::identity(spec);
        for &l in &group {
            step.perms[l - 1] = solution.perm.clone();
            costs[l - 1] = Some(CostMatrix {
                layer: l,
                values: avg.clone(),
                variant,
            });
        }
        current = step.apply(&current)?;
        total = total.then(&step);
    }
    let costs: Vec<CostMatrix> = costs.into_iter().map(Option::unwrap).collect();
    let cost_per_layer = costs
        .iter()
        .map(|c| matched_cost(&c.values, total.layer(c.layer)))
        .collect();
    Ok(Alignment {
        permutation: total,
        aligned: current,
        costs,
        cost_per_layer,
    })
}

pub fn matched_cost(cost: &ndarray::Array2<f64>, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum()
}

/// Per hidden layer, the mean correlation between unit `i` of `net1` and
/// unit `i` of `net2` on post-activations. Constant units count as 0.
pub fn correlation_signature(net1: &Network, net2: &Network, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    net1.check_same_spec(net2)?;
    let z1 = collect_activations(net1, x, CostVariant::CorrPost)?;
    let z2 = collect_activations(net2, x, CostVariant::CorrPost)?;
    Ok(z1
        .iter()
        .zip(&z2)
        .map(|(a, b)| {
            let m = a.nrows();
            let sum: f64 = (0..m).map(|i| a.row(i).dot(&b.row(i))).sum();
            (sum / m as f64).clamp(-1.0, 1.0)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Fraction of units mapped identically by the two half-split alignments.
    pub agreement_per_layer: Vec<f64>,
    pub identical: bool,
}

/// Align on the first and second halves of `x` separately and compare.
pub fn alignment_stability(
    net1: &Network,
    net2: &Network,
    x: ArrayView2<f64>,
    variant: CostVariant,
    residual_mode: bool,
) -> Result<StabilityReport> {
    let half = x.nrows() / 2;
    if half == 0 {
        return Err(Error::Empty("stability check needs at least two samples".into()));
    }
    let a = align_networks(net1, net2, x.slice(s![..half, ..]), variant, residual_mode)?;
    let b = align_networks(net1, net2, x.slice(s![half.., ..]), variant, residual_mode)?;
    let agreement_per_layer: Vec<f64> = a
        .permutation
        .perms
        .iter()
        .zip(&b.permutation.perms)
        .map(|(p, q)| p.iter().zip(q).filter(|(x, y)| x == y).count() as f64 / p.len() as f64)
        .collect();
    Ok(StabilityReport {
        identical: a.permutation == b.permutation,
        agreement_per_layer,
    })
}
