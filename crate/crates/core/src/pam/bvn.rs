use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::alignment::{solve_assignment, BlockPermutation};
use crate::nn::NetworkSpec;
use crate::rng;
use crate::{Error, Result};

/// Greedy rule choosing the next permutation of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BvnRule {
    /// `argmax_P trace(Pᵀ D)` over the support of `D`.
    #[default]
    MaxTrace,
    /// Maximize the smallest matched entry (classical Birkhoff heuristic).
    Bottleneck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvnTerm {
    /// Coefficient extracted by the greedy step.
    pub alpha: f64,
    /// Sampling probability after truncation and renormalization.
    pub weight: f64,
    pub perm: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvnDecomposition {
    pub terms: Vec<BvnTerm>,
    /// Number of terms kept.
    pub truncated_at: usize,
}

impl BvnDecomposition {
    /// `Σ α_i P_i` with the unnormalized coefficients.
    pub fn reconstruct(&self) -> Array2<f64> {
        let n = self.terms.first().map_or(0, |t| t.perm.len());
        let mut out = Array2::zeros((n, n));
        for term in &self.terms {
            for (i, &j) in term.perm.iter().enumerate() {
                out[[i, j]] += term.alpha;
            }
        }
        out
    }

    pub fn total_alpha(&self) -> f64 {
        self.terms.iter().map(|t| t.alpha).sum()
    }

    /// Draw one permutation with probability proportional to the weights.
    pub fn sample(&self, rng: &mut rng::Rng) -> &[usize] {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for term in &self.terms {
            acc += term.weight;
            if u < acc {
                return &term.perm;
            }
        }
        &self.terms.last().expect("nonempty decomposition").perm
    }
}

const ZERO_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;

/// Greedy Birkhoff–von Neumann decomposition `D = Σ α_i P_i`, truncated to
/// the first `truncate` terms whose coefficients are then renormalized.
pub fn bvn_decompose(d: &Array2<f64>, truncate: usize, rule: BvnRule) -> Result<BvnDecomposition> {
    let n = d.nrows();
    if d.ncols() != n || n == 0 {
        return Err(Error::dim("BvN input columns", n, d.ncols()));
    }
    if truncate == 0 {
        return Err(Error::Config("bvn_truncate must be positive".into()));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("BvN input".into()));
    }
    let mut rest = d.mapv(|v| if v.abs() <= ZERO_TOL { 0.0 } else { v });
    let mut raw: Vec<(f64, Vec<usize>)> = Vec::new();
    // A doubly stochastic n×n matrix needs at most n² − 2n + 2 terms.
    let max_terms = (n * n).saturating_sub(2 * n) + 2;
    while raw.len() < max_terms.min(truncate) {
        let mass: f64 = rest.iter().sum::<f64>() / n as f64;
        if mass <= RESIDUAL_TOL {
            break;
        }
        // The first step sees the untouched input so that it coincides with
        // the nearest-permutation projection.
        let current = if raw.is_empty() { d } else { &rest };
        let perm = match rule {
            BvnRule::MaxTrace => max_trace_on_support(current)?,
            BvnRule::Bottleneck => bottleneck_matching(current)?,
        };
        let alpha = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| rest[[i, j]])
            .fold(f64::INFINITY, f64::min);
        if alpha <= ZERO_TOL {
            // Residual too small to support another perfect matching.
            break;
        }
        for (i, &j) in perm.iter().enumerate() {
            rest[[i, j]] -= alpha;
        }
        if let Some(v) = rest.iter().copied().find(|&v| v < -1e-8) {
            return Err(Error::Numerical(format!("BvN residual entry {v} fell below zero")));
        }
        rest.mapv_inplace(|v| if v.abs() <= ZERO_TOL { 0.0 } else { v.max(0.0) });
        raw.push((alpha, perm));
    }
    if raw.is_empty() {
        return Err(Error::Numerical("BvN input has no positive perfect matching".into()));
    }
    let total: f64 = raw.iter().map(|(a, _)| a).sum();
    let truncated_at = raw.len();
    Ok(BvnDecomposition {
        terms: raw
            .into_iter()
            .map(|(alpha, perm)| BvnTerm {
                alpha,
                weight: alpha / total,
                perm,
            })
            .collect(),
        truncated_at,
    })
}

/// Max-trace permutation; falls back to the support of `d` when the
/// unrestricted optimum uses a zero entry.
fn max_trace_on_support(d: &Array2<f64>) -> Result<Vec<usize>> {
    let free = solve_assignment(&d.mapv(|v| -v))?.perm;
    if free.iter().enumerate().all(|(i, &j)| d[[i, j]] > ZERO_TOL) {
        return Ok(free);
    }
    let n = d.nrows() as f64;
    let forbidden = 2.0 * n * d.iter().fold(1.0f64, |m, v| m.max(v.abs())) + 1.0;
    let cost = d.mapv(|v| if v > ZERO_TOL { -v } else { forbidden });
    Ok(solve_assignment(&cost)?.perm)
}

/// Permutation maximizing the smallest matched entry.
fn bottleneck_matching(d: &Array2<f64>) -> Result<Vec<usize>> {
    let mut levels: Vec<f64> = d.iter().copied().filter(|&v| v > ZERO_TOL).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let feasible = |tau: f64| -> Result<Option<Vec<usize>>> {
        let cost = d.mapv(|v| if v >= tau { 0.0 } else { 1.0 });
        let a = solve_assignment(&cost)?;
        Ok((a.total_cost == 0.0).then_some(a.perm))
    };
    let (mut lo, mut hi) = (0usize, levels.len());
    let mut best = None;
    while lo < hi {
        let mid = (lo + hi) / 2;
        match feasible(levels[mid])? {
            Some(p) => {
                best = Some(p);
                lo = mid + 1;
            }
            None => hi = mid,
        }
    }
    best.ok_or_else(|| Error::Numerical("no perfect matching on the support".into()))
}

/// `m` block permutations, each layer drawn independently from its
/// decomposition. Skip-tied layers share one draw.
pub fn sample_permutations(
    decomps: &[BvnDecomposition],
    spec: &NetworkSpec,
    m: usize,
    seed: u64,
) -> Result<Vec<BlockPermutation>> {
    if decomps.len() != spec.n_hidden() {
        return Err(Error::dim("decompositions per hidden layer", spec.n_hidden(), decomps.len()));
    }
    if decomps.iter().any(|d| d.terms.is_empty()) {
        return Err(Error::Empty("BvN decomposition".into()));
    }
    let mut r = rng::rng(seed);
    let groups = spec.permutation_groups();
    Ok((0..m)
        .map(|_| {
            let mut perms = vec![Vec::new(); spec.n_hidden()];
            for group in &groups {
                let p = decomps[group[0] - 1].sample(&mut r).to_vec();
                for &l in group {
                    perms[l - 1] = p.clone();
                }
            }
            BlockPermutation { perms }
        })
        .collect())
}
