use ndarray::{Array1, Array2, Axis};

use crate::alignment::{solve_assignment, BlockPermutation};
use crate::{Error, Result};

/// One (approximately) doubly stochastic matrix per hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublyStochasticBlock {
    pub mats: Vec<Array2<f64>>,
}

impl DoublyStochasticBlock {
    pub fn from_permutation(p: &BlockPermutation) -> Self {
        DoublyStochasticBlock {
            mats: (1..=p.perms.len()).map(|l| p.matrix(l)).collect(),
        }
    }

    /// Largest `|row sum − 1|` or `|column sum − 1|` over all layers.
    pub fn max_sum_deviation(&self) -> f64 {
        self.mats.iter().map(sum_deviation).fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.mats
            .iter()
            .flat_map(|m| m.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Nearest permutation per layer, `argmax_P trace(Pᵀ D)`.
    pub fn hungarian_projection(&self) -> Result<BlockPermutation> {
        let perms = self
            .mats
            .iter()
            .map(|d| Ok(solve_assignment(&d.mapv(|v| -v))?.perm))
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockPermutation { perms })
    }

    /// `Σ_l ‖D_l − M_l‖_F²` against a permutation.
    pub fn sq_distance_to(&self, p: &BlockPermutation) -> f64 {
        self.mats
            .iter()
            .zip(&p.perms)
            .map(|(d, perm)| {
                d.indexed_iter()
                    .map(|((i, j), &v)| {
                        let target = if perm[i] == j { 1.0 } else { 0.0 };
                        (v - target) * (v - target)
                    })
                    .sum::<f64>()
            })
            .sum()
    }
}

pub fn sum_deviation(m: &Array2<f64>) -> f64 {
    let rows = m.sum_axis(Axis(1));
    let cols = m.sum_axis(Axis(0));
    rows.iter()
        .chain(cols.iter())
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Alternate `iters` times between clamping negatives to zero and the
/// orthogonal projection onto `{X : X1 = 1, Xᵀ1 = 1}`.
pub fn project_matrix(m: &Array2<f64>, iters: usize) -> Array2<f64> {
    let n = m.nrows();
    let nf = n as f64;
    let mut x = m.clone();
    for _ in 0..iters {
        x.mapv_inplace(|v| v.max(0.0));
        let a: Array1<f64> = 1.0 - &x.sum_axis(Axis(1));
        let b: Array1<f64> = 1.0 - &x.sum_axis(Axis(0));
        let sigma = a.sum();
        for ((i, j), v) in x.indexed_iter_mut() {
            *v += (a[i] + b[j]) / nf - sigma / (nf * nf);
        }
    }
    x
}

pub fn project_birkhoff(mats: &[Array2<f64>], iters: usize) -> Result<DoublyStochasticBlock> {
    let mut out = Vec::with_capacity(mats.len());
    for (l, m) in mats.iter().enumerate() {
        if m.nrows() != m.ncols() {
            return Err(Error::dim(format!("layer {} relaxed permutation columns", l + 1), m.nrows(), m.ncols()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("layer {} relaxed permutation", l + 1)));
        }
        out.push(project_matrix(m, iters));
    }
    Ok(DoublyStochasticBlock { mats: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn fixed_points() {
        let p = BlockPermutation {
            perms: vec![vec![2, 0, 1, 3]],
        };
        let d = DoublyStochasticBlock::from_permutation(&p);
        assert_eq!(project_birkhoff(&d.mats, 20).unwrap(), d);
        let u = Array2::from_elem((5, 5), 0.2);
        let pu = project_matrix(&u, 20);
        assert!(pu.iter().all(|v| (v - 0.2).abs() < 1e-15));
        assert_eq!(d.hungarian_projection().unwrap(), p);
        assert_eq!(d.sq_distance_to(&p), 0.0);
    }

    #[test]
    fn gaussian_input_becomes_doubly_stochastic() {
        let mut r = rng::rng(3);
        for _ in 0..20 {
            let m = Array2::from_shape_fn((5, 5), |_| StandardNormal.sample(&mut r));
            let d = project_matrix(&m, 20);
            assert!(sum_deviation(&d) < 1e-4, "{}", sum_deviation(&d));
        }
    }
}
