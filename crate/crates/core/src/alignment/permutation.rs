use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::nn::{Network, NetworkSpec};
use crate::rng::Rng;
use crate::{Error, Result};

/// One permutation per hidden layer (`P = blockdiag(P_1, …, P_{L-1})`).
///
/// `perms[l - 1][i]` is the index of the unit of the source network that
/// becomes unit `i` of layer `l` in the permuted network. Input and output
/// layers keep their ordering and have no entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockPermutation {
    pub perms: Vec<Vec<usize>>,
}

impl BlockPermutation {
    pub fn identity(spec: &NetworkSpec) -> Self {
        BlockPermutation {
            perms: (1..=spec.n_hidden())
                .map(|l| (0..spec.width(l)).collect())
                .collect(),
        }
    }

    pub fn new(perms: Vec<Vec<usize>>, spec: &NetworkSpec) -> Result<Self> {
        let bp = BlockPermutation { perms };
        bp.validate(spec)?;
        Ok(bp)
    }

    /// Uniformly random permutation; layers tied by skip connections share one.
    pub fn random(spec: &NetworkSpec, rng: &mut Rng) -> Self {
        let mut perms: Vec<Vec<usize>> = (1..=spec.n_hidden())
            .map(|l| (0..spec.width(l)).collect())
            .collect();
        for group in spec.permutation_groups() {
            let mut p: Vec<usize> = (0..spec.width(group[0])).collect();
            p.shuffle(rng);
            for &l in &group {
                perms[l - 1] = p.clone();
            }
        }
        BlockPermutation { perms }
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if self.perms.len() != spec.n_hidden() {
            return Err(Error::dim("permutation layer count", spec.n_hidden(), self.perms.len()));
        }
        for (i, p) in self.perms.iter().enumerate() {
            let l = i + 1;
            if p.len() != spec.width(l) {
                return Err(Error::dim(format!("layer {l} permutation length"), spec.width(l), p.len()));
            }
            if !is_permutation(p) {
                return Err(Error::InvalidSpec(format!("layer {l} entry is not a bijection")));
            }
        }
        for group in spec.permutation_groups() {
            if group.iter().any(|&l| self.perms[l - 1] != self.perms[group[0] - 1]) {
                return Err(Error::InvalidSpec(format!(
                    "skip-tied layers {group:?} must share one permutation"
                )));
            }
        }
        Ok(())
    }

    pub fn layer(&self, l: usize) -> &[usize] {
        &self.perms[l - 1]
    }

    pub fn is_identity(&self) -> bool {
        self.perms
            .iter()
            .all(|p| p.iter().enumerate().all(|(i, &j)| i == j))
    }

    /// Permutation equivalent to applying `self` first and then `next`.
    pub fn then(&self, next: &BlockPermutation) -> BlockPermutation {
        BlockPermutation {
            perms: self
                .perms
                .iter()
                .zip(&next.perms)
                .map(|(a, b)| b.iter().map(|&j| a[j]).collect())
                .collect(),
        }
    }

    pub fn inverse(&self) -> BlockPermutation {
        BlockPermutation {
            perms: self
                .perms
                .iter()
                .map(|p| {
                    let mut inv = vec![0; p.len()];
                    for (i, &j) in p.iter().enumerate() {
                        inv[j] = i;
                    }
                    inv
                })
                .collect(),
        }
    }

    /// Number of units whose index changes, summed over layers.
    pub fn moved(&self) -> usize {
        self.perms
            .iter()
            .map(|p| p.iter().enumerate().filter(|(i, &j)| *i != j).count())
            .sum()
    }

    /// `‖P − Q‖_F²` summed over layers.
    pub fn sq_distance(&self, other: &BlockPermutation) -> f64 {
        self.perms
            .iter()
            .zip(&other.perms)
            .map(|(a, b)| 2 * a.iter().zip(b).filter(|(x, y)| x != y).count())
            .sum::<usize>() as f64
    }

    /// Dense permutation matrix of hidden layer `l`: `M[i][perm[i]] = 1`, so
    /// `(M v)_i = v_{perm[i]}`.
    pub fn matrix(&self, l: usize) -> Array2<f64> {
        let p = self.layer(l);
        let mut m = Array2::zeros((p.len(), p.len()));
        for (i, &j) in p.iter().enumerate() {
            m[[i, j]] = 1.0;
        }
        m
    }

    /// The network `Pθ`: rows of `W_l` and entries of `b_l` reordered by
    /// `P_l`, columns of `W_{l+1}` by `P_l` as well.
    pub fn apply(&self, net: &Network) -> Result<Network> {
        self.validate(&net.spec)?;
        let n_layers = net.n_layers();
        let ident = |w: usize| -> Vec<usize> { (0..w).collect() };
        let mut out = net.clone();
        for l in 1..=n_layers {
            let rows = if l < n_layers {
                self.perms[l - 1].clone()
            } else {
                ident(net.spec.width(l))
            };
            let cols = if l > 1 {
                self.perms[l - 2].clone()
            } else {
                ident(net.spec.width(0))
            };
            let w = &net.weights[l - 1];
            out.weights[l - 1] = Array2::from_shape_fn(w.raw_dim(), |(i, j)| w[[rows[i], cols[j]]]);
            if net.spec.has_bias {
                let b = &net.biases[l - 1];
                out.biases[l - 1] = Array1::from_shape_fn(b.len(), |i| b[rows[i]]);
            }
        }
        Ok(out)
    }
}

pub fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    for &j in p {
        if j >= p.len() || seen[j] {
            return false;
        }
        seen[j] = true;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Capture};
    use crate::rng;

    #[test]
    fn apply_preserves_function() {
        let spec = NetworkSpec::new(vec![3, 5, 4, 2], Activation::Relu).unwrap();
        let mut r = rng::rng(5);
        let net = Network::init(&spec, &mut r).unwrap();
        let p = BlockPermutation::random(&spec, &mut r);
        let pnet = p.apply(&net).unwrap();
        let x = ndarray::Array2::from_shape_fn((7, 3), |(i, j)| (i as f64 - 3.0) * 0.3 + j as f64);
        let a = net.logits(x.view()).unwrap();
        let b = pnet.logits(x.view()).unwrap();
        let diff = (&a - &b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-12);
        // Hidden units are a reordering.
        let h1 = net.forward(x.view(), Capture::PostActivations).unwrap().captured.unwrap();
        let h2 = pnet.forward(x.view(), Capture::PostActivations).unwrap().captured.unwrap();
        for (l, (a, b)) in h1.iter().zip(&h2).enumerate() {
            for (i, &src) in p.perms[l].iter().enumerate() {
                let d = (&b.column(i) - &a.column(src)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(d < 1e-12);
            }
        }
    }

    #[test]
    fn then_composes_application() {
        let spec = NetworkSpec::new(vec![2, 6, 6, 2], Activation::Tanh).unwrap();
        let mut r = rng::rng(9);
        let net = Network::init(&spec, &mut r).unwrap();
        let p = BlockPermutation::random(&spec, &mut r);
        let q = BlockPermutation::random(&spec, &mut r);
        let seq = q.apply(&p.apply(&net).unwrap()).unwrap();
        let once = p.then(&q).apply(&net).unwrap();
        assert_eq!(seq, once);
        assert!(p.then(&p.inverse()).is_identity());
    }

    #[test]
    fn rejects_non_bijection() {
        let spec = NetworkSpec::new(vec![2, 3, 2], Activation::Relu).unwrap();
        assert!(BlockPermutation::new(vec![vec![0, 0, 1]], &spec).is_err());
        assert!(BlockPermutation::new(vec![vec![0, 1]], &spec).is_err());
    }

    #[test]
    fn residual_groups_share_random_permutation() {
        let spec = NetworkSpec::new(vec![2, 6, 6, 6, 2], Activation::Relu)
            .unwrap()
            .with_residual(2)
            .unwrap();
        let p = BlockPermutation::random(&spec, &mut rng::rng(1));
        assert_eq!(p.perms[0], p.perms[2]);
        let bad = BlockPermutation {
            perms: vec![vec![0, 1, 2, 3, 4, 5], vec![0, 1, 2, 3, 4, 5], vec![1, 0, 2, 3, 4, 5]],
        };
        assert!(bad.validate(&spec).is_err());
    }

    #[test]
    fn squared_distance_counts_moved_entries() {
        let a = BlockPermutation { perms: vec![vec![0, 1, 2]] };
        let b = BlockPermutation { perms: vec![vec![1, 0, 2]] };
        assert_eq!(a.sq_distance(&b), 4.0);
        let m = b.matrix(1);
        assert_eq!(m[[0, 1]], 1.0);
        assert_eq!(m.sum(), 3.0);
    }
}
