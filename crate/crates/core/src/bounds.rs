//! Layer-wise upper bounds on the loss along the straight segment between two
//! networks, before and after permuting the second one.
//!
//! Distances between activation sets are root-mean-square over samples of
//! per-sample Euclidean distances. Every inequality of the recursion holds per
//! sample, and Minkowski's inequality carries it to the RMS aggregate.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::alignment::BlockPermutation;
use crate::nn::{loss, one_hot, spectral_norm, Activation, LossKind, Network, NetworkSpec, SpectralConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundLoss {
    /// `sqrt(mean ‖l − Y‖²)`, Lipschitz constant 1.
    Rmse,
    /// Mean softmax cross-entropy. Its gradient in the logits has norm at
    /// most √2, so `CE(z) ≤ CE(Y) + √2‖z − Y‖` with `Y` the one-hot target.
    #[default]
    CrossEntropy,
}

impl BoundLoss {
    pub fn lipschitz(self) -> f64 {
        match self {
            BoundLoss::Rmse => 1.0,
            BoundLoss::CrossEntropy => std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub l_sigma: f64,
    pub l_loss: f64,
    /// Loss at the targets themselves (zero for RMSE).
    pub loss_offset: f64,
    /// `max(ε₁, ε₂)`.
    pub epsilon: f64,
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub spectral_norms1: Vec<f64>,
    pub spectral_norms2: Vec<f64>,
}

/// Distance bounds of one run; `[layer][t]`, hidden layers only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBounds {
    pub to_start: Vec<Vec<f64>>,
    pub to_end: Vec<Vec<f64>>,
    /// `RMS ‖f_i(1) − f_i(0)‖` per hidden layer.
    pub base: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub t_grid: Vec<f64>,
    pub d_u: DistanceBounds,
    pub d_a: DistanceBounds,
    /// Pointwise bounds using the single `ε`.
    pub b_u_t: Vec<f64>,
    pub b_a_t: Vec<f64>,
    /// Pointwise bounds using `(1−t)ε₁ + tε₂`.
    pub b_u_t_sharp: Vec<f64>,
    pub b_a_t_sharp: Vec<f64>,
    pub b_u: f64,
    pub b_a: f64,
    pub b_u_sharp: f64,
    pub b_a_sharp: f64,
    pub realized_loss_u: Vec<f64>,
    pub realized_loss_a: Vec<f64>,
    pub constants: BoundConstants,
    /// Set when the permutation was not chosen by pre-activation L2 matching.
    pub heuristic: bool,
}

impl BoundReport {
    /// Every realized loss lies below its pointwise bound (up to `tol`).
    pub fn is_valid(&self, tol: f64) -> bool {
        let ok = |b: &[f64], l: &[f64]| b.iter().zip(l).all(|(b, l)| *l <= b + tol);
        ok(&self.b_u_t_sharp, &self.realized_loss_u) && ok(&self.b_a_t_sharp, &self.realized_loss_a)
    }
}

/// Per-sample Euclidean distance aggregated by root mean square.
pub fn rms_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let n = a.nrows().max(1) as f64;
    let ss = Zip::from(a).and(b).fold(0.0, |s, x, y| s + (x - y) * (x - y));
    (ss / n).sqrt()
}

/// Trapezoid rule on an increasing grid.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
        .sum()
}

/// Distance bounds at one `t` for hidden layers `1..L−1`.
///
/// `base[i]` is the endpoint distance of hidden layer `i+1`; `norms1`,
/// `norms2` hold the spectral norms of all `L` weight matrices.
pub fn distance_recursion(base: &[f64], norms1: &[f64], norms2: &[f64], l_sigma: f64, t: f64) -> (Vec<f64>, Vec<f64>) {
    let mut d0 = Vec::with_capacity(base.len());
    let mut d1 = Vec::with_capacity(base.len());
    for (i, &delta) in base.iter().enumerate() {
        let carry = if i == 0 {
            0.0
        } else {
            l_sigma * ((1.0 - t) * norms1[i] * d0[i - 1] + t * norms2[i] * d1[i - 1])
        };
        d0.push(carry + t * delta);
        d1.push(carry + (1.0 - t) * delta);
    }
    (d0, d1)
}

/// Bound on `RMS ‖l(t) − Y‖` minus the endpoint error term.
fn terminal(d0: &[f64], d1: &[f64], norms1: &[f64], norms2: &[f64], l_sigma: f64, t: f64) -> f64 {
    match (d0.last(), d1.last()) {
        (Some(a), Some(b)) => {
            let l = norms1.len() - 1;
            (1.0 - t) * norms1[l] * l_sigma * a + t * norms2[l] * l_sigma * b
        }
        _ => 0.0,
    }
}

struct Run {
    dist: DistanceBounds,
    pointwise: Vec<f64>,
    sharp: Vec<f64>,
    realized: Vec<f64>,
}

fn check_spec(spec: &NetworkSpec) -> Result<f64> {
    if spec.is_residual() {
        return Err(Error::Unsupported("loss bounds require a network without skip connections".into()));
    }
    Ok(spec.activation.lipschitz())
}

/// Shared computation; `labels` is required for the cross-entropy bound.
fn bounds_impl(
    theta1: &Network,
    theta2: &Network,
    p: Option<&BlockPermutation>,
    x: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    labels: Option<&[usize]>,
    t_grid: &[f64],
    kind: BoundLoss,
) -> Result<BoundReport> {
    theta1.check_same_spec(theta2)?;
    let l_sigma = check_spec(&theta1.spec)?;
    crate::curve::validate_grid(t_grid)?;
    if x.nrows() == 0 {
        return Err(Error::Empty("bound dataset".into()));
    }
    if targets.dim() != (x.nrows(), theta1.spec.output_dim()) {
        return Err(Error::dim("bound target rows", x.nrows(), targets.nrows()));
    }
    let realized_of = |net: &Network| -> Result<f64> {
        let logits = net.logits(x)?;
        match kind {
            BoundLoss::Rmse => Ok(rms_distance(logits.view(), targets)),
            BoundLoss::CrossEntropy => {
                let y = labels.ok_or_else(|| Error::Unsupported("cross-entropy bound needs class labels".into()))?;
                loss(logits.view(), y, LossKind::CrossEntropy)
            }
        }
    };
    let loss_offset = match kind {
        BoundLoss::Rmse => 0.0,
        BoundLoss::CrossEntropy => {
            let y = labels.ok_or_else(|| Error::Unsupported("cross-entropy bound needs class labels".into()))?;
            loss(targets, y, LossKind::CrossEntropy)?
        }
    };
    let sc = SpectralConfig::default();
    let norms = |net: &Network| -> Result<Vec<f64>> {
        net.weights.iter().map(|w| spectral_norm(w, sc.tol, sc.max_iters)).collect()
    };
    let norms1 = norms(theta1)?;
    let norms2 = norms(theta2)?;
    let tape1 = theta1.forward_tape(x)?;
    let eps1 = rms_distance(tape1.logits().view(), targets);
    let l_loss = kind.lipschitz();

    let run = |second: &Network| -> Result<(Run, f64)> {
        let tape2 = second.forward_tape(x)?;
        let eps2 = rms_distance(tape2.logits().view(), targets);
        let n_hidden = theta1.spec.n_hidden();
        let base: Vec<f64> = (0..n_hidden)
            .map(|i| rms_distance(tape1.pre[i].view(), tape2.pre[i].view()))
            .collect();
        let eps = eps1.max(eps2);
        let mut dist = DistanceBounds {
            to_start: vec![Vec::new(); n_hidden],
            to_end: vec![Vec::new(); n_hidden],
            base: base.clone(),
        };
        let (mut pointwise, mut sharp, mut realized) = (Vec::new(), Vec::new(), Vec::new());
        for &t in t_grid {
            let (d0, d1) = distance_recursion(&base, &norms1, &norms2, l_sigma, t);
            let term = terminal(&d0, &d1, &norms1, &norms2, l_sigma, t);
            pointwise.push(loss_offset + l_loss * (term + eps));
            sharp.push(loss_offset + l_loss * (term + (1.0 - t) * eps1 + t * eps2));
            for i in 0..n_hidden {
                dist.to_start[i].push(d0[i]);
                dist.to_end[i].push(d1[i]);
            }
            realized.push(realized_of(&Network::combine(&[(1.0 - t, theta1), (t, second)])?)?);
        }
        Ok((
            Run {
                dist,
                pointwise,
                sharp,
                realized,
            },
            eps2,
        ))
    };
    let (u, eps2) = run(theta2)?;
    let a = match p {
        Some(p) => run(&p.apply(theta2)?)?.0,
        None => run(theta2)?.0,
    };
    Ok(BoundReport {
        t_grid: t_grid.to_vec(),
        b_u: trapezoid(t_grid, &u.pointwise),
        b_a: trapezoid(t_grid, &a.pointwise),
        b_u_sharp: trapezoid(t_grid, &u.sharp),
        b_a_sharp: trapezoid(t_grid, &a.sharp),
        d_u: u.dist,
        d_a: a.dist,
        b_u_t: u.pointwise,
        b_a_t: a.pointwise,
        b_u_t_sharp: u.sharp,
        b_a_t_sharp: a.sharp,
        realized_loss_u: u.realized,
        realized_loss_a: a.realized,
        constants: BoundConstants {
            l_sigma,
            l_loss,
            loss_offset,
            epsilon: eps1.max(eps2),
            epsilon1: eps1,
            epsilon2: eps2,
            spectral_norms1: norms1,
            spectral_norms2: norms2,
        },
        heuristic: false,
    })
}

/// Bounds against one-hot targets of `labels`.
pub fn compute_bounds(
    theta1: &Network,
    theta2: &Network,
    p: Option<&BlockPermutation>,
    x: ArrayView2<f64>,
    labels: &[usize],
    t_grid: &[f64],
    kind: BoundLoss,
) -> Result<BoundReport> {
    if labels.len() != x.nrows() {
        return Err(Error::dim("bound labels", x.nrows(), labels.len()));
    }
    let y = one_hot(labels, theta1.spec.output_dim());
    bounds_impl(theta1, theta2, p, x, y.view(), Some(labels), t_grid, kind)
}

/// RMSE bounds against arbitrary real targets.
pub fn compute_bounds_dense(
    theta1: &Network,
    theta2: &Network,
    p: Option<&BlockPermutation>,
    x: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    t_grid: &[f64],
) -> Result<BoundReport> {
    bounds_impl(theta1, theta2, p, x, targets, None, t_grid, BoundLoss::Rmse)
}

/// Largest slack (bound minus realized value) of each inequality class used
/// by the recursion, maximized over the grid and the layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub loss_lipschitz: f64,
    pub activation_lipschitz: f64,
    pub matrix_norm: f64,
    pub linear_triangle: f64,
    pub epsilon_triangle: f64,
    /// Sharp pointwise bound minus realized loss.
    pub total: f64,
    /// Smallest slack seen in any class; negative would mean a violated bound.
    pub min_slack: f64,
}

impl TightnessReport {
    pub fn max_gap(&self) -> f64 {
        [
            self.loss_lipschitz,
            self.activation_lipschitz,
            self.matrix_norm,
            self.linear_triangle,
            self.epsilon_triangle,
            self.total,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Measure every inequality of the RMSE bound on the unaligned segment.
pub fn tightness_probe(theta1: &Network, theta2: &Network, x: ArrayView2<f64>, targets: ArrayView2<f64>, t_grid: &[f64]) -> Result<TightnessReport> {
    let report = compute_bounds_dense(theta1, theta2, None, x, targets, t_grid)?;
    let l_sigma = report.constants.l_sigma;
    let act = theta1.spec.activation;
    let tape1 = theta1.forward_tape(x)?;
    let tape2 = theta2.forward_tape(x)?;
    let n_layers = theta1.n_layers();
    let (mut g_loss, mut g_act, mut g_mat, mut g_lin, mut g_eps) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut min_slack = f64::INFINITY;
    let mut note = |slot: &mut f64, gap: f64| {
        *slot = slot.max(gap);
        min_slack = min_slack.min(gap);
    };
    let sigma = |z: &Array2<f64>| z.mapv(|v| act.apply(v));
    for (k, &t) in t_grid.iter().enumerate() {
        let net = Network::combine(&[(1.0 - t, theta1), (t, theta2)])?;
        let tape = net.forward_tape(x)?;
        let out = tape.logits();
        let err = rms_distance(out.view(), targets);
        note(&mut g_loss, report.constants.l_loss * err - report.realized_loss_u[k]);
        for l in 1..=n_layers {
            // Post-activation differences feeding layer l from the previous one.
            let (h0, h1, h) = if l == 1 {
                (x.to_owned(), x.to_owned(), x.to_owned())
            } else {
                let (a, b, c) = (&tape1.pre[l - 2], &tape2.pre[l - 2], &tape.pre[l - 2]);
                note(&mut g_act, l_sigma * rms_distance(c.view(), a.view()) - rms_distance(sigma(c).view(), sigma(a).view()));
                note(&mut g_act, l_sigma * rms_distance(c.view(), b.view()) - rms_distance(sigma(c).view(), sigma(b).view()));
                (sigma(a), sigma(b), sigma(c))
            };
            let (w1, w2) = (&theta1.weights[l - 1], &theta2.weights[l - 1]);
            let diff0 = &h - &h0;
            let diff1 = &h - &h1;
            let zero0 = Array2::zeros(diff0.raw_dim());
            let m0 = diff0.dot(&w1.t());
            let m1 = diff1.dot(&w2.t());
            let zm = Array2::zeros(m0.raw_dim());
            let n0 = rms_distance(m0.view(), zm.view());
            let n1 = rms_distance(m1.view(), zm.view());
            note(&mut g_mat, report.constants.spectral_norms1[l - 1] * rms_distance(diff0.view(), zero0.view()) - n0);
            note(&mut g_mat, report.constants.spectral_norms2[l - 1] * rms_distance(diff1.view(), zero0.view()) - n1);
            let (f0, f1, f) = (&tape1.pre[l - 1], &tape2.pre[l - 1], &tape.pre[l - 1]);
            if l < n_layers {
                let delta = rms_distance(f0.view(), f1.view());
                note(&mut g_lin, (1.0 - t) * n0 + t * n1 + t * delta - rms_distance(f.view(), f0.view()));
                note(&mut g_lin, (1.0 - t) * n0 + t * n1 + (1.0 - t) * delta - rms_distance(f.view(), f1.view()));
            } else {
                let e1 = rms_distance(f0.view(), targets);
                let e2 = rms_distance(f1.view(), targets);
                note(&mut g_eps, (1.0 - t) * n0 + t * n1 + (1.0 - t) * e1 + t * e2 - err);
            }
        }
    }
    let total = report
        .b_u_t_sharp
        .iter()
        .zip(&report.realized_loss_u)
        .map(|(b, l)| b - l)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_total = report
        .b_u_t_sharp
        .iter()
        .zip(&report.realized_loss_u)
        .map(|(b, l)| b - l)
        .fold(f64::INFINITY, f64::min);
    Ok(TightnessReport {
        loss_lipschitz: g_loss,
        activation_lipschitz: g_act,
        matrix_norm: g_mat,
        linear_triangle: g_lin,
        epsilon_triangle: g_eps,
        total,
        min_slack: min_slack.min(min_total),
    })
}

/// Two-layer ReLU pair of width 3 on which every inequality of the RMSE bound
/// holds with equality.
///
/// `θ₁ = (sI, b₁; sI, 0)`, `θ₂ = (−sI, b₂; −sI, c₂)`. The first-layer biases
/// keep every pre-activation along the segment non-negative, so ReLU acts as
/// the identity; `c₂` makes both endpoints produce the same outputs; and the
/// targets are displaced from those outputs along the first-layer endpoint
/// difference, so every term of every triangle inequality is a non-negative
/// multiple of one vector per sample, with the same multiple for all samples.
#[derive(Debug, Clone)]
pub struct TightInstance {
    pub theta1: Network,
    pub theta2: Network,
    pub x: Array2<f64>,
    pub targets: Array2<f64>,
}

pub fn tight_instance(x: &Array2<f64>, scale: f64, target_offset: f64) -> Result<TightInstance> {
    if x.ncols() != 3 {
        return Err(Error::dim("tight instance input width", 3, x.ncols()));
    }
    if !(scale > 0.0 && target_offset > 0.0) {
        return Err(Error::Config("scale and target offset must be positive".into()));
    }
    let spec = NetworkSpec::new(vec![3, 3, 3], Activation::Relu)?;
    let eye = Array2::<f64>::eye(3);
    let reach = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let b1 = ndarray::Array1::from(vec![scale * reach + 1.0, scale * reach + 2.0, scale * reach + 0.5]);
    let b2 = ndarray::Array1::from(vec![scale * reach + 3.0, scale * reach + 1.5, scale * reach + 2.5]);
    let c1 = ndarray::Array1::zeros(3);
    let c2 = (&b1 + &b2) * scale;
    let theta1 = Network::from_parts(spec.clone(), vec![&eye * scale, &eye * scale], vec![b1, c1])?;
    let theta2 = Network::from_parts(spec, vec![&eye * -scale, &eye * -scale], vec![b2, c2])?;
    let t1 = theta1.forward_tape(x.view())?;
    let t2 = theta2.forward_tape(x.view())?;
    let delta = &t2.pre[0] - &t1.pre[0];
    let targets = t1.logits() - &(delta * target_offset);
    Ok(TightInstance {
        theta1,
        theta2,
        x: x.clone(),
        targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::uniform_grid;
    use crate::rng;
    use rand::Rng as _;

    fn random_x(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::rng(seed);
        Array2::from_shape_fn((n, d), |_| r.random_range(-1.0..1.0))
    }

    #[test]
    fn identical_pair_reduces_to_epsilon() {
        let spec = NetworkSpec::new(vec![2, 5, 5, 3], Activation::Relu).unwrap();
        let net = Network::init(&spec, &mut rng::rng(0)).unwrap();
        let x = random_x(30, 2, 1);
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let grid = uniform_grid(11);
        let r = compute_bounds(&net, &net, None, x.view(), &y, &grid, BoundLoss::CrossEntropy).unwrap();
        let expected = r.constants.loss_offset + r.constants.l_loss * r.constants.epsilon;
        assert!(r.b_u_t.iter().all(|b| (b - expected).abs() < 1e-12));
        assert!(r.d_u.to_start.iter().flatten().all(|&d| d == 0.0));
        assert!(r.is_valid(1e-12));
    }

    #[test]
    fn single_layer_is_endpoint_term() {
        let spec = NetworkSpec::new(vec![2, 3], Activation::Relu).unwrap();
        let mut r = rng::rng(2);
        let a = Network::init(&spec, &mut r).unwrap();
        let b = Network::init(&spec, &mut r).unwrap();
        let x = random_x(20, 2, 3);
        let y: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let grid = uniform_grid(5);
        let rep = compute_bounds(&a, &b, None, x.view(), &y, &grid, BoundLoss::Rmse).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            let want = (1.0 - t) * rep.constants.epsilon1 + t * rep.constants.epsilon2;
            assert!((rep.b_u_t_sharp[k] - want).abs() < 1e-12);
        }
        assert!(rep.d_u.to_start.is_empty());
    }

    #[test]
    fn residual_is_unsupported() {
        let spec = NetworkSpec::new(vec![2, 4, 4, 4, 2], Activation::Relu).unwrap().with_residual(2).unwrap();
        let net = Network::init(&spec, &mut rng::rng(0)).unwrap();
        let x = random_x(4, 2, 0);
        let r = compute_bounds(&net, &net, None, x.view(), &[0, 1, 0, 1], &[0.0, 1.0], BoundLoss::Rmse);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn recursion_is_monotone_in_base() {
        let base = [0.3, 0.2, 0.5];
        let n1 = [1.2, 0.8, 1.5, 0.9];
        let n2 = [0.7, 1.1, 1.3, 1.0];
        for &t in &[0.1, 0.5, 0.9] {
            let (d0, d1) = distance_recursion(&base, &n1, &n2, 1.0, t);
            for i in 0..3 {
                let mut bumped = base;
                bumped[i] += 0.1;
                let (e0, e1) = distance_recursion(&bumped, &n1, &n2, 1.0, t);
                assert!(e0.iter().zip(&d0).all(|(a, b)| a >= b));
                assert!(e1.iter().zip(&d1).all(|(a, b)| a >= b));
            }
        }
        let (d0, d1) = distance_recursion(&base, &n1, &n2, 1.0, 0.0);
        assert_eq!(d0[0], 0.0);
        let (_, e1) = distance_recursion(&base, &n1, &n2, 1.0, 1.0);
        assert_eq!(e1[0], 0.0);
        assert!(d1[0] > 0.0);
    }

    #[test]
    fn constructed_instance_is_tight() {
        let x = random_x(25, 3, 9);
        for scale in [1.0, 0.5] {
            let inst = tight_instance(&x, scale, 0.3).unwrap();
            let rep = tightness_probe(&inst.theta1, &inst.theta2, inst.x.view(), inst.targets.view(), &uniform_grid(21)).unwrap();
            assert!(rep.max_gap() < 1e-6, "{rep:?}");
            assert!(rep.min_slack > -1e-9);
        }
    }

    #[test]
    fn random_pair_is_not_tight() {
        let spec = NetworkSpec::new(vec![3, 3, 3], Activation::Relu).unwrap();
        let mut r = rng::rng(4);
        let a = Network::init(&spec, &mut r).unwrap();
        let b = Network::init(&spec, &mut r).unwrap();
        let x = random_x(25, 3, 5);
        let y = random_x(25, 3, 6);
        let rep = tightness_probe(&a, &b, x.view(), y.view(), &uniform_grid(11)).unwrap();
        assert!(rep.total > 1e-3);
        assert!(rep.min_slack > -1e-9);
    }

    #[test]
    fn trapezoid_exact_for_linear() {
        let t = uniform_grid(11);
        let y: Vec<f64> = t.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((trapezoid(&t, &y) - 2.0).abs() < 1e-14);
    }
}
