//! The curve `r(t) = (1−t)θ₁ + t·Dθ₂ + 2(1−t)t φ` with `D` a block of
//! (relaxed) permutation matrices acting on the hidden units of `θ₂`.

use ndarray::{Array2, ArrayView2, Axis};

use crate::nn::{loss_and_grad, Gradients, LossKind, Network, NetworkSpec};
use crate::Result;

/// `W'_l = D_l W_l D_{l−1}ᵀ`, `b'_l = D_l b_l` with identities at the input
/// and output.
pub fn relaxed_apply(net: &Network, d: &[Array2<f64>]) -> Network {
    let n_layers = net.n_layers();
    let mut out = net.clone();
    for l in 1..=n_layers {
        let mut w = net.weights[l - 1].clone();
        if l > 1 {
            w = w.dot(&d[l - 2].t());
        }
        if l < n_layers {
            w = d[l - 1].dot(&w);
            if net.spec.has_bias {
                out.biases[l - 1] = d[l - 1].dot(&net.biases[l - 1]);
            }
        }
        out.weights[l - 1] = w;
    }
    out
}

/// Gradient with respect to every `D_l` of an objective whose gradient with
/// respect to the weights of `relaxed_apply(net, d)` is `g`.
pub fn relaxed_grad(net: &Network, d: &[Array2<f64>], g: &Gradients) -> Vec<Array2<f64>> {
    let n_layers = net.n_layers();
    (1..n_layers)
        .map(|l| {
            let w = &net.weights[l - 1];
            let right = if l > 1 { g.weights[l - 1].dot(&d[l - 2]) } else { g.weights[l - 1].clone() };
            let mut out = right.dot(&w.t());
            let next = &net.weights[l];
            let left = if l + 1 < n_layers { d[l].dot(next) } else { next.clone() };
            out += &g.weights[l].t().dot(&left);
            if net.spec.has_bias {
                let gb = g.biases[l - 1].view().insert_axis(Axis(1));
                let b = net.biases[l - 1].view().insert_axis(Axis(0));
                out += &gb.dot(&b);
            }
            out
        })
        .collect()
}

/// Sum gradients over skip-tied layers so tied blocks move together.
pub fn tie_groups(spec: &NetworkSpec, grads: &mut [Array2<f64>]) {
    for group in spec.permutation_groups() {
        if group.len() < 2 {
            continue;
        }
        let mut total = grads[group[0] - 1].clone();
        for &l in &group[1..] {
            total += &grads[l - 1];
        }
        for &l in &group {
            grads[l - 1] = total.clone();
        }
    }
}

/// Objective `(1/K) Σ_k L(r(t_k))` over fixed nodes on a fixed sample set.
pub struct CurveObjective<'a> {
    pub theta1: &'a Network,
    pub theta2: &'a Network,
    pub x: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
    pub nodes: &'a [f64],
    pub loss: LossKind,
}

pub struct ObjectiveGrad {
    pub value: f64,
    pub phi: Gradients,
    pub d: Vec<Array2<f64>>,
}

pub fn curve_point(theta1: &Network, moved2: &Network, phi: &Network, t: f64) -> Result<Network> {
    Network::combine(&[(1.0 - t, theta1), (t, moved2), (2.0 * (1.0 - t) * t, phi)])
}

impl CurveObjective<'_> {
    /// Value with `θ₂` already transformed (`moved2 = Dθ₂`).
    pub fn value_moved(&self, moved2: &Network, phi: &Network) -> Result<f64> {
        let mut total = 0.0;
        for &t in self.nodes {
            let net = curve_point(self.theta1, moved2, phi, t)?;
            let logits = net.logits(self.x)?;
            total += crate::nn::loss(logits.view(), self.labels, self.loss)?;
        }
        Ok(total / self.nodes.len() as f64)
    }

    pub fn value(&self, d: &[Array2<f64>], phi: &Network) -> Result<f64> {
        self.value_moved(&relaxed_apply(self.theta2, d), phi)
    }

    pub fn gradient(&self, d: &[Array2<f64>], phi: &Network, want_d: bool) -> Result<ObjectiveGrad> {
        let moved2 = relaxed_apply(self.theta2, d);
        let k = self.nodes.len() as f64;
        let mut value = 0.0;
        let mut g_phi = Gradients::zeros_like(phi);
        let mut g_d: Vec<Array2<f64>> = d.iter().map(|m| Array2::zeros(m.raw_dim())).collect();
        for &t in self.nodes {
            let net = curve_point(self.theta1, &moved2, phi, t)?;
            let tape = net.forward_tape(self.x)?;
            let (v, dlogits) = loss_and_grad(tape.logits().view(), self.labels, self.loss)?;
            let (g, _) = net.backward_from(&tape, &dlogits);
            value += v / k;
            g_phi.add_scaled(2.0 * (1.0 - t) * t / k, &g);
            if want_d {
                for (acc, gl) in g_d.iter_mut().zip(relaxed_grad(self.theta2, d, &g)) {
                    acc.scaled_add(t / k, &gl);
                }
            }
        }
        if want_d {
            tie_groups(&self.theta2.spec, &mut g_d);
        }
        Ok(ObjectiveGrad {
            value,
            phi: g_phi,
            d: g_d,
        })
    }
}

/// Midpoint nodes `(k + ½)/K`.
pub fn midpoint_nodes(k: usize) -> Vec<f64> {
    (0..k).map(|i| (i as f64 + 0.5) / k as f64).collect()
}
