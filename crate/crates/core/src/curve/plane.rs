use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::nn::{evaluate, LossKind, Network, NetworkSpec};
use crate::{Error, Result};

/// Orthonormal 2D coordinates on the plane through three networks.
#[derive(Debug, Clone)]
pub struct PlaneBasis {
    spec: NetworkSpec,
    origin: Vec<f64>,
    e1: Vec<f64>,
    e2: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl PlaneBasis {
    /// `e₁ ∝ θ₂ − θ₁`, `e₂` the Gram–Schmidt remainder of `θ₃ − θ₁`.
    pub fn new(theta1: &Network, theta2: &Network, theta3: &Network) -> Result<Self> {
        theta1.check_same_spec(theta2)?;
        theta1.check_same_spec(theta3)?;
        let origin = theta1.flatten();
        let mut e1 = sub(&theta2.flatten(), &origin);
        let n1 = dot(&e1, &e1).sqrt();
        if n1 < 1e-10 {
            return Err(Error::Numerical("degenerate plane: theta2 coincides with theta1".into()));
        }
        e1.iter_mut().for_each(|v| *v /= n1);
        let d3 = sub(&theta3.flatten(), &origin);
        let proj = dot(&d3, &e1);
        let mut e2: Vec<f64> = d3.iter().zip(&e1).map(|(d, e)| d - proj * e).collect();
        let n2 = dot(&e2, &e2).sqrt();
        if n2 < 1e-10 {
            return Err(Error::Numerical("degenerate plane: the three networks are colinear".into()));
        }
        e2.iter_mut().for_each(|v| *v /= n2);
        Ok(PlaneBasis {
            spec: theta1.spec.clone(),
            origin,
            e1,
            e2,
        })
    }

    pub fn coords(&self, net: &Network) -> (f64, f64) {
        let d = sub(&net.flatten(), &self.origin);
        (dot(&d, &self.e1), dot(&d, &self.e2))
    }

    pub fn point(&self, u: f64, v: f64) -> Result<Network> {
        let flat: Vec<f64> = self
            .origin
            .iter()
            .zip(self.e1.iter().zip(&self.e2))
            .map(|(o, (a, b))| o + u * a + v * b)
            .collect();
        Network::from_flat(&self.spec, &flat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub u: f64,
    pub v: f64,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneGrid {
    /// Row-major over `v`, then `u`.
    pub points: Vec<PlanePoint>,
    /// Plane coordinates of θ₁, θ₂, θ₃.
    pub anchors: [(f64, f64); 3],
    pub resolution: usize,
}

/// Evaluate a `resolution × resolution` grid covering the bounding box of
/// the three anchors, widened by `margin` times its extent on every side.
pub fn plane_grid(
    theta1: &Network,
    theta2: &Network,
    theta3: &Network,
    x: ArrayView2<f64>,
    labels: &[usize],
    resolution: usize,
    margin: f64,
) -> Result<PlaneGrid> {
    if resolution < 2 {
        return Err(Error::Config("plane resolution must be at least 2".into()));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::Config(format!("plane margin must be >= 0, got {margin}")));
    }
    let basis = PlaneBasis::new(theta1, theta2, theta3)?;
    let anchors = [basis.coords(theta1), basis.coords(theta2), basis.coords(theta3)];
    let (mut ulo, mut uhi, mut vlo, mut vhi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(u, v) in &anchors {
        ulo = ulo.min(u);
        uhi = uhi.max(u);
        vlo = vlo.min(v);
        vhi = vhi.max(v);
    }
    let (du, dv) = (margin * (uhi - ulo), margin * (vhi - vlo));
    let (ulo, uhi, vlo, vhi) = (ulo - du, uhi + du, vlo - dv, vhi + dv);
    let step = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (resolution - 1) as f64;
    let mut points = Vec::with_capacity(resolution * resolution);
    for j in 0..resolution {
        let v = step(vlo, vhi, j);
        for i in 0..resolution {
            let u = step(ulo, uhi, i);
            let (loss, accuracy) = evaluate(&basis.point(u, v)?, x, labels, LossKind::CrossEntropy)?;
            points.push(PlanePoint { u, v, loss, accuracy });
        }
    }
    Ok(PlaneGrid {
        points,
        anchors,
        resolution,
    })
}
