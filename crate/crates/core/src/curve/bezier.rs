use ndarray::ArrayView2;

use crate::nn::{backward, Gradients, LossKind, Network};
use crate::{Error, Result};

/// Quadratic Bezier curve `r(t) = (1−t)²θ₁ + 2(1−t)t θ_c + t²θ₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierCurve {
    pub theta1: Network,
    pub theta2: Network,
    pub control: Network,
}

impl BezierCurve {
    pub fn new(theta1: Network, theta2: Network, control: Network) -> Result<Self> {
        theta1.check_same_spec(&theta2)?;
        theta1.check_same_spec(&control)?;
        Ok(BezierCurve {
            theta1,
            theta2,
            control,
        })
    }

    /// Control at the midpoint, so the curve starts as the straight segment.
    pub fn init_linear(theta1: &Network, theta2: &Network) -> Result<Self> {
        let control = Network::combine(&[(0.5, theta1), (0.5, theta2)])?;
        BezierCurve::new(theta1.clone(), theta2.clone(), control)
    }

    /// Bernstein weights of `(θ₁, θ_c, θ₂)` at `t`.
    pub fn coefficients(t: f64) -> (f64, f64, f64) {
        let s = 1.0 - t;
        (s * s, 2.0 * s * t, t * t)
    }

    pub fn point(&self, t: f64) -> Result<Network> {
        check_t(t)?;
        if t == 0.0 {
            return Ok(self.theta1.clone());
        }
        if t == 1.0 {
            return Ok(self.theta2.clone());
        }
        let (a, b, c) = BezierCurve::coefficients(t);
        Network::combine(&[(a, &self.theta1), (b, &self.control), (c, &self.theta2)])
    }

    /// Loss at `r(t)` and its gradient with respect to the control point.
    pub fn control_gradient(&self, t: f64, x: ArrayView2<f64>, labels: &[usize], kind: LossKind) -> Result<(f64, Gradients)> {
        let net = self.point(t)?;
        let (value, mut grad) = backward(&net, x, labels, kind)?;
        grad.scale(BezierCurve::coefficients(t).1);
        Ok((value, grad))
    }
}

pub(crate) fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Config(format!("curve parameter t = {t} outside [0, 1]")));
    }
    Ok(())
}
