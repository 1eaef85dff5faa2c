use serde::{Deserialize, Serialize};

/// Pointwise nonlinearity applied after every hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// C1 smoothing of ReLU: quadratic on `[0, delta]`, linear shifted by `delta/2` above.
    HuberizedRelu { delta: f64 },
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(&self, t: f64) -> f64 {
        match *self {
            Activation::Relu => t.max(0.0),
            Activation::HuberizedRelu { delta } => {
                if t <= 0.0 {
                    0.0
                } else if t <= delta {
                    t * t / (2.0 * delta)
                } else {
                    t - delta / 2.0
                }
            }
            Activation::Tanh => t.tanh(),
            Activation::Identity => t,
        }
    }

    /// Derivative at `t`. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::HuberizedRelu { delta } => {
                if t <= 0.0 {
                    0.0
                } else if t <= delta {
                    t / delta
                } else {
                    1.0
                }
            }
            Activation::Tanh => {
                let y = t.tanh();
                1.0 - y * y
            }
            Activation::Identity => 1.0,
        }
    }

    /// Global Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        1.0
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::HuberizedRelu { .. } => "huberized_relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}
