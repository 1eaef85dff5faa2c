use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::NetworkSpec;
use crate::rng::Rng;
use crate::{Error, Result};

/// Concrete weights of a [`NetworkSpec`].
///
/// `weights[l - 1]` is `W_l` with shape `(m_l, m_{l-1})`; `biases` holds one
/// vector per layer when the spec has biases and is empty otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Same shape family as a network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capture {
    None,
    PreActivations,
    PostActivations,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Array2<f64>,
    /// One `(n_samples, m_l)` matrix per hidden layer; index 0 is layer 1.
    pub captured: Option<Vec<Array2<f64>>>,
}

/// Intermediate values of a forward pass kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Tape {
    pub input: Array2<f64>,
    /// Pre-activations of layers `1..=L`; the last entry holds the logits.
    pub pre: Vec<Array2<f64>>,
    /// Post-activations (including skip additions) of hidden layers `1..L-1`.
    pub post: Vec<Array2<f64>>,
}

impl Tape {
    pub fn logits(&self) -> &Array2<f64> {
        self.pre.last().unwrap()
    }
}

impl Network {
    /// Kaiming-uniform initialization scaled by fan-in.
    pub fn init(spec: &NetworkSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut weights = Vec::with_capacity(spec.n_layers());
        let mut biases = Vec::new();
        for l in 1..=spec.n_layers() {
            let fan_in = spec.width(l - 1);
            let fan_out = spec.width(l);
            let bound = (6.0 / fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound));
            weights.push(w);
            if spec.has_bias {
                let b_bound = 1.0 / (fan_in as f64).sqrt();
                biases.push(Array1::from_shape_fn(fan_out, |_| {
                    rng.random_range(-b_bound..b_bound)
                }));
            }
        }
        Ok(Network {
            spec: spec.clone(),
            weights,
            biases,
        })
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        let weights = (1..=spec.n_layers())
            .map(|l| Array2::zeros((spec.width(l), spec.width(l - 1))))
            .collect();
        let biases = if spec.has_bias {
            (1..=spec.n_layers())
                .map(|l| Array1::zeros(spec.width(l)))
                .collect()
        } else {
            Vec::new()
        };
        Network {
            spec: spec.clone(),
            weights,
            biases,
        }
    }

    pub fn from_parts(
        spec: NetworkSpec,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self> {
        let net = Network {
            spec,
            weights,
            biases,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let spec = &self.spec;
        if self.weights.len() != spec.n_layers() {
            return Err(Error::dim("weight layer count", spec.n_layers(), self.weights.len()));
        }
        for (i, w) in self.weights.iter().enumerate() {
            let l = i + 1;
            if w.nrows() != spec.width(l) {
                return Err(Error::dim(format!("layer {l} weight rows"), spec.width(l), w.nrows()));
            }
            if w.ncols() != spec.width(l - 1) {
                return Err(Error::dim(
                    format!("layer {l} weight cols"),
                    spec.width(l - 1),
                    w.ncols(),
                ));
            }
        }
        let expected_biases = if spec.has_bias { spec.n_layers() } else { 0 };
        if self.biases.len() != expected_biases {
            return Err(Error::dim("bias layer count", expected_biases, self.biases.len()));
        }
        for (i, b) in self.biases.iter().enumerate() {
            if b.len() != spec.width(i + 1) {
                return Err(Error::dim(format!("layer {} bias", i + 1), spec.width(i + 1), b.len()));
            }
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn n_layers(&self) -> usize {
        self.spec.n_layers()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim() {
            return Err(Error::dim("layer 1 input width", self.spec.input_dim(), x.ncols()));
        }
        Ok(())
    }

    /// Full forward pass retaining every intermediate value.
    pub fn forward_tape(&self, x: ArrayView2<f64>) -> Result<Tape> {
        self.check_input(&x)?;
        let n_layers = self.n_layers();
        let act = self.spec.activation;
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(n_layers - 1);
        for l in 1..=n_layers {
            let w = &self.weights[l - 1];
            let mut z = if l == 1 {
                x.dot(&w.t())
            } else {
                post[l - 2].dot(&w.t())
            };
            if self.spec.has_bias {
                z += &self.biases[l - 1];
            }
            if l < n_layers {
                let mut h = z.mapv(|v| act.apply(v));
                if let Some(src) = self.spec.skip_source(l) {
                    h += &post[src - 1];
                }
                post.push(h);
            }
            pre.push(z);
        }
        Ok(Tape {
            input: x.to_owned(),
            pre,
            post,
        })
    }

    pub fn forward(&self, x: ArrayView2<f64>, capture: Capture) -> Result<ForwardOutput> {
        let mut tape = self.forward_tape(x)?;
        let logits = tape.pre.pop().unwrap();
        let captured = match capture {
            Capture::None => None,
            Capture::PreActivations => Some(tape.pre),
            Capture::PostActivations => Some(tape.post),
        };
        Ok(ForwardOutput { logits, captured })
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x, Capture::None)?.logits)
    }

    /// Backpropagate `dlogits` (gradient of the objective w.r.t. the logits)
    /// through a recorded tape. Returns parameter gradients and the gradient
    /// w.r.t. the inputs.
    pub fn backward_from(&self, tape: &Tape, dlogits: &Array2<f64>) -> (Gradients, Array2<f64>) {
        let n_layers = self.n_layers();
        let act = self.spec.activation;
        let mut gw: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); n_layers];
        let mut gb: Vec<Array1<f64>> = Vec::new();
        if self.spec.has_bias {
            gb = vec![Array1::zeros(0); n_layers];
        }
        // dh[k] accumulates d(objective)/d(X_k) for k = 0..L-1.
        let mut dh: Vec<Option<Array2<f64>>> = vec![None; n_layers];
        let mut dz = dlogits.clone();
        for l in (1..=n_layers).rev() {
            let input = if l == 1 { &tape.input } else { &tape.post[l - 2] };
            gw[l - 1] = dz.t().dot(input);
            if self.spec.has_bias {
                gb[l - 1] = dz.sum_axis(Axis(0));
            }
            let d_input = dz.dot(&self.weights[l - 1]);
            accumulate(&mut dh[l - 1], d_input);
            if l == 1 {
                break;
            }
            let k = l - 1;
            let dhk = dh[k].take().unwrap();
            if let Some(src) = self.spec.skip_source(k) {
                accumulate(&mut dh[src], dhk.clone());
            }
            let mut next = dhk;
            Zip::from(&mut next)
                .and(&tape.pre[k - 1])
                .for_each(|g, &z| *g *= act.derivative(z));
            dz = next;
        }
        let dx = dh[0].take().unwrap();
        (
            Gradients {
                weights: gw,
                biases: gb,
            },
            dx,
        )
    }

    /// Elementwise linear combination `Σ c_i θ_i` of same-spec networks.
    pub fn combine(terms: &[(f64, &Network)]) -> Result<Network> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::Empty("linear combination with no terms".into()))?;
        for (_, net) in terms.iter().skip(1) {
            first.check_same_spec(net)?;
        }
        let mut out = Network::zeros(&first.spec);
        for &(c, net) in terms {
            out.add_scaled_net(c, net);
        }
        Ok(out)
    }

    pub fn check_same_spec(&self, other: &Network) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::SpecMismatch(format!(
                "{:?} vs {:?}",
                self.spec.layer_widths, other.spec.layer_widths
            )));
        }
        Ok(())
    }

    pub fn add_scaled_net(&mut self, alpha: f64, other: &Network) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            w.scaled_add(alpha, o);
        }
        for (b, o) in self.biases.iter_mut().zip(&other.biases) {
            b.scaled_add(alpha, o);
        }
    }

    pub fn add_scaled_grad(&mut self, alpha: f64, grad: &Gradients) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            w.scaled_add(alpha, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grad.biases) {
            b.scaled_add(alpha, g);
        }
    }

    /// Parameters flattened layer by layer: weights row-major, then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.n_params());
        for l in 0..self.n_layers() {
            out.extend(self.weights[l].iter().copied());
            if self.spec.has_bias {
                out.extend(self.biases[l].iter().copied());
            }
        }
        out
    }

    pub fn from_flat(spec: &NetworkSpec, flat: &[f64]) -> Result<Network> {
        if flat.len() != spec.n_params() {
            return Err(Error::dim("flat parameter vector", spec.n_params(), flat.len()));
        }
        let mut net = Network::zeros(spec);
        let mut pos = 0;
        for l in 0..spec.n_layers() {
            for v in net.weights[l].iter_mut() {
                *v = flat[pos];
                pos += 1;
            }
            if spec.has_bias {
                for v in net.biases[l].iter_mut() {
                    *v = flat[pos];
                    pos += 1;
                }
            }
        }
        Ok(net)
    }

    pub fn sq_distance(&self, other: &Network) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.weights.iter().zip(&other.weights) {
            acc += Zip::from(a).and(b).fold(0.0, |s, x, y| s + (x - y) * (x - y));
        }
        for (a, b) in self.biases.iter().zip(&other.biases) {
            acc += Zip::from(a).and(b).fold(0.0, |s, x, y| s + (x - y) * (x - y));
        }
        acc
    }
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for w in &mut self.weights {
            *w *= alpha;
        }
        for b in &mut self.biases {
            *b *= alpha;
        }
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &Gradients) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            w.scaled_add(alpha, o);
        }
        for (b, o) in self.biases.iter_mut().zip(&other.biases) {
            b.scaled_add(alpha, o);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..self.weights.len() {
            out.extend(self.weights[l].iter().copied());
            if let Some(b) = self.biases.get(l) {
                out.extend(b.iter().copied());
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, value: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &value,
        None => *slot = Some(value),
    }
}
