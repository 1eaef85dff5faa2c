//! Dense feed-forward network engine: forward and backward passes, losses,
//! seeded SGD training and spectral norms.

mod activation;
mod dataset;
mod loss;
mod network;
mod spec;
mod spectral;
mod train;

pub use activation::Activation;
pub use dataset::{Dataset, Split};
pub use loss::{
    accuracy, loss, loss_and_grad, mse_dense, one_hot, predictions, sample_losses, LossKind,
};
pub use network::{Capture, ForwardOutput, Gradients, Network, Tape};
pub use spec::NetworkSpec;
pub use spectral::{spectral_norm, SpectralConfig};
pub use train::{train_sgd, EpochRecord, SgdConfig, TrainingLog};
pub(crate) use train::train_with;

use ndarray::ArrayView2;

use crate::{Error, Result};

/// Mean loss over a batch and its exact gradient with respect to every
/// weight and bias.
pub fn backward(
    net: &Network,
    inputs: ArrayView2<f64>,
    labels: &[usize],
    kind: LossKind,
) -> Result<(f64, Gradients)> {
    if inputs.nrows() == 0 {
        return Err(Error::Empty("backward pass over an empty batch".into()));
    }
    let tape = net.forward_tape(inputs)?;
    let (value, dlogits) = loss_and_grad(tape.logits().view(), labels, kind)?;
    let (grads, _) = net.backward_from(&tape, &dlogits);
    Ok((value, grads))
}

/// Mean loss and its gradient with respect to the inputs.
pub fn input_gradient(
    net: &Network,
    inputs: ArrayView2<f64>,
    labels: &[usize],
    kind: LossKind,
) -> Result<(f64, ndarray::Array2<f64>)> {
    let tape = net.forward_tape(inputs)?;
    let (value, dlogits) = loss_and_grad(tape.logits().view(), labels, kind)?;
    let (_, dx) = net.backward_from(&tape, &dlogits);
    Ok((value, dx))
}

/// Loss and accuracy of `net` on a feature matrix.
pub fn evaluate(
    net: &Network,
    inputs: ArrayView2<f64>,
    labels: &[usize],
    kind: LossKind,
) -> Result<(f64, f64)> {
    let logits = net.logits(inputs)?;
    let value = loss(logits.view(), labels, kind)?;
    Ok((value, accuracy(logits.view(), labels)))
}
