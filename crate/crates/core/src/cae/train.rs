//! Minibatch SGD for layer-wise pretraining and correspondence training.

use super::{accumulate_grad, forward_into, Gradients, Layer, Mlp};
use crate::error::{Error, Result};
use crate::mathutil::permutation;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs_pretrain: usize,
    pub epochs_cae: usize,
    pub lr_pretrain: f64,
    pub lr_cae: f64,
}

impl TrainConfig {
    /// Batch 256; 30 pretraining epochs at 2.5e-4; 120 cAE epochs at 2e-3.
    pub fn small_vocab() -> Self {
        TrainConfig {
            batch_size: 256,
            epochs_pretrain: 30,
            epochs_cae: 120,
            lr_pretrain: 250e-6,
            lr_cae: 2e-3,
        }
    }

    /// Batch 2048; 5 pretraining epochs at 2e-3; 120 cAE epochs at 3.2e-2.
    pub fn large_vocab() -> Self {
        TrainConfig {
            batch_size: 2048,
            epochs_pretrain: 5,
            epochs_cae: 120,
            lr_pretrain: 2e-3,
            lr_cae: 32e-3,
        }
    }

    /// Hidden widths of the large-vocabulary net: nine layers of 100 with a
    /// 13-unit eighth layer.
    pub fn large_vocab_hidden() -> Vec<usize> {
        let mut h = vec![100; 9];
        h[7] = 13;
        h
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.lr_pretrain > 0.0) || !(self.lr_cae > 0.0) {
            return Err(Error::InvalidArgument("batch size and learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// Plain minibatch SGD on `0.5 |target - net(input)|^2`, gradients averaged
/// over each batch. Examples are reshuffled every epoch. Returns the mean
/// loss of each epoch (accumulated while training).
pub fn train_sgd(
    net: &mut Mlp,
    inputs: &[f64],
    targets: &[f64],
    epochs: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let din = net.input_dim();
    let dout = net.output_dim();
    if inputs.len() % din != 0 || targets.len() % dout != 0 || inputs.len() / din != targets.len() / dout {
        return Err(Error::InvalidArgument("inputs and targets disagree in count or width".into()));
    }
    let n = inputs.len() / din;
    if n == 0 {
        return Err(Error::Empty("training data"));
    }
    let mut g = Gradients::zeros_like(net);
    let mut acts = vec![Vec::new()];
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let order = permutation(n, rng);
        let mut total = 0.0;
        for batch in order.chunks(batch_size.max(1)) {
            g.clear();
            for &i in batch {
                acts[0].clear();
                acts[0].extend_from_slice(&inputs[i * din..(i + 1) * din]);
                forward_into(net, &mut acts);
                total += accumulate_grad(net, &acts, &targets[i * dout..(i + 1) * dout], &mut g);
            }
            let step = lr / batch.len() as f64;
            for (l, gl) in net.layers.iter_mut().zip(&g.layers) {
                for (w, d) in l.w.iter_mut().zip(&gl.w) {
                    *w -= step * d;
                }
                for (b, d) in l.b.iter_mut().zip(&gl.b) {
                    *b -= step * d;
                }
            }
        }
        losses.push(total / n as f64);
    }
    Ok(losses)
}

#[derive(Debug, Clone)]
pub struct PretrainResult {
    pub net: Mlp,
    /// Per hidden layer, the mean reconstruction loss of each epoch.
    pub layer_losses: Vec<Vec<f64>>,
}

/// Greedy layer-wise autoencoder pretraining.
///
/// The full net `[D, hidden..., D]` is initialised first. Each hidden layer
/// is then trained as the encoder of a one-hidden-layer autoencoder (tanh
/// encoder, fresh linear decoder) on the encodings produced by the layers
/// below; the decoder is discarded afterwards. The output layer keeps its
/// initial weights.
pub fn pretrain_stacked(
    data: &[f64],
    dim: usize,
    hidden_dims: &[usize],
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<PretrainResult> {
    config.validate()?;
    if data.is_empty() || dim == 0 || data.len() % dim != 0 {
        return Err(Error::Empty("pretraining data"));
    }
    if hidden_dims.is_empty() {
        return Err(Error::InvalidArgument("at least one hidden layer is required".into()));
    }
    let mut dims = vec![dim];
    dims.extend_from_slice(hidden_dims);
    dims.push(dim);
    let mut net = Mlp::init(&dims, rng)?;
    let mut layer_losses = Vec::with_capacity(hidden_dims.len());
    let mut current = data.to_vec();
    for l in 0..hidden_dims.len() {
        let enc = net.layers[l].clone();
        let dec = Layer::init(enc.n_out, enc.n_in, rng);
        let mut ae = Mlp { layers: vec![enc, dec] };
        let losses = train_sgd(
            &mut ae,
            &current,
            &current,
            config.epochs_pretrain,
            config.batch_size,
            config.lr_pretrain,
            rng,
        )?;
        layer_losses.push(losses);
        net.layers[l] = ae.layers.swap_remove(0);
        let layer = &net.layers[l];
        let mut next = Vec::with_capacity(current.len() / layer.n_in * layer.n_out);
        let mut z = vec![0.0; layer.n_out];
        for x in current.chunks_exact(layer.n_in) {
            layer.apply(x, &mut z);
            next.extend(z.iter().map(|v| v.tanh()));
        }
        current = next;
    }
    Ok(PretrainResult { net, layer_losses })
}

/// Correspondence training: input frame `y_a`, target frame `y_b`.
pub fn train_cae(
    net: &mut Mlp,
    pairs: &super::FramePairSet,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    config.validate()?;
    if pairs.dim != net.input_dim() || pairs.dim != net.output_dim() {
        return Err(Error::VectorDim(net.input_dim(), pairs.dim));
    }
    train_sgd(
        net,
        &pairs.inputs,
        &pairs.targets,
        config.epochs_cae,
        config.batch_size,
        config.lr_cae,
        rng,
    )
}
