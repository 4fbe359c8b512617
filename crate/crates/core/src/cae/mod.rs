//! Feed-forward nets for stacked-autoencoder pretraining and
//! correspondence-autoencoder training.

mod pairs;
mod train;

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

pub use pairs::{
    build_frame_pairs, encode_corpus, format_word_pairs, load_word_pairs, parse_word_pairs, save_word_pairs,
    FramePairSet, SegmentRef, WordPair,
};
pub use train::{pretrain_stacked, train_cae, train_sgd, PretrainResult, TrainConfig};

/// One affine map `z = W a + b`, `W` stored row-major (`n_out x n_in`).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    /// Weights uniform in `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(n_in: usize, n_out: usize, rng: &mut Rng) -> Self {
        let r = (6.0 / (n_in + n_out) as f64).sqrt();
        let w = (0..n_in * n_out).map(|_| rng.random_range(-r..r)).collect();
        Layer {
            n_in,
            n_out,
            w,
            b: vec![0.0; n_out],
        }
    }

    fn apply(&self, a: &[f64], z: &mut [f64]) {
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            *zo = self.b[o] + row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

/// Tanh hidden layers and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Randomly initialised net with layer widths `dims` (input first).
    pub fn init(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        check_dims(dims)?;
        Ok(Mlp {
            layers: dims.windows(2).map(|d| Layer::init(d[0], d[1], rng)).collect(),
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Mlp {
            layers: dims.windows(2).map(|d| Layer::zeros(d[0], d[1])).collect(),
        })
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].n_in];
        d.extend(self.layers.iter().map(|l| l.n_out));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().n_out
    }

    pub fn n_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Text dump: layer widths, then per layer the weight rows and the bias
    /// row.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let dims: Vec<String> = self.layer_dims().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(out, "{}", dims.join(" "));
        for l in &self.layers {
            for row in l.w.chunks(l.n_in) {
                let _ = writeln!(out, "{}", join(row));
            }
            let _ = writeln!(out, "{}", join(&l.b));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.dump()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let nums = |i: usize, l: &str| -> Result<Vec<f64>> {
            l.split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|e| Error::parse(path, i + 1, e.to_string())))
                .collect()
        };
        let (hi, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty net file"))?;
        let dims = header
            .split_whitespace()
            .map(|x| x.parse::<usize>().map_err(|e| Error::parse(path, hi + 1, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        check_dims(&dims)?;
        let mut layers = Vec::new();
        for d in dims.windows(2) {
            let mut layer = Layer::zeros(d[0], d[1]);
            for o in 0..d[1] {
                let (i, l) = lines.next().ok_or_else(|| Error::parse(path, 0, "truncated net file"))?;
                let row = nums(i, l)?;
                if row.len() != d[0] {
                    return Err(Error::parse(path, i + 1, format!("expected {} weights", d[0])));
                }
                layer.w[o * d[0]..(o + 1) * d[0]].copy_from_slice(&row);
            }
            let (i, l) = lines.next().ok_or_else(|| Error::parse(path, 0, "truncated net file"))?;
            let b = nums(i, l)?;
            if b.len() != d[1] {
                return Err(Error::parse(path, i + 1, format!("expected {} biases", d[1])));
            }
            layer.b = b;
            layers.push(layer);
        }
        Ok(Mlp { layers })
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidArgument(format!("bad layer widths {dims:?}")));
    }
    Ok(())
}

/// Activations `a^(0) = y, ..., a^(L)`; hidden layers pass through tanh, the
/// last is linear.
pub fn mlp_forward(net: &Mlp, y: &[f64]) -> Result<Vec<Vec<f64>>> {
    if y.len() != net.input_dim() {
        return Err(Error::VectorDim(net.input_dim(), y.len()));
    }
    let mut acts = Vec::with_capacity(net.layers.len() + 1);
    acts.push(y.to_vec());
    forward_into(net, &mut acts);
    Ok(acts)
}

/// `acts[0]` must hold the input; the rest is overwritten.
pub(crate) fn forward_into(net: &Mlp, acts: &mut Vec<Vec<f64>>) {
    acts.truncate(1);
    let last = net.layers.len() - 1;
    for (l, layer) in net.layers.iter().enumerate() {
        let mut z = vec![0.0; layer.n_out];
        layer.apply(&acts[l], &mut z);
        if l < last {
            z.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(z);
    }
}

/// Gradients with the same shapes as the net.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
        }
    }

    fn clear(&mut self) {
        for l in &mut self.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
    }
}

/// Loss `0.5 |target - output|^2` and its gradient.
pub fn mlp_grad(net: &Mlp, y: &[f64], target: &[f64]) -> Result<(f64, Gradients)> {
    if target.len() != net.output_dim() {
        return Err(Error::VectorDim(net.output_dim(), target.len()));
    }
    let acts = mlp_forward(net, y)?;
    let mut g = Gradients::zeros_like(net);
    let loss = accumulate_grad(net, &acts, target, &mut g);
    Ok((loss, g))
}

/// Adds the gradient for one example to `g`; returns the example's loss.
pub(crate) fn accumulate_grad(net: &Mlp, acts: &[Vec<f64>], target: &[f64], g: &mut Gradients) -> f64 {
    let out = acts.last().unwrap();
    let mut delta: Vec<f64> = out.iter().zip(target).map(|(o, t)| o - t).collect();
    let loss = 0.5 * delta.iter().map(|d| d * d).sum::<f64>();
    for l in (0..net.layers.len()).rev() {
        let layer = &net.layers[l];
        let a = &acts[l];
        let gl = &mut g.layers[l];
        for o in 0..layer.n_out {
            let d = delta[o];
            gl.b[o] += d;
            if d != 0.0 {
                for (gw, x) in gl.w[o * layer.n_in..(o + 1) * layer.n_in].iter_mut().zip(a) {
                    *gw += d * x;
                }
            }
        }
        if l > 0 {
            let mut prev = vec![0.0; layer.n_in];
            for o in 0..layer.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(&layer.w[o * layer.n_in..(o + 1) * layer.n_in]) {
                    *p += d * w;
                }
            }
            // a^(l) = tanh(z^(l)) for hidden layers
            for (p, h) in prev.iter_mut().zip(&acts[l]) {
                *p *= 1.0 - h * h;
            }
            delta = prev;
        }
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{indexed_stream, named_stream};

    #[test]
    fn zero_net_gives_zero_activations() {
        let net = Mlp::zeros(&[3, 4, 2]).unwrap();
        let a = mlp_forward(&net, &[1.0, -2.0, 0.5]).unwrap();
        assert!(a[1..].iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_net_hand_value() {
        let mut net = Mlp::zeros(&[1, 1, 1]).unwrap();
        net.layers[0].w[0] = 1.0;
        net.layers[1].w[0] = 0.7;
        let a = mlp_forward(&net, &[0.4]).unwrap();
        assert_eq!(a[2][0], 0.4f64.tanh() * 0.7);
    }

    #[test]
    fn zero_input_uses_biases_only() {
        let mut rng = named_stream(1, "bias");
        let net = Mlp::init(&[3, 4, 2], &mut rng).unwrap();
        let mut net = net;
        net.layers[0].b = vec![0.1, -0.2, 0.3, 0.0];
        let a = mlp_forward(&net, &[0.0; 3]).unwrap();
        let h: Vec<f64> = net.layers[0].b.iter().map(|b| b.tanh()).collect();
        assert_eq!(a[1], h);
        assert!(mlp_forward(&net, &[0.0; 2]).is_err());
    }

    #[test]
    fn gradient_zero_at_target() {
        let mut rng = named_stream(2, "g0");
        let net = Mlp::init(&[2, 5, 2], &mut rng).unwrap();
        let out = mlp_forward(&net, &[0.3, 0.1]).unwrap().pop().unwrap();
        let (loss, g) = mlp_grad(&net, &[0.3, 0.1], &out).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.layers.iter().all(|l| l.w.iter().chain(&l.b).all(|&v| v == 0.0)));
    }

    #[test]
    fn gradient_scales_with_residual() {
        let mut rng = named_stream(3, "lin");
        let net = Mlp::init(&[2, 4, 3], &mut rng).unwrap();
        let y = [0.2, -0.4];
        let out = mlp_forward(&net, &y).unwrap().pop().unwrap();
        let r = [0.1, -0.3, 0.2];
        let t1: Vec<f64> = out.iter().zip(&r).map(|(o, r)| o - r).collect();
        let t2: Vec<f64> = out.iter().zip(&r).map(|(o, r)| o - 2.5 * r).collect();
        let (_, g1) = mlp_grad(&net, &y, &t1).unwrap();
        let (_, g2) = mlp_grad(&net, &y, &t2).unwrap();
        for (l1, l2) in g1.layers.iter().zip(&g2.layers) {
            for (a, b) in l1.w.iter().chain(&l1.b).zip(l2.w.iter().chain(&l2.b)) {
                assert!((2.5 * a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = indexed_stream(11, "fd", seed);
            let net = Mlp::init(&[3, 8, 8, 3], &mut rng).unwrap();
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, g) = mlp_grad(&net, &y, &t).unwrap();
            let worst = max_fd_error(&net, &y, &t, &g);
            assert!(worst < 1e-5, "seed {seed}: {worst}");
        }
    }

    /// Largest relative deviation between analytic and central-difference
    /// gradients (differences below 1e-10 in absolute terms are ignored).
    pub(crate) fn max_fd_error(net: &Mlp, y: &[f64], t: &[f64], g: &Gradients) -> f64 {
        let h = 1e-5;
        let loss = |n: &Mlp| mlp_grad(n, y, t).unwrap().0;
        let mut worst = 0.0f64;
        for l in 0..net.layers.len() {
            let np = net.layers[l].w.len() + net.layers[l].b.len();
            for p in 0..np {
                let mut plus = net.clone();
                let mut minus = net.clone();
                let nw = net.layers[l].w.len();
                let (pp, mm, ga) = if p < nw {
                    (&mut plus.layers[l].w[p], &mut minus.layers[l].w[p], g.layers[l].w[p])
                } else {
                    (&mut plus.layers[l].b[p - nw], &mut minus.layers[l].b[p - nw], g.layers[l].b[p - nw])
                };
                *pp += h;
                *mm -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let diff = (fd - ga).abs();
                if diff > 1e-10 {
                    worst = worst.max(diff / fd.abs().max(ga.abs()));
                }
            }
        }
        worst
    }

    #[test]
    fn dump_round_trip() {
        let mut rng = named_stream(4, "dump");
        let net = Mlp::init(&[3, 5, 2, 3], &mut rng).unwrap();
        let back = Mlp::parse(&net.dump(), Path::new("net")).unwrap();
        assert_eq!(net, back);
        assert!(net.dump().starts_with("3 5 2 3\n"));
    }
}
