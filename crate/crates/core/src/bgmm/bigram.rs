//! Interpolated bigram model over component ids.

use crate::error::{Error, Result};

/// Left context of a token: a component id or the utterance start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LmContext {
    Start,
    Component(usize),
}

/// Counts for the interpolated bigram estimate
/// `lambda (N_k + a/K)/(N + a) + (1 - lambda)(N_{k|l} + b/K)/(N_l + b)`.
///
/// Counts follow the held-out convention of the mixture: the token being
/// scored must already be removed. The utterance start is an extra context
/// row, so `bi_counts` has `K + 1` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramLm {
    k: usize,
    lambda: f64,
    a: f64,
    b: f64,
    eta: f64,
    uni_counts: Vec<usize>,
    bi_counts: Vec<usize>,
    ctx_counts: Vec<usize>,
    total: usize,
}

impl BigramLm {
    pub fn new(k: usize, lambda: f64, a: f64, b: f64, eta: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("K must be positive".into()));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArgument(format!("lambda {lambda} outside [0, 1]")));
        }
        if !(a > 0.0 && b > 0.0 && eta >= 0.0) {
            return Err(Error::InvalidArgument("a, b must be positive and eta non-negative".into()));
        }
        Ok(BigramLm {
            k,
            lambda,
            a,
            b,
            eta,
            uni_counts: vec![0; k],
            bi_counts: vec![0; (k + 1) * k],
            ctx_counts: vec![0; k + 1],
            total: 0,
        })
    }

    pub fn n_components(&self) -> usize {
        self.k
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn total(&self) -> usize {
        self.total
    }

    fn row(&self, l: LmContext) -> usize {
        match l {
            LmContext::Start => self.k,
            LmContext::Component(c) => {
                assert!(c < self.k, "context {c} out of range");
                c
            }
        }
    }

    pub fn uni_count(&self, k: usize) -> usize {
        self.uni_counts[k]
    }

    pub fn bi_count(&self, k: usize, l: LmContext) -> usize {
        self.bi_counts[self.row(l) * self.k + k]
    }

    pub fn ctx_count(&self, l: LmContext) -> usize {
        self.ctx_counts[self.row(l)]
    }

    /// Records token `k` following context `l`.
    pub fn add(&mut self, l: LmContext, k: usize) {
        let r = self.row(l);
        self.uni_counts[k] += 1;
        self.bi_counts[r * self.k + k] += 1;
        self.ctx_counts[r] += 1;
        self.total += 1;
    }

    pub fn remove(&mut self, l: LmContext, k: usize) -> Result<()> {
        let r = self.row(l);
        if self.bi_counts[r * self.k + k] == 0 {
            return Err(Error::EmptyComponent(k));
        }
        self.uni_counts[k] -= 1;
        self.bi_counts[r * self.k + k] -= 1;
        self.ctx_counts[r] -= 1;
        self.total -= 1;
        Ok(())
    }

    /// The interpolated estimate `P(k | l)`, unscaled.
    pub fn prob(&self, k: usize, l: LmContext) -> f64 {
        let kf = self.k as f64;
        let uni = (self.uni_counts[k] as f64 + self.a / kf) / (self.total as f64 + self.a);
        let bi = (self.bi_count(k, l) as f64 + self.b / kf) / (self.ctx_count(l) as f64 + self.b);
        self.lambda * uni + (1.0 - self.lambda) * bi
    }

    /// `ln P(k | l)^eta`, renormalised over `k`.
    pub fn log_scaled_probs(&self, l: LmContext) -> Vec<f64> {
        super::scaled_log_probs((0..self.k).map(|k| self.prob(k, l).ln()), self.eta)
    }
}

/// Free-function form of [`BigramLm::prob`].
pub fn bigram_lm_prob(lm: &BigramLm, k: usize, l: LmContext) -> f64 {
    lm.prob(k, l)
}
