//! Collapsed Bayesian Gaussian mixture with a fixed spherical covariance.
//!
//! Mixture weights carry a symmetric `Dir(a/K)` prior and component means a
//! spherical Gaussian prior `N(mu0, sigma0^2 I)`; both are integrated out, so
//! the state is only the per-component counts and vector sums. Every score
//! follows the held-out convention: the item being scored must already be
//! absent from the statistics.

mod bigram;

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mathutil::{log_sum_exp, sample_log_weights, LN_2PI};
use crate::rng::Rng;

pub use bigram::{bigram_lm_prob, BigramLm, LmContext};

/// Hyperparameters of the component means and the shared covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct NgPrior {
    pub mu0: Vec<f64>,
    pub sigma0_sq: f64,
    pub sigma_sq: f64,
    pub kappa0: f64,
}

impl NgPrior {
    /// Zero prior mean with `sigma0^2 = sigma^2 / kappa0`.
    pub fn new(dim: usize, sigma_sq: f64, kappa0: f64) -> Result<Self> {
        Self::with_mean(vec![0.0; dim], sigma_sq, kappa0)
    }

    pub fn with_mean(mu0: Vec<f64>, sigma_sq: f64, kappa0: f64) -> Result<Self> {
        if mu0.is_empty() {
            return Err(Error::InvalidArgument("prior mean must be non-empty".into()));
        }
        if !(sigma_sq > 0.0 && kappa0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma_sq ({sigma_sq}) and kappa0 ({kappa0}) must be positive"
            )));
        }
        Ok(NgPrior {
            mu0,
            sigma0_sq: sigma_sq / kappa0,
            sigma_sq,
            kappa0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsMode {
    Add,
    Remove,
}

/// Sufficient statistics of the collapsed mixture.
///
/// Component ids are `0..K`; empty components stay addressable. The
/// posterior-predictive mean and log-normaliser of every component are cached
/// and refreshed on each update.
#[derive(Debug, Clone)]
pub struct GmmState {
    k: usize,
    alpha_a: f64,
    prior: NgPrior,
    counts: Vec<usize>,
    sums: Vec<f64>,
    n: usize,
    pred_mean: Vec<f64>,
    pred_var: Vec<f64>,
    pred_lognorm: Vec<f64>,
}

impl GmmState {
    pub fn new(k: usize, alpha_a: f64, prior: NgPrior) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("K must be positive".into()));
        }
        if !(alpha_a > 0.0) {
            return Err(Error::InvalidArgument("concentration a must be positive".into()));
        }
        let dim = prior.dim();
        let mut s = GmmState {
            k,
            alpha_a,
            counts: vec![0; k],
            sums: vec![0.0; k * dim],
            n: 0,
            pred_mean: vec![0.0; k * dim],
            pred_var: vec![0.0; k],
            pred_lognorm: vec![0.0; k],
            prior,
        };
        for c in 0..k {
            s.refresh(c);
        }
        Ok(s)
    }

    pub fn n_components(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn alpha_a(&self) -> f64 {
        self.alpha_a
    }

    pub fn prior(&self) -> &NgPrior {
        &self.prior
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn count(&self, k: usize) -> usize {
        self.counts[k]
    }

    pub fn sum(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.sums[k * d..(k + 1) * d]
    }

    /// Total number of assigned items.
    pub fn n_total(&self) -> usize {
        self.n
    }

    pub fn n_used(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Posterior-predictive mean vector and per-dimension variance of
    /// component `k`.
    pub fn predictive(&self, k: usize) -> (&[f64], f64) {
        let d = self.dim();
        (&self.pred_mean[k * d..(k + 1) * d], self.pred_var[k])
    }

    /// Adds or removes `x` from component `k`.
    pub fn update_stats(&mut self, x: &[f64], k: usize, mode: StatsMode) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::VectorDim(self.dim(), x.len()));
        }
        if k >= self.k {
            return Err(Error::InvalidArgument(format!("component {k} out of range")));
        }
        let d = self.dim();
        match mode {
            StatsMode::Add => {
                self.counts[k] += 1;
                self.n += 1;
                for (s, v) in self.sums[k * d..(k + 1) * d].iter_mut().zip(x) {
                    *s += v;
                }
            }
            StatsMode::Remove => {
                if self.counts[k] == 0 {
                    return Err(Error::EmptyComponent(k));
                }
                self.counts[k] -= 1;
                self.n -= 1;
                if self.counts[k] == 0 {
                    // drop accumulated rounding so an emptied component is
                    // exactly the prior again
                    self.sums[k * d..(k + 1) * d].fill(0.0);
                } else {
                    for (s, v) in self.sums[k * d..(k + 1) * d].iter_mut().zip(x) {
                        *s -= v;
                    }
                }
            }
        }
        self.refresh(k);
        Ok(())
    }

    pub fn add(&mut self, x: &[f64], k: usize) -> Result<()> {
        self.update_stats(x, k, StatsMode::Add)
    }

    pub fn remove(&mut self, x: &[f64], k: usize) -> Result<()> {
        self.update_stats(x, k, StatsMode::Remove)
    }

    fn refresh(&mut self, k: usize) {
        let d = self.dim();
        let (mean, var) = predictive_params(&self.prior, self.counts[k], &self.sums[k * d..(k + 1) * d]);
        self.pred_mean[k * d..(k + 1) * d].copy_from_slice(&mean);
        self.pred_var[k] = var;
        self.pred_lognorm[k] = -0.5 * d as f64 * (LN_2PI + var.ln());
    }

    /// `ln P(z = k | z_rest)`: `(N_k + a/K) / (N + a)` with counts that
    /// already exclude the held-out item (so `N + a` equals the `N + a - 1`
    /// of the full-count form).
    pub fn log_assign_prior(&self, k: usize) -> f64 {
        (self.counts[k] as f64 + self.alpha_a / self.k as f64).ln() - (self.n as f64 + self.alpha_a).ln()
    }

    /// Log posterior predictive of `x` under component `k`: the product over
    /// dimensions of `N(x_d | mu_N, sigma_N^2 + sigma^2)`.
    pub fn log_post_pred(&self, x: &[f64], k: usize) -> f64 {
        let (mean, var) = self.predictive(k);
        let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
        self.pred_lognorm[k] - 0.5 * sq / var
    }

    /// Log posterior predictive of `x` under `k` as if `x` (currently
    /// assigned to `k`) were held out. Does not mutate the state.
    pub fn log_post_pred_held_out(&self, x: &[f64], k: usize) -> f64 {
        debug_assert!(self.counts[k] > 0);
        let sum: Vec<f64> = self.sum(k).iter().zip(x).map(|(s, v)| s - v).collect();
        let n = self.counts[k] - 1;
        let (mean, var) = if n == 0 {
            predictive_params(&self.prior, 0, &vec![0.0; self.dim()])
        } else {
            predictive_params(&self.prior, n, &sum)
        };
        let sq: f64 = x.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
        -0.5 * self.dim() as f64 * (LN_2PI + var.ln()) - 0.5 * sq / var
    }

    /// Log marginal density of `x`: log-sum-exp over components of the
    /// assignment prior plus posterior predictive.
    pub fn log_marginal(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.k)
            .map(|k| self.log_assign_prior(k) + self.log_post_pred(x, k))
            .collect();
        log_sum_exp(&terms)
    }

    /// Log marginal of `x` currently assigned to `assigned`, evaluated with
    /// `x` held out.
    pub fn log_marginal_held_out(&self, x: &[f64], assigned: usize) -> f64 {
        let kf = self.k as f64;
        let denom = ((self.n - 1) as f64 + self.alpha_a).ln();
        let terms: Vec<f64> = (0..self.k)
            .map(|k| {
                if k == assigned {
                    let c = (self.counts[k] - 1) as f64;
                    (c + self.alpha_a / kf).ln() - denom + self.log_post_pred_held_out(x, k)
                } else {
                    (self.counts[k] as f64 + self.alpha_a / kf).ln() - denom + self.log_post_pred(x, k)
                }
            })
            .collect();
        log_sum_exp(&terms)
    }

    /// Unnormalised log assignment weights for a held-out `x`.
    ///
    /// Unigram: Dirichlet prior plus predictive. Bigram: `eta` times the log
    /// of the interpolated bigram estimate plus predictive.
    pub fn assignment_log_weights(&self, x: &[f64], lm: AssignLm<'_>) -> Vec<f64> {
        (0..self.k)
            .map(|k| {
                let lm_term = match lm {
                    AssignLm::Unigram => self.log_assign_prior(k),
                    AssignLm::Bigram { lm, context } => {
                        if lm.eta() == 0.0 {
                            0.0
                        } else {
                            lm.eta() * lm.prob(k, context).ln()
                        }
                    }
                };
                lm_term + self.log_post_pred(x, k)
            })
            .collect()
    }

    /// Draws a component for held-out `x` and adds `x` to it.
    pub fn sample_assignment(&mut self, x: &[f64], rng: &mut Rng, lm: AssignLm<'_>) -> Result<usize> {
        if x.len() != self.dim() {
            return Err(Error::VectorDim(self.dim(), x.len()));
        }
        let w = self.assignment_log_weights(x, lm);
        let k = sample_log_weights(&w, rng);
        self.add(x, k)?;
        Ok(k)
    }

    /// Text dump: a header with the priors, then `k N_k sum...` per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# K {} a {:?} sigma_sq {:?} kappa0 {:?} dim {}",
            self.k,
            self.alpha_a,
            self.prior.sigma_sq,
            self.prior.kappa0,
            self.dim()
        );
        let _ = writeln!(
            out,
            "# mu0 {}",
            self.prior.mu0.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
        );
        for k in 0..self.k {
            let _ = write!(out, "{} {}", k, self.counts[k]);
            for v in self.sum(k) {
                let _ = write!(out, " {v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_dump(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.dump()).map_err(|e| Error::io(path, e))
    }
}

/// How the assignment prior is formed when sampling a component.
#[derive(Debug, Clone, Copy)]
pub enum AssignLm<'a> {
    Unigram,
    Bigram { lm: &'a BigramLm, context: LmContext },
}

fn predictive_params(prior: &NgPrior, n: usize, sum: &[f64]) -> (Vec<f64>, f64) {
    let nf = n as f64;
    let s0 = prior.sigma0_sq;
    let s = prior.sigma_sq;
    let post_var = s * s0 / (nf * s0 + s);
    let mean = prior
        .mu0
        .iter()
        .zip(sum)
        .map(|(m0, sx)| post_var * (m0 / s0 + sx / s))
        .collect();
    (mean, post_var + s)
}

/// A segment-level density model: anything that can score an embedding's
/// log marginal under the current statistics.
pub trait MarginalModel {
    fn log_marginal(&self, x: &[f64]) -> f64;
}

impl MarginalModel for GmmState {
    fn log_marginal(&self, x: &[f64]) -> f64 {
        GmmState::log_marginal(self, x)
    }
}

/// The mixture marginal with its assignment prior raised to `eta` and
/// renormalised over components. `eta = 0` gives a uniform prior.
#[derive(Debug, Clone, Copy)]
pub struct ScaledPrior<'a> {
    pub gmm: &'a GmmState,
    pub eta: f64,
}

impl ScaledPrior<'_> {
    pub fn log_priors(&self) -> Vec<f64> {
        scaled_log_probs((0..self.gmm.k).map(|k| self.gmm.log_assign_prior(k)), self.eta)
    }
}

impl MarginalModel for ScaledPrior<'_> {
    fn log_marginal(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .log_priors()
            .iter()
            .enumerate()
            .map(|(k, lp)| lp + self.gmm.log_post_pred(x, k))
            .collect();
        log_sum_exp(&terms)
    }
}

/// `eta * lp_k - logsumexp(eta * lp)`; returns the input unchanged for `eta = 1`.
pub(crate) fn scaled_log_probs(log_probs: impl Iterator<Item = f64>, eta: f64) -> Vec<f64> {
    let lp: Vec<f64> = log_probs.collect();
    if eta == 1.0 {
        return lp;
    }
    let scaled: Vec<f64> = lp.iter().map(|v| if eta == 0.0 { 0.0 } else { eta * v }).collect();
    let z = log_sum_exp(&scaled);
    scaled.into_iter().map(|v| v - z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::named_stream;
    use rand::Rng as _;

    fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
        -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
    }

    fn state(k: usize, dim: usize) -> GmmState {
        GmmState::new(k, 1.0, NgPrior::new(dim, 0.005, 0.05).unwrap()).unwrap()
    }

    #[test]
    fn prior_relation_holds() {
        let p = NgPrior::new(3, 0.005, 0.05).unwrap();
        assert!((p.sigma0_sq - 0.1).abs() < 1e-12);
        assert!(NgPrior::new(3, 0.0, 0.05).is_err());
    }

    #[test]
    fn add_to_empty_component() {
        let mut s = state(3, 2);
        s.add(&[0.5, -0.25], 1).unwrap();
        assert_eq!(s.count(1), 1);
        assert_eq!(s.sum(1), &[0.5, -0.25]);
        assert_eq!(s.n_total(), 1);
    }

    #[test]
    fn add_then_remove_restores() {
        let mut s = state(2, 3);
        s.add(&[0.1, 0.2, 0.3], 0).unwrap();
        let before = s.clone();
        s.add(&[0.7, -0.2, 0.9], 0).unwrap();
        s.remove(&[0.7, -0.2, 0.9], 0).unwrap();
        for (a, b) in s.sum(0).iter().zip(before.sum(0)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(s.counts(), before.counts());
    }

    #[test]
    fn remove_from_empty_errors() {
        let mut s = state(2, 1);
        assert!(matches!(s.remove(&[1.0], 1), Err(Error::EmptyComponent(1))));
    }

    #[test]
    fn random_updates_match_recomputation() {
        let dim = 4;
        let mut s = state(5, dim);
        let mut rng = named_stream(11, "bgmm-test");
        let items: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut z: Vec<Option<usize>> = vec![None; items.len()];
        for _ in 0..1000 {
            let i = rng.random_range(0..items.len());
            match z[i] {
                Some(k) => {
                    s.remove(&items[i], k).unwrap();
                    z[i] = None;
                }
                None => {
                    let k = rng.random_range(0..5);
                    s.add(&items[i], k).unwrap();
                    z[i] = Some(k);
                }
            }
        }
        for k in 0..5 {
            let members: Vec<&Vec<f64>> = items.iter().zip(&z).filter(|(_, zk)| **zk == Some(k)).map(|(x, _)| x).collect();
            assert_eq!(s.count(k), members.len());
            for d in 0..dim {
                let direct: f64 = members.iter().map(|x| x[d]).sum();
                assert!((s.sum(k)[d] - direct).abs() < 1e-9);
            }
        }
        assert_eq!(s.n_total(), z.iter().filter(|v| v.is_some()).count());
    }

    #[test]
    fn assign_prior_hand_value() {
        // N_k\i = 5 with 9 other items in total (N = 10 counting the held-out one), a = 1, K = 15
        let mut s = GmmState::new(15, 1.0, NgPrior::new(1, 1.0, 1.0).unwrap()).unwrap();
        for _ in 0..5 {
            s.add(&[0.0], 0).unwrap();
        }
        for _ in 0..4 {
            s.add(&[0.0], 1).unwrap();
        }
        let expected = ((5.0 + 1.0 / 15.0) / 10.0f64).ln();
        assert!((s.log_assign_prior(0) - expected).abs() < 1e-14);
        assert!((s.log_assign_prior(0) - 0.506_666_666_666_666_7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_model_prior_is_uniform() {
        let s = state(15, 2);
        for k in 0..15 {
            assert!((s.log_assign_prior(k) + 15f64.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn priors_normalise() {
        let mut s = state(4, 1);
        for (i, k) in [0, 0, 1, 3, 3, 3].iter().enumerate() {
            s.add(&[i as f64], *k).unwrap();
        }
        let total: f64 = (0..4).map(|k| s.log_assign_prior(k).exp()).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_component_is_prior_predictive() {
        let prior = NgPrior::with_mean(vec![0.3, -0.1], 0.005, 0.05).unwrap();
        let s = GmmState::new(2, 1.0, prior.clone()).unwrap();
        let x = [0.2, 0.4];
        let expected: f64 = x
            .iter()
            .zip(&prior.mu0)
            .map(|(xd, m)| normal_logpdf(*xd, *m, prior.sigma0_sq + prior.sigma_sq))
            .sum();
        assert!((s.log_post_pred(&x, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn conjugate_update_hand_value() {
        // mu0 = 0, sigma0^2 = 1, sigma^2 = 1, one observation at 2, query 0 -> N(0 | 1, 1.5)
        let mut s = GmmState::new(1, 1.0, NgPrior::new(1, 1.0, 1.0).unwrap()).unwrap();
        s.add(&[2.0], 0).unwrap();
        assert!((s.log_post_pred(&[0.0], 0) - normal_logpdf(0.0, 1.0, 1.5)).abs() < 1e-14);
    }

    #[test]
    fn posterior_concentrates() {
        let mut s = GmmState::new(1, 1.0, NgPrior::new(2, 0.005, 0.05).unwrap()).unwrap();
        let m = [0.4, -0.7];
        for _ in 0..1_000_000 {
            s.add(&m, 0).unwrap();
        }
        let (mean, var) = s.predictive(0);
        assert!((mean[0] - m[0]).abs() < 1e-6 && (mean[1] - m[1]).abs() < 1e-6);
        assert!((var - 0.005).abs() < 1e-6);
    }

    #[test]
    fn emptied_component_restores_prior_score_exactly() {
        let mut s = state(2, 3);
        let fresh = s.log_post_pred(&[0.1, 0.2, 0.3], 1);
        let xs = [[0.31, 0.72, -0.13], [0.01, 0.99, 0.5]];
        for x in &xs {
            s.add(x, 1).unwrap();
        }
        for x in &xs {
            s.remove(x, 1).unwrap();
        }
        assert_eq!(s.log_post_pred(&[0.1, 0.2, 0.3], 1), fresh);
    }

    #[test]
    fn single_component_marginal_is_predictive() {
        let mut s = state(1, 2);
        s.add(&[0.3, 0.1], 0).unwrap();
        let x = [0.2, 0.2];
        assert!((s.log_marginal(&x) - s.log_post_pred(&x, 0)).abs() < 1e-12);
    }

    #[test]
    fn marginal_matches_direct_sum() {
        let mut rng = named_stream(3, "marg");
        for k in 1..=10 {
            let mut s = GmmState::new(k, 1.0, NgPrior::new(2, 0.5, 0.5).unwrap()).unwrap();
            for _ in 0..20 {
                let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let c = rng.random_range(0..k);
                s.add(&x, c).unwrap();
            }
            let x = [0.1, -0.3];
            let direct: f64 = (0..k)
                .map(|c| s.log_assign_prior(c).exp() * s.log_post_pred(&x, c).exp())
                .sum();
            assert!((s.log_marginal(&x) - direct.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn held_out_scores_match_removal() {
        let mut s = state(3, 2);
        let pts = [[0.1, 0.2], [0.3, 0.1], [-0.5, 0.4]];
        s.add(&pts[0], 0).unwrap();
        s.add(&pts[1], 0).unwrap();
        s.add(&pts[2], 2).unwrap();
        let held_pp = s.log_post_pred_held_out(&pts[1], 0);
        let held_m = s.log_marginal_held_out(&pts[1], 0);
        let mut t = s.clone();
        t.remove(&pts[1], 0).unwrap();
        assert!((held_pp - t.log_post_pred(&pts[1], 0)).abs() < 1e-10);
        assert!((held_m - t.log_marginal(&pts[1])).abs() < 1e-10);
        // emptying a component through the held-out path
        let held_single = s.log_post_pred_held_out(&pts[2], 2);
        assert!((held_single - s.log_post_pred(&pts[2], 1)).abs() < 1e-12);
    }

    #[test]
    fn scaled_prior_eta_one_and_zero() {
        let mut s = state(3, 2);
        s.add(&[0.1, 0.1], 0).unwrap();
        s.add(&[0.2, 0.1], 0).unwrap();
        let x = [0.15, 0.1];
        let one = ScaledPrior { gmm: &s, eta: 1.0 };
        assert_eq!(MarginalModel::log_marginal(&one, &x), s.log_marginal(&x));
        let zero = ScaledPrior { gmm: &s, eta: 0.0 };
        let uniform: f64 = (0..3).map(|k| s.log_post_pred(&x, k).exp() / 3.0).sum();
        assert!((MarginalModel::log_marginal(&zero, &x) - uniform.ln()).abs() < 1e-12);
    }

    #[test]
    fn dump_lists_every_component() {
        let mut s = state(2, 2);
        s.add(&[0.5, 0.25], 1).unwrap();
        let d = s.dump();
        assert!(d.starts_with("# K 2"));
        assert!(d.contains("\n1 1 0.5 0.25\n"));
    }
}
