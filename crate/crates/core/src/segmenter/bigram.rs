//! Forward filtering under the bigram assignment model.
//!
//! Forward variables are indexed by span: `alpha[(s, e)]` is the density of
//! frames `0..e` with `s..e` the last word. The recursion marginalises over
//! the preceding span `(r, s)`:
//!
//! `alpha[(s, e)] = sum_r [p(x_se | x_rs, h-)]^(e - s) alpha[(r, s)]`
//!
//! where the conditional marginalises both assignments,
//! `p(x1 | x2) = sum_k1 p(x1 | k1) sum_k2 P(k1 | k2) P(k2 | x2)`. The peaked
//! variant replaces the posterior over `k2` by its mode. Spans starting at
//! frame 0 condition on the utterance-start context instead.

use crate::bgmm::{GmmState, LmContext, BigramLm, ScaledPrior};
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::mathutil::{log_sum_exp, sample_log_weights};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BigramApprox {
    #[default]
    Exact,
    Peaked,
}

#[derive(Debug, Clone)]
pub struct BigramLattice {
    pub utterance: String,
    pub n_frames: usize,
    pub spans: Vec<(usize, usize)>,
    /// `ln alpha` per span.
    pub log_alpha: Vec<f64>,
    /// For each span, `(predecessor span or None for the start, log score)`.
    pub incoming: Vec<Vec<(Option<usize>, f64)>>,
}

impl BigramLattice {
    /// `ln sum_{spans ending at t} alpha`.
    pub fn log_marginal_at(&self, t: usize) -> f64 {
        let terms: Vec<f64> = self
            .spans
            .iter()
            .zip(&self.log_alpha)
            .filter(|((_, e), _)| *e == t)
            .map(|(_, a)| *a)
            .collect();
        if t == 0 {
            return 0.0;
        }
        log_sum_exp(&terms)
    }

    pub fn log_total(&self) -> f64 {
        self.log_marginal_at(self.n_frames)
    }
}

/// Builds the span-indexed bigram lattice. LM probabilities (the bigram
/// transition and the unigram prior of the preceding word) are raised to
/// `lm.eta()` and renormalised.
pub fn bigram_forward_filter(
    table: &EmbeddingTable,
    utt: usize,
    gmm: &GmmState,
    lm: &BigramLm,
    approx: BigramApprox,
) -> Result<BigramLattice> {
    let k = gmm.n_components();
    if lm.n_components() != k {
        return Err(Error::InvalidArgument("LM and acoustic model disagree on K".into()));
    }
    let spans = table.spans(utt).to_vec();
    let n = table.n_frames(utt);
    let eta = lm.eta();

    // ln P_eta(k1 | l) for every context, start last
    let trans: Vec<Vec<f64>> = (0..k)
        .map(LmContext::Component)
        .chain([LmContext::Start])
        .map(|l| lm.log_scaled_probs(l))
        .collect();
    let log_prior = ScaledPrior { gmm, eta }.log_priors();

    let lpp: Vec<Vec<f64>> = (0..spans.len())
        .map(|j| {
            let x = table.entry(utt, j);
            (0..k).map(|c| gmm.log_post_pred(x, c)).collect()
        })
        .collect();

    // ln sum_k2 P(k1 | k2) P(k2 | x2) for every span as a predecessor
    let mix: Vec<Vec<f64>> = lpp
        .iter()
        .map(|lp| {
            let joint: Vec<f64> = lp.iter().zip(&log_prior).map(|(a, b)| a + b).collect();
            match approx {
                BigramApprox::Exact => {
                    let z = log_sum_exp(&joint);
                    (0..k)
                        .map(|k1| {
                            let t: Vec<f64> = (0..k).map(|k2| trans[k2][k1] + joint[k2] - z).collect();
                            log_sum_exp(&t)
                        })
                        .collect()
                }
                BigramApprox::Peaked => {
                    let mut best = 0;
                    for c in 1..k {
                        if joint[c] > joint[best] {
                            best = c;
                        }
                    }
                    trans[best].clone()
                }
            }
        })
        .collect();

    let cond = |j1: usize, mixv: &[f64]| -> f64 {
        let t: Vec<f64> = lpp[j1].iter().zip(mixv).map(|(a, b)| a + b).collect();
        log_sum_exp(&t)
    };

    let mut ending: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for (j, &(_, e)) in spans.iter().enumerate() {
        ending[e].push(j);
    }
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by_key(|&j| (spans[j].1, spans[j].0));

    let mut log_alpha = vec![f64::NEG_INFINITY; spans.len()];
    let mut incoming = vec![Vec::new(); spans.len()];
    for &j in &order {
        let (s, e) = spans[j];
        let dur = (e - s) as f64;
        if s == 0 {
            let sc = dur * cond(j, &trans[k]);
            incoming[j].push((None, sc));
            log_alpha[j] = sc;
        } else {
            let mut terms = Vec::new();
            for &p in &ending[s] {
                if log_alpha[p] == f64::NEG_INFINITY {
                    continue;
                }
                let sc = dur * cond(j, &mix[p]);
                incoming[j].push((Some(p), sc));
                terms.push(sc + log_alpha[p]);
            }
            log_alpha[j] = log_sum_exp(&terms);
        }
    }
    let lat = BigramLattice {
        utterance: table.utterance_id(utt).to_string(),
        n_frames: n,
        spans,
        log_alpha,
        incoming,
    };
    if lat.log_total() == f64::NEG_INFINITY {
        return Err(Error::NoPath {
            utterance: lat.utterance.clone(),
            position: n,
        });
    }
    Ok(lat)
}

/// Samples a tiling backwards through a bigram lattice, raising candidate
/// probabilities to `exponent`.
pub fn bigram_backward_sample(lat: &BigramLattice, exponent: f64, rng: &mut Rng) -> Vec<(usize, usize)> {
    let last: Vec<usize> = (0..lat.spans.len())
        .filter(|&j| lat.spans[j].1 == lat.n_frames && lat.log_alpha[j] > f64::NEG_INFINITY)
        .collect();
    let w: Vec<f64> = last.iter().map(|&j| exponent * lat.log_alpha[j]).collect();
    let mut cur = last[sample_log_weights(&w, rng)];
    let mut out = vec![lat.spans[cur]];
    loop {
        let cands: Vec<(usize, f64)> = lat.incoming[cur]
            .iter()
            .filter_map(|&(p, sc)| p.map(|p| (p, exponent * (sc + lat.log_alpha[p]))))
            .collect();
        if cands.is_empty() {
            break;
        }
        let w: Vec<f64> = cands.iter().map(|c| c.1).collect();
        cur = cands[sample_log_weights(&w, rng)].0;
        out.push(lat.spans[cur]);
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgmm::NgPrior;
    use crate::rng::named_stream;
    use crate::segmenter::ffbs::forward_filter;
    use rand::Rng as _;

    fn unit_table(n: usize, rng: &mut Rng) -> EmbeddingTable {
        let mut entries = Vec::new();
        for s in 0..n {
            for e in s + 1..=n {
                entries.push(((s, e), vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]));
            }
        }
        EmbeddingTable::from_entries(2, vec![("u".into(), n, entries)]).unwrap()
    }

    fn trained(k: usize, eta: f64, rng: &mut Rng) -> (GmmState, BigramLm) {
        let mut g = GmmState::new(k, 1.0, NgPrior::new(2, 0.3, 0.5).unwrap()).unwrap();
        let mut lm = BigramLm::new(k, 0.3, 1.0, 1.0, eta).unwrap();
        let mut prev = LmContext::Start;
        for _ in 0..12 {
            let c = rng.random_range(0..k);
            g.add(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)], c).unwrap();
            lm.add(prev, c);
            prev = LmContext::Component(c);
        }
        (g, lm)
    }

    /// Exhaustive oracle: every tiling, every pair of assignments.
    fn brute(table: &EmbeddingTable, g: &GmmState, lm: &BigramLm) -> f64 {
        let n = table.n_frames(0);
        let k = g.n_components();
        let eta = lm.eta();
        let scaled = |l: LmContext| -> Vec<f64> {
            let raw: Vec<f64> = (0..k).map(|c| lm.prob(c, l).powf(eta)).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / z).collect()
        };
        let prior: Vec<f64> = {
            let raw: Vec<f64> = (0..k).map(|c| g.log_assign_prior(c).exp().powf(eta)).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / z).collect()
        };
        let pp = |x: &[f64], c: usize| g.log_post_pred(x, c).exp();
        let mut total = 0.0;
        for mask in 0u32..(1 << (n - 1)) {
            let mut segs = Vec::new();
            let mut s = 0;
            for b in 1..n {
                if mask & (1 << (b - 1)) != 0 {
                    segs.push((s, b));
                    s = b;
                }
            }
            segs.push((s, n));
            let mut prob = 1.0;
            for (i, &(a, b)) in segs.iter().enumerate() {
                let x1 = table.get(0, a, b).unwrap();
                let c = if i == 0 {
                    let p = scaled(LmContext::Start);
                    (0..k).map(|k1| pp(x1, k1) * p[k1]).sum::<f64>()
                } else {
                    let (pa, pb) = segs[i - 1];
                    let x2 = table.get(0, pa, pb).unwrap();
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for k2 in 0..k {
                        den += pp(x2, k2) * prior[k2];
                        let t = scaled(LmContext::Component(k2));
                        for k1 in 0..k {
                            num += pp(x1, k1) * t[k1] * pp(x2, k2) * prior[k2];
                        }
                    }
                    num / den
                };
                prob *= c.powi((b - a) as i32);
            }
            total += prob;
        }
        total.ln()
    }

    #[test]
    fn exact_matches_joint_enumeration() {
        let mut rng = named_stream(21, "bigram-brute");
        for n in 1..=6 {
            for eta in [1.0, 0.5] {
                let t = unit_table(n, &mut rng);
                let (g, lm) = trained(2, eta, &mut rng);
                let lat = bigram_forward_filter(&t, 0, &g, &lm, BigramApprox::Exact).unwrap();
                let b = brute(&t, &g, &lm);
                assert!(((lat.log_total() - b) / b.abs().max(1.0)).abs() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn uniform_lm_reduces_to_unigram() {
        let mut rng = named_stream(22, "bigram-uni");
        for n in 1..=6 {
            let t = unit_table(n, &mut rng);
            let (g, lm) = trained(2, 0.0, &mut rng);
            let lat = bigram_forward_filter(&t, 0, &g, &lm, BigramApprox::Exact).unwrap();
            let uni = forward_filter(&t, 0, &ScaledPrior { gmm: &g, eta: 0.0 }).unwrap();
            for pos in 1..=n {
                assert!((lat.log_marginal_at(pos) - uni.log_alpha[pos]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn single_component_collapses() {
        let mut rng = named_stream(23, "bigram-k1");
        let t = unit_table(4, &mut rng);
        let (g, lm) = trained(1, 1.0, &mut rng);
        for approx in [BigramApprox::Exact, BigramApprox::Peaked] {
            let lat = bigram_forward_filter(&t, 0, &g, &lm, approx).unwrap();
            for (j, inc) in lat.incoming.iter().enumerate() {
                let (s, e) = lat.spans[j];
                let expect = (e - s) as f64 * g.log_post_pred(t.entry(0, j), 0);
                for (_, sc) in inc {
                    assert!((sc - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn backward_sample_tiles() {
        let mut rng = named_stream(24, "bigram-bs");
        let t = unit_table(6, &mut rng);
        let (g, lm) = trained(3, 1.0, &mut rng);
        let lat = bigram_forward_filter(&t, 0, &g, &lm, BigramApprox::Peaked).unwrap();
        for _ in 0..50 {
            let segs = bigram_backward_sample(&lat, 0.5, &mut rng);
            assert_eq!(segs[0].0, 0);
            assert_eq!(segs.last().unwrap().1, 6);
            assert!(segs.windows(2).all(|w| w[0].1 == w[1].0));
        }
    }
}
