//! Forward filtering and backward sampling over one utterance.

use crate::bgmm::MarginalModel;
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::mathutil::{log_sum_exp, sample_log_weights};
use crate::rng::Rng;

/// Prefix log densities `ln alpha[t]` for every frame position `t` (entries
/// stay `-inf` where no span ends) together with the scored candidates.
#[derive(Debug, Clone)]
pub struct ForwardLattice {
    pub utterance: String,
    pub spans: Vec<(usize, usize)>,
    /// Log score of each span: `duration * ln p(x | h-)`.
    pub scores: Vec<f64>,
    pub log_alpha: Vec<f64>,
    /// Span indices ending at each position.
    pub incoming: Vec<Vec<usize>>,
}

impl ForwardLattice {
    pub fn n_frames(&self) -> usize {
        self.log_alpha.len() - 1
    }

    /// `ln alpha[M]`, the log density of the whole utterance.
    pub fn log_total(&self) -> f64 {
        *self.log_alpha.last().unwrap()
    }
}

/// Forward lattice with the segment score `[p(x | h-)]^j`, `j` the number of
/// frames in the segment. The lattice does not depend on any annealing
/// exponent.
pub fn forward_filter(table: &EmbeddingTable, utt: usize, model: &dyn MarginalModel) -> Result<ForwardLattice> {
    let spans = table.spans(utt).to_vec();
    let scores = spans
        .iter()
        .enumerate()
        .map(|(j, &(s, e))| (e - s) as f64 * model.log_marginal(table.entry(utt, j)))
        .collect();
    forward_filter_scores(table.utterance_id(utt), table.n_frames(utt), spans, scores)
}

/// Forward lattice from precomputed span log scores.
pub fn forward_filter_scores(
    utterance: &str,
    n_frames: usize,
    spans: Vec<(usize, usize)>,
    scores: Vec<f64>,
) -> Result<ForwardLattice> {
    assert_eq!(spans.len(), scores.len());
    let mut incoming = vec![Vec::new(); n_frames + 1];
    for (j, &(s, e)) in spans.iter().enumerate() {
        if s >= e || e > n_frames {
            return Err(Error::Segment {
                utterance: utterance.to_string(),
                start: s,
                end: e,
                message: "span outside utterance".into(),
            });
        }
        incoming[e].push(j);
    }
    let mut log_alpha = vec![f64::NEG_INFINITY; n_frames + 1];
    log_alpha[0] = 0.0;
    let mut terms = Vec::new();
    for t in 1..=n_frames {
        terms.clear();
        terms.extend(incoming[t].iter().map(|&j| scores[j] + log_alpha[spans[j].0]));
        if !terms.is_empty() {
            log_alpha[t] = log_sum_exp(&terms);
        }
    }
    if log_alpha[n_frames] == f64::NEG_INFINITY {
        let position = (0..=n_frames)
            .rev()
            .find(|&t| log_alpha[t] > f64::NEG_INFINITY)
            .unwrap_or(0);
        return Err(Error::NoPath {
            utterance: utterance.to_string(),
            position,
        });
    }
    Ok(ForwardLattice {
        utterance: utterance.to_string(),
        spans,
        scores,
        log_alpha,
        incoming,
    })
}

/// Samples a tiling backwards from the end. Each candidate's probability
/// `p(segment) alpha[t - j]` is raised to `exponent` before renormalising.
pub fn backward_sample(lattice: &ForwardLattice, exponent: f64, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut t = lattice.n_frames();
    let mut cands = Vec::new();
    let mut weights = Vec::new();
    while t > 0 {
        cands.clear();
        weights.clear();
        for &j in &lattice.incoming[t] {
            let prev = lattice.log_alpha[lattice.spans[j].0];
            if prev > f64::NEG_INFINITY {
                cands.push(j);
                weights.push(exponent * (lattice.scores[j] + prev));
            }
        }
        let j = cands[sample_log_weights(&weights, rng)];
        out.push(lattice.spans[j]);
        t = lattice.spans[j].0;
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgmm::{GmmState, NgPrior};
    use crate::rng::named_stream;
    use rand::Rng as _;
    use std::collections::HashMap;

    /// All tilings of `0..n` by unit-grid spans, with their log scores.
    fn enumerate(n: usize, score: &dyn Fn(usize, usize) -> f64) -> Vec<(Vec<(usize, usize)>, f64)> {
        let mut out = Vec::new();
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
            let lp = segs.iter().map(|&(a, b)| score(a, b)).sum();
            out.push((segs, lp));
        }
        out
    }

    fn random_scores(n: usize, rng: &mut Rng) -> (Vec<(usize, usize)>, Vec<f64>) {
        let mut spans = Vec::new();
        let mut scores = Vec::new();
        for s in 0..n {
            for e in s + 1..=n {
                spans.push((s, e));
                scores.push(rng.random_range(-3.0..1.0) * (e - s) as f64);
            }
        }
        (spans, scores)
    }

    #[test]
    fn single_frame_recursion() {
        let l = forward_filter_scores("u", 1, vec![(0, 1)], vec![-0.7]).unwrap();
        assert_eq!(l.log_total(), -0.7);
    }

    #[test]
    fn matches_enumeration() {
        let mut rng = named_stream(5, "ffbs-enum");
        for n in 1..=8 {
            let (spans, scores) = random_scores(n, &mut rng);
            let map: HashMap<(usize, usize), f64> = spans.iter().copied().zip(scores.iter().copied()).collect();
            let all = enumerate(n, &|a, b| map[&(a, b)]);
            let brute = log_sum_exp(&all.iter().map(|(_, lp)| *lp).collect::<Vec<_>>());
            let l = forward_filter_scores("u", n, spans, scores).unwrap();
            assert!(((l.log_total() - brute) / brute.abs().max(1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_tiling_always_returned() {
        let l = forward_filter_scores("u", 6, vec![(0, 2), (2, 6)], vec![-1.0, -50.0]).unwrap();
        let mut rng = named_stream(1, "one");
        for _ in 0..20 {
            assert_eq!(backward_sample(&l, 1.0, &mut rng), vec![(0, 2), (2, 6)]);
        }
    }

    #[test]
    fn no_path_is_reported() {
        let err = forward_filter_scores("u", 5, vec![(0, 2), (3, 5)], vec![0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NoPath { position: 2, .. }));
    }

    #[test]
    fn tiny_exponent_is_near_uniform() {
        // at t = 3 the candidates are (0,3), (1,3), (2,3), with very different weights
        let spans = vec![(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];
        let scores = vec![0.0, 0.0, 0.0, -20.0, 0.0, 5.0];
        let l = forward_filter_scores("u", 3, spans, scores).unwrap();
        let mut rng = named_stream(2, "uniform");
        let draws = 60_000;
        let mut counts = HashMap::new();
        for _ in 0..draws {
            let last = *backward_sample(&l, 1e-3, &mut rng).last().unwrap();
            *counts.entry(last.0).or_insert(0usize) += 1;
        }
        for s in 0..3 {
            let f = counts[&s] as f64 / draws as f64;
            assert!((f - 1.0 / 3.0).abs() < 0.02, "start {s}: {f}");
        }
    }

    #[test]
    fn log_shift_invariance() {
        let mut rng = named_stream(8, "shift");
        let (spans, scores) = random_scores(5, &mut rng);
        let shifted: Vec<f64> = spans.iter().zip(&scores).map(|(&(s, e), v)| v + 3.7 * (e - s) as f64).collect();
        let a = forward_filter_scores("u", 5, spans.clone(), scores).unwrap();
        let b = forward_filter_scores("u", 5, spans, shifted).unwrap();
        let mut r1 = named_stream(9, "draw");
        let mut r2 = named_stream(9, "draw");
        for _ in 0..200 {
            assert_eq!(backward_sample(&a, 1.0, &mut r1), backward_sample(&b, 1.0, &mut r2));
        }
    }

    #[test]
    fn gmm_lattice_uses_frame_exponent() {
        use crate::embed::EmbeddingTable;
        let entries = vec![((0, 2), vec![0.6, 0.8]), ((0, 1), vec![1.0, 0.0]), ((1, 2), vec![0.0, 1.0])];
        let t = EmbeddingTable::from_entries(2, vec![("u".into(), 2, entries)]).unwrap();
        let mut g = GmmState::new(2, 1.0, NgPrior::new(2, 0.1, 0.5).unwrap()).unwrap();
        g.add(&[0.6, 0.8], 0).unwrap();
        let l = forward_filter(&t, 0, &g).unwrap();
        let m = |x: &[f64]| g.log_marginal(x);
        let expect = log_sum_exp(&[2.0 * m(&[0.6, 0.8]), m(&[1.0, 0.0]) + m(&[0.0, 1.0])]);
        assert!((l.log_total() - expect).abs() < 1e-12);
    }
}
