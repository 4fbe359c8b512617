//! Blocked Gibbs sampling of utterance segmentations.
//!
//! Each utterance is resegmented as a block: its segments are removed from
//! the acoustic model, a forward lattice over allowed spans is built from the
//! remaining statistics, a tiling is sampled backwards, and the new segments
//! are assigned to components.

mod bigram;
mod chain;
mod ffbs;

use std::collections::HashMap;

use crate::corpus::{Corpus, Utterance};
use crate::error::{Error, Result};

pub use bigram::{bigram_backward_sample, bigram_forward_filter, BigramApprox, BigramLattice};
pub use chain::{
    format_chain_summary, run_chain, ChainRecord, IterSummary, LmMode, SamplerConfig, Segment, SegmentationState,
};
pub use ffbs::{backward_sample, forward_filter, forward_filter_scores, ForwardLattice};

/// Where word boundaries may fall and how long words may be.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    pub boundary_interval_frames: usize,
    pub min_dur_frames: usize,
    pub max_dur_frames: usize,
    /// Per-utterance candidate boundary positions (syllable mode). `None`
    /// selects grid mode.
    pub allowed_positions: Option<HashMap<String, Vec<usize>>>,
    pub max_units_per_word: usize,
}

impl Constraints {
    /// Boundaries every `interval` frames, words of `min..=max` frames.
    pub fn grid(interval: usize, min_dur: usize, max_dur: usize) -> Result<Self> {
        let c = Constraints {
            boundary_interval_frames: interval,
            min_dur_frames: min_dur,
            max_dur_frames: max_dur,
            allowed_positions: None,
            max_units_per_word: usize::MAX,
        };
        c.validate()?;
        Ok(c)
    }

    /// Boundaries only at the given positions, at most `max_units` units per
    /// word and at least `min_dur` frames.
    pub fn syllable(positions: HashMap<String, Vec<usize>>, max_units: usize, min_dur: usize) -> Result<Self> {
        let positions = positions
            .into_iter()
            .map(|(k, mut v)| {
                v.sort_unstable();
                v.dedup();
                (k, v)
            })
            .collect();
        let c = Constraints {
            boundary_interval_frames: 1,
            min_dur_frames: min_dur.max(1),
            max_dur_frames: usize::MAX,
            allowed_positions: Some(positions),
            max_units_per_word: max_units,
        };
        c.validate()?;
        Ok(c)
    }

    /// Grid mode from durations in milliseconds, rounded to frames.
    pub fn grid_ms(interval_ms: f64, min_ms: f64, max_ms: f64, frame_period_ms: f64) -> Result<Self> {
        use crate::corpus::ms_to_frames;
        Self::grid(
            ms_to_frames(interval_ms, frame_period_ms).max(1),
            ms_to_frames(min_ms, frame_period_ms).max(1),
            ms_to_frames(max_ms, frame_period_ms).max(1),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.boundary_interval_frames == 0 || self.min_dur_frames == 0 || self.max_units_per_word == 0 {
            return Err(Error::InvalidArgument(
                "boundary interval, minimum duration and unit cap must be positive".into(),
            ));
        }
        if self.min_dur_frames > self.max_dur_frames {
            return Err(Error::InvalidArgument(format!(
                "minimum duration {} exceeds maximum {}",
                self.min_dur_frames, self.max_dur_frames
            )));
        }
        Ok(())
    }

    /// Checks that every syllable position lies inside its utterance.
    pub fn validate_for(&self, corpus: &Corpus) -> Result<()> {
        self.validate()?;
        if let Some(pos) = &self.allowed_positions {
            for (id, p) in pos {
                let utt = corpus.get(id).ok_or_else(|| Error::UnknownUtterance(id.clone()))?;
                if let Some(&bad) = p.iter().find(|&&x| x > utt.n_frames()) {
                    return Err(Error::InvalidArgument(format!(
                        "boundary position {bad} beyond utterance {id} of {} frames",
                        utt.n_frames()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_syllable_mode(&self) -> bool {
        self.allowed_positions.is_some()
    }

    /// Candidate boundary positions of an utterance, including 0 and `n`.
    pub fn positions(&self, utt_id: &str, n_frames: usize) -> Vec<usize> {
        let mut p = vec![0];
        match &self.allowed_positions {
            None => {
                let b = self.boundary_interval_frames;
                p.extend((1..).map(|i| i * b).take_while(|&x| x < n_frames));
            }
            Some(map) => match map.get(utt_id) {
                Some(v) => p.extend(v.iter().copied().filter(|&x| x > 0 && x < n_frames)),
                None => log::warn!("no boundary positions for utterance {utt_id}; treating it as one unit"),
            },
        }
        p.push(n_frames);
        p
    }

    /// Total number of units (syllables) over a corpus.
    pub fn n_units(&self, corpus: &Corpus) -> usize {
        corpus
            .utterances()
            .iter()
            .map(|u| self.positions(&u.id, u.n_frames()).len() - 1)
            .sum()
    }
}

/// Number of components as a fraction of the number of syllable tokens.
pub fn k_from_units(n_units: usize, fraction: f64) -> usize {
    ((n_units as f64 * fraction).round() as usize).max(1)
}

/// All spans `(start, end)` a word may occupy in `utterance`.
pub fn allowed_segments(utterance: &Utterance, constraints: &Constraints) -> Vec<(usize, usize)> {
    allowed_spans(&utterance.id, utterance.n_frames(), constraints)
}

pub(crate) fn allowed_spans(id: &str, n: usize, c: &Constraints) -> Vec<(usize, usize)> {
    if n < c.min_dur_frames {
        log::warn!("utterance {id} ({n} frames) is shorter than the minimum duration; using a single segment");
        return vec![(0, n)];
    }
    let p = c.positions(id, n);
    let unit_cap = if c.is_syllable_mode() { c.max_units_per_word } else { usize::MAX };
    let mut spans = Vec::new();
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if j - i > unit_cap {
                break;
            }
            let len = p[j] - p[i];
            if len > c.max_dur_frames {
                break;
            }
            if len >= c.min_dur_frames {
                spans.push((p[i], p[j]));
            }
        }
    }
    if !has_tiling(n, &spans) {
        log::warn!("no constrained tiling of utterance {id}; adding the whole-utterance span");
        if !spans.contains(&(0, n)) {
            spans.push((0, n));
        }
    }
    spans.sort_unstable();
    spans
}

fn has_tiling(n: usize, spans: &[(usize, usize)]) -> bool {
    let mut reach = vec![false; n + 1];
    reach[0] = true;
    let mut sorted = spans.to_vec();
    sorted.sort_unstable();
    for (s, e) in sorted {
        if reach[s] {
            reach[e] = true;
        }
    }
    reach[n]
}

/// Boundary-sampling exponents and iteration counts.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealSchedule {
    pub exponents: Vec<f64>,
    pub iters_fixed_boundaries: usize,
    pub total_iters: usize,
}

impl AnnealSchedule {
    pub fn new(exponents: Vec<f64>, iters_fixed_boundaries: usize, total_iters: usize) -> Result<Self> {
        let s = AnnealSchedule {
            exponents,
            iters_fixed_boundaries,
            total_iters,
        };
        s.validate()?;
        Ok(s)
    }

    /// `n_steps` exponents spaced linearly from `from` to 1.
    pub fn linear(from: f64, n_steps: usize, iters_fixed_boundaries: usize, total_iters: usize) -> Result<Self> {
        let exps = if n_steps == 1 {
            vec![1.0]
        } else {
            (0..n_steps)
                .map(|i| from + (1.0 - from) * i as f64 / (n_steps - 1) as f64)
                .collect()
        };
        Self::new(exps, iters_fixed_boundaries, total_iters)
    }

    /// 25 + 25 iterations, 5 steps from 0.01 to 1.
    pub fn small_vocab() -> Self {
        Self::linear(0.01, 5, 25, 25).expect("valid preset")
    }

    /// 15 + 15 iterations, exponents 0.01, 0.5, 1.
    pub fn large_vocab() -> Self {
        Self::new(vec![0.01, 0.5, 1.0], 15, 15).expect("valid preset")
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_iters == 0 || self.exponents.is_empty() {
            return Err(Error::InvalidArgument("schedule needs iterations and exponents".into()));
        }
        if self.exponents.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::InvalidArgument("exponents must lie in (0, 1]".into()));
        }
        if self.exponents.windows(2).any(|w| w[1] < w[0]) || *self.exponents.last().unwrap() != 1.0 {
            return Err(Error::InvalidArgument("exponents must be non-decreasing and end at 1".into()));
        }
        Ok(())
    }

    /// Exponent for boundary-sampling iteration `j` (0-based).
    pub fn exponent_at(&self, j: usize) -> f64 {
        let n = self.exponents.len();
        self.exponents[(j * n / self.total_iters).min(n - 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_span_count() {
        let c = Constraints::grid(1, 1, 4).unwrap();
        assert_eq!(allowed_spans("u", 4, &c).len(), 10);
        let c = Constraints::grid(1, 5, 5).unwrap();
        assert_eq!(allowed_spans("u", 5, &c), vec![(0, 5)]);
    }

    #[test]
    fn grid_respects_interval_and_end() {
        let c = Constraints::grid(2, 2, 10).unwrap();
        let s = allowed_spans("u", 5, &c);
        assert!(s.iter().all(|&(a, b)| a % 2 == 0 && (b % 2 == 0 || b == 5) && b - a >= 2));
        assert!(s.contains(&(0, 5)) && s.contains(&(2, 5)));
    }

    #[test]
    fn syllable_hand_enumeration() {
        let mut pos = HashMap::new();
        pos.insert("u".to_string(), vec![3, 7, 10]);
        let c = Constraints::syllable(pos, 2, 1).unwrap();
        assert_eq!(allowed_spans("u", 10, &c), vec![(0, 3), (0, 7), (3, 7), (3, 10), (7, 10)]);
    }

    #[test]
    fn short_utterance_is_one_segment() {
        let c = Constraints::grid(1, 20, 100).unwrap();
        assert_eq!(allowed_spans("u", 7, &c), vec![(0, 7)]);
    }

    #[test]
    fn untileable_gets_whole_span() {
        // only 10-frame words on a 4-frame grid: nothing tiles 13 frames
        let c = Constraints::grid(4, 10, 10).unwrap();
        let s = allowed_spans("u", 13, &c);
        assert!(s.contains(&(0, 13)));
    }

    #[test]
    fn invalid_constraints() {
        assert!(Constraints::grid(1, 5, 4).is_err());
        assert!(Constraints::grid(0, 1, 4).is_err());
    }

    #[test]
    fn schedules() {
        let s = AnnealSchedule::small_vocab();
        assert_eq!(s.exponents.len(), 5);
        assert!((s.exponents[0] - 0.01).abs() < 1e-15 && s.exponents[4] == 1.0);
        assert_eq!((s.iters_fixed_boundaries, s.total_iters), (25, 25));
        assert_eq!(s.exponent_at(0), 0.01);
        assert_eq!(s.exponent_at(5), s.exponents[1]);
        assert_eq!(s.exponent_at(24), 1.0);
        let l = AnnealSchedule::large_vocab();
        assert_eq!(l.exponents, vec![0.01, 0.5, 1.0]);
        assert_eq!((l.iters_fixed_boundaries, l.total_iters), (15, 15));
        assert_eq!(l.exponent_at(4), 0.01);
        assert_eq!(l.exponent_at(5), 0.5);
        assert!(AnnealSchedule::new(vec![0.5, 0.2, 1.0], 0, 3).is_err());
        assert!(AnnealSchedule::new(vec![0.5], 0, 3).is_err());
    }

    #[test]
    fn k_fraction() {
        assert_eq!(k_from_units(1000, 0.2), 200);
        assert_eq!(k_from_units(1000, 0.05), 50);
        assert_eq!(k_from_units(3, 0.05), 1);
    }
}
