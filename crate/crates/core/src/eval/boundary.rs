//! Boundary, token and type precision/recall/F, and NED.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet};

use super::{pred_by_utterance, truth_by_utterance, PredSegment};
use crate::corpus::{ms_to_frames, TokenAlignment};
use crate::error::{Error, Result};
use crate::mathutil::levenshtein;

/// Interior boundaries per utterance, sorted and deduplicated.
pub type BoundarySet = BTreeMap<String, Vec<usize>>;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl Prf {
    /// Empty denominators give 0.
    pub fn from_counts(matched: usize, n_pred: usize, n_truth: usize) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matched, n_pred);
        let recall = ratio(matched, n_truth);
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f }
    }
}

fn interior(spans: impl Iterator<Item = (usize, usize)>) -> Vec<usize> {
    let mut b = BTreeSet::new();
    let mut last = 0;
    for (s, e) in spans {
        b.insert(s);
        b.insert(e);
        last = last.max(e);
    }
    b.remove(&0);
    b.remove(&last);
    b.into_iter().collect()
}

/// Segment edges per utterance, minus frame 0 and the utterance's last end.
pub fn boundaries_from_segments(pred: &[PredSegment]) -> BoundarySet {
    pred_by_utterance(pred)
        .into_iter()
        .map(|(u, v)| (u.to_string(), interior(v.iter().map(|p| (p.start, p.end)))))
        .collect()
}

/// Token edges per utterance, minus frame 0 and the last token end.
pub fn boundaries_from_tokens(tokens: &[TokenAlignment]) -> BoundarySet {
    truth_by_utterance(tokens)
        .into_iter()
        .map(|(u, v)| (u.to_string(), interior(v.iter().map(|t| (t.start_frame, t.end_frame)))))
        .collect()
}

/// Nearest-first one-to-one matching; `tol(utt, truth_boundary)` is the
/// allowed distance in frames.
fn match_boundaries<F>(pred: &BoundarySet, truth: &BoundarySet, tol: F) -> Prf
where
    F: Fn(&str, usize) -> usize,
{
    let n_pred: usize = pred.values().map(|v| v.len()).sum();
    let n_truth: usize = truth.values().map(|v| v.len()).sum();
    let mut matched = 0;
    for (u, tb) in truth {
        let Some(pb) = pred.get(u) else { continue };
        let mut cands: Vec<(usize, usize, usize)> = Vec::new();
        for (ti, &t) in tb.iter().enumerate() {
            let w = tol(u, t);
            for (pi, &p) in pb.iter().enumerate() {
                let d = p.abs_diff(t);
                if d <= w {
                    cands.push((d, ti, pi));
                }
            }
        }
        cands.sort_unstable();
        let mut t_used = vec![false; tb.len()];
        let mut p_used = vec![false; pb.len()];
        for (_, ti, pi) in cands {
            if !t_used[ti] && !p_used[pi] {
                t_used[ti] = true;
                p_used[pi] = true;
                matched += 1;
            }
        }
    }
    Prf::from_counts(matched, n_pred, n_truth)
}

/// Boundary P/R/F with a fixed tolerance in frames.
pub fn boundary_prf(pred: &BoundarySet, truth: &BoundarySet, tolerance_frames: usize) -> Prf {
    match_boundaries(pred, truth, |_, _| tolerance_frames)
}

/// Boundary P/R/F where each truth boundary accepts predictions within
/// 30 ms or half of the shorter adjacent phone, whichever is larger.
pub fn boundary_prf_zrs(pred: &BoundarySet, truth: &BoundarySet, phones: &[TokenAlignment], frame_period_ms: f64) -> Prf {
    let base = ms_to_frames(30.0, frame_period_ms);
    let by_utt = truth_by_utterance(phones);
    match_boundaries(pred, truth, |u, b| {
        let adj = by_utt
            .get(u)
            .into_iter()
            .flatten()
            .filter(|p| p.start_frame == b || p.end_frame == b)
            .map(|p| p.len())
            .min();
        adj.map_or(base, |d| base.max(d / 2))
    })
}

/// When a phone counts as covered by a span: the overlap reaches
/// `min_fraction` of the phone, or at least `min_ms`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhoneRule {
    pub min_fraction: f64,
    pub min_ms: f64,
    pub frame_period_ms: f64,
}

impl PhoneRule {
    pub fn zrs(frame_period_ms: f64) -> Self {
        PhoneRule {
            min_fraction: 0.5,
            min_ms: 30.0,
            frame_period_ms,
        }
    }

    fn covers(&self, overlap: usize, phone_len: usize) -> bool {
        overlap > 0
            && (overlap as f64 >= self.min_fraction * phone_len as f64
                || overlap as f64 * self.frame_period_ms >= self.min_ms - 1e-9)
    }
}

/// Indices (into `phones`, one utterance's phones in time order) of the
/// phones that `[start, end)` covers.
pub fn phones_covered<P: Borrow<TokenAlignment>>(start: usize, end: usize, phones: &[P], rule: &PhoneRule) -> Vec<usize> {
    phones
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let p = (*p).borrow();
            let ov = end.min(p.end_frame).saturating_sub(start.max(p.start_frame));
            rule.covers(ov, p.len())
        })
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TokenTypeScores {
    pub token: Prf,
    pub word_type: Prf,
}

fn phone_string(idx: &[usize], phones: &[&TokenAlignment]) -> String {
    idx.iter().map(|&i| phones[i].label.as_str()).collect::<Vec<_>>().join(" ")
}

/// Token and type P/R/F. A predicted token earns credit when the phones it
/// covers are exactly the phones of a not yet matched truth word token in
/// the same utterance. Types compare sets of distinct phone strings.
pub fn token_type_prf(
    pred: &[PredSegment],
    words: &[TokenAlignment],
    phones: &[TokenAlignment],
    rule: &PhoneRule,
) -> Result<TokenTypeScores> {
    if phones.is_empty() {
        return Err(Error::Empty("phone alignments"));
    }
    let ph = truth_by_utterance(phones);
    let wu = truth_by_utterance(words);
    let pu = pred_by_utterance(pred);
    let empty: Vec<&TokenAlignment> = Vec::new();

    let mut truth_types = BTreeSet::new();
    let mut truth_idx: BTreeMap<&str, Vec<Vec<usize>>> = BTreeMap::new();
    for (u, ws) in &wu {
        let p = ph.get(u).unwrap_or(&empty);
        let lists: Vec<Vec<usize>> = ws.iter().map(|w| phones_covered(w.start_frame, w.end_frame, p, rule)).collect();
        for l in &lists {
            truth_types.insert(phone_string(l, p));
        }
        truth_idx.insert(u, lists);
    }

    let mut matched = 0;
    let mut pred_types = BTreeSet::new();
    for (u, ps) in &pu {
        let p = ph.get(u).unwrap_or(&empty);
        let truth_lists = truth_idx.get(u);
        let mut used = vec![false; truth_lists.map_or(0, |t| t.len())];
        for s in ps {
            let l = phones_covered(s.start, s.end, p, rule);
            if l.is_empty() {
                continue;
            }
            pred_types.insert(phone_string(&l, p));
            if let Some(tl) = truth_lists {
                if let Some(k) = tl.iter().enumerate().position(|(k, t)| !used[k] && *t == l) {
                    used[k] = true;
                    matched += 1;
                }
            }
        }
    }
    let type_hits = pred_types.intersection(&truth_types).count();
    Ok(TokenTypeScores {
        token: Prf::from_counts(matched, pred.len(), words.len()),
        word_type: Prf::from_counts(type_hits, pred_types.len(), truth_types.len()),
    })
}

/// Mean normalised phone edit distance over all unordered pairs of tokens
/// that share a cluster.
pub fn ned(pred: &[PredSegment], phones: &[TokenAlignment], rule: &PhoneRule) -> Result<f64> {
    let ph = truth_by_utterance(phones);
    let empty: Vec<&TokenAlignment> = Vec::new();
    let mut clusters: BTreeMap<usize, Vec<Vec<&str>>> = BTreeMap::new();
    for s in pred {
        let p = ph.get(s.utterance.as_str()).unwrap_or(&empty);
        let labels = phones_covered(s.start, s.end, p, rule).into_iter().map(|i| p[i].label.as_str()).collect();
        clusters.entry(s.cluster).or_default().push(labels);
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for toks in clusters.values() {
        for i in 0..toks.len() {
            for j in i + 1..toks.len() {
                let m = toks[i].len().max(toks[j].len());
                if m > 0 {
                    sum += levenshtein(&toks[i], &toks[j]) as f64 / m as f64;
                }
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::NoPairs("no cluster holds two tokens"));
    }
    Ok(sum / n as f64)
}
