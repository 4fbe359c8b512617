//! Mapping matrices, cluster-to-label mappings, purity and WER.

use std::collections::{BTreeMap, BTreeSet};

use super::{pred_by_utterance, truth_by_utterance, PredSegment};
use crate::corpus::TokenAlignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Frames,
    Tokens,
}

/// Co-occurrence counts of truth labels (rows) and clusters (columns).
///
/// An extra last row collects predicted material that no truth token covers;
/// it counts towards totals but is never a mapping target.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingMatrix {
    pub labels: Vec<String>,
    pub clusters: Vec<usize>,
    counts: Vec<u64>,
    pub unit: Unit,
}

impl MappingMatrix {
    /// Builds a matrix directly from label rows (no background counts).
    pub fn from_rows(labels: Vec<String>, clusters: Vec<usize>, rows: &[Vec<u64>], unit: Unit) -> Self {
        let nc = clusters.len();
        let mut counts = vec![0; (labels.len() + 1) * nc];
        for (i, r) in rows.iter().enumerate() {
            counts[i * nc..(i + 1) * nc].copy_from_slice(r);
        }
        MappingMatrix {
            labels,
            clusters,
            counts,
            unit,
        }
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Count for label row `i` (or the background row `n_labels`) and column `j`.
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n_clusters() + j]
    }

    pub fn background(&self, j: usize) -> u64 {
        self.get(self.n_labels(), j)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn column_of(&self, cluster: usize) -> Option<usize> {
        self.clusters.binary_search(&cluster).ok()
    }

    fn add(&mut self, i: usize, j: usize, v: u64) {
        let nc = self.n_clusters();
        self.counts[i * nc + j] += v;
    }
}

fn overlap(a: (usize, usize), b: (usize, usize)) -> usize {
    a.1.min(b.1).saturating_sub(a.0.max(b.0))
}

/// Frame unit: every predicted frame is tallied under the truth label
/// covering it. Token unit: each predicted token votes once for the truth
/// token it overlaps most (earliest on ties).
pub fn build_mapping_matrix(pred: &[PredSegment], truth: &[TokenAlignment], unit: Unit) -> MappingMatrix {
    let labels: Vec<String> = truth.iter().map(|t| t.label.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let clusters: Vec<usize> = pred.iter().map(|p| p.cluster).collect::<BTreeSet<_>>().into_iter().collect();
    let label_idx: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut g = MappingMatrix::from_rows(labels.clone(), clusters, &[], unit);
    let bg = labels.len();
    let truth_u = truth_by_utterance(truth);
    let mut uncovered = 0u64;
    for p in pred {
        let j = g.column_of(p.cluster).unwrap();
        let toks = truth_u.get(p.utterance.as_str()).map(|v| v.as_slice()).unwrap_or(&[]);
        match unit {
            Unit::Frames => {
                let mut covered = 0;
                for t in toks {
                    let ov = overlap((p.start, p.end), (t.start_frame, t.end_frame));
                    if ov > 0 {
                        g.add(label_idx[t.label.as_str()], j, ov as u64);
                        covered += ov;
                    }
                }
                let rest = (p.len() - covered) as u64;
                if rest > 0 {
                    g.add(bg, j, rest);
                    uncovered += rest;
                }
            }
            Unit::Tokens => {
                let mut best: Option<(&TokenAlignment, usize)> = None;
                for t in toks {
                    let ov = overlap((p.start, p.end), (t.start_frame, t.end_frame));
                    if ov > 0 && best.is_none_or(|(_, b)| ov > b) {
                        best = Some((t, ov));
                    }
                }
                match best {
                    Some((t, _)) => g.add(label_idx[t.label.as_str()], j, 1),
                    None => {
                        g.add(bg, j, 1);
                        uncovered += 1;
                    }
                }
            }
        }
    }
    if uncovered > 0 {
        log::warn!("{uncovered} predicted units fall outside the truth alignments");
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapMode {
    ManyToOne,
    OneToOneGreedy,
}

/// Label index for every column of `g`, or `None` when unassigned.
///
/// Many-to-one takes the column argmax. Greedy one-to-one repeatedly binds
/// the largest remaining positive entry. Ties go to the lowest label, then
/// the lowest cluster.
pub fn map_clusters(g: &MappingMatrix, mode: MapMode) -> Vec<Option<usize>> {
    let (nl, nc) = (g.n_labels(), g.n_clusters());
    match mode {
        MapMode::ManyToOne => (0..nc)
            .map(|j| {
                let mut best: Option<(usize, u64)> = None;
                for i in 0..nl {
                    let v = g.get(i, j);
                    if v > 0 && best.is_none_or(|(_, b)| v > b) {
                        best = Some((i, v));
                    }
                }
                best.map(|(i, _)| i)
            })
            .collect(),
        MapMode::OneToOneGreedy => {
            let mut entries: Vec<(u64, usize, usize)> = (0..nl)
                .flat_map(|i| (0..nc).map(move |j| (i, j)))
                .map(|(i, j)| (g.get(i, j), i, j))
                .filter(|e| e.0 > 0)
                .collect();
            entries.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut row_used = vec![false; nl];
            let mut out = vec![None; nc];
            for (_, i, j) in entries {
                if !row_used[i] && out[j].is_none() {
                    row_used[i] = true;
                    out[j] = Some(i);
                }
            }
            out
        }
    }
}

/// `sum_j max_i G_ij / sum_ij G_ij` (background counts only in the total).
pub fn cluster_purity(g: &MappingMatrix) -> Result<f64> {
    let total = g.total();
    if total == 0 {
        return Err(Error::Empty("mapping matrix"));
    }
    let hit: u64 = (0..g.n_clusters())
        .map(|j| (0..g.n_labels()).map(|i| g.get(i, j)).max().unwrap_or(0))
        .sum();
    Ok(hit as f64 / total as f64)
}

/// Fraction of the matrix mass on the mapped cells.
pub fn mapped_accuracy(g: &MappingMatrix, mapping: &[Option<usize>]) -> Result<f64> {
    let total = g.total();
    if total == 0 {
        return Err(Error::Empty("mapping matrix"));
    }
    let hit: u64 = mapping
        .iter()
        .enumerate()
        .filter_map(|(j, m)| m.map(|i| g.get(i, j)))
        .sum();
    Ok(hit as f64 / total as f64)
}

/// Token purity of clusters with respect to an arbitrary key (speaker,
/// gender, ...). Tokens whose key is `None` count as background.
pub fn purity_by<F>(pred: &[PredSegment], key: F) -> Result<f64>
where
    F: Fn(&PredSegment) -> Option<String>,
{
    let mut per_cluster: BTreeMap<usize, BTreeMap<String, u64>> = BTreeMap::new();
    let mut total = 0u64;
    for p in pred {
        total += 1;
        if let Some(k) = key(p) {
            *per_cluster.entry(p.cluster).or_default().entry(k).or_default() += 1;
        }
    }
    if total == 0 {
        return Err(Error::Empty("prediction"));
    }
    let hit: u64 = per_cluster.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    Ok(hit as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WerResult {
    pub wer: f64,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub n_truth: usize,
}

/// Unit-cost Levenshtein alignment per utterance. A `None` prediction never
/// matches anything.
pub fn wer<T: PartialEq>(pred: &[Vec<Option<T>>], truth: &[Vec<T>]) -> Result<WerResult> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidArgument("prediction and truth utterance counts differ".into()));
    }
    let n_truth: usize = truth.iter().map(|t| t.len()).sum();
    if n_truth == 0 {
        return Err(Error::Empty("truth transcription"));
    }
    let (mut s, mut d, mut ins) = (0, 0, 0);
    for (p, t) in pred.iter().zip(truth) {
        let (a, b, c) = edit_counts(p, t);
        s += a;
        d += b;
        ins += c;
    }
    Ok(WerResult {
        wer: (s + d + ins) as f64 / n_truth as f64,
        substitutions: s,
        deletions: d,
        insertions: ins,
        n_truth,
    })
}

/// `(S, D, I)` of a minimum-cost alignment; the backtrace prefers the
/// diagonal, then deletions, then insertions.
fn edit_counts<T: PartialEq>(pred: &[Option<T>], truth: &[T]) -> (usize, usize, usize) {
    let (n, m) = (truth.len(), pred.len());
    let mut dp = vec![0usize; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        dp[idx(i, 0)] = i;
    }
    for j in 0..=m {
        dp[idx(0, j)] = j;
    }
    let cost = |i: usize, j: usize| usize::from(pred[j - 1].as_ref() != Some(&truth[i - 1]));
    for i in 1..=n {
        for j in 1..=m {
            dp[idx(i, j)] = (dp[idx(i - 1, j - 1)] + cost(i, j))
                .min(dp[idx(i - 1, j)] + 1)
                .min(dp[idx(i, j - 1)] + 1);
        }
    }
    let (mut i, mut j) = (n, m);
    let (mut s, mut d, mut ins) = (0, 0, 0);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && dp[idx(i, j)] == dp[idx(i - 1, j - 1)] + cost(i, j) {
            s += cost(i, j);
            i -= 1;
            j -= 1;
        } else if i > 0 && dp[idx(i, j)] == dp[idx(i - 1, j)] + 1 {
            d += 1;
            i -= 1;
        } else {
            ins += 1;
            j -= 1;
        }
    }
    (s, d, ins)
}

/// WER of a segmentation after mapping clusters through `mapping` (columns
/// of `g`). Sequences are taken per utterance in time order, over every
/// utterance that has truth or predictions.
pub fn wer_for_mapping(
    pred: &[PredSegment],
    truth_words: &[TokenAlignment],
    g: &MappingMatrix,
    mapping: &[Option<usize>],
) -> Result<WerResult> {
    let pu = pred_by_utterance(pred);
    let tu = truth_by_utterance(truth_words);
    let utts: BTreeSet<&str> = pu.keys().chain(tu.keys()).copied().collect();
    let mut ps = Vec::with_capacity(utts.len());
    let mut ts = Vec::with_capacity(utts.len());
    for u in utts {
        ps.push(
            pu.get(u)
                .map(|v| {
                    v.iter()
                        .map(|p| g.column_of(p.cluster).and_then(|j| mapping[j]).map(|i| g.labels[i].as_str()))
                        .collect()
                })
                .unwrap_or_default(),
        );
        ts.push(tu.get(u).map(|v| v.iter().map(|t| t.label.as_str()).collect()).unwrap_or_default());
    }
    wer(&ps, &ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(u: &str, s: usize, e: usize, l: &str) -> TokenAlignment {
        TokenAlignment {
            utterance_id: u.into(),
            start_frame: s,
            end_frame: e,
            label: l.into(),
        }
    }

    fn seg(u: &str, s: usize, e: usize, c: usize) -> PredSegment {
        PredSegment {
            utterance: u.into(),
            start: s,
            end: e,
            cluster: c,
        }
    }

    fn g(rows: &[Vec<u64>]) -> MappingMatrix {
        let labels = (0..rows.len()).map(|i| format!("l{i}")).collect();
        let clusters = (0..rows[0].len()).collect();
        MappingMatrix::from_rows(labels, clusters, rows, Unit::Tokens)
    }

    #[test]
    fn perfect_prediction_is_diagonal() {
        let truth = vec![tok("u", 0, 5, "a"), tok("u", 5, 9, "b"), tok("v", 0, 4, "a")];
        let pred = vec![seg("u", 0, 5, 7), seg("u", 5, 9, 3), seg("v", 0, 4, 7)];
        let m = build_mapping_matrix(&pred, &truth, Unit::Frames);
        // clusters sorted: 3 then 7
        assert_eq!((m.get(0, 1), m.get(1, 0), m.get(0, 0), m.get(1, 1)), (9, 4, 0, 0));
        let mapping = map_clusters(&m, MapMode::OneToOneGreedy);
        assert_eq!(mapping, vec![Some(1), Some(0)]);
        assert_eq!(map_clusters(&m, MapMode::ManyToOne), mapping);
        assert_eq!(cluster_purity(&m).unwrap(), 1.0);
        assert_eq!(wer_for_mapping(&pred, &truth, &m, &mapping).unwrap().wer, 0.0);
    }

    #[test]
    fn misgrouped_token_hand_tally() {
        let truth = vec![tok("u", 0, 4, "a"), tok("u", 4, 8, "b"), tok("v", 0, 4, "a"), tok("v", 4, 8, "b")];
        let pred = vec![seg("u", 0, 4, 0), seg("u", 4, 8, 1), seg("v", 0, 4, 0), seg("v", 4, 8, 0)];
        let m = build_mapping_matrix(&pred, &truth, Unit::Tokens);
        assert_eq!((m.get(0, 0), m.get(1, 0), m.get(0, 1), m.get(1, 1)), (2, 1, 0, 1));
    }

    #[test]
    fn empty_prediction() {
        let truth = vec![tok("u", 0, 4, "a"), tok("u", 4, 8, "b")];
        let m = build_mapping_matrix(&[], &truth, Unit::Frames);
        assert_eq!(m.total(), 0);
        let r = wer_for_mapping(&[], &truth, &m, &[]).unwrap();
        assert_eq!((r.deletions, r.wer), (2, 1.0));
    }

    #[test]
    fn uncovered_material_goes_to_background() {
        let truth = vec![tok("u", 2, 6, "a")];
        let pred = vec![seg("u", 0, 6, 0), seg("u", 6, 8, 1)];
        let m = build_mapping_matrix(&pred, &truth, Unit::Frames);
        assert_eq!((m.get(0, 0), m.background(0), m.background(1)), (4, 2, 2));
        assert_eq!(map_clusters(&m, MapMode::ManyToOne), vec![Some(0), None]);
        assert_eq!(cluster_purity(&m).unwrap(), 0.5);
    }

    #[test]
    fn mapping_rules_hand_execution() {
        let m = g(&[vec![5, 4], vec![0, 3]]);
        assert_eq!(map_clusters(&m, MapMode::ManyToOne), vec![Some(0), Some(0)]);
        assert_eq!(map_clusters(&m, MapMode::OneToOneGreedy), vec![Some(0), Some(1)]);
        // ties: lowest label, then lowest cluster
        let t = g(&[vec![2, 2], vec![2, 2]]);
        assert_eq!(map_clusters(&t, MapMode::OneToOneGreedy), vec![Some(0), Some(1)]);
        assert_eq!(map_clusters(&t, MapMode::ManyToOne), vec![Some(0), Some(0)]);
    }

    #[test]
    fn purity_hand_values() {
        assert_eq!(cluster_purity(&g(&[vec![3, 1], vec![1, 3]])).unwrap(), 0.75);
        assert_eq!(cluster_purity(&g(&[vec![2], vec![2], vec![2]])).unwrap(), 1.0 / 3.0);
        assert!(cluster_purity(&g(&[vec![0]])).is_err());
    }

    #[test]
    fn wer_hand_table() {
        let r = wer(&[vec![Some("a"), Some("x"), Some("c"), Some("y")]], &[vec!["a", "b", "c"]]).unwrap();
        assert_eq!((r.substitutions, r.insertions, r.deletions), (1, 1, 0));
        assert!((r.wer - 2.0 / 3.0).abs() < 1e-15);
        let r = wer(&[vec![None, Some("b")]], &[vec!["a", "b"]]).unwrap();
        assert_eq!(r.substitutions, 1);
        assert!(wer::<&str>(&[vec![]], &[vec![]]).is_err());
    }

    #[test]
    fn speaker_purity() {
        let pred = vec![seg("s1_u", 0, 2, 0), seg("s2_u", 0, 2, 0), seg("s1_v", 0, 2, 1)];
        let p = purity_by(&pred, |s| Some(s.utterance[..2].to_string())).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
    }
}
