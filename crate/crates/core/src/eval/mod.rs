//! Evaluation of segmentations and representations against ground truth.

mod ap;
mod boundary;
mod mapping;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::TokenAlignment;
use crate::error::{Error, Result};
use crate::segmenter::SegmentationState;

pub use ap::{average_precision, same_different_ap, same_different_ap_frames};
pub use boundary::{
    boundaries_from_segments, boundaries_from_tokens, boundary_prf, boundary_prf_zrs, ned, phones_covered,
    token_type_prf, BoundarySet, PhoneRule, Prf, TokenTypeScores,
};
pub use mapping::{
    build_mapping_matrix, cluster_purity, map_clusters, mapped_accuracy, purity_by, wer, wer_for_mapping,
    MapMode, MappingMatrix, Unit, WerResult,
};

/// A discovered token: a span with a cluster id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PredSegment {
    pub utterance: String,
    pub start: usize,
    pub end: usize,
    pub cluster: usize,
}

impl PredSegment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Flattens a sampler state into predicted tokens.
pub fn segments_from_state(state: &SegmentationState<'_>) -> Vec<PredSegment> {
    let t = state.table();
    state
        .all_segments()
        .iter()
        .enumerate()
        .flat_map(|(u, segs)| {
            segs.iter().map(move |s| PredSegment {
                utterance: t.utterance_id(u).to_string(),
                start: s.start,
                end: s.end,
                cluster: s.cluster,
            })
        })
        .collect()
}

/// Reads a segmentation file of `utt start end cluster` lines.
pub fn parse_segmentation(text: &str, path: &Path) -> Result<Vec<PredSegment>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(Error::parse(path, i + 1, "expected `utt start end cluster`"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(path, i + 1, e.to_string()));
        let seg = PredSegment {
            utterance: f[0].to_string(),
            start: num(f[1])?,
            end: num(f[2])?,
            cluster: num(f[3])?,
        };
        if seg.is_empty() {
            return Err(Error::parse(path, i + 1, "end must exceed start"));
        }
        out.push(seg);
    }
    Ok(out)
}

pub fn load_segmentation(path: &Path) -> Result<Vec<PredSegment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_segmentation(&text, path)
}

pub fn format_segmentation(segs: &[PredSegment]) -> String {
    let mut out = String::new();
    for s in segs {
        let _ = writeln!(out, "{} {} {} {}", s.utterance, s.start, s.end, s.cluster);
    }
    out
}

/// Groups items by utterance id, keeping the input order within each group.
pub(crate) fn by_utterance<'a, T, F>(items: &'a [T], key: F) -> BTreeMap<&'a str, Vec<&'a T>>
where
    F: Fn(&'a T) -> &'a str,
{
    let mut map: BTreeMap<&str, Vec<&T>> = BTreeMap::new();
    for it in items {
        map.entry(key(it)).or_default().push(it);
    }
    map
}

pub(crate) fn truth_by_utterance(truth: &[TokenAlignment]) -> BTreeMap<&str, Vec<&TokenAlignment>> {
    let mut m = by_utterance(truth, |t| t.utterance_id.as_str());
    for v in m.values_mut() {
        v.sort_by_key(|t| (t.start_frame, t.end_frame));
    }
    m
}

pub(crate) fn pred_by_utterance(pred: &[PredSegment]) -> BTreeMap<&str, Vec<&PredSegment>> {
    let mut m = by_utterance(pred, |p| p.utterance.as_str());
    for v in m.values_mut() {
        v.sort_by_key(|p| (p.start, p.end));
    }
    m
}

/// Named scalar metrics with a unit annotation, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub entries: Vec<(String, f64, String)>,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn push(&mut self, name: &str, value: f64, unit: &str) {
        self.entries.push((name.to_string(), value, unit.to_string()));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == name).map(|e| e.1)
    }

    /// Human-readable table.
    pub fn format_table(&self) -> String {
        let w = self.entries.iter().map(|e| e.0.len()).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = writeln!(out, "{:<w$}  {:>12}  unit", "metric", "value");
        for (name, v, unit) in &self.entries {
            let _ = writeln!(out, "{name:<w$}  {v:>12.6}  {unit}");
        }
        for n in &self.notes {
            let _ = writeln!(out, "# {n}");
        }
        out
    }

    /// Machine-readable `metric value` lines.
    pub fn format_kv(&self) -> String {
        let mut out = String::new();
        for (name, v, _) in &self.entries {
            let _ = writeln!(out, "{name} {v:?}");
        }
        out
    }
}
