//! Word pairs, DTW frame pairs and corpus encoding.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::{forward_into, Mlp};
use crate::corpus::{Corpus, Frames, Utterance};
use crate::dtw::{dtw_with_metric, Metric};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SegmentRef {
    pub utterance: String,
    pub start: usize,
    pub end: usize,
}

/// Two segments hypothesised to be the same word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordPair {
    pub a: SegmentRef,
    pub b: SegmentRef,
}

/// Lines `utt1 start1 end1 utt2 start2 end2`; `#` starts a comment.
pub fn parse_word_pairs(text: &str, path: &Path) -> Result<Vec<WordPair>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::parse(path, i + 1, "expected `utt1 start1 end1 utt2 start2 end2`"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(path, i + 1, e.to_string()));
        out.push(WordPair {
            a: SegmentRef {
                utterance: f[0].to_string(),
                start: num(f[1])?,
                end: num(f[2])?,
            },
            b: SegmentRef {
                utterance: f[3].to_string(),
                start: num(f[4])?,
                end: num(f[5])?,
            },
        });
    }
    Ok(out)
}

pub fn format_word_pairs(pairs: &[WordPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            p.a.utterance, p.a.start, p.a.end, p.b.utterance, p.b.start, p.b.end
        );
    }
    out
}

pub fn load_word_pairs(path: &Path) -> Result<Vec<WordPair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_word_pairs(&text, path)
}

pub fn save_word_pairs(path: &Path, pairs: &[WordPair]) -> Result<()> {
    std::fs::write(path, format_word_pairs(pairs)).map_err(|e| Error::io(path, e))
}

/// Aligned frame pairs, stored flat: row `i` of `inputs` maps to row `i` of
/// `targets`.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePairSet {
    pub dim: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl FramePairSet {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.inputs.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pair(&self, i: usize) -> (&[f64], &[f64]) {
        let d = self.dim;
        (&self.inputs[i * d..(i + 1) * d], &self.targets[i * d..(i + 1) * d])
    }
}

fn resolve<'c>(corpus: &'c Corpus, s: &SegmentRef) -> Result<&'c Utterance> {
    let u = corpus
        .get(&s.utterance)
        .ok_or_else(|| Error::UnknownUtterance(s.utterance.clone()))?;
    if s.start >= s.end || s.end > u.n_frames() {
        return Err(Error::Segment {
            utterance: s.utterance.clone(),
            start: s.start,
            end: s.end,
            message: format!("invalid span in utterance of {} frames", u.n_frames()),
        });
    }
    Ok(u)
}

/// DTW-aligns every word pair (cosine frame distance) and emits one frame
/// pair per path step; with `both_directions` each step is also emitted with
/// input and target swapped.
pub fn build_frame_pairs(word_pairs: &[WordPair], corpus: &Corpus, both_directions: bool) -> Result<FramePairSet> {
    let dim = corpus.dim();
    let per_pair: Vec<(Vec<f64>, Vec<f64>)> = word_pairs
        .par_iter()
        .map(|wp| {
            let ua = resolve(corpus, &wp.a)?;
            let ub = resolve(corpus, &wp.b)?;
            let xa = ua.frames.slice(wp.a.start, wp.a.end);
            let xb = ub.frames.slice(wp.b.start, wp.b.end);
            let r = dtw_with_metric(xa, xb, Metric::Cosine)?;
            let mut ins = Vec::with_capacity(r.path.len() * dim * 2);
            let mut tgs = Vec::with_capacity(r.path.len() * dim * 2);
            for &(i, j) in &r.path {
                ins.extend_from_slice(xa.row(i));
                tgs.extend_from_slice(xb.row(j));
            }
            if both_directions {
                for &(i, j) in &r.path {
                    ins.extend_from_slice(xb.row(j));
                    tgs.extend_from_slice(xa.row(i));
                }
            }
            Ok((ins, tgs))
        })
        .collect::<Result<_>>()?;
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (i, t) in per_pair {
        inputs.extend(i);
        targets.extend(t);
    }
    Ok(FramePairSet { dim, inputs, targets })
}

/// Replaces every frame by the activation of hidden layer `layer_index`
/// (1-based).
pub fn encode_corpus(net: &Mlp, corpus: &Corpus, layer_index: usize) -> Result<Corpus> {
    if layer_index == 0 || layer_index > net.n_hidden() {
        return Err(Error::InvalidArgument(format!(
            "layer index {layer_index} outside 1..={}",
            net.n_hidden()
        )));
    }
    if net.input_dim() != corpus.dim() {
        return Err(Error::VectorDim(net.input_dim(), corpus.dim()));
    }
    let truncated = Mlp {
        layers: net.layers[..layer_index].to_vec(),
    };
    let width = truncated.output_dim();
    let utts: Vec<Utterance> = corpus
        .utterances()
        .par_iter()
        .map(|u| {
            let mut data = Vec::with_capacity(u.n_frames() * width);
            let mut acts = vec![Vec::new()];
            for row in u.frames.rows() {
                acts[0].clear();
                acts[0].extend_from_slice(row);
                forward_into(&truncated, &mut acts);
                // forward_into leaves the last layer linear; this one is hidden
                data.extend(acts.last().unwrap().iter().map(|v| v.tanh()));
            }
            Ok(Utterance {
                id: u.id.clone(),
                speaker: u.speaker.clone(),
                frames: Frames::new(data, width)?,
                frame_period_ms: u.frame_period_ms,
            })
        })
        .collect::<Result<_>>()?;
    Corpus::new(utts)
}
