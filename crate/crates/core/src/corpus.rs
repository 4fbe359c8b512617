//! Frame-level feature corpora and ground-truth alignments.
//!
//! On-disk feature files are plain text: a header line
//! `id speaker dim n_frames frame_period_ms` followed by one
//! whitespace-separated row per frame. A feature list file names one feature
//! file per line; relative paths resolve against the list file's directory.
//! Alignment files hold lines `utt_id start_frame end_frame label` with `#`
//! comments.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const DEFAULT_FRAME_PERIOD_MS: f64 = 10.0;

/// Row-major `n_frames x dim` matrix of features.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    data: Vec<f64>,
    dim: usize,
}

/// Borrowed contiguous run of frames.
#[derive(Debug, Clone, Copy)]
pub struct FramesView<'a> {
    data: &'a [f64],
    dim: usize,
}

impl Frames {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("frame dimension must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        Ok(Frames { data, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::Empty("frame rows"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::VectorDim(dim, r.len()));
            }
            data.extend_from_slice(r);
        }
        Frames::new(data, dim)
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn view(&self) -> FramesView<'_> {
        FramesView {
            data: &self.data,
            dim: self.dim,
        }
    }

    /// Frames `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> FramesView<'_> {
        assert!(start <= end && end <= self.n_frames(), "frame slice out of range");
        FramesView {
            data: &self.data[start * self.dim..end * self.dim],
            dim: self.dim,
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

impl<'a> FramesView<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && data.len() % dim == 0);
        FramesView { data, dim }
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &'a [f64] {
        self.data
    }

    pub fn to_owned(&self) -> Frames {
        Frames {
            data: self.data.to_vec(),
            dim: self.dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub frames: Frames,
    pub frame_period_ms: f64,
}

impl Utterance {
    pub fn n_frames(&self) -> usize {
        self.frames.n_frames()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    utterances: Vec<Utterance>,
    dim: usize,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Validates every invariant: non-empty utterances, finite values, one
    /// shared dimension and unique ids.
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        let dim = utterances
            .first()
            .map(|u| u.frames.dim())
            .ok_or(Error::Empty("corpus has no utterances"))?;
        let mut index = HashMap::with_capacity(utterances.len());
        for (i, u) in utterances.iter().enumerate() {
            validate_utterance(u)?;
            if u.frames.dim() != dim {
                return Err(Error::DimensionMismatch {
                    utterance: u.id.clone(),
                    expected: dim,
                    found: u.frames.dim(),
                });
            }
            if index.insert(u.id.clone(), i).is_some() {
                return Err(Error::DuplicateUtterance(u.id.clone()));
            }
        }
        Ok(Corpus {
            utterances,
            dim,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn utterance(&self, i: usize) -> &Utterance {
        &self.utterances[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.index_of(id).map(|i| &self.utterances[i])
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(Utterance::n_frames).sum()
    }

    /// Frame period shared by the corpus (taken from the first utterance).
    pub fn frame_period_ms(&self) -> f64 {
        self.utterances[0].frame_period_ms
    }

    pub fn into_utterances(self) -> Vec<Utterance> {
        self.utterances
    }
}

fn validate_utterance(u: &Utterance) -> Result<()> {
    if u.frames.n_frames() == 0 {
        return Err(Error::InvalidArgument(format!("utterance {} has no frames", u.id)));
    }
    if !(u.frame_period_ms > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "utterance {} has non-positive frame period",
            u.id
        )));
    }
    for (t, row) in u.frames.rows().enumerate() {
        if let Some(d) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                utterance: u.id.clone(),
                frame: t,
                dim: d,
            });
        }
    }
    Ok(())
}

/// Converts a duration to a frame count, rounding to the nearest frame.
pub fn ms_to_frames(ms: f64, frame_period_ms: f64) -> usize {
    (ms / frame_period_ms).round().max(0.0) as usize
}

pub fn read_feature_file(path: &Path) -> Result<Utterance> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(Error::parse(
            path,
            1,
            "header must be `id speaker dim n_frames frame_period_ms`",
        ));
    }
    let id = fields[0].to_string();
    let speaker = fields[1].to_string();
    let dim: usize = fields[2]
        .parse()
        .map_err(|_| Error::parse(path, 1, "bad dim"))?;
    let n_frames: usize = fields[3]
        .parse()
        .map_err(|_| Error::parse(path, 1, "bad n_frames"))?;
    let frame_period_ms: f64 = fields[4]
        .parse()
        .map_err(|_| Error::parse(path, 1, "bad frame period"))?;
    let mut data = Vec::with_capacity(dim * n_frames);
    for (frame, (lineno, line)) in lines.enumerate() {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, format!("bad value {tok:?}")))?;
            if !v.is_finite() {
                let d = data.len() - before;
                return Err(Error::NonFinite {
                    utterance: id,
                    frame,
                    dim: d,
                });
            }
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(Error::DimensionMismatch {
                utterance: id,
                expected: dim,
                found: data.len() - before,
            });
        }
    }
    if data.len() != dim * n_frames {
        return Err(Error::parse(
            path,
            1,
            format!("header declares {n_frames} frames, found {}", data.len() / dim.max(1)),
        ));
    }
    let frames = Frames::new(data, dim)?;
    let utt = Utterance {
        id,
        speaker,
        frames,
        frame_period_ms,
    };
    validate_utterance(&utt)?;
    Ok(utt)
}

pub fn format_feature_file(utt: &Utterance) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {} {} {}",
        utt.id,
        utt.speaker,
        utt.frames.dim(),
        utt.frames.n_frames(),
        utt.frame_period_ms
    );
    for row in utt.frames.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            // shortest representation that round-trips exactly
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn write_feature_file(path: &Path, utt: &Utterance) -> Result<()> {
    fs::write(path, format_feature_file(utt)).map_err(|e| Error::io(path, e))
}

fn read_list(list_path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(list_path).map_err(|e| Error::io(list_path, e))?;
    let base = list_path.parent().unwrap_or_else(|| Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = PathBuf::from(l);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        })
        .collect())
}

/// Loads every feature file named in `list_path`, in list order.
pub fn load_feature_corpus(list_path: &Path) -> Result<Corpus> {
    let paths = read_list(list_path)?;
    let utterances = paths
        .iter()
        .map(|p| read_feature_file(p))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(utterances)
}

/// Writes one feature file per utterance into `dir` plus a list file
/// `list_name` naming them; returns the list file path.
pub fn save_feature_corpus(corpus: &Corpus, dir: &Path, list_name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut list = String::new();
    for utt in corpus.utterances() {
        let name = format!("{}.feat", utt.id);
        write_feature_file(&dir.join(&name), utt)?;
        list.push_str(&name);
        list.push('\n');
    }
    let list_path = dir.join(list_name);
    fs::write(&list_path, list).map_err(|e| Error::io(&list_path, e))?;
    Ok(list_path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmvnGroup {
    Speaker,
    Utterance,
}

/// Per-group cepstral mean and variance normalisation.
///
/// Each feature dimension of each group is shifted to zero mean and scaled to
/// unit variance (normalised by the frame count, so the output variance of
/// the group is exactly one); dimensions with zero variance are only
/// shifted. Statistics cover every provided frame.
pub fn apply_cmvn(corpus: &Corpus, group_by: CmvnGroup) -> Result<Corpus> {
    let dim = corpus.dim();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, u) in corpus.utterances().iter().enumerate() {
        let key = match group_by {
            CmvnGroup::Speaker => u.speaker.as_str(),
            CmvnGroup::Utterance => u.id.as_str(),
        };
        groups.entry(key).or_default().push(i);
    }
    let mut out: Vec<Utterance> = corpus.utterances().to_vec();
    for (name, members) in groups {
        let n: usize = members.iter().map(|&i| corpus.utterance(i).n_frames()).sum();
        if n < 2 {
            return Err(Error::SingleFrameGroup {
                group: name.to_string(),
            });
        }
        let mut mean = vec![0.0; dim];
        for &i in &members {
            for row in corpus.utterance(i).frames.rows() {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for &i in &members {
            for row in corpus.utterance(i).frames.rows() {
                for d in 0..dim {
                    let c = row[d] - mean[d];
                    var[d] += c * c;
                }
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let sd = (v / n as f64).sqrt();
                if sd <= 1e-12 * m.abs().max(1.0) {
                    1.0
                } else {
                    1.0 / sd
                }
            })
            .collect();
        for &i in &members {
            let frames = &mut out[i].frames;
            for t in 0..frames.n_frames() {
                for (d, v) in frames.row_mut(t).iter_mut().enumerate() {
                    *v = (*v - mean[d]) * scale[d];
                }
            }
        }
    }
    Corpus::new(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenAlignment {
    pub utterance_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub label: String,
}

impl TokenAlignment {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.end_frame <= self.start_frame
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignmentLevel {
    Word,
    Phone,
}

pub fn parse_alignments(text: &str, path: &Path) -> Result<Vec<TokenAlignment>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(Error::parse(path, i + 1, "expected `utt_id start end label`"));
        }
        let start = f[1]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, "bad start frame"))?;
        let end = f[2]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, "bad end frame"))?;
        out.push(TokenAlignment {
            utterance_id: f[0].to_string(),
            start_frame: start,
            end_frame: end,
            label: f[3].to_string(),
        });
    }
    Ok(out)
}

/// Validates alignments against `corpus` and sorts them by
/// `(utterance_id, start_frame)`. Word-level tokens must not overlap.
pub fn validate_alignments(
    mut tokens: Vec<TokenAlignment>,
    corpus: &Corpus,
    level: AlignmentLevel,
) -> Result<Vec<TokenAlignment>> {
    for t in &tokens {
        let utt = corpus
            .get(&t.utterance_id)
            .ok_or_else(|| Error::UnknownUtterance(t.utterance_id.clone()))?;
        if t.end_frame <= t.start_frame {
            return Err(Error::InvalidAlignment(format!(
                "{} {}-{} {}: end must exceed start",
                t.utterance_id, t.start_frame, t.end_frame, t.label
            )));
        }
        if t.end_frame > utt.n_frames() {
            return Err(Error::InvalidAlignment(format!(
                "{} {}-{} {}: beyond utterance length {}",
                t.utterance_id,
                t.start_frame,
                t.end_frame,
                t.label,
                utt.n_frames()
            )));
        }
    }
    tokens.sort_by(|a, b| {
        (a.utterance_id.as_str(), a.start_frame, a.end_frame)
            .cmp(&(b.utterance_id.as_str(), b.start_frame, b.end_frame))
    });
    if level == AlignmentLevel::Word {
        for w in tokens.windows(2) {
            if w[0].utterance_id == w[1].utterance_id && w[1].start_frame < w[0].end_frame {
                return Err(Error::InvalidAlignment(format!(
                    "overlapping tokens in {}: {}-{} {} and {}-{} {}",
                    w[0].utterance_id,
                    w[0].start_frame,
                    w[0].end_frame,
                    w[0].label,
                    w[1].start_frame,
                    w[1].end_frame,
                    w[1].label
                )));
            }
        }
    }
    Ok(tokens)
}

pub fn load_alignments(
    path: &Path,
    corpus: &Corpus,
    level: AlignmentLevel,
) -> Result<Vec<TokenAlignment>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    validate_alignments(parse_alignments(&text, path)?, corpus, level)
}

pub fn format_alignments(tokens: &[TokenAlignment]) -> String {
    let mut out = String::new();
    for t in tokens {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            t.utterance_id, t.start_frame, t.end_frame, t.label
        );
    }
    out
}

pub fn save_alignments(path: &Path, tokens: &[TokenAlignment]) -> Result<()> {
    fs::write(path, format_alignments(tokens)).map_err(|e| Error::io(path, e))
}

/// Groups alignments by utterance id, preserving order.
pub fn alignments_by_utterance(tokens: &[TokenAlignment]) -> BTreeMap<&str, Vec<&TokenAlignment>> {
    let mut map: BTreeMap<&str, Vec<&TokenAlignment>> = BTreeMap::new();
    for t in tokens {
        map.entry(t.utterance_id.as_str()).or_default().push(t);
    }
    map
}

/// Reads per-utterance candidate boundary positions: one line per utterance,
/// `utt_id f1 f2 ...` with frame indices.
pub fn load_boundary_positions(
    path: &Path,
    corpus: &Corpus,
) -> Result<HashMap<String, Vec<usize>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let id = it.next().unwrap_or_default().to_string();
        let utt = corpus
            .get(&id)
            .ok_or_else(|| Error::UnknownUtterance(id.clone()))?;
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, i + 1, format!("duplicate utterance {id}")));
        }
        let mut pos = Vec::new();
        for tok in it {
            let p: usize = tok
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad position {tok:?}")))?;
            if p > utt.n_frames() {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("position {p} beyond utterance length {}", utt.n_frames()),
                ));
            }
            pos.push(p);
        }
        pos.sort_unstable();
        pos.dedup();
        out.insert(id, pos);
    }
    Ok(out)
}
