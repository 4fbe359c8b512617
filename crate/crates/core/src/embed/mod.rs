//! Fixed-dimensional acoustic word embeddings of variable-length segments.

mod downsample;
mod eigenmaps;
mod refine;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::corpus::{Corpus, FramesView, Utterance};
use crate::error::{Error, Result};
use crate::mathutil::norm;
use crate::rng::{segment_stream, Rng};
use crate::segmenter::{allowed_segments, Constraints};

pub use downsample::{downsample_embed, resample};
pub use eigenmaps::{assemble_matrices, eigenmaps_embed, fit_eigenmaps, EigenmapConfig, EigenmapModel, GraphMatrices};
pub use refine::{random_reference_set, refine_reference_set};

/// Default noise standard deviation as a fraction of the embedding spread.
pub const DEFAULT_NOISE_FACTOR: f64 = 0.05;

/// A (normally unit-norm) embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f64>,
}

impl Embedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// The raw (unnormalised) embedding function.
#[derive(Debug, Clone)]
pub enum Embedder {
    Downsample { n_keep: usize },
    Eigenmaps(EigenmapModel),
}

impl Embedder {
    pub fn embed(&self, segment: FramesView<'_>) -> Result<Vec<f64>> {
        match self {
            Embedder::Downsample { n_keep } => downsample_embed(segment, *n_keep),
            Embedder::Eigenmaps(model) => eigenmaps_embed(model, segment),
        }
    }
}

/// Adds `N(0, (noise_factor * sigma_e)^2)` noise per coordinate, then scales
/// to unit norm.
pub fn normalize_embedding(raw: &[f64], noise_factor: f64, sigma_e: f64, rng: &mut Rng) -> Result<Embedding> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("embedding has non-finite values".into()));
    }
    if !(noise_factor >= 0.0 && sigma_e >= 0.0) {
        return Err(Error::InvalidArgument("noise factor and sigma_E must be non-negative".into()));
    }
    let std = noise_factor * sigma_e;
    let mut v = raw.to_vec();
    if std > 0.0 {
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for x in v.iter_mut() {
            *x += normal.sample(rng);
        }
    }
    let n = norm(&v);
    if n == 0.0 {
        return Err(Error::ZeroEmbedding);
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(Embedding { vector: v })
}

/// Pooled sample standard deviation over every coordinate of every raw
/// embedding.
pub fn compute_sigma_e<'a, I>(raw: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut count = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for v in raw {
        for &x in v {
            count += 1;
            let delta = x - mean;
            mean += delta / count as f64;
            m2 += delta * (x - mean);
        }
    }
    if count < 2 {
        return Err(Error::Empty("embedding pool with at least two values"));
    }
    Ok((m2 / (count - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
struct UttEntries {
    id: String,
    n_frames: usize,
    spans: Vec<(usize, usize)>,
    lookup: HashMap<(usize, usize), usize>,
    data: Vec<f64>,
}

/// Embeddings of every allowed segment, grouped per utterance in corpus
/// order. Within an utterance spans are sorted by `(start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    utts: Vec<UttEntries>,
    index: HashMap<String, usize>,
}

/// One utterance's worth of `(span, vector)` pairs.
pub type UttEmbeddings = (String, usize, Vec<((usize, usize), Vec<f64>)>);

impl EmbeddingTable {
    /// Builds a table from per-utterance entries. All vectors must have
    /// dimension `dim`; duplicate spans are rejected.
    pub fn from_entries(dim: usize, utts: Vec<UttEmbeddings>) -> Result<Self> {
        let mut out = Vec::with_capacity(utts.len());
        let mut index = HashMap::new();
        for (id, n_frames, mut entries) in utts {
            entries.sort_by_key(|(span, _)| *span);
            let mut spans = Vec::with_capacity(entries.len());
            let mut lookup = HashMap::with_capacity(entries.len());
            let mut data = Vec::with_capacity(entries.len() * dim);
            for ((s, e), v) in entries {
                if v.len() != dim {
                    return Err(Error::VectorDim(dim, v.len()));
                }
                if s >= e || e > n_frames {
                    return Err(Error::Segment {
                        utterance: id.clone(),
                        start: s,
                        end: e,
                        message: format!("span outside utterance of {n_frames} frames"),
                    });
                }
                if lookup.insert((s, e), spans.len()).is_some() {
                    return Err(Error::Segment {
                        utterance: id.clone(),
                        start: s,
                        end: e,
                        message: "duplicate table entry".into(),
                    });
                }
                spans.push((s, e));
                data.extend_from_slice(&v);
            }
            if index.insert(id.clone(), out.len()).is_some() {
                return Err(Error::DuplicateUtterance(id));
            }
            out.push(UttEntries {
                id,
                n_frames,
                spans,
                lookup,
                data,
            });
        }
        Ok(EmbeddingTable { dim, utts: out, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_utterances(&self) -> usize {
        self.utts.len()
    }

    /// Total number of entries.
    pub fn len(&self) -> usize {
        self.utts.iter().map(|u| u.spans.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn utterance_id(&self, utt: usize) -> &str {
        &self.utts[utt].id
    }

    pub fn utterance_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn n_frames(&self, utt: usize) -> usize {
        self.utts[utt].n_frames
    }

    pub fn spans(&self, utt: usize) -> &[(usize, usize)] {
        &self.utts[utt].spans
    }

    /// Vector of the `j`-th span of utterance `utt`.
    pub fn entry(&self, utt: usize, j: usize) -> &[f64] {
        &self.utts[utt].data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn span_index(&self, utt: usize, start: usize, end: usize) -> Option<usize> {
        self.utts[utt].lookup.get(&(start, end)).copied()
    }

    pub fn get(&self, utt: usize, start: usize, end: usize) -> Option<&[f64]> {
        self.span_index(utt, start, end).map(|j| self.entry(utt, j))
    }

    pub fn get_by_id(&self, id: &str, start: usize, end: usize) -> Option<&[f64]> {
        self.get(self.utterance_index(id)?, start, end)
    }

    /// All keys `(utterance_id, start, end)` in table order.
    pub fn keys(&self) -> impl Iterator<Item = (&str, usize, usize)> {
        self.utts
            .iter()
            .flat_map(|u| u.spans.iter().map(move |&(s, e)| (u.id.as_str(), s, e)))
    }

    /// All vectors in table order.
    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.utts.iter().flat_map(move |u| u.data.chunks_exact(self.dim.max(1)))
    }

    /// Applies `f(utterance_id, start, end, vector)` to every entry.
    pub fn try_map<F>(&self, new_dim: usize, f: F) -> Result<EmbeddingTable>
    where
        F: Fn(&str, usize, usize, &[f64]) -> Result<Vec<f64>> + Sync,
    {
        let utts: Result<Vec<UttEmbeddings>> = self
            .utts
            .par_iter()
            .map(|u| {
                let entries = u
                    .spans
                    .iter()
                    .enumerate()
                    .map(|(j, &(s, e))| {
                        let v = f(&u.id, s, e, &u.data[j * self.dim..(j + 1) * self.dim])?;
                        Ok(((s, e), v))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((u.id.clone(), u.n_frames, entries))
            })
            .collect();
        EmbeddingTable::from_entries(new_dim, utts?)
    }

    /// Cache format: header `D_emb n_entries`, then `utt start end v1 ... vD`.
    pub fn format_cache(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.dim, self.len());
        for (ui, u) in self.utts.iter().enumerate() {
            for (j, &(s, e)) in u.spans.iter().enumerate() {
                let _ = write!(out, "{} {} {}", u.id, s, e);
                for v in self.entry(ui, j) {
                    let _ = write!(out, " {v:?}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.format_cache()).map_err(|e| Error::io(path, e))
    }

    /// Reads a cache written by [`EmbeddingTable::write_cache`]. Utterance
    /// order and lengths come from `corpus`.
    pub fn read_cache(path: &Path, corpus: &Corpus) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let (dim, n) = match lines.next() {
            Some((_, h)) => {
                let f: Vec<&str> = h.split_whitespace().collect();
                match f.as_slice() {
                    [d, n] => (
                        d.parse::<usize>().map_err(|e| Error::parse(path, 1, e.to_string()))?,
                        n.parse::<usize>().map_err(|e| Error::parse(path, 1, e.to_string()))?,
                    ),
                    _ => return Err(Error::parse(path, 1, "expected `D_emb n_entries`")),
                }
            }
            None => return Err(Error::parse(path, 1, "empty cache file")),
        };
        let mut per_utt: Vec<Vec<((usize, usize), Vec<f64>)>> = vec![Vec::new(); corpus.len()];
        let mut count = 0;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 + dim {
                return Err(Error::parse(path, i + 1, format!("expected {} fields", 3 + dim)));
            }
            let ui = corpus
                .index_of(f[0])
                .ok_or_else(|| Error::UnknownUtterance(f[0].to_string()))?;
            let num = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(path, i + 1, e.to_string()));
            let (s, e) = (num(f[1])?, num(f[2])?);
            let v = f[3..]
                .iter()
                .map(|x| x.parse::<f64>().map_err(|e| Error::parse(path, i + 1, e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            per_utt[ui].push(((s, e), v));
            count += 1;
        }
        if count != n {
            return Err(Error::parse(path, 1, format!("header announces {n} entries, found {count}")));
        }
        let utts = corpus
            .utterances()
            .iter()
            .zip(per_utt)
            .map(|(u, entries)| (u.id.clone(), u.n_frames(), entries))
            .collect();
        EmbeddingTable::from_entries(dim, utts)
    }
}

/// Evaluates `embed_fn` on every allowed segment of every utterance.
///
/// Utterances are processed in parallel; the result does not depend on the
/// thread count. Errors carry the segment key.
pub fn precompute_table<F>(corpus: &Corpus, constraints: &Constraints, embed_fn: F) -> Result<EmbeddingTable>
where
    F: Fn(&Utterance, usize, usize) -> Result<Vec<f64>> + Sync,
{
    let per_utt: Vec<Result<UttEmbeddings>> = corpus
        .utterances()
        .par_iter()
        .map(|u| {
            let spans = allowed_segments(u, constraints);
            let entries = spans
                .into_iter()
                .map(|(s, e)| {
                    embed_fn(u, s, e).map(|v| ((s, e), v)).map_err(|err| Error::Segment {
                        utterance: u.id.clone(),
                        start: s,
                        end: e,
                        message: err.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((u.id.clone(), u.n_frames(), entries))
        })
        .collect();
    let utts = per_utt.into_iter().collect::<Result<Vec<_>>>()?;
    let dim = utts
        .iter()
        .flat_map(|(_, _, e)| e.first())
        .map(|(_, v)| v.len())
        .next()
        .unwrap_or(0);
    EmbeddingTable::from_entries(dim, utts)
}

/// Raw embeddings of all allowed segments, then noise and unit-norm scaling.
/// The noise for a segment is drawn from a stream keyed by `noise_seed` and
/// the segment key.
pub fn build_table(
    corpus: &Corpus,
    constraints: &Constraints,
    embedder: &Embedder,
    noise_factor: f64,
    noise_seed: u64,
) -> Result<EmbeddingTable> {
    let raw = precompute_table(corpus, constraints, |u, s, e| embedder.embed(u.frames.slice(s, e)))?;
    normalize_table(&raw, noise_factor, noise_seed)
}

/// Applies [`normalize_embedding`] to every entry of a raw table, with
/// `sigma_E` estimated from the table itself.
pub fn normalize_table(raw: &EmbeddingTable, noise_factor: f64, noise_seed: u64) -> Result<EmbeddingTable> {
    let sigma_e = if noise_factor > 0.0 { compute_sigma_e(raw.vectors())? } else { 0.0 };
    raw.try_map(raw.dim(), |id, s, e, v| {
        let mut rng = segment_stream(noise_seed, id, s, e);
        normalize_embedding(v, noise_factor, sigma_e, &mut rng)
            .map(|emb| emb.vector)
            .map_err(|err| Error::Segment {
                utterance: id.to_string(),
                start: s,
                end: e,
                message: err.to_string(),
            })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Frames;
    use crate::rng::named_stream;

    fn corpus() -> Corpus {
        let utt = |id: &str, n: usize| Utterance {
            id: id.into(),
            speaker: "s".into(),
            frames: Frames::new((0..n * 2).map(|i| (i as f64 * 0.37).sin() + 0.1).collect(), 2).unwrap(),
            frame_period_ms: 10.0,
        };
        Corpus::new(vec![utt("a", 4), utt("b", 6)]).unwrap()
    }

    #[test]
    fn normalize_scales() {
        let mut rng = named_stream(0, "n");
        let e = normalize_embedding(&[3.0, 4.0], 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(e.vector, vec![0.6, 0.8]);
        assert!(matches!(normalize_embedding(&[0.0, 0.0], 0.0, 1.0, &mut rng), Err(Error::ZeroEmbedding)));
        for i in 0..100 {
            let raw: Vec<f64> = (0..7).map(|d| ((i * 7 + d) as f64).cos() * 10f64.powi(i % 5)).collect();
            let e = normalize_embedding(&raw, DEFAULT_NOISE_FACTOR, 1.3, &mut rng).unwrap();
            assert!((norm(&e.vector) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sigma_cases() {
        let one = [1.5, 1.5];
        assert_eq!(compute_sigma_e([&one[..], &one[..]]).unwrap(), 0.0);
        let v = [[0.0], [2.0]];
        assert!((compute_sigma_e(v.iter().map(|x| &x[..])).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let pool = [[0.3, -1.2], [2.5, 0.4], [1.1, 1.0]];
        let scaled: Vec<Vec<f64>> = pool.iter().map(|r| r.iter().map(|x| -3.0 * x).collect()).collect();
        let a = compute_sigma_e(pool.iter().map(|x| &x[..])).unwrap();
        let b = compute_sigma_e(scaled.iter().map(|x| &x[..])).unwrap();
        assert!((b - 3.0 * a).abs() < 1e-12);
        assert!(compute_sigma_e([&[1.0][..]]).is_err());
    }

    #[test]
    fn table_counts_and_keys() {
        let c = corpus();
        let cons = Constraints::grid(1, 1, 4).unwrap();
        let t = precompute_table(&c, &cons, |u, s, e| downsample_embed(u.frames.slice(s, e), 2)).unwrap();
        assert_eq!(t.spans(0).len(), 10);
        for (ui, u) in c.utterances().iter().enumerate() {
            let mut expect = allowed_segments(u, &cons);
            expect.sort();
            assert_eq!(t.spans(ui), &expect[..]);
        }
        assert_eq!(t.dim(), 4);
    }

    #[test]
    fn empty_allowed_set_gives_empty_table() {
        let t = EmbeddingTable::from_entries(3, vec![]).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn noise_is_keyed_by_segment() {
        let c = corpus();
        let cons = Constraints::grid(1, 2, 4).unwrap();
        let emb = Embedder::Downsample { n_keep: 3 };
        let a = build_table(&c, &cons, &emb, 0.05, 42).unwrap();
        let b = pool(1).install(|| build_table(&c, &cons, &emb, 0.05, 42).unwrap());
        assert_eq!(a, b);
        let d = build_table(&c, &cons, &emb, 0.05, 43).unwrap();
        assert_ne!(a, d);
    }

    fn pool(n: usize) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()
    }

    #[test]
    fn cache_round_trip() {
        let c = corpus();
        let cons = Constraints::grid(2, 2, 6).unwrap();
        let t = build_table(&c, &cons, &Embedder::Downsample { n_keep: 2 }, 0.05, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("table.txt");
        t.write_cache(&p).unwrap();
        let back = EmbeddingTable::read_cache(&p, &c).unwrap();
        assert_eq!(t, back);
    }
}
