//! Synthetic corpora with known word and pseudo-phone alignments.
//!
//! Each word type has a smooth prototype trajectory (a uniform cubic B-spline
//! through random control points). A token is its prototype sampled at a
//! random length under a monotone time warp, plus a per-speaker offset and
//! white Gaussian noise. Utterances concatenate tokens. Every word is split
//! into two halves that serve as pseudo-phones.

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::cae::{save_word_pairs, SegmentRef, WordPair};
use crate::corpus::{save_alignments, save_feature_corpus, Corpus, Frames, TokenAlignment, Utterance};
use crate::error::{Error, Result};
use crate::rng::{indexed_stream, named_stream, Rng};

const N_CONTROL: usize = 6;
const N_GRID: usize = 50;
const N_CANDIDATES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub vocab_size: usize,
    pub dim: usize,
    pub frames_per_word: (usize, usize),
    pub words_per_utterance: (usize, usize),
    pub n_utterances: usize,
    pub n_speakers: usize,
    /// Minimum RMS distance between prototypes, in units of `noise_std`.
    pub prototype_separation: f64,
    /// Largest allowed control-point magnitude.
    pub amplitude: f64,
    pub noise_std: f64,
    /// Strength of the per-token time warp, in `[0, 1)`.
    pub warp_strength: f64,
    pub speaker_offset_scale: f64,
    pub n_pairs: usize,
    pub pair_noise_rate: f64,
    pub frame_period_ms: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            vocab_size: 5,
            dim: 4,
            frames_per_word: (20, 40),
            words_per_utterance: (3, 6),
            n_utterances: 100,
            n_speakers: 1,
            prototype_separation: 6.0,
            amplitude: 3.0,
            noise_std: 0.2,
            warp_strength: 0.4,
            speaker_offset_scale: 0.0,
            n_pairs: 0,
            pair_noise_rate: 0.0,
            frame_period_ms: 10.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.vocab_size < 2 {
            return bad("vocab_size must be at least 2");
        }
        if self.dim == 0 || self.n_utterances == 0 || self.n_speakers == 0 {
            return bad("dim, n_utterances and n_speakers must be positive");
        }
        let (f0, f1) = self.frames_per_word;
        let (w0, w1) = self.words_per_utterance;
        if f0 < 2 || f0 > f1 || w0 == 0 || w0 > w1 {
            return bad("frames_per_word and words_per_utterance must be non-empty ranges (at least 2 frames)");
        }
        if !(self.prototype_separation > 0.0) || !(self.amplitude > 0.0) {
            return bad("prototype_separation and amplitude must be positive");
        }
        if !(self.noise_std >= 0.0) || !(self.speaker_offset_scale >= 0.0) {
            return bad("noise scales must be non-negative");
        }
        if !(0.0..1.0).contains(&self.warp_strength) {
            return bad("warp_strength must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.pair_noise_rate) {
            return bad("pair_noise_rate must lie in [0, 1]");
        }
        if !(self.frame_period_ms > 0.0) {
            return bad("frame_period_ms must be positive");
        }
        Ok(())
    }
}

/// Control points of a prototype, `N_CONTROL x dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub dim: usize,
    pub control: Vec<f64>,
}

impl Prototype {
    /// Curve value at `u` in `[0, 1]`.
    pub fn eval(&self, u: f64, out: &mut [f64]) {
        let n_seg = N_CONTROL - 3;
        let x = u.clamp(0.0, 1.0) * n_seg as f64;
        let seg = (x.floor() as usize).min(n_seg - 1);
        let t = x - seg as f64;
        let b = [
            (1.0 - t).powi(3) / 6.0,
            (3.0 * t.powi(3) - 6.0 * t * t + 4.0) / 6.0,
            (-3.0 * t.powi(3) + 3.0 * t * t + 3.0 * t + 1.0) / 6.0,
            t.powi(3) / 6.0,
        ];
        out.fill(0.0);
        for (k, bk) in b.iter().enumerate() {
            let row = &self.control[(seg + k) * self.dim..(seg + k + 1) * self.dim];
            for (o, c) in out.iter_mut().zip(row) {
                *o += bk * c;
            }
        }
    }

    fn grid(&self) -> Vec<f64> {
        let mut out = vec![0.0; N_GRID * self.dim];
        for (i, row) in out.chunks_mut(self.dim).enumerate() {
            self.eval(i as f64 / (N_GRID - 1) as f64, row);
        }
        out
    }

    fn scaled(&self, s: f64) -> Prototype {
        Prototype {
            dim: self.dim,
            control: self.control.iter().map(|c| c * s).collect(),
        }
    }
}

/// RMS over a fixed grid of the pointwise Euclidean distance.
pub fn prototype_distance(a: &Prototype, b: &Prototype) -> f64 {
    let (ga, gb) = (a.grid(), b.grid());
    let ss: f64 = ga.iter().zip(&gb).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / N_GRID as f64).sqrt()
}

fn min_pairwise(protos: &[Prototype]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..protos.len() {
        for j in i + 1..protos.len() {
            m = m.min(prototype_distance(&protos[i], &protos[j]));
        }
    }
    m
}

/// Draws prototypes in the unit box (each new one the farthest of a batch of
/// candidates from those already chosen), then rescales them so that the
/// closest pair sits exactly `separation * noise_std` apart.
pub fn draw_prototypes(spec: &SynthSpec, rng: &mut Rng) -> Result<Vec<Prototype>> {
    let draw = |rng: &mut Rng| Prototype {
        dim: spec.dim,
        control: (0..N_CONTROL * spec.dim).map(|_| rng.random_range(-1.0..=1.0)).collect(),
    };
    let mut protos: Vec<Prototype> = vec![draw(rng)];
    while protos.len() < spec.vocab_size {
        let mut best: Option<(Prototype, f64)> = None;
        for _ in 0..N_CANDIDATES {
            let c = draw(rng);
            let d = protos.iter().map(|p| prototype_distance(p, &c)).fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|b| d > b.1) {
                best = Some((c, d));
            }
        }
        protos.push(best.unwrap().0);
    }
    let d_min = min_pairwise(&protos);
    if spec.noise_std == 0.0 {
        return Ok(protos.iter().map(|p| p.scaled(spec.amplitude)).collect());
    }
    let s = spec.prototype_separation * spec.noise_std / d_min;
    if s > spec.amplitude {
        return Err(Error::InfeasibleSeparation {
            requested: spec.prototype_separation,
            achievable: spec.amplitude * d_min / spec.noise_std,
        });
    }
    Ok(protos.iter().map(|p| p.scaled(s)).collect())
}

pub fn word_label(k: usize) -> String {
    format!("w{k}")
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub corpus: Corpus,
    pub words: Vec<TokenAlignment>,
    pub phones: Vec<TokenAlignment>,
    pub pairs: Vec<WordPair>,
    pub prototypes: Vec<Prototype>,
}

impl SynthData {
    /// Writes `features/` (with `list.txt`), `words.ali`, `phones.ali` and
    /// `pairs.txt` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        save_feature_corpus(&self.corpus, &dir.join("features"), "list.txt")?;
        save_alignments(&dir.join("words.ali"), &self.words)?;
        save_alignments(&dir.join("phones.ali"), &self.phones)?;
        save_word_pairs(&dir.join("pairs.txt"), &self.pairs)
    }
}

/// Samples `prototype` at `len` frames through the warp
/// `u + c sin(pi u) / pi`, which is monotone for `|c| < 1`.
fn render(prototype: &Prototype, len: usize, c: f64, out: &mut Vec<f64>) {
    let mut row = vec![0.0; prototype.dim];
    for t in 0..len {
        let u = (t as f64 + 0.5) / len as f64;
        let w = u + c * (std::f64::consts::PI * u).sin() / std::f64::consts::PI;
        prototype.eval(w, &mut row);
        out.extend_from_slice(&row);
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let prototypes = draw_prototypes(spec, &mut named_stream(spec.seed, "synth-prototypes"))?;
    let mut spk_rng = named_stream(spec.seed, "synth-speakers");
    let offset = Normal::new(0.0, spec.speaker_offset_scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let offsets: Vec<Vec<f64>> = (0..spec.n_speakers)
        .map(|_| (0..spec.dim).map(|_| offset.sample(&mut spk_rng)).collect())
        .collect();
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut utts = Vec::with_capacity(spec.n_utterances);
    let mut words = Vec::new();
    let mut phones = Vec::new();
    for i in 0..spec.n_utterances {
        let mut rng = indexed_stream(spec.seed, "synth-utterance", i as u64);
        let id = format!("utt{i:04}");
        let spk = i % spec.n_speakers;
        let n_words = rng.random_range(spec.words_per_utterance.0..=spec.words_per_utterance.1);
        let mut data = Vec::new();
        let mut pos = 0;
        for _ in 0..n_words {
            let k = rng.random_range(0..spec.vocab_size);
            let len = rng.random_range(spec.frames_per_word.0..=spec.frames_per_word.1);
            let c = if spec.warp_strength > 0.0 {
                rng.random_range(-spec.warp_strength..spec.warp_strength)
            } else {
                0.0
            };
            render(&prototypes[k], len, c, &mut data);
            let label = word_label(k);
            let mid = pos + len / 2;
            for (h, (s, e)) in [(pos, mid), (mid, pos + len)].into_iter().enumerate() {
                phones.push(TokenAlignment {
                    utterance_id: id.clone(),
                    start_frame: s,
                    end_frame: e,
                    label: format!("{label}_{h}"),
                });
            }
            words.push(TokenAlignment {
                utterance_id: id.clone(),
                start_frame: pos,
                end_frame: pos + len,
                label,
            });
            pos += len;
        }
        for row in data.chunks_mut(spec.dim) {
            for (x, o) in row.iter_mut().zip(&offsets[spk]) {
                *x += o + noise.sample(&mut rng);
            }
        }
        utts.push(Utterance {
            id,
            speaker: format!("spk{spk:02}"),
            frames: Frames::new(data, spec.dim)?,
            frame_period_ms: spec.frame_period_ms,
        });
    }
    let corpus = Corpus::new(utts)?;
    let pairs = sample_pairs(spec, &words, &mut named_stream(spec.seed, "synth-pairs"));
    Ok(SynthData {
        corpus,
        words,
        phones,
        pairs,
        prototypes,
    })
}

/// Simulated discovered pairs: with probability `1 - pair_noise_rate` both
/// sides share a type, otherwise they differ. Types without a second token
/// (or without another type) are skipped.
fn sample_pairs(spec: &SynthSpec, words: &[TokenAlignment], rng: &mut Rng) -> Vec<WordPair> {
    let types: Vec<usize> = words.iter().map(|w| w.label[1..].parse().unwrap()).collect();
    let mut by_type: Vec<Vec<usize>> = vec![Vec::new(); spec.vocab_size];
    for (i, &k) in types.iter().enumerate() {
        by_type[k].push(i);
    }
    let as_ref = |w: &TokenAlignment| SegmentRef {
        utterance: w.utterance_id.clone(),
        start: w.start_frame,
        end: w.end_frame,
    };
    let mut out = Vec::with_capacity(spec.n_pairs);
    let mut attempts = 0;
    while out.len() < spec.n_pairs && attempts < 100 * spec.n_pairs.max(1) {
        attempts += 1;
        let a = rng.random_range(0..words.len());
        let ka = types[a];
        let b = if rng.random_bool(spec.pair_noise_rate) {
            let others: Vec<usize> = (0..words.len()).filter(|&j| types[j] != ka).collect();
            if others.is_empty() {
                continue;
            }
            others[rng.random_range(0..others.len())]
        } else {
            let same = &by_type[ka];
            if same.len() < 2 {
                continue;
            }
            let mut j = a;
            while j == a {
                j = same[rng.random_range(0..same.len())];
            }
            j
        };
        out.push(WordPair {
            a: as_ref(&words[a]),
            b: as_ref(&words[b]),
        });
    }
    out
}
