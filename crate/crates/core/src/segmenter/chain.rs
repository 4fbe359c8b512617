//! Sampler state and the chain driver.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;

use super::bigram::{bigram_backward_sample, bigram_forward_filter, BigramApprox};
use super::ffbs::{backward_sample, forward_filter, forward_filter_scores};
use super::AnnealSchedule;
use crate::bgmm::{AssignLm, BigramLm, GmmState, LmContext, NgPrior};
use crate::corpus::Corpus;
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::mathutil::permutation;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub cluster: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LmMode {
    Unigram,
    Bigram { lambda: f64, a: f64, b: f64, eta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub k: usize,
    pub alpha_a: f64,
    pub sigma_sq: f64,
    pub kappa0: f64,
    pub schedule: AnnealSchedule,
    pub init_boundary_prob: f64,
    pub lm: LmMode,
    /// Sample boundaries through the bigram lattice instead of the unigram
    /// one (bigram LM mode only).
    pub bigram_boundaries: Option<BigramApprox>,
}

impl SamplerConfig {
    /// Grid-mode defaults: a = 1, sigma^2 = 0.005, kappa0 = 0.05, 25 + 25
    /// iterations.
    pub fn small_vocab(k: usize) -> Self {
        SamplerConfig {
            k,
            alpha_a: 1.0,
            sigma_sq: 0.005,
            kappa0: 0.05,
            schedule: AnnealSchedule::small_vocab(),
            init_boundary_prob: 0.25,
            lm: LmMode::Unigram,
            bigram_boundaries: None,
        }
    }

    /// Syllable-mode defaults with sigma^2 = 1e-3 (downsampled MFCCs).
    pub fn large_vocab(k: usize) -> Self {
        SamplerConfig {
            sigma_sq: 1e-3,
            schedule: AnnealSchedule::large_vocab(),
            ..Self::small_vocab(k)
        }
    }

    /// Bigram LM with a = b = 1, lambda = 0.1, eta = 1.
    pub fn default_bigram() -> LmMode {
        LmMode::Bigram {
            lambda: 0.1,
            a: 1.0,
            b: 1.0,
            eta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be positive".into()));
        }
        if !(self.init_boundary_prob > 0.0 && self.init_boundary_prob < 1.0) {
            return Err(Error::InvalidArgument("initial boundary probability must be in (0, 1)".into()));
        }
        if self.bigram_boundaries.is_some() && self.lm == LmMode::Unigram {
            return Err(Error::InvalidArgument("bigram boundary sampling needs the bigram LM".into()));
        }
        Ok(())
    }
}

/// Per-utterance segments with cluster ids, and the model they are counted in.
#[derive(Debug, Clone)]
pub struct SegmentationState<'a> {
    table: &'a EmbeddingTable,
    gmm: GmmState,
    lm: Option<BigramLm>,
    segments: Vec<Vec<Segment>>,
}

impl<'a> SegmentationState<'a> {
    /// A state with every utterance unsegmented.
    pub fn new(table: &'a EmbeddingTable, gmm: GmmState, lm: Option<BigramLm>) -> Result<Self> {
        if gmm.dim() != table.dim() {
            return Err(Error::VectorDim(gmm.dim(), table.dim()));
        }
        Ok(SegmentationState {
            table,
            gmm,
            lm,
            segments: vec![Vec::new(); table.n_utterances()],
        })
    }

    pub fn table(&self) -> &'a EmbeddingTable {
        self.table
    }

    pub fn gmm(&self) -> &GmmState {
        &self.gmm
    }

    pub fn lm(&self) -> Option<&BigramLm> {
        self.lm.as_ref()
    }

    pub fn segments(&self, utt: usize) -> &[Segment] {
        &self.segments[utt]
    }

    pub fn all_segments(&self) -> &[Vec<Segment>] {
        &self.segments
    }

    fn embedding(&self, utt: usize, s: usize, e: usize) -> &'a [f64] {
        self.table
            .get(utt, s, e)
            .unwrap_or_else(|| panic!("segment {s}-{e} of utterance {utt} not in table"))
    }

    /// Removes the utterance's segments from the model; returns them.
    pub fn remove_utterance(&mut self, utt: usize) -> Result<Vec<Segment>> {
        let segs = std::mem::take(&mut self.segments[utt]);
        let mut prev = LmContext::Start;
        for seg in &segs {
            let x = self.embedding(utt, seg.start, seg.end);
            self.gmm.remove(x, seg.cluster)?;
            if let Some(lm) = self.lm.as_mut() {
                lm.remove(prev, seg.cluster)?;
            }
            prev = LmContext::Component(seg.cluster);
        }
        Ok(segs)
    }

    /// Adds segments with known clusters (the utterance must be empty).
    pub fn insert_utterance(&mut self, utt: usize, segs: Vec<Segment>) -> Result<()> {
        assert!(self.segments[utt].is_empty(), "utterance {utt} already segmented");
        let mut prev = LmContext::Start;
        for seg in &segs {
            let x = self.embedding(utt, seg.start, seg.end);
            self.gmm.add(x, seg.cluster)?;
            if let Some(lm) = self.lm.as_mut() {
                lm.add(prev, seg.cluster);
            }
            prev = LmContext::Component(seg.cluster);
        }
        self.segments[utt] = segs;
        Ok(())
    }

    /// Samples a component for each span left to right and adds it.
    pub fn assign_spans(&mut self, utt: usize, spans: &[(usize, usize)], rng: &mut Rng) -> Result<()> {
        assert!(self.segments[utt].is_empty(), "utterance {utt} already segmented");
        let mut prev = LmContext::Start;
        let mut out = Vec::with_capacity(spans.len());
        for &(s, e) in spans {
            let x = self.embedding(utt, s, e);
            let k = match self.lm.as_mut() {
                None => self.gmm.sample_assignment(x, rng, AssignLm::Unigram)?,
                Some(lm) => {
                    let k = self.gmm.sample_assignment(x, rng, AssignLm::Bigram { lm, context: prev })?;
                    lm.add(prev, k);
                    k
                }
            };
            prev = LmContext::Component(k);
            out.push(Segment {
                start: s,
                end: e,
                cluster: k,
            });
        }
        self.segments[utt] = out;
        Ok(())
    }

    /// Keeps the boundaries of `utt` and resamples its assignments.
    pub fn resample_assignments(&mut self, utt: usize, rng: &mut Rng) -> Result<()> {
        let old = self.remove_utterance(utt)?;
        let spans: Vec<(usize, usize)> = old.iter().map(|s| (s.start, s.end)).collect();
        self.assign_spans(utt, &spans, rng)
    }

    /// Removes `utt`, samples new boundaries at `exponent` and assigns the
    /// new segments.
    pub fn resegment_utterance(
        &mut self,
        utt: usize,
        rng: &mut Rng,
        exponent: f64,
        bigram_boundaries: Option<BigramApprox>,
    ) -> Result<()> {
        self.remove_utterance(utt)?;
        let spans = match (bigram_boundaries, self.lm.as_ref()) {
            (Some(approx), Some(lm)) => {
                let lat = bigram_forward_filter(self.table, utt, &self.gmm, lm, approx)?;
                bigram_backward_sample(&lat, exponent, rng)
            }
            _ => {
                let lat = forward_filter(self.table, utt, &self.gmm)?;
                backward_sample(&lat, exponent, rng)
            }
        };
        self.assign_spans(utt, &spans, rng)?;
        debug_assert!(self.check_utterance(utt).is_ok());
        Ok(())
    }

    /// Tiling and table-membership check for one utterance.
    pub fn check_utterance(&self, utt: usize) -> Result<()> {
        let segs = &self.segments[utt];
        let n = self.table.n_frames(utt);
        let mut t = 0;
        for s in segs {
            if s.start != t || self.table.span_index(utt, s.start, s.end).is_none() || s.cluster >= self.gmm.n_components() {
                return Err(Error::Segment {
                    utterance: self.table.utterance_id(utt).to_string(),
                    start: s.start,
                    end: s.end,
                    message: "segment breaks the tiling or is not allowed".into(),
                });
            }
            t = s.end;
        }
        if t != n {
            return Err(Error::NoPath {
                utterance: self.table.utterance_id(utt).to_string(),
                position: t,
            });
        }
        Ok(())
    }

    /// Full consistency check: tilings plus model counts.
    pub fn check_invariants(&self) -> Result<()> {
        let mut counts = vec![0usize; self.gmm.n_components()];
        for utt in 0..self.segments.len() {
            self.check_utterance(utt)?;
            for s in &self.segments[utt] {
                counts[s.cluster] += 1;
            }
        }
        if counts != self.gmm.counts() {
            return Err(Error::InvalidArgument("component counts disagree with segments".into()));
        }
        Ok(())
    }

    pub fn n_boundaries(&self) -> usize {
        self.segments.iter().map(|s| s.len().saturating_sub(1)).sum()
    }

    pub fn n_clusters_used(&self) -> usize {
        self.gmm.n_used()
    }

    /// Sum over segments of the held-out segment score plus the held-out
    /// assignment prior. A monitoring quantity only.
    pub fn log_post_proxy(&self) -> f64 {
        let g = &self.gmm;
        let kf = g.n_components() as f64;
        let denom = ((g.n_total() as f64) - 1.0 + g.alpha_a()).ln();
        let mut total = 0.0;
        for (utt, segs) in self.segments.iter().enumerate() {
            for s in segs {
                let x = self.embedding(utt, s.start, s.end);
                let prior = ((g.count(s.cluster) - 1) as f64 + g.alpha_a() / kf).ln() - denom;
                total += (s.end - s.start) as f64 * g.log_marginal_held_out(x, s.cluster) + prior;
            }
        }
        total
    }

    /// Lines `utt_id start end cluster`.
    pub fn format_segmentation(&self) -> String {
        let mut out = String::new();
        for (utt, segs) in self.segments.iter().enumerate() {
            for s in segs {
                let _ = writeln!(out, "{} {} {} {}", self.table.utterance_id(utt), s.start, s.end, s.cluster);
            }
        }
        out
    }

    pub fn write_segmentation(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.format_segmentation()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterSummary {
    pub iter: usize,
    pub log_post_proxy: f64,
    pub n_clusters_used: usize,
    pub n_boundaries: usize,
}

#[derive(Debug, Clone)]
pub struct ChainRecord<'a> {
    pub state: SegmentationState<'a>,
    pub summaries: Vec<IterSummary>,
}

/// Lines `iter log_post_proxy n_clusters_used n_boundaries`.
pub fn format_chain_summary(summaries: &[IterSummary]) -> String {
    let mut out = String::new();
    for s in summaries {
        let _ = writeln!(
            out,
            "{} {:?} {} {}",
            s.iter, s.log_post_proxy, s.n_clusters_used, s.n_boundaries
        );
    }
    out
}

/// Random initial tiling: every eligible interior position is a boundary
/// with probability `p`, conditioned on the result being an allowed tiling.
fn sample_initial_spans(table: &EmbeddingTable, utt: usize, p: f64, rng: &mut Rng) -> Result<Vec<(usize, usize)>> {
    let spans = table.spans(utt).to_vec();
    let n = table.n_frames(utt);
    // eligible interior positions are the span endpoints
    let mut eligible = vec![false; n + 1];
    for &(s, e) in &spans {
        eligible[s] = true;
        eligible[e] = true;
    }
    let mut prefix = vec![0usize; n + 2];
    for t in 0..=n {
        prefix[t + 1] = prefix[t] + usize::from(eligible[t] && t > 0 && t < n);
    }
    let (lb, lnb) = (p.ln(), (1.0 - p).ln());
    let scores = spans
        .iter()
        .map(|&(s, e)| {
            let inside = prefix[e] - prefix[s + 1];
            inside as f64 * lnb + if e < n { lb } else { 0.0 }
        })
        .collect();
    let lat = forward_filter_scores(table.utterance_id(utt), n, spans, scores)?;
    Ok(backward_sample(&lat, 1.0, rng))
}

/// Runs one chain: random initialisation, assignment-only iterations with
/// fixed boundaries, then annealed full iterations.
pub fn run_chain<'a>(
    corpus: &Corpus,
    table: &'a EmbeddingTable,
    config: &SamplerConfig,
    rng: &mut Rng,
) -> Result<ChainRecord<'a>> {
    config.validate()?;
    if table.n_utterances() != corpus.len()
        || corpus
            .utterances()
            .iter()
            .enumerate()
            .any(|(i, u)| table.utterance_id(i) != u.id || table.n_frames(i) != u.n_frames())
    {
        return Err(Error::InvalidArgument("embedding table does not match the corpus".into()));
    }
    let prior = NgPrior::new(table.dim(), config.sigma_sq, config.kappa0)?;
    let gmm = GmmState::new(config.k, config.alpha_a, prior)?;
    let lm = match config.lm {
        LmMode::Unigram => None,
        LmMode::Bigram { lambda, a, b, eta } => Some(BigramLm::new(config.k, lambda, a, b, eta)?),
    };
    let mut state = SegmentationState::new(table, gmm, lm)?;
    let n_utts = table.n_utterances();

    for utt in 0..n_utts {
        let spans = sample_initial_spans(table, utt, config.init_boundary_prob, rng)?;
        let segs = spans
            .into_iter()
            .map(|(start, end)| Segment {
                start,
                end,
                cluster: rng.random_range(0..config.k),
            })
            .collect();
        state.insert_utterance(utt, segs)?;
    }

    let sched = &config.schedule;
    let mut summaries = Vec::with_capacity(sched.iters_fixed_boundaries + sched.total_iters);
    let mut iter = 0;
    let mut record = |state: &SegmentationState<'_>, iter: usize| {
        let s = IterSummary {
            iter,
            log_post_proxy: state.log_post_proxy(),
            n_clusters_used: state.n_clusters_used(),
            n_boundaries: state.n_boundaries(),
        };
        log::debug!(
            "iter {} proxy {:.3} clusters {} boundaries {}",
            s.iter,
            s.log_post_proxy,
            s.n_clusters_used,
            s.n_boundaries
        );
        summaries.push(s);
    };
    for _ in 0..sched.iters_fixed_boundaries {
        iter += 1;
        for utt in permutation(n_utts, rng) {
            state.resample_assignments(utt, rng)?;
        }
        record(&state, iter);
    }
    for j in 0..sched.total_iters {
        iter += 1;
        let exponent = sched.exponent_at(j);
        for utt in permutation(n_utts, rng) {
            state.resegment_utterance(utt, rng, exponent, config.bigram_boundaries)?;
        }
        record(&state, iter);
    }
    debug_assert!(state.check_invariants().is_ok());
    Ok(ChainRecord { state, summaries })
}
