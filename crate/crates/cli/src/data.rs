//! `synth` and `embed-table`.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;

use bayesseg::corpus::load_feature_corpus;
use bayesseg::embed::{build_table, fit_eigenmaps, random_reference_set, Embedder};
use bayesseg::rng::indexed_stream;
use bayesseg::synth::{generate, SynthSpec};

use crate::config::Resolver;
use crate::emit_resolved;
use crate::segment::{noise_seed, resolve_common, Backend, ConstraintArgs, EmbedArgs};

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    min_frames: Option<usize>,
    #[arg(long)]
    max_frames: Option<usize>,
    #[arg(long)]
    min_words: Option<usize>,
    #[arg(long)]
    max_words: Option<usize>,
    #[arg(long)]
    utterances: Option<usize>,
    #[arg(long)]
    speakers: Option<usize>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    warp: Option<f64>,
    #[arg(long)]
    speaker_offset: Option<f64>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    pair_noise: Option<f64>,
    #[arg(long)]
    frame_period_ms: Option<f64>,
}

pub fn run_synth(a: SynthArgs, mut r: Resolver) -> Result<()> {
    let out: PathBuf = r.require("out", a.out.as_ref().map(|p| p.display().to_string()))?.into();
    let d = SynthSpec::default();
    let spec = SynthSpec {
        seed: r.get("seed", a.seed, d.seed)?,
        vocab_size: r.get("synth.vocab_size", a.vocab_size, d.vocab_size)?,
        dim: r.get("synth.dim", a.dim, d.dim)?,
        frames_per_word: (
            r.get("synth.min_frames", a.min_frames, d.frames_per_word.0)?,
            r.get("synth.max_frames", a.max_frames, d.frames_per_word.1)?,
        ),
        words_per_utterance: (
            r.get("synth.min_words", a.min_words, d.words_per_utterance.0)?,
            r.get("synth.max_words", a.max_words, d.words_per_utterance.1)?,
        ),
        n_utterances: r.get("synth.utterances", a.utterances, d.n_utterances)?,
        n_speakers: r.get("synth.speakers", a.speakers, d.n_speakers)?,
        prototype_separation: r.get("synth.separation", a.separation, d.prototype_separation)?,
        amplitude: r.get("synth.amplitude", a.amplitude, d.amplitude)?,
        noise_std: r.get("synth.noise_std", a.noise_std, d.noise_std)?,
        warp_strength: r.get("synth.warp", a.warp, d.warp_strength)?,
        speaker_offset_scale: r.get("synth.speaker_offset", a.speaker_offset, d.speaker_offset_scale)?,
        n_pairs: r.get("synth.pairs", a.pairs, d.n_pairs)?,
        pair_noise_rate: r.get("synth.pair_noise", a.pair_noise, d.pair_noise_rate)?,
        frame_period_ms: r.get("synth.frame_period_ms", a.frame_period_ms, d.frame_period_ms)?,
    };
    emit_resolved(&r, &out)?;
    let data = generate(&spec)?;
    data.save(&out)?;
    println!(
        "wrote {} utterances, {} word tokens, {} pairs to {}",
        data.corpus.len(),
        data.words.len(),
        data.pairs.len(),
        out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct EmbedTableArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    /// Output directory; the table is written to `table.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    constraints: ConstraintArgs,
    #[command(flatten)]
    embed: EmbedArgs,
}

pub fn run_embed_table(a: EmbedTableArgs, mut r: Resolver) -> Result<()> {
    let features: PathBuf = r.require("features", a.features.as_ref().map(|p| p.display().to_string()))?.into();
    let out: PathBuf = r.require("out", a.out.as_ref().map(|p| p.display().to_string()))?.into();
    let seed = r.get("seed", a.seed, 0u64)?;
    let corpus = load_feature_corpus(&features)?;
    let c = resolve_common(&mut r, &a.constraints, &a.embed, &corpus)?;
    emit_resolved(&r, &out)?;
    let embedder = match c.backend {
        Backend::Downsample => Embedder::Downsample { n_keep: c.n_keep },
        Backend::Eigenmaps => {
            let refs = random_reference_set(&corpus, &c.constraints, c.n_reference, &mut indexed_stream(seed, "exemplars", 0))?;
            Embedder::Eigenmaps(fit_eigenmaps(refs, &c.eigen)?)
        }
    };
    let table = build_table(&corpus, &c.constraints, &embedder, c.noise_factor, noise_seed(seed))?;
    if table.is_empty() {
        bail!("no allowed segments under the given constraints");
    }
    table.write_cache(&out.join("table.txt"))?;
    println!("wrote {} embeddings of dimension {}", table.len(), table.dim());
    Ok(())
}
