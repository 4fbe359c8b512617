//! Batch front end: synthetic data, embedding tables, segmentation chains,
//! cAE training and feature extraction, and evaluation.

mod cae_cmd;
mod config;
mod data;
mod eval_cmd;
mod segment;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::config::{ConfigFile, Resolver};

#[derive(Parser, Debug)]
#[command(name = "bayesseg", version, about = "Unsupervised segmental Bayesian word segmentation of speech features")]
struct Cli {
    /// Flat `section.key = value` settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run sampling chains (with optional exemplar refinement passes).
    Segment(segment::SegmentArgs),
    /// Pretrain a stacked autoencoder and train it as a cAE on word pairs.
    TrainCae(cae_cmd::TrainCaeArgs),
    /// Replace every frame by a hidden-layer encoding of a trained net.
    Encode(cae_cmd::EncodeArgs),
    /// Score a segmentation against ground-truth alignments.
    Eval(eval_cmd::EvalArgs),
    /// Generate a synthetic corpus with known alignments.
    Synth(data::SynthArgs),
    /// Precompute the embedding table of all allowed segments.
    EmbedTable(data::EmbedTableArgs),
}

/// Output directory preparation plus the resolved-settings record that every
/// command prints and stores.
pub(crate) fn emit_resolved(resolver: &Resolver, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let text = resolver.finish();
    print!("# resolved settings\n{text}");
    let path = out_dir.join("resolved.cfg");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("BAYESSEG_THREADS") {
        let n: usize = v.parse().with_context(|| format!("BAYESSEG_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let resolver = Resolver::new(ConfigFile::load(cli.config.as_deref())?);
    match cli.command {
        Command::Segment(a) => segment::run(a, resolver),
        Command::TrainCae(a) => cae_cmd::run_train(a, resolver),
        Command::Encode(a) => cae_cmd::run_encode(a, resolver),
        Command::Eval(a) => eval_cmd::run(a, resolver),
        Command::Synth(a) => data::run_synth(a, resolver),
        Command::EmbedTable(a) => data::run_embed_table(a, resolver),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
