//! `train-cae` and `encode`.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use bayesseg::cae::{build_frame_pairs, encode_corpus, load_word_pairs, pretrain_stacked, train_cae, Mlp, TrainConfig};
use bayesseg::corpus::{load_feature_corpus, save_feature_corpus};
use bayesseg::rng::named_stream;

use crate::config::{List, Resolver};
use crate::emit_resolved;
use crate::segment::Profile;

#[derive(Args, Debug)]
pub struct TrainCaeArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    /// Word pairs, lines `utt1 s1 e1 utt2 s2 e2`.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Output directory; the net is written to `net.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    profile: Option<Profile>,
    /// Hidden widths, comma separated.
    #[arg(long)]
    hidden: Option<List<usize>>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs_pretrain: Option<usize>,
    #[arg(long)]
    epochs_cae: Option<usize>,
    #[arg(long)]
    lr_pretrain: Option<f64>,
    #[arg(long)]
    lr_cae: Option<f64>,
    /// Also train on each pair with its sides swapped.
    #[arg(long)]
    both_directions: Option<bool>,
}

fn default_hidden(profile: Profile) -> Vec<usize> {
    match profile {
        Profile::Small => vec![100; 7],
        Profile::Large => TrainConfig::large_vocab_hidden(),
    }
}

pub fn run_train(a: TrainCaeArgs, mut r: Resolver) -> Result<()> {
    let features: PathBuf = r.require("features", a.features.as_ref().map(|p| p.display().to_string()))?.into();
    let pairs_path: PathBuf = r.require("cae.pairs", a.pairs.as_ref().map(|p| p.display().to_string()))?.into();
    let out: PathBuf = r.require("out", a.out.as_ref().map(|p| p.display().to_string()))?.into();
    let seed = r.get("seed", a.seed, 0u64)?;
    let profile = r.get("profile", a.profile, Profile::Small)?;
    let base = match profile {
        Profile::Small => TrainConfig::small_vocab(),
        Profile::Large => TrainConfig::large_vocab(),
    };
    let hidden = r.get("cae.hidden", a.hidden, List(default_hidden(profile)))?.0;
    let cfg = TrainConfig {
        batch_size: r.get("cae.batch_size", a.batch_size, base.batch_size)?,
        epochs_pretrain: r.get("cae.epochs_pretrain", a.epochs_pretrain, base.epochs_pretrain)?,
        epochs_cae: r.get("cae.epochs_cae", a.epochs_cae, base.epochs_cae)?,
        lr_pretrain: r.get("cae.lr_pretrain", a.lr_pretrain, base.lr_pretrain)?,
        lr_cae: r.get("cae.lr_cae", a.lr_cae, base.lr_cae)?,
    };
    cfg.validate()?;
    let both = r.get("cae.both_directions", a.both_directions, true)?;
    emit_resolved(&r, &out)?;

    let corpus = load_feature_corpus(&features)?;
    let word_pairs = load_word_pairs(&pairs_path)?;
    let data: Vec<f64> = corpus.utterances().iter().flat_map(|u| u.frames.as_slice().iter().copied()).collect();
    let pre = pretrain_stacked(&data, corpus.dim(), &hidden, &cfg, &mut named_stream(seed, "pretrain"))?;
    let mut net = pre.net;
    let frame_pairs = build_frame_pairs(&word_pairs, &corpus, both)?;
    log::info!("{} word pairs gave {} aligned frame pairs", word_pairs.len(), frame_pairs.len());
    let losses = train_cae(&mut net, &frame_pairs, &cfg, &mut named_stream(seed, "cae"))?;

    net.save(&out.join("net.txt"))?;
    let mut log_text = String::new();
    for (l, ls) in pre.layer_losses.iter().enumerate() {
        for (e, v) in ls.iter().enumerate() {
            let _ = writeln!(log_text, "pretrain {} {} {v:?}", l + 1, e + 1);
        }
    }
    for (e, v) in losses.iter().enumerate() {
        let _ = writeln!(log_text, "cae {} {v:?}", e + 1);
    }
    let p = out.join("losses.txt");
    std::fs::write(&p, log_text).with_context(|| format!("writing {}", p.display()))?;
    println!(
        "trained {:?} on {} frame pairs; final cAE loss {:.6}",
        net.layer_dims(),
        frame_pairs.len(),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    net: Option<PathBuf>,
    /// Hidden layer to read out (1-based); defaults to the 13-unit
    /// bottleneck for the large profile and the second-to-last hidden
    /// layer otherwise.
    #[arg(long)]
    layer: Option<usize>,
    #[arg(long)]
    profile: Option<Profile>,
    /// Output directory for the encoded feature files and `list.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run_encode(a: EncodeArgs, mut r: Resolver) -> Result<()> {
    let features: PathBuf = r.require("features", a.features.as_ref().map(|p| p.display().to_string()))?.into();
    let net_path: PathBuf = r.require("encode.net", a.net.as_ref().map(|p| p.display().to_string()))?.into();
    let out: PathBuf = r.require("out", a.out.as_ref().map(|p| p.display().to_string()))?.into();
    let net = Mlp::load(&net_path)?;
    let profile = r.get("profile", a.profile, Profile::Small)?;
    let default_layer = match profile {
        Profile::Large => 8,
        Profile::Small => net.n_hidden().saturating_sub(1).max(1),
    };
    let layer = r.get("encode.layer", a.layer, default_layer)?;
    emit_resolved(&r, &out)?;
    let corpus = load_feature_corpus(&features)?;
    let enc = encode_corpus(&net, &corpus, layer)?;
    let list = save_feature_corpus(&enc, &out, "list.txt")?;
    println!("encoded {} utterances to dimension {} ({})", enc.len(), enc.dim(), list.display());
    Ok(())
}
