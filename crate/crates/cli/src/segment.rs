//! `segment`: sampling chains and the outer exemplar-refinement loop.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rand::RngCore;
use rayon::prelude::*;

use bayesseg::corpus::{load_boundary_positions, load_feature_corpus, Corpus};
use bayesseg::dtw::Metric;
use bayesseg::embed::{
    build_table, fit_eigenmaps, random_reference_set, refine_reference_set, EigenmapConfig, Embedder, EmbeddingTable,
};
use bayesseg::rng::{indexed_stream, named_stream};
use bayesseg::segmenter::{
    format_chain_summary, k_from_units, run_chain, AnnealSchedule, BigramApprox, ChainRecord, Constraints, LmMode,
    SamplerConfig,
};

use crate::config::Resolver;
use crate::emit_resolved;

macro_rules! choice {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl std::str::FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!("expected one of: {}", [$($text),+].join(", "))),
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $($name::$variant => $text),+ })
            }
        }
    };
}
pub(crate) use choice;

choice!(Profile { Small => "small", Large => "large" });
choice!(ConstraintMode { Grid => "grid", Syllable => "syllable" });
choice!(Backend { Downsample => "downsample", Eigenmaps => "eigenmaps" });
choice!(LmKind { Unigram => "unigram", Bigram => "bigram" });
choice!(BoundarySampling { Unigram => "unigram", Exact => "exact", Peaked => "peaked" });
choice!(MetricArg { Cosine => "cosine", Euclidean => "euclidean" });

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Metric {
        match m {
            MetricArg::Cosine => Metric::Cosine,
            MetricArg::Euclidean => Metric::Euclidean,
        }
    }
}

/// Where boundaries may fall.
#[derive(Args, Debug, Clone, Default)]
pub struct ConstraintArgs {
    /// `small` (grid, eigenmaps) or `large` (syllables, downsampling).
    #[arg(long)]
    pub profile: Option<Profile>,
    #[arg(long)]
    pub constraint_mode: Option<ConstraintMode>,
    #[arg(long)]
    pub interval_ms: Option<f64>,
    #[arg(long)]
    pub min_ms: Option<f64>,
    #[arg(long)]
    pub max_ms: Option<f64>,
    /// Candidate boundary file (`utt f1 f2 ...`), syllable mode.
    #[arg(long)]
    pub syllables: Option<PathBuf>,
    #[arg(long)]
    pub max_units: Option<usize>,
}

/// How segments become fixed-dimensional vectors.
#[derive(Args, Debug, Clone, Default)]
pub struct EmbedArgs {
    #[arg(long)]
    pub backend: Option<Backend>,
    #[arg(long)]
    pub n_keep: Option<usize>,
    #[arg(long)]
    pub noise_factor: Option<f64>,
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[arg(long)]
    pub sigma_k: Option<f64>,
    #[arg(long)]
    pub reg_xi: Option<f64>,
    #[arg(long)]
    pub d_emb: Option<usize>,
    #[arg(long)]
    pub dtw_metric: Option<MetricArg>,
    /// Size of the random reference set of the first pass.
    #[arg(long)]
    pub n_reference: Option<usize>,
}

pub struct Resolved {
    pub profile: Profile,
    pub constraints: Constraints,
    pub backend: Backend,
    pub n_keep: usize,
    pub noise_factor: f64,
    pub eigen: EigenmapConfig,
    pub n_reference: usize,
}

pub fn resolve_common(
    r: &mut Resolver,
    c: &ConstraintArgs,
    e: &EmbedArgs,
    corpus: &Corpus,
) -> Result<Resolved> {
    let profile = r.get("profile", c.profile, Profile::Small)?;
    let small = profile == Profile::Small;
    let fp = corpus.frame_period_ms();
    let mode = r.get(
        "constraints.mode",
        c.constraint_mode,
        if small { ConstraintMode::Grid } else { ConstraintMode::Syllable },
    )?;
    let constraints = match mode {
        ConstraintMode::Grid => {
            let interval = r.get("constraints.interval_ms", c.interval_ms, 20.0)?;
            let min = r.get("constraints.min_ms", c.min_ms, 200.0)?;
            let max = r.get("constraints.max_ms", c.max_ms, 1000.0)?;
            Constraints::grid_ms(interval, min, max, fp)?
        }
        ConstraintMode::Syllable => {
            let path: PathBuf = r
                .require("constraints.syllables", c.syllables.as_ref().map(|p| p.display().to_string()))
                .map(PathBuf::from)?;
            let pos = load_boundary_positions(&path, corpus)?;
            let max_units = r.get("constraints.max_units", c.max_units, 6)?;
            let min = r.get("constraints.min_ms", c.min_ms, 0.0)?;
            Constraints::syllable(pos, max_units, bayesseg::corpus::ms_to_frames(min, fp))?
        }
    };
    constraints.validate_for(corpus)?;
    let backend = r.get(
        "embed.backend",
        e.backend,
        if small { Backend::Eigenmaps } else { Backend::Downsample },
    )?;
    let d = EigenmapConfig::default();
    let mut n_keep = 0;
    let mut eigen = d.clone();
    let mut n_reference = 0;
    match backend {
        Backend::Downsample => n_keep = r.get("embed.n_keep", e.n_keep, 10)?,
        Backend::Eigenmaps => {
            eigen = EigenmapConfig {
                knn_k: r.get("embed.knn_k", e.knn_k, d.knn_k)?,
                sigma_k: r.get("embed.sigma_k", e.sigma_k, d.sigma_k)?,
                reg_xi: r.get("embed.reg_xi", e.reg_xi, d.reg_xi)?,
                d_emb: r.get("embed.d_emb", e.d_emb, d.d_emb)?,
                metric: r.get("embed.dtw_metric", e.dtw_metric, MetricArg::Cosine)?.into(),
            };
            n_reference = r.get("embed.n_reference", e.n_reference, 8000)?;
        }
    }
    let noise_factor = r.get("embed.noise_factor", e.noise_factor, bayesseg::embed::DEFAULT_NOISE_FACTOR)?;
    Ok(Resolved {
        profile,
        constraints,
        backend,
        n_keep,
        noise_factor,
        eigen,
        n_reference,
    })
}

pub fn noise_seed(seed: u64) -> u64 {
    named_stream(seed, "embedding-noise").next_u64()
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    /// Feature list file.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    constraints: ConstraintArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    /// Precomputed embedding table (downsample backend only).
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// K as a fraction of the candidate unit count (syllable mode).
    #[arg(long)]
    k_fraction: Option<f64>,
    #[arg(long)]
    sigma_sq: Option<f64>,
    #[arg(long)]
    kappa0: Option<f64>,
    #[arg(long)]
    alpha_a: Option<f64>,
    #[arg(long)]
    lm: Option<LmKind>,
    #[arg(long)]
    bigram_lambda: Option<f64>,
    #[arg(long)]
    bigram_eta: Option<f64>,
    #[arg(long)]
    bigram_b: Option<f64>,
    #[arg(long)]
    boundary_sampling: Option<BoundarySampling>,
    #[arg(long)]
    iters_fixed: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    /// Annealing exponents, comma separated and ending at 1.
    #[arg(long)]
    anneal: Option<crate::config::List<f64>>,
    /// Exemplar-refinement passes (eigenmaps backend).
    #[arg(long)]
    passes: Option<usize>,
    #[arg(long)]
    n_discovered: Option<usize>,
    #[arg(long)]
    n_random: Option<usize>,
}

fn sampler_config(r: &mut Resolver, a: &SegmentArgs, profile: Profile, k_units: usize) -> Result<SamplerConfig> {
    let base = match profile {
        Profile::Small => SamplerConfig::small_vocab(15),
        Profile::Large => SamplerConfig::large_vocab(1),
    };
    let k = match profile {
        Profile::Small => r.get("segment.k", a.k, 15)?,
        Profile::Large => match r.get_opt("segment.k", a.k)? {
            Some(k) => k,
            None => k_from_units(k_units, r.get("segment.k_fraction", a.k_fraction, 0.2)?),
        },
    };
    let sched = &base.schedule;
    let exps = r.get("segment.anneal", a.anneal.clone(), crate::config::List(sched.exponents.clone()))?;
    let schedule = AnnealSchedule::new(
        exps.0,
        r.get("segment.iters_fixed", a.iters_fixed, sched.iters_fixed_boundaries)?,
        r.get("segment.iters", a.iters, sched.total_iters)?,
    )?;
    let lm = match r.get("segment.lm", a.lm, LmKind::Unigram)? {
        LmKind::Unigram => LmMode::Unigram,
        LmKind::Bigram => {
            let LmMode::Bigram { lambda, a: la, b, eta } = SamplerConfig::default_bigram() else {
                unreachable!()
            };
            LmMode::Bigram {
                lambda: r.get("bigram.lambda", a.bigram_lambda, lambda)?,
                a: la,
                b: r.get("bigram.b", a.bigram_b, b)?,
                eta: r.get("bigram.eta", a.bigram_eta, eta)?,
            }
        }
    };
    let bigram_boundaries = match lm {
        LmMode::Unigram => None,
        LmMode::Bigram { .. } => match r.get("segment.boundary_sampling", a.boundary_sampling, BoundarySampling::Unigram)? {
            BoundarySampling::Unigram => None,
            BoundarySampling::Exact => Some(BigramApprox::Exact),
            BoundarySampling::Peaked => Some(BigramApprox::Peaked),
        },
    };
    let cfg = SamplerConfig {
        k,
        alpha_a: r.get("segment.alpha_a", a.alpha_a, base.alpha_a)?,
        sigma_sq: r.get("segment.sigma_sq", a.sigma_sq, base.sigma_sq)?,
        kappa0: r.get("segment.kappa0", a.kappa0, base.kappa0)?,
        schedule,
        init_boundary_prob: base.init_boundary_prob,
        lm,
        bigram_boundaries,
    };
    cfg.validate()?;
    Ok(cfg)
}

type ChainOutcome<'a> = std::result::Result<ChainRecord<'a>, String>;

fn run_chains<'a>(
    corpus: &Corpus,
    table: &'a EmbeddingTable,
    cfg: &SamplerConfig,
    seed: u64,
    n_chains: usize,
) -> Vec<ChainOutcome<'a>> {
    (0..n_chains)
        .into_par_iter()
        .map(|i| {
            let mut rng = indexed_stream(seed, "sampler", i as u64);
            run_chain(corpus, table, cfg, &mut rng).map_err(|e| e.to_string())
        })
        .collect()
}

fn best_chain<'r, 'a>(outcomes: &'r [ChainOutcome<'a>]) -> Option<&'r ChainRecord<'a>> {
    let mut best: Option<&ChainRecord<'a>> = None;
    for rec in outcomes.iter().flatten() {
        let p = rec.summaries.last().map_or(f64::NEG_INFINITY, |s| s.log_post_proxy);
        if best.is_none_or(|b| p > b.summaries.last().map_or(f64::NEG_INFINITY, |s| s.log_post_proxy)) {
            best = Some(rec);
        }
    }
    best
}

fn write_outcomes(out: &Path, outcomes: &[ChainOutcome<'_>]) -> Result<usize> {
    let mut failed = 0;
    for (i, o) in outcomes.iter().enumerate() {
        match o {
            Ok(rec) => {
                rec.state.write_segmentation(&out.join(format!("chain{i}.seg")))?;
                let p = out.join(format!("chain{i}.summary"));
                std::fs::write(&p, format_chain_summary(&rec.summaries)).with_context(|| format!("writing {}", p.display()))?;
                let last = rec.summaries.last();
                println!(
                    "chain {i}: proxy {:.4} clusters {} boundaries {}",
                    last.map_or(f64::NAN, |s| s.log_post_proxy),
                    rec.state.n_clusters_used(),
                    rec.state.n_boundaries()
                );
            }
            Err(e) => {
                eprintln!("chain {i} failed: {e}");
                failed += 1;
            }
        }
    }
    Ok(failed)
}

pub fn run(a: SegmentArgs, mut r: Resolver) -> Result<()> {
    let features: PathBuf = r.require("features", a.features.as_ref().map(|p| p.display().to_string()))?.into();
    let out: PathBuf = r.require("out", a.out.as_ref().map(|p| p.display().to_string()))?.into();
    let seed = r.get("seed", a.seed, 0u64)?;
    let corpus = load_feature_corpus(&features)?;
    let common = resolve_common(&mut r, &a.constraints, &a.embed, &corpus)?;
    let k_units = common.constraints.n_units(&corpus);
    let cfg = sampler_config(&mut r, &a, common.profile, k_units)?;
    let n_chains = r.get("segment.chains", a.chains, 5)?;
    if n_chains == 0 {
        bail!("segment.chains must be positive");
    }
    let noise = noise_seed(seed);

    let failed = match common.backend {
        Backend::Downsample => {
            let table = match r.get_opt("segment.table", a.table.as_ref().map(|p| p.display().to_string()))? {
                Some(p) => EmbeddingTable::read_cache(Path::new(&p), &corpus)?,
                None => build_table(&corpus, &common.constraints, &Embedder::Downsample { n_keep: common.n_keep }, common.noise_factor, noise)?,
            };
            emit_resolved(&r, &out)?;
            let outcomes = run_chains(&corpus, &table, &cfg, seed, n_chains);
            write_outcomes(&out, &outcomes)?
        }
        Backend::Eigenmaps => {
            if a.table.is_some() {
                bail!("--table is only supported with the downsample backend");
            }
            let passes = r.get("embed.passes", a.passes, 3)?;
            let n_disc = r.get("embed.n_discovered", a.n_discovered, 4000)?;
            let n_rand = r.get("embed.n_random", a.n_random, 4000)?;
            if passes == 0 {
                bail!("embed.passes must be positive");
            }
            emit_resolved(&r, &out)?;
            let mut refs = random_reference_set(
                &corpus,
                &common.constraints,
                common.n_reference,
                &mut indexed_stream(seed, "exemplars", 0),
            )?;
            let mut failed = 0;
            for pass in 0..passes {
                log::info!("pass {}: fitting eigenmaps on {} exemplars", pass + 1, refs.len());
                let model = fit_eigenmaps(refs, &common.eigen)?;
                let table = build_table(&corpus, &common.constraints, &Embedder::Eigenmaps(model), common.noise_factor, noise)?;
                let outcomes = run_chains(&corpus, &table, &cfg, seed, n_chains);
                if pass + 1 == passes {
                    failed = write_outcomes(&out, &outcomes)?;
                    break;
                }
                let best = best_chain(&outcomes).context("every chain failed; cannot refine exemplars")?;
                refs = refine_reference_set(
                    &best.state,
                    &corpus,
                    n_disc,
                    n_rand,
                    &mut indexed_stream(seed, "exemplars", pass as u64 + 1),
                )?;
            }
            failed
        }
    };
    if failed > 0 {
        bail!("{failed} of {n_chains} chains failed");
    }
    Ok(())
}
