//! `eval`: score a segmentation file.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use bayesseg::corpus::{load_alignments, load_feature_corpus, ms_to_frames, parse_alignments, AlignmentLevel, TokenAlignment};
use bayesseg::eval::{
    boundaries_from_segments, boundaries_from_tokens, boundary_prf, boundary_prf_zrs, build_mapping_matrix,
    cluster_purity, load_segmentation, map_clusters, mapped_accuracy, ned, purity_by, token_type_prf,
    wer_for_mapping, EvalReport, MapMode, PhoneRule, Prf, Unit,
};

use crate::config::Resolver;
use crate::emit_resolved;
use crate::segment::choice;

choice!(UnitArg { Frames => "frames", Tokens => "tokens" });

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Segmentation file, lines `utt start end cluster`.
    #[arg(long)]
    segmentation: Option<PathBuf>,
    /// Word-level truth alignments.
    #[arg(long)]
    words: Option<PathBuf>,
    /// Phone-level truth alignments (enables token/type scores and NED).
    #[arg(long)]
    phones: Option<PathBuf>,
    /// Feature list; validates alignments and enables speaker purity.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Lines `speaker gender`; enables gender purity (needs --features).
    #[arg(long)]
    genders: Option<PathBuf>,
    #[arg(long)]
    frame_period_ms: Option<f64>,
    #[arg(long)]
    tolerance_ms: Option<f64>,
    #[arg(long)]
    mapping_unit: Option<UnitArg>,
    /// Output directory for `report.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_alignments(path: &Path, corpus: Option<&bayesseg::corpus::Corpus>, level: AlignmentLevel) -> Result<Vec<TokenAlignment>> {
    Ok(match corpus {
        Some(c) => load_alignments(path, c, level)?,
        None => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_alignments(&text, path)?
        }
    })
}

fn push_prf(r: &mut EvalReport, prefix: &str, p: Prf) {
    r.push(&format!("{prefix}_precision"), p.precision, "fraction");
    r.push(&format!("{prefix}_recall"), p.recall, "fraction");
    r.push(&format!("{prefix}_f"), p.f, "fraction");
}

fn load_genders(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut m = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 2 {
            bail!("{}:{}: expected `speaker gender`", path.display(), i + 1);
        }
        m.insert(f[0].to_string(), f[1].to_string());
    }
    Ok(m)
}

pub fn run(a: EvalArgs, mut r: Resolver) -> Result<()> {
    let seg_path: PathBuf = r.require("eval.segmentation", a.segmentation.as_ref().map(|p| p.display().to_string()))?.into();
    let words_path: PathBuf = r.require("eval.words", a.words.as_ref().map(|p| p.display().to_string()))?.into();
    let phones_path = r.get_opt::<String>("eval.phones", a.phones.as_ref().map(|p| p.display().to_string()))?;
    let features = r.get_opt::<String>("features", a.features.as_ref().map(|p| p.display().to_string()))?;
    let genders = r.get_opt::<String>("eval.genders", a.genders.as_ref().map(|p| p.display().to_string()))?;
    let out: PathBuf = r.require("out", a.out.as_ref().map(|p| p.display().to_string()))?.into();
    let corpus = features.map(|f| load_feature_corpus(Path::new(&f))).transpose()?;
    let fp = match &corpus {
        Some(c) => c.frame_period_ms(),
        None => r.get("eval.frame_period_ms", a.frame_period_ms, 10.0)?,
    };
    let tol_ms = r.get("eval.tolerance_ms", a.tolerance_ms, 20.0)?;
    let unit = match r.get("eval.mapping_unit", a.mapping_unit, UnitArg::Frames)? {
        UnitArg::Frames => Unit::Frames,
        UnitArg::Tokens => Unit::Tokens,
    };
    emit_resolved(&r, &out)?;

    let pred = load_segmentation(&seg_path)?;
    let words = read_alignments(&words_path, corpus.as_ref(), AlignmentLevel::Word)?;
    if let Some(c) = &corpus {
        for p in &pred {
            let u = c.get(&p.utterance).with_context(|| format!("segmentation names unknown utterance {}", p.utterance))?;
            if p.end > u.n_frames() {
                bail!("segment {} {} {} runs past the utterance end", p.utterance, p.start, p.end);
            }
        }
    }

    let mut rep = EvalReport::default();
    let g = build_mapping_matrix(&pred, &words, unit);
    let m2o = map_clusters(&g, MapMode::ManyToOne);
    let o2o = map_clusters(&g, MapMode::OneToOneGreedy);
    rep.push("n_predicted_tokens", pred.len() as f64, "count");
    rep.push("n_clusters", g.n_clusters() as f64, "count");
    rep.push("wer_many_to_one", wer_for_mapping(&pred, &words, &g, &m2o)?.wer, "rate");
    rep.push("wer_one_to_one", wer_for_mapping(&pred, &words, &g, &o2o)?.wer, "rate");
    if g.total() > 0 {
        rep.push("cluster_purity", cluster_purity(&g)?, "fraction");
        rep.push("one_to_one_accuracy", mapped_accuracy(&g, &o2o)?, "fraction");
    }
    let tol = ms_to_frames(tol_ms, fp);
    let pb = boundaries_from_segments(&pred);
    push_prf(&mut rep, "boundary", boundary_prf(&pb, &boundaries_from_tokens(&words), tol));
    rep.notes.push(format!("boundary tolerance {tol} frames; utterance edges excluded"));

    if let Some(c) = &corpus {
        if !pred.is_empty() {
            let spk = |u: &str| c.get(u).map(|x| x.speaker.clone());
            rep.push("speaker_purity", purity_by(&pred, |p| spk(&p.utterance))?, "fraction");
            if let Some(gp) = &genders {
                let gm = load_genders(Path::new(gp))?;
                rep.push(
                    "gender_purity",
                    purity_by(&pred, |p| spk(&p.utterance).and_then(|s| gm.get(&s).cloned()))?,
                    "fraction",
                );
            }
        }
    }
    if let Some(pp) = &phones_path {
        let phones = read_alignments(Path::new(pp), corpus.as_ref(), AlignmentLevel::Phone)?;
        let rule = PhoneRule::zrs(fp);
        let tt = token_type_prf(&pred, &words, &phones, &rule)?;
        push_prf(&mut rep, "token", tt.token);
        push_prf(&mut rep, "type", tt.word_type);
        push_prf(&mut rep, "boundary_zrs", boundary_prf_zrs(&pb, &boundaries_from_tokens(&words), &phones, fp));
        match ned(&pred, &phones, &rule) {
            Ok(v) => rep.push("ned", v, "fraction"),
            Err(e) => rep.notes.push(format!("ned not reported: {e}")),
        }
    }

    print!("{}", rep.format_table());
    let p = out.join("report.txt");
    std::fs::write(&p, rep.format_kv()).with_context(|| format!("writing {}", p.display()))?;
    Ok(())
}
