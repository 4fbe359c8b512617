//! Exemplar selection for the next pass of reference-vector embeddings.

use rand::seq::index::sample;

use crate::corpus::{Corpus, Frames};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::segmenter::{allowed_segments, Constraints, SegmentationState};

/// `n` allowed segments drawn uniformly without replacement (with
/// replacement if fewer exist); the bootstrap reference set.
pub fn random_reference_set(corpus: &Corpus, constraints: &Constraints, n: usize, rng: &mut Rng) -> Result<Vec<Frames>> {
    let all: Vec<(usize, usize, usize)> = corpus
        .utterances()
        .iter()
        .enumerate()
        .flat_map(|(u, utt)| allowed_segments(utt, constraints).into_iter().map(move |(s, e)| (u, s, e)))
        .collect();
    if all.is_empty() {
        return Err(Error::Empty("allowed segments to draw exemplars from"));
    }
    Ok(draw_segments(&all, n, rng)
        .into_iter()
        .map(|(u, s, e)| corpus.utterance(u).frames.slice(s, e).to_owned())
        .collect())
}

fn draw_segments(all: &[(usize, usize, usize)], n: usize, rng: &mut Rng) -> Vec<(usize, usize, usize)> {
    if n <= all.len() {
        sample(rng, all.len(), n).into_iter().map(|i| all[i]).collect()
    } else {
        use rand::Rng as _;
        (0..n).map(|_| all[rng.random_range(0..all.len())]).collect()
    }
}

/// Builds a new reference set from a finished sampling run.
///
/// Clusters are taken largest first (by frames covered) until they cover at
/// least 90% of the data. `n_discovered` tokens are shared among them in
/// proportion to their token counts, each cluster contributing its tokens of
/// highest marginal density. `n_random` uniformly drawn allowed segments are
/// added. Discovered tokens that cannot be found are replaced by random ones.
pub fn refine_reference_set(
    state: &SegmentationState<'_>,
    corpus: &Corpus,
    n_discovered: usize,
    n_random: usize,
    rng: &mut Rng,
) -> Result<Vec<Frames>> {
    let table = state.table();
    let gmm = state.gmm();
    let k = gmm.n_components();

    // tokens per cluster: (score, utt, start, end)
    let mut tokens: Vec<Vec<(f64, usize, usize, usize)>> = vec![Vec::new(); k];
    let mut frames = vec![0usize; k];
    for (utt, segs) in state.all_segments().iter().enumerate() {
        for s in segs {
            let x = table.get(utt, s.start, s.end).expect("segment in table");
            tokens[s.cluster].push((gmm.log_marginal_held_out(x, s.cluster), utt, s.start, s.end));
            frames[s.cluster] += s.end - s.start;
        }
    }
    let total: usize = frames.iter().sum();
    let mut by_size: Vec<usize> = (0..k).filter(|&c| frames[c] > 0).collect();
    by_size.sort_by(|&a, &b| frames[b].cmp(&frames[a]).then(a.cmp(&b)));
    let mut chosen = Vec::new();
    let mut covered = 0;
    for c in by_size {
        if total > 0 && covered as f64 >= 0.9 * total as f64 {
            break;
        }
        covered += frames[c];
        chosen.push(c);
    }

    for c in &chosen {
        tokens[*c].sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    }
    let n_tokens: usize = chosen.iter().map(|&c| tokens[c].len()).sum();
    let mut quota = vec![0usize; k];
    if n_tokens > 0 && n_discovered > 0 {
        let target = n_discovered.min(n_tokens);
        let mut rem = Vec::new();
        let mut assigned = 0;
        for &c in &chosen {
            let exact = target as f64 * tokens[c].len() as f64 / n_tokens as f64;
            quota[c] = exact.floor() as usize;
            assigned += quota[c];
            rem.push((exact - exact.floor(), c));
        }
        rem.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, c) in rem.into_iter().take(target - assigned) {
            quota[c] += 1;
        }
    }

    let mut out = Vec::with_capacity(n_discovered + n_random);
    let mut taken = std::collections::HashSet::new();
    for &c in &chosen {
        for &(_, utt, s, e) in tokens[c].iter().take(quota[c]) {
            out.push(corpus.utterance(utt).frames.slice(s, e).to_owned());
            taken.insert((utt, s, e));
        }
    }
    // random draws avoid the discovered spans so the Gram matrix keeps full rank
    let pool: Vec<(usize, usize, usize)> = (0..table.n_utterances())
        .flat_map(|u| table.spans(u).iter().map(move |&(s, e)| (u, s, e)))
        .filter(|k| !taken.contains(k))
        .collect();
    let shortfall = n_discovered - out.len();
    if shortfall > 0 {
        log::warn!("only {} discovered exemplars available; drawing {shortfall} at random", out.len());
    }
    let n_draw = shortfall + n_random;
    if n_draw > 0 {
        if pool.is_empty() {
            return Err(Error::Empty("allowed segments to draw exemplars from"));
        }
        for (u, s, e) in draw_segments(&pool, n_draw, rng) {
            out.push(corpus.utterance(u).frames.slice(s, e).to_owned());
        }
    }
    Ok(out)
}
