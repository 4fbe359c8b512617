//! Same-different average precision.

use rayon::prelude::*;

use crate::corpus::FramesView;
use crate::dtw::{cosine_distance, dtw_cost, Metric};
use crate::error::{Error, Result};

/// Area under the precision-recall curve traced by sweeping a threshold
/// over every distinct distance. Each recall step is weighted by the lower
/// of the precisions at its two ends; the curve starts at recall 0 with the
/// precision of the first operating point.
pub fn average_precision(distances: &[f64], same: &[bool]) -> Result<f64> {
    if distances.len() != same.len() {
        return Err(Error::InvalidArgument("distance and label counts differ".into()));
    }
    let n_same = same.iter().filter(|&&s| s).count();
    if n_same == 0 {
        return Err(Error::NoPairs("no same-type pairs"));
    }
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    let (mut tp, mut seen) = (0usize, 0usize);
    let (mut r_prev, mut p_prev) = (0.0, None::<f64>);
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let d = distances[order[i]];
        while i < order.len() && distances[order[i]] == d {
            tp += usize::from(same[order[i]]);
            seen += 1;
            i += 1;
        }
        let r = tp as f64 / n_same as f64;
        let p = tp as f64 / seen as f64;
        ap += (r - r_prev) * p.min(p_prev.unwrap_or(p));
        r_prev = r;
        p_prev = Some(p);
    }
    Ok(ap)
}

fn pair_labels<L: PartialEq>(labels: &[L]) -> Result<Vec<(usize, usize, bool)>> {
    let n = labels.len();
    let pairs: Vec<(usize, usize, bool)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, labels[i] == labels[j]))
        .collect();
    if !pairs.iter().any(|p| p.2) {
        return Err(Error::NoPairs("no same-type pairs"));
    }
    Ok(pairs)
}

/// AP over all unordered pairs of fixed-length vectors under cosine distance.
pub fn same_different_ap<V: AsRef<[f64]> + Sync, L: PartialEq>(vectors: &[V], labels: &[L]) -> Result<f64> {
    if vectors.len() != labels.len() {
        return Err(Error::InvalidArgument("vector and label counts differ".into()));
    }
    let pairs = pair_labels(labels)?;
    let dist = pairs
        .par_iter()
        .map(|&(i, j, _)| cosine_distance(vectors[i].as_ref(), vectors[j].as_ref()))
        .collect::<Result<Vec<f64>>>()?;
    let same: Vec<bool> = pairs.iter().map(|p| p.2).collect();
    average_precision(&dist, &same)
}

/// AP over all unordered pairs of frame sequences under DTW cost.
pub fn same_different_ap_frames<L: PartialEq>(items: &[FramesView<'_>], labels: &[L], metric: Metric) -> Result<f64> {
    if items.len() != labels.len() {
        return Err(Error::InvalidArgument("item and label counts differ".into()));
    }
    let pairs = pair_labels(labels)?;
    let dist = pairs
        .par_iter()
        .map(|&(i, j, _)| dtw_cost(items[i], items[j], metric))
        .collect::<Result<Vec<f64>>>()?;
    let same: Vec<bool> = pairs.iter().map(|p| p.2).collect();
    average_precision(&dist, &same)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::named_stream;
    use rand::seq::SliceRandom;

    #[test]
    fn perfect_separation() {
        let d = [0.1, 0.2, 0.5, 0.9];
        assert_eq!(average_precision(&d, &[true, true, false, false]).unwrap(), 1.0);
        assert!(average_precision(&d, &[false; 4]).is_err());
    }

    #[test]
    fn one_inversion_hand_value() {
        // order: same, diff, same, diff -> points (0.5, 1), (0.5, 0.5), (1, 2/3), (1, 0.5)
        let ap = average_precision(&[0.1, 0.2, 0.3, 0.4], &[true, false, true, false]).unwrap();
        assert!((ap - (0.5 * 1.0 + 0.5 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn tied_distances_form_one_point() {
        // a single threshold covering everything: precision 1/2 at recall 1
        let ap = average_precision(&[0.3, 0.3], &[true, false]).unwrap();
        assert_eq!(ap, 0.5);
    }

    #[test]
    fn identical_representations_give_base_rate() {
        // all distances tie, so AP is exactly the fraction of same pairs
        let mut rng = named_stream(3, "ap");
        for _ in 0..20 {
            let mut labels: Vec<u8> = (0..12).map(|i| i % 4).collect();
            labels.shuffle(&mut rng);
            let vecs = vec![vec![1.0, 2.0]; 12];
            let ap = same_different_ap(&vecs, &labels).unwrap();
            let same = 4 * 3;
            assert!((ap - same as f64 / 66.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frames_variant_separates_shapes() {
        let up: Vec<f64> = vec![1.0, 0.0, 1.0, 0.5, 0.5, 1.0];
        let down: Vec<f64> = vec![0.0, 1.0, 0.5, 1.0, 1.0, 0.1];
        let items = [
            FramesView::new(&up, 2),
            FramesView::new(&up[..4], 2),
            FramesView::new(&down, 2),
            FramesView::new(&down[2..], 2),
        ];
        let ap = same_different_ap_frames(&items, &["a", "a", "b", "b"], Metric::Cosine).unwrap();
        assert_eq!(ap, 1.0);
    }
}
