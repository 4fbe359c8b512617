//! Dynamic time warping between two frame sequences.
//!
//! Symmetric step set `{(1,0), (0,1), (1,1)}` over the full quadratic grid.
//! The returned cost is the summed frame distance along the optimal path
//! divided by the number of path steps. Among paths of equal summed distance
//! the shorter one wins, which keeps the normalised cost symmetric in its
//! arguments; remaining ties are broken diagonal, then vertical, then
//! horizontal during the backtrace.

use crate::corpus::FramesView;
use crate::error::{Error, Result};
use crate::mathutil::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    /// Summed frame distance divided by path length.
    pub cost: f64,
    /// Aligned `(i, j)` index pairs from `(0, 0)` to `(len_x - 1, len_y - 1)`.
    pub path: Vec<(usize, usize)>,
}

impl DtwResult {
    pub fn total_cost(&self) -> f64 {
        self.cost * self.path.len() as f64
    }
}

/// Frame-wise distance used inside the alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl Metric {
    pub fn distance(self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            Metric::Cosine => cosine_unchecked(u, v),
            Metric::Euclidean => u
                .iter()
                .zip(v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// `1 - u.v / (|u| |v|)`, clamped to `[0, 2]`. An all-zero vector on either
/// side yields the neutral value 1.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::VectorDim(u.len(), v.len()));
    }
    Ok(cosine_unchecked(u, v))
}

fn cosine_unchecked(u: &[f64], v: &[f64]) -> f64 {
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 1.0;
    }
    (1.0 - dot(u, v) / (nu * nv)).clamp(0.0, 2.0)
}

/// Aligns `x` and `y` under `dist`.
pub fn dtw_align<F>(x: FramesView<'_>, y: FramesView<'_>, dist: F) -> Result<DtwResult>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let (n, m) = (x.n_frames(), y.n_frames());
    if n == 0 || m == 0 {
        return Err(Error::Empty("DTW input sequence"));
    }
    if x.dim() != y.dim() {
        return Err(Error::VectorDim(x.dim(), y.dim()));
    }
    // (accumulated distance, path length) compared lexicographically
    let mut acc = vec![(f64::INFINITY, usize::MAX); n * m];
    for i in 0..n {
        for j in 0..m {
            let d = dist(x.row(i), y.row(j));
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = (f64::INFINITY, usize::MAX);
                for (pi, pj) in predecessors(i, j) {
                    let c = acc[pi * m + pj];
                    if better(c, best) {
                        best = c;
                    }
                }
                best
            };
            acc[i * m + j] = (best.0 + d, best.1 + 1);
        }
    }

    let mut path = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    path.push((i, j));
    while i > 0 || j > 0 {
        let mut choice = None;
        let mut best = (f64::INFINITY, usize::MAX);
        for (pi, pj) in predecessors(i, j) {
            let c = acc[pi * m + pj];
            if better(c, best) {
                best = c;
                choice = Some((pi, pj));
            }
        }
        let (pi, pj) = choice.expect("interior cell always has a predecessor");
        i = pi;
        j = pj;
        path.push((i, j));
    }
    path.reverse();
    let (total, len) = acc[n * m - 1];
    debug_assert_eq!(len, path.len());
    Ok(DtwResult {
        cost: total / len as f64,
        path,
    })
}

/// Convenience wrapper using a [`Metric`].
pub fn dtw_with_metric(x: FramesView<'_>, y: FramesView<'_>, metric: Metric) -> Result<DtwResult> {
    dtw_align(x, y, |u, v| metric.distance(u, v))
}

/// Normalised alignment cost only.
pub fn dtw_cost(x: FramesView<'_>, y: FramesView<'_>, metric: Metric) -> Result<f64> {
    Ok(dtw_with_metric(x, y, metric)?.cost)
}

// diagonal, vertical (i-1), horizontal (j-1): the order doubles as tie-break
fn predecessors(i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> {
    let diag = (i > 0 && j > 0).then(|| (i - 1, j - 1));
    let vert = (i > 0).then(|| (i - 1, j));
    let horiz = (j > 0).then(|| (i, j - 1));
    [diag, vert, horiz].into_iter().flatten()
}

fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}
