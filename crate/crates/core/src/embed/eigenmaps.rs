//! Reference-vector Laplacian eigenmaps with an out-of-sample mapping.
//!
//! A segment is embedded through its kernel values against a fixed reference
//! set: `h_j(Y) = sum_i alpha_i^(j) K(Y_i, Y)` with the RBF kernel
//! `K = exp(-DTW^2 / (2 sigma_K^2))`. The coefficients solve
//! `(L K + xi I) alpha = lambda K alpha` for the normalised Laplacian `L` of a
//! symmetric kNN graph over the references.
//!
//! With `beta = K alpha` the problem is the symmetric eigenproblem
//! `(L + xi K^-1) beta = lambda beta`, which is what gets solved; `alpha` is
//! then recovered as `K^-1 beta`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::corpus::{Frames, FramesView};
use crate::dtw::{dtw_cost, Metric};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EigenmapConfig {
    pub knn_k: usize,
    pub sigma_k: f64,
    pub reg_xi: f64,
    pub d_emb: usize,
    pub metric: Metric,
}

impl Default for EigenmapConfig {
    fn default() -> Self {
        EigenmapConfig {
            knn_k: 30,
            sigma_k: 0.04,
            reg_xi: 2.0,
            d_emb: 11,
            metric: Metric::Cosine,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenmapModel {
    pub ref_set: Vec<Frames>,
    pub config: EigenmapConfig,
    /// `N_ref x D_emb`; column `j` holds `alpha^(j)`.
    pub coeffs: DMatrix<f64>,
    /// Eigenvalue of each stored column.
    pub eigenvalues: Vec<f64>,
    pub graph_connected: bool,
}

/// The matrices of the eigenproblem for a reference set.
#[derive(Debug, Clone)]
pub struct GraphMatrices {
    pub dtw: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub connected: bool,
}

fn kernel(d: f64, sigma_k: f64) -> f64 {
    (-(d * d) / (2.0 * sigma_k * sigma_k)).exp()
}

/// DTW costs, Gram matrix and normalised kNN-graph Laplacian of `ref_set`.
///
/// Entry `(i, j)` with `i <= j` is computed as `DTW(Y_i, Y_j)` and mirrored,
/// so it is bit-identical to what [`eigenmaps_embed`] computes for `Y = Y_j`.
pub fn assemble_matrices(ref_set: &[Frames], config: &EigenmapConfig) -> Result<GraphMatrices> {
    let n = ref_set.len();
    if n == 0 {
        return Err(Error::Empty("reference set"));
    }
    if !(config.sigma_k > 0.0) {
        return Err(Error::InvalidArgument("sigma_K must be positive".into()));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| dtw_cost(ref_set[i].view(), ref_set[j].view(), config.metric))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut dtw = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &d) in row.iter().enumerate() {
            dtw[(i, i + off)] = d;
            dtw[(i + off, i)] = d;
        }
    }
    let gram = dtw.map(|d| kernel(d, config.sigma_k));

    // symmetric kNN: i -- j if either picks the other; ties go to the lower index
    let k = config.knn_k.min(n.saturating_sub(1));
    let mut adj = vec![false; n * n];
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| dtw[(i, a)].total_cmp(&dtw[(i, b)]).then(a.cmp(&b)));
        for &j in others.iter().take(k) {
            adj[i * n + j] = true;
            adj[j * n + i] = true;
        }
    }
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if adj[i * n + j] {
                w[(i, j)] = gram[(i, j)];
            }
        }
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = w.row(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let laplacian = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - inv_sqrt_deg[i] * w[(i, j)] * inv_sqrt_deg[j]
    });
    let connected = is_connected(&w);
    Ok(GraphMatrices {
        dtw,
        gram,
        laplacian,
        connected,
    })
}

fn is_connected(w: &DMatrix<f64>) -> bool {
    let n = w.nrows();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && w[(i, j)] > 0.0 {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Fits the eigenmap coefficients for `ref_set`.
pub fn fit_eigenmaps(ref_set: Vec<Frames>, config: &EigenmapConfig) -> Result<EigenmapModel> {
    let n = ref_set.len();
    if config.d_emb == 0 {
        return Err(Error::InvalidArgument("D_emb must be positive".into()));
    }
    if n <= config.d_emb {
        return Err(Error::InvalidArgument(format!(
            "reference set of {n} cannot support {} dimensions",
            config.d_emb
        )));
    }
    if config.reg_xi < 0.0 {
        return Err(Error::InvalidArgument("regulariser must be non-negative".into()));
    }
    let m = assemble_matrices(&ref_set, config)?;
    if !m.connected {
        log::warn!("kNN graph over {n} references is disconnected; keeping the lowest eigenvector");
    }

    let ke = SymmetricEigen::new(m.gram.clone());
    let max_abs = ke.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min_abs = ke.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if !(min_abs > 1e-12 * max_abs) {
        return Err(Error::SingularGram {
            condition: if min_abs > 0.0 { max_abs / min_abs } else { f64::INFINITY },
        });
    }
    let inv_diag = DMatrix::from_diagonal(&ke.eigenvalues.map(|v| 1.0 / v));
    let k_inv = &ke.eigenvectors * inv_diag * ke.eigenvectors.transpose();

    let mut mmat = &m.laplacian + &k_inv * config.reg_xi;
    mmat = (&mmat + mmat.transpose()) * 0.5;
    let me = SymmetricEigen::new(mmat);
    if me.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| me.eigenvalues[a].total_cmp(&me.eigenvalues[b]).then(a.cmp(&b)));
    let skip = usize::from(m.connected);
    if n < config.d_emb + skip {
        return Err(Error::InvalidArgument("not enough eigenvectors".into()));
    }
    let chosen = &order[skip..skip + config.d_emb];

    let mut coeffs = DMatrix::zeros(n, config.d_emb);
    let mut eigenvalues = Vec::with_capacity(config.d_emb);
    for (c, &idx) in chosen.iter().enumerate() {
        let beta = me.eigenvectors.column(idx);
        let mut alpha = &k_inv * beta;
        let scale = alpha.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if let Some(first) = alpha.iter().find(|v| v.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                alpha.neg_mut();
            }
        }
        coeffs.set_column(c, &alpha);
        eigenvalues.push(me.eigenvalues[idx]);
    }
    if coeffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite coefficients".into()));
    }
    Ok(EigenmapModel {
        ref_set,
        config: config.clone(),
        coeffs,
        eigenvalues,
        graph_connected: m.connected,
    })
}

/// Kernel values of `y` against every reference entry.
pub fn kernel_row(model: &EigenmapModel, y: FramesView<'_>) -> Result<Vec<f64>> {
    model
        .ref_set
        .iter()
        .map(|r| dtw_cost(r.view(), y, model.config.metric).map(|d| kernel(d, model.config.sigma_k)))
        .collect()
}

/// `[h_1(Y), ..., h_D(Y)]`.
pub fn eigenmaps_embed(model: &EigenmapModel, y: FramesView<'_>) -> Result<Vec<f64>> {
    let k = kernel_row(model, y)?;
    let d = model.coeffs.ncols();
    Ok((0..d)
        .map(|j| k.iter().zip(model.coeffs.column(j).iter()).map(|(a, b)| a * b).sum())
        .collect())
}
