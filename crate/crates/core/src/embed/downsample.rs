//! Band-limited downsampling embeddings.
//!
//! Each feature dimension is resampled to a fixed number of points with the
//! frequency-domain method of `scipy.signal.resample`: take the real DFT,
//! keep the lowest frequencies (splitting or joining the Nyquist bin when the
//! kept length is even), inverse transform to the new length and rescale by
//! `n_keep / n`. The resampled frames are flattened time-major.

use std::f64::consts::PI;

use crate::corpus::FramesView;
use crate::error::{Error, Result};

/// Embeds `segment` as `n_keep` resampled frames, flattened to
/// `n_keep * dim` values (frame 0 first).
pub fn downsample_embed(segment: FramesView<'_>, n_keep: usize) -> Result<Vec<f64>> {
    if segment.is_empty() {
        return Err(Error::Empty("segment to downsample"));
    }
    if n_keep == 0 {
        return Err(Error::InvalidArgument("n_keep must be positive".into()));
    }
    let (n, dim) = (segment.n_frames(), segment.dim());
    if n == n_keep {
        return Ok(segment.as_slice().to_vec());
    }
    let mut out = vec![0.0; n_keep * dim];
    let mut column = vec![0.0; n];
    for d in 0..dim {
        for (t, c) in column.iter_mut().enumerate() {
            *c = segment.row(t)[d];
        }
        let resampled = resample(&column, n_keep);
        for (t, v) in resampled.into_iter().enumerate() {
            out[t * dim + d] = v;
        }
    }
    Ok(out)
}

/// Fourier resampling of a real signal to `num` points.
pub fn resample(x: &[f64], num: usize) -> Vec<f64> {
    let n = x.len();
    assert!(n > 0 && num > 0);
    let keep = n.min(num);
    let nyq = keep / 2 + 1;
    let mut spectrum: Vec<(f64, f64)> = (0..nyq).map(|k| dft_bin(x, k)).collect();
    if keep % 2 == 0 {
        let half = keep / 2;
        if num < n {
            spectrum[half].0 *= 2.0;
            spectrum[half].1 *= 2.0;
        } else if n < num {
            spectrum[half].0 *= 0.5;
            spectrum[half].1 *= 0.5;
        }
    }
    let scale = 1.0 / n as f64;
    (0..num)
        .map(|t| {
            let mut acc = spectrum[0].0;
            for (k, &(re, im)) in spectrum.iter().enumerate().skip(1) {
                let angle = 2.0 * PI * ((k * t) % num) as f64 / num as f64;
                let contrib = re * angle.cos() - im * angle.sin();
                if num % 2 == 0 && k == num / 2 {
                    // Nyquist bin of the output: real part only, counted once
                    acc += re * if t % 2 == 0 { 1.0 } else { -1.0 };
                } else {
                    acc += 2.0 * contrib;
                }
            }
            acc * scale
        })
        .collect()
}

fn dft_bin(x: &[f64], k: usize) -> (f64, f64) {
    let n = x.len();
    let mut re = 0.0;
    let mut im = 0.0;
    for (t, v) in x.iter().enumerate() {
        let angle = 2.0 * PI * ((k * t) % n) as f64 / n as f64;
        re += v * angle.cos();
        im -= v * angle.sin();
    }
    (re, im)
}
