//! Unsupervised segmental Bayesian word segmentation and clustering of
//! speech feature sequences.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`] reads, validates and writes frame-level feature corpora and
//!   ground-truth alignments.
//! * [`dtw`] aligns two frame sequences.
//! * [`embed`] maps variable-length segments to fixed-dimensional acoustic
//!   word embeddings (downsampling or reference-vector Laplacian eigenmaps).
//! * [`bgmm`] is the collapsed Bayesian GMM acoustic model with a fixed
//!   spherical covariance, plus an interpolated bigram assignment model.
//! * [`segmenter`] is the blocked Gibbs sampler over segmentations using
//!   forward filtering backward sampling.
//! * [`cae`] trains stacked and correspondence autoencoders.
//! * [`eval`] holds the evaluation metrics.
//! * [`synth`] generates synthetic corpora with known ground truth.

pub mod bgmm;
pub mod cae;
pub mod corpus;
pub mod dtw;
pub mod embed;
pub mod error;
pub mod eval;
pub mod rng;
pub mod segmenter;
pub mod synth;

mod mathutil;

pub use error::{Error, Result};
