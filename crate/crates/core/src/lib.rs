//! Non-intrusive speech quality assessment on the P.835 scales.
//!
//! The pipeline is: [`audio`] ingestion, log-power spectrogram
//! [`features`], a convolutional predictor built on the [`nn`] engine and
//! assembled in [`model`], rated corpora in [`dataset`], and correlation
//! based evaluation in [`eval`].

pub mod audio;
pub mod features;
pub mod nn;
pub mod dataset;
pub mod model;
pub mod eval;
