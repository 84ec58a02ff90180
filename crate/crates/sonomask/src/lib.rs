//! Pseudo-mask generation for ultrasound lesion images via iterative
//! teacher-student self-training.
//!
//! A segmentation model is trained on a mask-annotated source dataset, then
//! used to predict pseudo-masks for an unannotated target dataset that only
//! carries image-level benign/malignant labels. Each round, the pseudo-masks
//! are cleaned up (hole filling, per-component convex hulls, scaling), the
//! confident ones are admitted into the training pool, and the model is
//! fine-tuned on the grown pool. Downstream classification precision on a
//! validation split steers termination.
//!
//! The crate is organized along the pipeline stages:
//!
//! - [`imaging`] — raster types, histograms, connected components, hole fill
//! - [`entropy`] — Shannon entropy, the local entropy filter, exam-area crop
//! - [`geometry`] — convex hulls, polygon scaling and rasterization
//! - [`pipeline`] — mask post-processing, update guard, confidence filter
//! - [`models`] — trainable logistic segmenter and classifier
//! - [`metrics`] — accuracy / precision / recall / ROC AUC / IoU
//! - [`selftrain`] — the orchestration loop and holdout evaluation
//! - [`pgm`], [`dataset`], [`synth`], [`rundir`] — file formats, dataset
//!   layout, the synthetic data generator, and run-directory persistence

pub mod dataset;
pub mod entropy;
pub mod geometry;
pub mod imaging;
pub mod metrics;
pub mod models;
pub mod pgm;
pub mod pipeline;
pub mod rundir;
pub mod selftrain;
pub mod synth;

use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an operation's inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The data is structurally valid but unusable (single-class training
    /// set, all-blank masks, ...).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A file failed to parse; the message names the offending field.
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand constructor for [`Error::InvalidInput`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Shorthand constructor for [`Error::DegenerateData`].
    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateData(msg.into())
    }

    /// Shorthand constructor for [`Error::Parse`].
    pub fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), message: msg.into() }
    }
}
