//! Post-hoc confidence scoring and in-domain failure-detection evaluation.
//!
//! Everything here is pure computation over exported classifier outputs and
//! builds without `std`: confidence scores, the misclassification-detection
//! metric suite, a last-layer Kronecker-factored Laplace approximation, the
//! ConfidNet auxiliary regressor and the calibration-vs-detection toy
//! experiment. File formats, synthetic data and the CLI live in the
//! `faildetect` crate.
//!
//! Every score is oriented "higher = more confident", and the positive class
//! of every error-detection metric is "correctly classified".
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod artifact;
pub mod confidnet;
pub mod error;
pub mod eval;
pub mod laplace;
pub mod linalg;
pub mod metrics;
pub mod probs;
pub mod scores;
pub mod stats;
pub mod toy;

pub use artifact::{LastLayerMap, PredictionArtifact, Split};
pub use error::{Error, Result};
pub use probs::ProbabilityVector;
pub use scores::{ScoreMethod, ScoreVector};
