//! Function-level code authorship verification for compiled binaries.
//!
//! The library answers one question: given two function representations
//! extracted from binaries, were they written by the same developer? It has
//! no fixed author set; verification works for authors never seen during
//! training.
//!
//! The pipeline:
//!
//! 1. [`corpus`] loads a JSON-lines corpus of binary functions with
//!    per-author ownership shares, labels each function with its majority
//!    author, splits authors into disjoint train/eval sets, and samples
//!    same-binary evaluation pairs.
//! 2. [`repr`] cleans representation text (hex literals, comments) and fits
//!    character n-gram / character TF-IDF featurizers.
//! 3. [`encoder`] is a small feedforward network mapping feature vectors to
//!    768-dimensional embeddings, with lossless model (de)serialization.
//! 4. [`contrastive`] implements the supervised contrastive loss over cosine
//!    similarities, its exact analytic gradients, and the same/different
//!    verdict; [`train`] runs the Adam training loop.
//! 5. [`calibration`] fits a Beta distribution to same-author scores and
//!    derives a comparison-count-aware threshold from the expected minimum
//!    order statistic.
//! 6. [`evalkit`] computes AUROC and thresholded metrics; [`scan`] compares
//!    two versions of a binary and flags changed functions whose minimum
//!    distance to the old corpus exceeds the calibrated threshold.

pub mod calibration;
pub mod contrastive;
pub mod corpus;
pub mod encoder;
pub mod evalkit;
pub mod repr;
pub mod scan;
pub mod train;

mod io_util;

pub use io_util::write_atomic;
