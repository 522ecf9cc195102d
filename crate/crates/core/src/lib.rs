//! # semilabel-core
//!
//! Turns a small set of expert labels into corpus-wide labels.
//!
//! The flow is `clean -> embed -> cluster -> propagate -> queue more manual
//! labels -> repeat`, with cross-validated accuracy and inter-rater agreement
//! computed along the way:
//!
//! - [`store`]: posts, append-only label log, run manifests, digests.
//! - [`clean`]: the social-media normalization pipeline.
//! - [`vectorize`]: subword CBOW / skip-gram, PV-DM paragraph vectors, bag of words.
//! - [`cluster`]: k-means with random restarts and silhouette scoring.
//! - [`propagate`]: unanimous-cluster label propagation and k-fold CV.
//! - [`agreement`]: percent agreement between raters, hashtag lexicon, rubric.
//! - [`projection`]: PCA and exact t-SNE for 2-D views.
//! - [`pipeline`]: the iterative labeling cycle and its on-disk state.

pub mod agreement;
pub mod clean;
pub mod cluster;
pub mod kv;
pub mod pipeline;
pub mod projection;
pub mod propagate;
pub mod store;
pub mod synthetic;
pub mod vectorize;

mod error;
mod linalg;
mod rng;

pub use error::{Error, Result};
