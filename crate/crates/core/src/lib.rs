//! Low-budget context-set selection and episodic evaluation.
//!
//! The crate is organized around a small pipeline:
//!
//! * [`features`] holds pooled feature matrices, diagonal metrics, probability
//!   matrices and the on-disk feature-file formats.
//! * [`clustering`] provides k-means++ seeding, Lloyd iterations and a
//!   shared-diagonal-covariance Gaussian mixture fitted by EM.
//! * [`selectors`] implements the selection strategies (random, uncertainty,
//!   geometric cover, DPP, mixture-based and hybrids) behind one config type.
//! * [`learners`] contains the downstream models fitted on the selected
//!   context: nearest-prototype, multiclass max-margin, a Bayes reference and
//!   kernel ridge regression.
//! * [`episodes`] samples synthetic tasks and picks context sets from their
//!   pools, stratified or not.
//! * [`eval`] runs the episodic benchmark loop and the diagnostic metrics
//!   (coverage entropy, selection quality, purity curves).
//!
//! Everything that draws randomness takes an explicit `u64` seed and is
//! bit-reproducible for a fixed seed, independent of thread count.

pub mod clustering;
pub mod episodes;
pub mod error;
pub mod eval;
pub mod features;
pub mod learners;
pub mod rng;
pub mod selectors;

pub use error::{Error, Result};
