//! Span-based named-entity recognition trained with a supervised contrastive
//! objective and decoded with centroid-retrieval interpolation.
//!
//! The crate is `no_std` and only needs `alloc`. All file IO, the command line
//! and the experiment harness live in the companion `sclrai` crate.
//!
//! Pipeline overview:
//!
//! 1. [`corpus`] turns BIO text into [`corpus::Dataset`]s, samples negative
//!    spans, and builds noisy training sets (distant supervision, random
//!    entity dropping).
//! 2. [`encoder`] maps a sentence to per-token hidden vectors.
//! 3. [`span_model`] builds span representations, projects them and scores
//!    labels.
//! 4. [`contrastive`] adds the span-level supervised contrastive loss.
//! 5. [`training`] computes exact gradients, runs Adam and the seeded loop.
//! 6. [`rai`] builds the per-label centroid table and interpolates label
//!    distributions at inference.
//! 7. [`eval`] decodes spans to BIO and scores them with conlleval semantics.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod contrastive;
pub mod corpus;
pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod math;
pub mod model;
pub mod rai;
pub mod rng;
pub mod span_model;
pub mod synth;
pub mod training;

pub use diagnostics::Diagnostics;
pub use error::{Error, Result};
