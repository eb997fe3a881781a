//! Semantic clustering and extractive summarization of agent episode traces.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! 1. [`episodes`] generates grid-world and multi-entity traces.
//! 2. [`moments`] recovers the player heading from rendered frames.
//! 3. [`tagging`] turns every step into template sentences.
//! 4. [`embedding`] maps tags to unit vectors.
//! 5. [`umap`] and [`hdbscan`] reduce and cluster those vectors.
//! 6. [`summary`] picks one exemplar per cluster (plus dissimilar extras).
//! 7. [`metrics`] scores the clustering; [`latent`] applies the same
//!    reduce-then-cluster step to per-step latent vectors.
//!
//! [`pipeline`] wires the stages together.

pub mod embedding;
pub mod episodes;
mod error;
pub mod hdbscan;
pub mod latent;
pub mod metrics;
pub mod moments;
pub mod pipeline;
pub mod rng;
pub mod summary;
pub mod tagging;
pub mod text;
pub mod umap;

pub use error::{Error, Result};
