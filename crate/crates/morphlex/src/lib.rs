//! Morphologically complete bilingual lexicon induction toolkit.
//!
//! The crate builds bilingual dictionaries from synset and paradigm
//! resources, learns orthogonal mappings between monolingual embedding
//! spaces (plain Procrustes, self-learning, and latent-variable EM
//! matching, each optionally restricted by a morphological constraint),
//! and evaluates translation accuracy under frequency-, tag-, and
//! lexeme-controlled regimes.
//!
//! All numeric code is generic over the scalar type via [`Scalar`]
//! (`f32` or `f64`); concrete aliases are exported at the crate root.

pub mod assignment;
pub mod dictionary;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod mapping;
pub mod morph;
pub mod scalar;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f32` embedding matrix.
pub type Embedding32 = embeddings::EmbeddingMatrix<f32>;
/// `f64` embedding matrix.
pub type Embedding64 = embeddings::EmbeddingMatrix<f64>;
/// `f32` orthogonal mapping.
pub type Mapping32 = mapping::MappingMatrix<f32>;
/// `f64` orthogonal mapping.
pub type Mapping64 = mapping::MappingMatrix<f64>;
/// `f32` sparse candidate graph.
pub type Graph32 = assignment::SparseBipartiteGraph<f32>;
/// `f64` sparse candidate graph.
pub type Graph64 = assignment::SparseBipartiteGraph<f64>;
