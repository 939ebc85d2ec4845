//! Sparse, nonnegative decomposition of dense multimodal embeddings over a
//! dictionary of named text concepts.
//!
//! The flow is: build a centered concept dictionary ([`vocab`]), align an
//! image embedding to the concept cone ([`geometry`]), solve a nonnegative
//! LASSO per sample ([`solver`]) and map the weights back to named concepts
//! ([`pipeline`]). [`eval`] and [`analysis`] consume the resulting
//! [`io::DecompositionRecord`]s, and [`synth`] generates data with planted
//! sparse structure for testing all of the above.

pub mod analysis;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod solver;
pub mod synth;
pub mod vocab;

pub use error::{Error, Result};
pub use io::{DecompositionRecord, DenseMatrix};
pub use pipeline::ConceptModel;
pub use solver::{SolverConfig, SolverKind, SolverResult};
pub use vocab::ConceptDictionary;
