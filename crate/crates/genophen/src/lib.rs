//! Genotype-to-phenotype prediction toolkit.
//!
//! The crate covers the full pipeline: parsing the five input tables,
//! encoding genotype calls into one-hot context matrices, two-stage SNP
//! selection (gradient-boosted-tree recursive feature elimination followed
//! by mutual-information ranking), a multi-modal fusion network with
//! genome/weather cross-attention, and a grouped 10-fold cross-validation
//! protocol with environment and hybrid-cluster splits. A synthetic data
//! generator with known planted effects serves as the verification oracle.
//!
//! See the `book/` guide for a narrative walk through each stage.

pub mod cli;
pub mod encode;
pub mod error;
pub mod ingest;
pub mod model;
pub mod select;
pub mod synth;
pub mod traineval;
pub mod numcore;

pub use error::{Error, ErrorCategory, Result};

// Book chapters double as doctests so the guide's snippets stay compilable.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/tensors-and-gradients.md")]
    mod tensors_and_gradients {}
}
