//! Morphological tagging with a factorial CRF: one variable per token and
//! tag type, neural unary factors, pairwise and transition factors, loopy
//! belief propagation for inference and surrogate-likelihood training.
//!
//! The guide in `book/` walks through the pipeline; its code samples run as
//! doctests of this crate.

pub mod baseline;
pub mod bp;
pub mod conllu;
pub mod decode;
pub mod error;
pub mod eval;
pub mod export;
pub mod fcrf;
pub mod graph;
pub mod logspace;
pub mod model;
pub mod nn;
pub mod optim;
pub mod params;
pub mod potentials;
pub mod schema;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tags.md")]
    mod tags {}
    #[doc = include_str!("../../../book/src/factor-graph.md")]
    mod factor_graph {}
    #[doc = include_str!("../../../book/src/belief-propagation.md")]
    mod belief_propagation {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
