//! Approximation theory for signals on graphs.
//!
//! The crate builds graph operators ([`graph`]), their eigendecompositions
//! ([`spectral`]), moduli of smoothness and K-functionals over any symmetric
//! PSD operator ([`smoothness`]), graph-convolution forward passes with
//! high-frequency energy traces ([`gcn`]), seeded synthetic data ([`synth`]),
//! and numerical checks of the approximation and decay inequalities that tie
//! them together ([`bounds`]).

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod gcn;
pub mod graph;
pub mod search;
pub mod smoothness;
pub mod spectral;
pub mod synth;

pub use graph::{DegreeVector, Graph, GraphError};
pub use spectral::{EigenOrdering, SpectralDecomposition, SpectralError};
