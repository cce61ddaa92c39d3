//! Exact-diagonalization toolkit for relaxation dynamics of spin-1/2 chains.
//!
//! The crate builds chain Hamiltonians (mixed-field Ising, XXZ with
//! next-nearest-neighbour couplings, random cross-product/Heisenberg, PXP) and
//! the kicked-Ising Floquet operator, prepares families of initial states,
//! evolves them exactly in the eigenbasis and measures how fast subsystems
//! approach the diagonal ensemble. The [`runner`] module turns all of this into
//! reproducible, config-driven scenarios.
//!
//! Basis encoding used everywhere: site `j` (1-based) is stored in bit `j - 1`
//! of a configuration word, a cleared bit is `|↑⟩` and a set bit is `|↓⟩`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod models;
pub mod runner;
pub mod spectral;
pub mod states;

mod local;

pub use error::{QmeError, Result};

/// Complex double used for all amplitudes and matrix entries.
pub use faer::c64;
