//! Spectral laboratory for the Moore–Gibson–Thompson (MGT) equation with
//! viscoelastic memory,
//!
//! ```text
//! τ u‴ + α u″ + c² A u + b A u′ − ∫₀ᵗ g(t−s) A w(s) ds = 0,
//! ```
//!
//! where `w` is `u` (type 1), `u′` (type 2) or `λu + u′` (type 3) and `A` is a
//! positive self-adjoint operator realized by its eigenvalues.
//!
//! The crate integrates the decoupled modal equations ([`dynamics`]), evaluates
//! the standard and natural energies together with their dampers ([`energy`]),
//! and turns the resulting series into verdicts: energy-identity audits,
//! decay-rate fits, Gronwall integral checks and Routh–Hurwitz stability maps
//! ([`analysis`]). Hypotheses on the parameters and the kernel are checked by
//! [`model`] and [`kernels`]. The [`cli`] module is the config-driven batch
//! front end used by the `mgt` binary.
//!
//! Everything is verified on a truncated spectrum. Since the modes are
//! exactly decoupled, truncation is exact for data supported on the retained
//! modes.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod kernels;
pub mod model;
pub mod spectrum;

pub use error::{MgtError, Result};
