//! Simulation and numerics for one-dimensional symmetric exclusion processes
//! and random walks among i.i.d. one-sided α-stable random conductances.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation: environments are built from counter-based random streams, so
//! every result is a deterministic function of its inputs and seeds. File
//! formats, configuration and the command line live in the `stablex` crate.
//!
//! Module map:
//!
//! - [`stable`] and [`env`]: stable sampling, subordinator paths and the
//!   coupled conductance environments obtained by coarse graining them.
//! - [`walk`]: generator, semigroup, heat kernel, resolvent and the discrete
//!   `d/dW` derivative of the sped-up random walk.
//! - [`particles`]: exact event-driven simulation of the walk and of the
//!   exclusion process, with tagged-particle tracking.
//! - [`stone`]: the birth–death chain on the atoms of a discrete speed
//!   measure and its equivalence in law with the lattice walk.
//! - [`hydro`]: the experiments built on top of the above.
#![no_std]
#![forbid(unsafe_code)]
// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod env;
mod error;
pub mod exec;
pub mod hydro;
pub mod lattice;
pub mod particles;
pub mod rate_tree;
pub mod rng;
pub mod stable;
pub mod stats;
pub mod stone;
pub mod tridiag;
pub mod walk;

pub use env::{coarse_grain, Environment, Provenance, Window};
pub use error::{Error, Result};
pub use lattice::LatticeFunction;
pub use stable::{sample_one_sided_stable, sample_subordinator_path, StableLaw, SubordinatorPath};
