//! Multimodal survival prediction under single-source domain shift.
//!
//! The crate is `no_std` with `alloc`. It carries a small reverse-mode
//! autodiff engine ([`graph`]), the sparse Dirac information rebalancer
//! ([`sdir`]), cancer-aware distribution entanglement ([`cade`]), a
//! pathway-to-patch fusion backbone ([`fusion`]), survival losses and
//! metrics ([`survival`]), a synthetic domain-shift generator ([`dataio`])
//! and the training loop ([`train`]). File formats and the command line live
//! in the companion `mmsurv` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cade;
pub mod dataio;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod graph;
pub mod math;
pub mod quadrature;
pub mod rng;
pub mod sdir;
pub mod survival;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Axis, Graph, Var};
pub use tensor::Tensor;
