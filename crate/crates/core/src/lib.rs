//! Exact simulation engine for entanglement distribution over repeater
//! chains built from down-conversion pair sources, lossy fiber, multimode
//! memories, linear-optic Bell measurements and photon-counting detectors.
//!
//! States live in a truncated multimode Fock space and are propagated
//! exactly (no sampling): an ensemble of weighted pure branches represents
//! the density operator, loss is a Kraus map that keeps branches pure, and
//! detection is diagonal-POVM conditioning. The [`oracle`] module carries an
//! independent dense density-matrix implementation used to validate the
//! sparse engine on small instances.
//!
//! The crate is `no_std` (with `alloc`); all file formats, CLI drivers and
//! parallel sweeps live in the companion `repsim-cli` crate.
//!
//! Modules, bottom up:
//!
//! - [`fock`]: sparse states, tensor products, beam splitters, loss,
//!   measure-and-remove conditioning.
//! - [`devices`]: pair sources, detector POVMs, fiber and memory loss.
//! - [`bsm`]: linear-optic Bell-state measurement and click classification.
//! - [`chain`]: elementary links, entanglement swapping, end-to-end QBER.
//! - [`rates`]: secret-key rates and repeaterless baselines.
//! - [`oracle`]: dense brute-force reference implementation.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bsm;
pub mod chain;
pub mod devices;
pub mod error;
pub mod fock;
mod math;
pub mod oracle;
pub mod rates;

pub use error::{Error, Result};
pub use fock::{BranchEnsemble, Occupation, PureState, TruncationPolicy};
