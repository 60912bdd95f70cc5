//! Multi-rater consensus learning.
//!
//! A three-branch classifier (sensitivity, specificity and balanced fusion
//! heads over a shared trunk) trained from raw multi-rater gradings rather
//! than only the adjudicated label:
//!
//! * [`rater_sim`] simulates graders and a two-stage adjudication protocol
//!   over synthetic feature vectors.
//! * [`label_engine`] turns raw gradings into per-branch training targets.
//! * [`losses`] holds the consensus loss, the cosine uncertainty, the
//!   per-branch composite loss and the uncertainty-weighted KL loss, each
//!   with analytic gradients.
//! * [`model`] is the network with hand-written forward and backward passes.
//! * [`trainer`] runs Adam over the summed branch losses.
//! * [`metrics`] computes stratified Acc/Sen/Spec/F1/AUC reports.
//!
//! The crate is `no_std` and needs only `alloc`; file formats and the
//! command line live in the `multirater` crate.

#![no_std]

extern crate alloc;

pub mod error;
pub mod label_engine;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rater_sim;
pub mod trainer;

mod label;
mod seed;

pub use error::{Error, Result};
pub use label::{Label, Probs};
pub use seed::derive_seed;
