//! Self-supervised consensus denoising laboratory.
//!
//! Trains pairs of denoisers from two independently reconstructed noisy
//! realizations of the same object, using simulated CT and MR acquisitions,
//! and checks empirically why mapping noisy inputs onto noisy targets
//! recovers the clean-target solution.

pub mod autodiff;
pub mod ct_sim;
pub mod error;
pub mod evalcli;
pub mod losses;
pub mod model;
pub mod mr_sim;
pub mod numerics;
pub mod pair;
pub mod theorem_lab;
pub mod trainer;

pub use error::{Error, Result};
