//! Mode connectivity of neural-network loss landscapes under weight-permutation
//! symmetry.
//!
//! The crate trains small dense networks, aligns their hidden units by solving
//! per-layer assignment problems, learns quadratic Bezier curves between the
//! (optionally aligned) endpoints, refines the permutation jointly with the
//! curve by proximal alternating minimization, evaluates robustness under L∞
//! PGD attacks, and computes layer-wise loss bounds along linear paths.

pub mod alignment;
pub mod bounds;
pub mod curve;
pub mod error;
pub mod harness;
pub mod nn;
pub mod pam;
pub mod rng;
pub mod robust;
pub mod strategy;

pub use error::{Error, Result};
