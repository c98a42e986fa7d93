//! Approximate policy iteration with linear value-function approximation,
//! H-step lookahead and m-step rollout, together with calculators for its
//! error bounds and a reconstruction of its two-state divergence example.

// NaN must fail validation, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod bounds;
pub mod counterexample;
pub mod error;
pub mod experiments;
pub mod linear_fa;
pub mod mdp;

pub use error::{Error, Result};
pub use linear_fa::{FeatureSystem, SampleSet, WeightVec};
pub use mdp::{Mdp, Policy, ValueVec};
