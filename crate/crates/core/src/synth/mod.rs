//! Synthetic ground truth, perturbation sampler and cohort simulator.
//!
//! All generators are pure functions of their inputs and seed.

pub mod cohort;
pub mod phantom;
pub mod sampler;

pub use cohort::{make_cohort, site_name, CohortSpec, NoiseLink, TrueEffects};
pub use phantom::{make_phantom, PhantomSpec, PhantomStructure, Shape};
pub use sampler::{sample_mc, substream, NoiseSpec};
