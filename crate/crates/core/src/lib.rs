//! Nonparametric inference of population structure and admixture from
//! linked genotype data.
//!
//! Each sequence is a path through an unbounded set of ancestral populations:
//! a hierarchical Dirichlet process shares the populations across sequences
//! and a linkage HMM splits each sequence into contiguous segments of common
//! ancestry. Inference is a slice-truncated Gibbs sampler; see [`sampler`].

pub mod data;
pub mod dist;
pub mod error;
pub mod exec;
pub mod hdp;
pub mod hmm;
pub mod params;
pub mod rng;
pub mod sampler;
pub mod simulate;
pub mod summary;

pub use data::Dataset;
pub use error::{Error, Result};
pub use exec::Executor;
pub use params::{GammaPrior, Priors};
pub use sampler::{RunConfig, Sampler, SamplerConfig};
