//! Causal discovery for linear non-Gaussian models with latent confounders.
//!
//! Shared latent components are detected by testing whether two groups of
//! observed variables share exactly one independent component. Mixing
//! coefficients come from closed-form ratios of higher-order cumulants, and
//! identified components are peeled off through surrogate regression so that
//! deeper structure becomes visible on the next pass.

pub mod cumulants;
pub mod data;
pub mod discovery;
pub mod error;
pub mod eval;
pub mod graph;
pub mod independence;
pub mod json;
pub mod mixing;
pub mod olc;
pub mod seed;
pub mod simulate;

pub use data::{Dataset, Series};
pub use discovery::{discover, Config};
pub use error::{Error, Result};
pub use graph::CausalGraph;
pub use mixing::{Component, MixingMatrix};
pub use simulate::ModelSpec;
