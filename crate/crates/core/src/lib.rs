//! Constrained Bayesian item response theory (IRT-M).
//!
//! Binary responses Y (N units × K items) are modelled as
//! P(Y_ik = 1) = Φ(λ_kᵀθ_i + b_k) with d latent dimensions. A K×d code table
//! (the M-matrices) fixes loadings to zero, restricts their sign or leaves
//! them free, and anchor units pin the orientation of each dimension.

pub mod anchors;
pub mod baselines;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod sampling;
pub mod simulation;

pub use anchors::{AnchorSelection, AugmentedData};
pub use error::{IrtmError, Result};
pub use gibbs::{run_sampler, SamplerOptions};
pub use model::{ConstraintSet, Hyperparameters, PosteriorDraws, Response, ResponseMatrix};
pub use rng::RngStream;
