//! Latent probit model for multitask classification across heterogeneous
//! feature spaces.
//!
//! Every task `m` observes `x = F_m s + d_m + noise` of a shared latent
//! feature `s ~ N(mu, Sigma)`, and labels come from one probit classifier
//! `y = sign(wᵀ s + b + ε)` in the latent space. Laplacian priors keep `F_m`
//! and `w` sparse.

pub mod bound;
pub mod em;
pub mod error;
pub mod io;
pub mod model;
pub mod normal;
pub mod par;
pub mod predict;
pub mod sampler;

pub use em::{fit, FitOptions, FitTrace, Init};
pub use error::{LpmError, Result};
pub use model::{validate, Hyperparams, Label, LpmParams, SparsityScales, TaskDataset, TaskParams};
pub use par::Execution;
pub use predict::{auc, fit_stl, predict, Prediction};
