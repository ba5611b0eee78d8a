//! MAP estimation by expectation–maximization.
//!
//! One iteration updates, in order, the latent Gaussian `(mu, Sigma)` (optional),
//! each task's transform `(F_m, d_m)`, and the shared classifier `(w, b)`.
//! Moments are recomputed before every block, which keeps each block an exact
//! ascent step on the log posterior.

mod fit;
mod moments;
mod mstep;
mod objective;

pub use fit::{fit, initialize, FitOptions, FitTrace, Init, TraceRow};
pub use moments::{e_step_task, truncated_normal_moments, EStepMoments};
pub use mstep::{
    classifier_work, domain_gram, m_step_classifier, m_step_domain, m_step_latent, reweighted_solve,
    ClassifierWork,
};
pub use objective::log_posterior;

pub(crate) use moments::{spd_inverse, symmetrize};

/// Running count of scalar multiply–adds performed by the dense kernels.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCount(u64);

impl OpCount {
    /// `(m×k)·(k×n)` product.
    pub fn product(&mut self, m: usize, k: usize, n: usize) {
        self.0 += (m * k * n) as u64;
    }

    /// Factorization or inversion of an `n×n` matrix.
    pub fn factor(&mut self, n: usize) {
        self.0 += (n * n * n) as u64;
    }

    pub fn add(&mut self, n: usize) {
        self.0 += n as u64;
    }

    pub fn total(&self) -> u64 {
        self.0
    }
}
