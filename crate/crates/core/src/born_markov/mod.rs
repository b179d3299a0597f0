//! Chain-only reduced dynamics: the Born master equation with memory, its
//! Markovian limit and the closed-form Markovian current.

pub mod born;
pub mod kernels;
pub mod markov;

pub use born::{born_stationary, propagate_born, propagate_born_with, reduced_current, BornOptions, BornStationary, ReducedState};
pub use kernels::{continuum_occupation, reservoir_correlation, KernelTable};
pub use markov::{analytic_current, markov_rhs, markov_stationary, propagate_markov};

/// Zeroth-order Bessel function `J_0(tau)`.
pub fn free_bessel(tau: f64) -> f64 {
    crate::special::bessel_j0(tau)
}
