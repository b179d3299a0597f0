use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("could not bracket the chemical potential for density {density} at beta = {beta}")]
    ChemicalPotentialBracket { density: f64, beta: f64 },

    #[error("interaction U = {u} is not supported by the single-particle solvers; use the langevin method")]
    InteractingNotSupported { u: f64 },

    #[error("hermiticity drift {drift:.3e} at t = {t} exceeds the step-size limit; reduce dt")]
    HermiticityDrift { t: f64, drift: f64 },

    #[error("input matrix is not Hermitian (deviation {deviation:.3e})")]
    NonHermitian { deviation: f64 },

    #[error("singular system: {0}")]
    Singular(&'static str),

    #[error("no convergence in {0}")]
    NoConvergence(&'static str),

    #[error("quadrature did not converge: estimated error {error:.3e} above tolerance {tolerance:.3e}")]
    Quadrature { error: f64, tolerance: f64 },

    #[error("trajectory {trajectory} diverged at t = {t}: |a_{site}| = {magnitude:.3e} (delta = {delta}, U = {u})")]
    Divergence {
        trajectory: u64,
        t: f64,
        site: usize,
        magnitude: f64,
        delta: f64,
        u: f64,
    },

    #[error("signal of length {len} is too short; need at least {needed} samples")]
    SignalTooShort { len: usize, needed: usize },

    #[error("series never settled within relative tolerance {rel_tol}")]
    NotSettled { rel_tol: f64 },

    #[error("memory history underrun: needed lag {needed} but only {available} stored")]
    HistoryUnderrun { needed: usize, available: usize },
}
