//! Random matrix Monte Carlo: samplers, eigensolvers and spectral statistics.

pub mod eigen;
pub mod matrix;
pub mod sample;
pub mod stats;

pub use eigen::{hermitian_eigenvalues, jacobi_eigenvalues, trace_power};
pub use matrix::CMatrix;
pub use sample::{haar_unitary, sample_matrix, trial_rng, EnsembleKind, EnsembleSpec};
pub use stats::{
    averaged_spectrum, entry_moment, estimate_tau_pair, map_trials, simulate_eigenvalues, Histogram,
    TauEstimate,
};
