//! # typeb-core
//!
//! Numerics for finite-rank (spiked) perturbations of random matrices seen
//! through infinitesimal (type B) free probability.
//!
//! A spiked model `A_N + B` (or `Σ^{1/2} W Σ^{1/2}` in the multiplicative
//! case) has an averaged empirical spectral law
//!
//! ```text
//! η_N = η + η′ / N + o(1/N)
//! ```
//!
//! where the bulk law `η` is an ordinary free convolution and the signed
//! correction `η′` carries the outlier atoms plus a compensating density
//! on the bulk. This crate computes `(η, η′)` in closed form where possible,
//! locates outliers by solving subordination / Cauchy-transform equations,
//! and checks every prediction against a seeded Monte Carlo simulator.
//!
//! ## Modules
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`measures`] | probability and signed spectral measures, [`TypeBLaw`] |
//! | [`transforms`] | Cauchy, `F`, `ψ` transforms and Stieltjes inversion |
//! | [`subordination`] | additive subordination and free additive convolution |
//! | [`typeb`] | outliers and first-order corrections for spiked models |
//! | [`rmt`] | random matrix samplers, eigensolvers, spectral statistics |
//! | [`infinitesimal`] | `(φ, φ′)` moments of words under infinitesimal freeness |
//! | [`compare`] | histogram vs prediction chi-square reports |
//!
//! ## Normalization
//!
//! The semicircle law lives on `[−√2, √2]` with `G(z) = z − √(z² − 2)`; the
//! GUE sampler uses `E|A_ij|² = 1/(2N)` so that its limit is exactly this law.
//! The Marchenko–Pastur law with ratio `λ` is the free Poisson law with mean
//! `λ`, supported on `[(1−√λ)², (1+√λ)²]` plus an atom `1−λ` at 0 when `λ < 1`.

pub mod compare;
pub mod error;
pub mod infinitesimal;
pub mod measures;
pub mod quad;
pub mod rmt;
pub mod subordination;
pub mod transforms;
pub mod typeb;

pub use error::{Error, Result};
pub use measures::{
    Atom, Continuous, GridDensity, GridFunction, Interval, Measure, SignedMeasure, SpectralMass,
    TypeBLaw,
};
pub use num_complex::Complex64;
pub use rmt::{EnsembleKind, EnsembleSpec, Histogram};
pub use transforms::{ComplexPoint, InversionSchedule};
pub use typeb::{OutlierKind, OutlierRoot, SpikeSet};
