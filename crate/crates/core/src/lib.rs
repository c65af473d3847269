//! Nonlocal perimeters and nonlocal total variation on uniform Cartesian grids.
//!
//! The crate evaluates the energy
//!
//! ```text
//! J_K(u; Ω) = ½ ∬_{Ω×Ω} K(y−x)|u(y)−u(x)| dy dx + ∬_{Ω×Ωᶜ} K(y−x)|u(y)−u(x)| dy dx
//! ```
//!
//! for an even, nonnegative, possibly singular kernel `K`, certifies minimizers
//! with nonlocal calibrations, solves the discrete Plateau problem with frozen
//! exterior data, and computes the anisotropic limit norm `σ_K` of the rescaled
//! energies `ε⁻¹ J_{K_ε}`.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. The `parallel` feature partitions pair loops across a rayon pool;
//! reductions stay in a fixed order unless [`Reduction::Tree`] is requested.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod calibration;
pub mod domain;
pub mod energy;
pub mod error;
pub mod gamma;
pub mod kernels;
pub mod math;
mod parallel;
pub mod solver;

pub use calibration::{Calibration, CertificateReport, Certifier, DivergenceCheck, NormalCheck};
pub use domain::{Aabb, CellTag, DomainSpec, Grid, ScalarField, Shape};
pub use energy::{CoareaDecomposition, Energy, EnergyBreakdown, Level, PairStencil, Reduction};
pub use solver::{Init, Reference, SmoothedEnergy, SolveOptions, SolveReport, StepRule};
pub use gamma::{Facet, GammaRow, GammaSweepReport, LimitNorm};
pub use error::{Error, Result};
pub use kernels::{Anisotropy, DecayBound, KernelForm, KernelSpec, Moment};

/// Largest spatial dimension supported by grids and quadratures.
pub const MAX_DIM: usize = 3;
