//! Moderately interacting Brownian particles under a generalized
//! Lennard-Jones force.
//!
//! The crate provides, in order of dependency:
//!
//! * [`lj_kernel`] — the attraction-repulsion kernel with free exponents, its
//!   integrability windows and constants, and the mollified kernel table;
//! * [`fields`] — periodic scalar/vector fields with spectral operators
//!   (heat semigroup, derivatives, Bessel multipliers) and norm estimators;
//! * [`fokker_planck`] — a mild-form solver for the nonlinear Fokker-Planck
//!   equation driven by the kernel, both as a fixed-point iteration and as a
//!   marching exponential integrator;
//! * [`particles`] — Euler-Maruyama simulation of the interacting system,
//!   its drift-saturated variant, and single-path sampling against a solved
//!   density;
//! * [`meso_analysis`] — mollified empirical densities, convergence-rate
//!   theory, error time series and stochastic-convolution scaling fits.
//!
//! All numerics are generic over [`scalar::Scalar`] (`f32` or `f64`);
//! concrete `f64` aliases for the main types live at the crate root.

pub mod error;
pub mod fields;
pub mod fokker_planck;
pub mod lj_kernel;
pub mod meso_analysis;
pub mod particles;
pub mod quad;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};

/// Default working scalar.
pub type Real = f64;

pub type LjParams64 = lj_kernel::LjParams<Real>;
pub type MollifierSpec64 = lj_kernel::MollifierSpec<Real>;
pub type KernelConstants64 = lj_kernel::KernelConstants<Real>;
pub type RadialKernelTable64 = lj_kernel::RadialKernelTable<Real>;
pub type GridSpec64 = fields::GridSpec<Real>;
pub type ScalarField64 = fields::ScalarField<Real>;
pub type VectorField64 = fields::VectorField<Real>;
pub type PdeConfig64 = fokker_planck::PdeConfig<Real>;
pub type PdeSolution64 = fokker_planck::PdeSolution<Real>;
pub type ParticleState64 = particles::ParticleState<Real>;
pub type Trajectory64 = particles::Trajectory<Real>;
pub type CutoffSpec64 = particles::CutoffSpec<Real>;
pub type MesoParams64 = meso_analysis::MesoParams<Real>;
pub type RateTheory64 = meso_analysis::RateTheory<Real>;
