//! Multi-beam light–matter interface for two-dimensional atomic tweezer arrays.
//!
//! Lengths are measured in units of the resonant wavelength (λ = 1, so the
//! wavenumber is k = 2π) and rates in units of the single-atom linewidth γ.
//! All dipoles share the circular orientation `e_d = (e_x + i e_y)/√2`.
//!
//! The crate is organised bottom-up:
//!
//! - [`lattice`]: lattice geometry, reciprocal vectors and finite atom patches.
//! - [`diffraction`]: radiative diffraction orders and the infinite-array
//!   efficiency.
//! - [`target_mode`]: the multi-beam Gaussian target mode in real and momentum
//!   space, plus numerical-aperture filtering.
//! - [`dipole`]: the coupled-dipole steady state and its scattered field.
//! - [`metrics`]: flux overlaps, modal reflectivity and resonance search.
//! - [`finite_theory`]: the Gaussian-collective-mode theory of finite arrays.
//! - [`experiments`]: waist/spacing optimisation and figure-level studies.

pub mod diffraction;
pub mod dipole;
mod error;
pub mod experiments;
pub mod finite_theory;
pub mod lattice;
pub mod metrics;
pub mod optimize;
pub mod target_mode;

pub use error::{Error, Result};

pub use diffraction::{DiffractionOrder, Direction, OrderSet, Polarization};
pub use lattice::{AtomArray, Lattice, LatticeKind};
pub use metrics::{InterfaceResult, ResultSource};
pub use target_mode::{AngularSpectrum, SpectralGrid, TargetMode};
