// SPDX-License-Identifier: Apache-2.0

//! Numerical model of a V-shape artificial atom built from two transmons
//! coupled through a shared loop inductance.
//!
//! Energies are frequencies in GHz (E/h), phases are radians and flux is in
//! units of Φ0 throughout.

pub mod banded;
pub mod circuit;
pub mod constants;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod fit;
pub mod grid;
pub mod lanczos;
pub mod levels;
pub mod nelder_mead;
pub mod sparse;
pub mod sweep;
pub mod symmetry;

pub use circuit::{
    basis_index, chain_inductance, derived_energies, gzz_perturbative, harmonic_mode_frequencies, potential_energy,
    reduced_hamiltonian, CircuitParams, EnergyScales, ReducedModel, BASIS_LABELS,
};
pub use constants::PhysicalConstants;
pub use eigen::{converged_spectrum, lowest_eigenpairs, solve_grid, EigenOptions, Method, RefinementStep, Spectrum};
pub use error::{Error, Result};
pub use grid::{assemble_hamiltonian, observable, Grid, GridSpec, ObservableKind, PotentialMode, Stencil};
pub use sparse::{OperatorKind, SparseOperator};
