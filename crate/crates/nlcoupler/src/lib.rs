//! Numerical engine for two transmons joined by a nonlinear tuneable coupler:
//! lumped-element circuit model, classical normal modes, the full quantised
//! three-mode Hamiltonian, reduced Bose-Hubbard/XXZ models, synthetic
//! spectroscopy and calibration fits.

pub mod calibration;
pub mod circuit;
pub mod classical;
pub mod effective;
pub mod error;
pub mod hamiltonian;
mod lsq;
pub mod spectroscopy;

pub use error::{Error, Result};
