//! Spin dynamics of the isotropic central spin model.
//!
//! The main engine maps the operator dynamics of the central spin onto a
//! four-state impurity coupled to a chain of three-flavour bosons and
//! propagates the resulting effective Hamiltonian with fourth-order
//! Runge-Kutta. Three independent engines provide reference curves: closed
//! forms for a frozen Overhauser field, a classical ensemble simulation and
//! exact quantum dynamics of small baths.

pub mod classical;
pub mod cli;
pub mod couplings;
pub mod error;
pub mod exactqm;
pub mod heff;
pub mod opbasis;
pub mod propagate;
pub mod reference;
pub mod sparse;

pub use error::{Error, Result};

/// Cartesian 3-vector used for fields and classical spins.
pub type Vec3 = [f64; 3];

/// Levi-Civita symbol for indices in `0..3`.
#[inline]
pub fn levi_civita(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}
