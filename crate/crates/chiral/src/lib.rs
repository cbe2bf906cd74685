//! Spectral laboratory for the chiral model of twisted bilayer graphene.

pub mod bundle;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod planewave;
pub mod potential;
pub mod protected;
pub mod spectra;
pub mod symmetry;
pub mod theta;

pub use error::{Error, Result};
pub use lattice::C64;
