//! Numerical laboratory for the decoherence of a two-bump electron wave
//! packet in a thermal phonon field at weak coupling.

pub mod analysis;
pub mod boltzmann;
pub mod collision;
pub mod config;
pub mod dispersion;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod grid;
pub mod ladder;
pub mod observables;
pub mod quadrature;
pub mod rng;
pub mod roots;
pub mod vector;
pub mod wavepacket;
pub mod wigner;

pub use dispersion::{Branch, DispersionModel, RadialProfile};
pub use error::{Error, Result};
pub use num_complex::Complex64;
