//! Flow topology and quantum signatures of a driven-dissipative Kerr
//! resonator.
//!
//! - [`model`]: parameters, the ℵ rescaling and quadrature conventions.
//! - [`semiclassics`]: mean-field fixed points, chirality, connectivity and
//!   phase diagrams.
//! - [`hilbert`]: truncated Fock space, Lindblad generator, steady states,
//!   Liouvillian modes and Wigner functions.
//! - [`trajectories`]: quantum-jump unraveling.
//! - [`spectra`]: chirality spectra by both routes and peak extraction.
//! - [`io`]: binary container and JSON sidecars.

pub mod error;
pub mod hilbert;
pub mod io;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod semiclassics;
pub mod spectra;
pub mod trajectories;

pub use error::{Error, Result};
pub use model::{ModelParams, ScaledParams};
