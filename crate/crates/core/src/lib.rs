//! Local-potential renormalization-group flow for a quantum double well with Ohmic
//! dissipation, an exact-diagonalization oracle for the dissipationless case, and the
//! critical-dissipation scan built on top of them.

pub mod cli;
pub mod config;
pub mod error;
pub mod flow;
pub mod io;
pub mod model;
pub mod observables;
mod quad;
pub mod scan;
pub mod spectral;
