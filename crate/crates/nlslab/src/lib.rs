//! Numerical laboratory for the focusing cubic Schrödinger equation in
//! free space and outside a ball obstacle: ground-state computation,
//! conserved-quantity and virial diagnostics, split-step evolution, and
//! scattering-versus-blowup classification.

pub mod classify;
pub mod config;
pub mod diagnostics;
pub mod domain;
pub mod evolve;
pub mod groundstate;
pub mod io;
pub mod observables;
pub mod scenario;
