//! Numerical laboratory for time-symmetric action-at-a-distance
//! electrodynamics of two spin-1/2 particles: discretized worldline dynamics,
//! the generalized canonical structure, Dirac-algebra spin operators and
//! desk-scale proper-time propagator evaluation.

pub mod real;
pub mod minkowski;
pub mod worldline;
pub mod lightcone;
pub mod action;
pub mod canonical;
pub mod spinor;
pub mod propagator;
pub mod solver;
pub mod scenario;
pub mod experiments;

pub use minkowski::FourVector;
pub use worldline::{ShiftField, SwitchingProfile, Worldline};
