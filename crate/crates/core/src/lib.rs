//! Simulation and estimation toolkit for entangled photon pairs from a
//! cw-pumped spontaneous four-wave-mixing source.
//!
//! The crate covers the count-rate model and its inversion, a discretised
//! spectral engine for interferometer experiments, a time-tag Monte Carlo,
//! fringe and beating fits with bootstrap errors, and two-qubit tomography.

pub mod config;
pub mod counting_model;
pub mod error;
pub mod estimators;
pub mod fixtures;
pub mod formats;
pub mod quantum_state;
pub mod reproduce;
pub mod spectral_model;
pub mod timetag_sim;
pub mod tomography;
pub mod units;

pub use error::{Error, Result};
