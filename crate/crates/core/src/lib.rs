//! Surrogate modeling of structural dynamic response under moving loads.
//!
//! The crate covers the whole pipeline: a 2D Timoshenko beam/truss FEM
//! ([`fem`]) integrated with an implicit HHT-alpha scheme that supports
//! stretched time grids ([`dynamics`]); static condensation onto retained
//! DOF sets with step-wise reconstruction of the rest ([`schur`]); dataset
//! production — trim, stretch, resample, persist ([`data`], [`container`]);
//! a dual-trunk multiple-input operator network with exact hand-rolled
//! reverse-mode gradients ([`mionet`]); and the four training strategies
//! with their data and dynamic-equilibrium losses ([`training`]).
//!
//! Determinism is a contract throughout: fixed seeds reproduce datasets
//! and training trajectories bit for bit for any thread count.

pub mod container;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mionet;
pub mod rng;
pub mod schur;
pub mod training;

pub use error::{Error, Result};
