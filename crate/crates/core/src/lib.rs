//! Constrained Galerkin and least-squares Petrov–Galerkin (LSPG) projection
//! for reduced-order models of parameterized dynamical systems.
//!
//! The crate is `no_std` (with `alloc`); file formats, configuration and the
//! experiment harness live in the `conproj` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod basis;
pub mod constraints;
pub mod error;
pub mod fom;
pub mod layout;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod projection;
pub mod solvers;

pub use error::{Error, Result};
