//! Numerical study of compactly supported steady 2D Euler flows on annuli.
//!
//! The library builds the explicit radial steady states `psi_a` on annuli
//! `(a-3, a+3)`, discretizes the critically singular linearization of the
//! associated non-autonomous semilinear problem on the reference annulus
//! `(1,7) x T`, tracks its low eigenvalues in the Z_l-symmetric sector as the
//! annulus parameter `a` varies, locates the eigenvalue crossing, continues
//! the bifurcating nonradial solution branch by pseudo-arclength, and
//! certifies the reconstructed flows (stationarity, boundary decay order,
//! nonradiality).

pub mod cache;
pub mod cli;
pub mod config;
pub mod cutoff;
pub mod domain;
pub mod error;
pub mod grid;
pub mod linop;
pub mod manifest;
pub mod oracle;
pub mod par;
pub mod profile;
pub mod solver;
pub mod space;
pub mod spectrum;
pub mod verify;

pub use error::{Error, Result};
