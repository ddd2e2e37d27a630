//! Quantum-optical high-harmonic generation from a laser-driven Fermi-Hubbard
//! chain.
//!
//! The pipeline has three stages:
//!
//! 1. [`lattice`] and [`operators`] build the symmetry-reduced Hubbard model
//!    and its current operator; [`drive`] supplies the classical pulse.
//! 2. [`dynamics`] propagates every field-free eigenstate through the pulse
//!    and records the transition currents `j_{m,n}(t)`.
//! 3. [`photonics`] integrates the photonic state of each emitted mode, driven
//!    by those currents, and [`observables`] reduces it to spectra, Mandel Q
//!    and squeezing.
//!
//! [`config`], [`persist`] and [`pipeline`] wire the stages into a
//! reproducible, checkpointed run.

pub mod config;
pub mod drive;
pub mod dynamics;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod observables;
pub mod operators;
pub mod persist;
pub mod photonics;
pub mod pipeline;

pub use error::{Error, Result};

/// Speed of light in atomic units.
pub const SPEED_OF_LIGHT: f64 = 137.035999;
