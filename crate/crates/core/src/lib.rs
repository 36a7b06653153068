//! Quantization dimension of conformal measures of finite and infinite
//! one-dimensional conformal iterated function systems.
//!
//! The theoretical value comes from the temperature function: `β(q)` is the
//! zero of `t ↦ P(q, t)`, `q_r` solves `β(q_r) = r q_r`, and
//! `D_r = β(q_r) / (1 − q_r)`. The empirical side samples the measure and
//! fits the decay of Lloyd quantization errors.
//!
//! ```
//! use confquant::config::presets;
//! use confquant::pressure::{solve_quantization_dim, Truncation};
//!
//! let (system, family) = presets::cantor();
//! let sol = solve_quantization_dim(&system, &family, 2.0, Truncation::Full, 1e-10).unwrap();
//! assert!((sol.d_r - 2f64.ln() / 3f64.ln()).abs() < 1e-8);
//! ```

pub mod cli;
pub mod config;
pub mod conformal_measure;
pub mod error;
pub mod ifs_model;
pub mod potentials;
pub mod pressure;
pub mod quantization;

pub use error::{Error, Result};
pub use ifs_model::{ContractionMap, IfsSystem, Interval, MapGenerator, Orientation, Word};
pub use potentials::PotentialFamily;
pub use pressure::{Thermodynamics, Truncation};
