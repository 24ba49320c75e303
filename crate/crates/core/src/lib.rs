// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Thermal state preparation by repeated system-bath collisions.

// `!(x > 0.0)` style checks are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate openblas_src;

pub mod error;
pub mod linalg;
pub mod operators;
pub mod quad;
pub mod sampler;
pub mod collision;
pub mod analysis;
pub mod trajectories;
pub mod config;
pub mod experiments;

pub use error::{Error, Result};
