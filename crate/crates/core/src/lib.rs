//! Approximate model-X knockoffs: feature generation under estimated
//! working models, knockoff statistics, FDR and k-FWER selection, and the
//! coupling diagnostics that bound how far approximate knockoffs drift from
//! perfect ones.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod knockoffs;
pub mod linalg;
pub mod marginal;
pub mod rng;
pub mod selection;
pub mod stats;

pub use error::{Error, Result};
