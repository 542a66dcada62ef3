//! Structural gravity estimation and trade-policy counterfactuals for a single
//! exporter's destination-level trade flows.
//!
//! Pipeline: [`ingest`] reads and joins the inputs, [`design`] realises a
//! [`design::ModelSpec`] as a regression problem, [`glm`] fits it by OLS,
//! Poisson PML or NB2 PML with cluster-robust inference, [`remoteness`] builds
//! the multilateral-resistance proxies, and [`scenario`] re-estimates under
//! tariff and market-substitution shocks.

// NaN must fail these range checks, hence the negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod datamodel;
pub mod design;
pub mod error;
pub mod glm;
pub mod ingest;
pub mod linalg;
pub mod remoteness;
pub mod report;
pub mod scenario;
pub mod synth;

pub use error::{GravityError, Result};
