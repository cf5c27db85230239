//! Kernel-weighted estimating equations for a multiplicative hazards model
//! with a time-varying coefficient and sparsely observed longitudinal
//! covariates, with sandwich intervals, multiplier-bootstrap simultaneous
//! bands, bandwidth selection, and a simulation engine.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod cli;
pub mod data;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod io;
pub mod kernels;
pub mod simulation;

pub use bandwidth::{select_bandwidth, BandwidthGrid, BandwidthSelection};
pub use data::{BandwidthPair, CoefficientCurve, Dataset, SolveDiagnostics, SubjectRecord};
pub use error::{Error, Result};
pub use estimator::{estimating_equation, fit_curve, jacobian, solve_beta, SolverConfig};
pub use inference::{meat_matrix, pointwise_ci, scb, MultiplierKind, ScbResult, WeightMode};
pub use kernels::KernelKind;
