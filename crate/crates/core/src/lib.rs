//! Locally optimal two-treatment crossover designs for binary responses.
//!
//! The marginal mean of each binary response follows a logistic model with
//! period, direct-treatment and first-order carryover effects; within-subject
//! dependence is handled through a GEE working correlation. Designs are
//! approximate: a probability weight on each treatment sequence.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod correlation;
pub mod design;
pub mod error;
pub mod gee;
pub mod linalg;
pub mod optimize;
pub mod report;
pub mod study;

pub use correlation::{CorrelationKind, WorkingCorrelation};
pub use design::{ModelForm, ModelParams, Treatment, TreatmentSequence};
pub use error::{DesignError, Result};
pub use gee::{AllocationDesign, ContrastTarget, VarianceResult};
pub use optimize::{OptimizationProblem, OptimizationResult};
