//! Asymptotic GEE variance of the coefficient estimator under an
//! approximate design, model-based and sandwich, and the variance of the
//! direct or carryover contrast.
//!
//! All variances are per subject (n = 1); scaling the design by `n`
//! divides every variance by `n`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::correlation::{build_correlation, covariance, WorkingCorrelation};
use crate::design::{
    build_design_matrix, linear_predictor, mean_response, variance_diag, ModelForm, ModelParams,
    TreatmentSequence,
};
use crate::error::{DesignError, Result};
use crate::linalg::{symmetric_pinv, PseudoInverse};

/// `‖M M⁺ c − c‖∞` at or below this counts as estimable.
pub const ESTIMABILITY_TOL: f64 = 1e-8;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Proportions of subjects allocated to each sequence of the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationDesign {
    support: Vec<TreatmentSequence>,
    weights: Vec<f64>,
}

impl AllocationDesign {
    pub fn new(support: Vec<TreatmentSequence>, weights: Vec<f64>) -> Result<Self> {
        validate_support(&support)?;
        if weights.len() != support.len() {
            return Err(DesignError::InvalidDesign(format!(
                "{} weights for {} sequences",
                weights.len(),
                support.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(DesignError::InvalidDesign(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(DesignError::InvalidDesign(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { support, weights })
    }

    /// Equal allocation over `support`.
    pub fn uniform(support: Vec<TreatmentSequence>) -> Result<Self> {
        validate_support(&support)?;
        let w = 1.0 / support.len() as f64;
        let weights = vec![w; support.len()];
        Ok(Self { support, weights })
    }

    pub fn support(&self) -> &[TreatmentSequence] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn periods(&self) -> usize {
        self.support[0].periods()
    }

    pub fn dual(&self) -> Self {
        Self {
            support: self.support.iter().map(TreatmentSequence::dual).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// Non-empty, pairwise distinct, common period count.
pub fn validate_support(support: &[TreatmentSequence]) -> Result<()> {
    let first = support
        .first()
        .ok_or_else(|| DesignError::InvalidDesign("empty support".into()))?;
    let p = first.periods();
    if let Some(s) = support.iter().find(|s| s.periods() != p) {
        return Err(DesignError::InvalidDesign(format!(
            "sequence {s} has {} periods, expected {p}",
            s.periods()
        )));
    }
    let mut seen = HashSet::new();
    for s in support {
        if !seen.insert(s) {
            return Err(DesignError::InvalidDesign(format!(
                "sequence {s} appears twice"
            )));
        }
    }
    Ok(())
}

pub fn support_label(support: &[TreatmentSequence]) -> String {
    support
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContrastTarget {
    Direct,
    Carryover,
}

impl ContrastTarget {
    /// Unit selector of the tau (or rho) coordinate in packing order.
    pub fn selector(self, form: ModelForm, periods: usize) -> Result<DVector<f64>> {
        let index = match self {
            ContrastTarget::Direct => form.tau_index(periods),
            ContrastTarget::Carryover => form.rho_index(periods).ok_or_else(|| {
                DesignError::InvalidDesign("carryover target needs the carryover model".into())
            })?,
        };
        let mut c = DVector::zeros(form.columns(periods));
        c[index] = 1.0;
        Ok(c)
    }
}

impl fmt::Display for ContrastTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContrastTarget::Direct => "direct",
            ContrastTarget::Carryover => "carryover",
        })
    }
}

impl FromStr for ContrastTarget {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(ContrastTarget::Direct),
            "carryover" => Ok(ContrastTarget::Carryover),
            other => Err(DesignError::InvalidDesign(format!(
                "unknown target {other:?}"
            ))),
        }
    }
}

/// Number of packed coefficients, used as the efficiency exponent.
pub fn parameter_count(form: ModelForm, periods: usize) -> usize {
    form.columns(periods)
}

/// Per-sequence contributions `D'V⁻¹D` and, when a true correlation is
/// given, `D'V⁻¹ Cov(Y) V⁻¹D`, with `D = A X`.
#[derive(Debug, Clone)]
pub struct SequenceTerms {
    pub information: DMatrix<f64>,
    pub meat: Option<DMatrix<f64>>,
}

pub fn sequence_terms(
    seq: &TreatmentSequence,
    theta: &ModelParams,
    work_r: &DMatrix<f64>,
    truth_r: Option<&DMatrix<f64>>,
    form: ModelForm,
) -> Result<SequenceTerms> {
    let x = build_design_matrix(seq, form);
    let eta = linear_predictor(&x, theta)?;
    let a = variance_diag(&mean_response(&eta))?;
    let d = DMatrix::from_diagonal(&a) * x.matrix();
    let v = covariance(&a, work_r)?;
    let v_inv = v
        .cholesky()
        .ok_or_else(|| {
            DesignError::NumericalFailure(format!(
                "working covariance of {seq} is not positive definite"
            ))
        })?
        .inverse();
    let weighted = &v_inv * &d;
    let information = d.transpose() * &weighted;
    let meat = match truth_r {
        Some(r) => {
            let cov = covariance(&a, r)?;
            Some(weighted.transpose() * cov * &weighted)
        }
        None => None,
    };
    Ok(SequenceTerms { information, meat })
}

fn correlation_pair(
    periods: usize,
    work: &WorkingCorrelation,
    truth: Option<&WorkingCorrelation>,
) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
    let work_r = build_correlation(work, periods)?;
    let truth_r = truth.map(|t| build_correlation(t, periods)).transpose()?;
    Ok((work_r, truth_r))
}

fn check_periods(support: &[TreatmentSequence], theta: &ModelParams) -> Result<usize> {
    validate_support(support)?;
    let p = support[0].periods();
    if theta.periods() != p {
        return Err(DesignError::DimensionMismatch(format!(
            "parameters have {} period effects, support has {p} periods",
            theta.periods()
        )));
    }
    theta.validate()?;
    Ok(p)
}

/// `Σ w_ω D'V⁻¹D` for arbitrary nonnegative weights (no sum constraint).
pub fn weighted_information(
    support: &[TreatmentSequence],
    weights: &[f64],
    theta: &ModelParams,
    work: &WorkingCorrelation,
    form: ModelForm,
) -> Result<DMatrix<f64>> {
    let p = check_periods(support, theta)?;
    if weights.len() != support.len() {
        return Err(DesignError::DimensionMismatch(format!(
            "{} weights for {} sequences",
            weights.len(),
            support.len()
        )));
    }
    let (work_r, _) = correlation_pair(p, work, None)?;
    let m = form.columns(p);
    let mut total = DMatrix::zeros(m, m);
    for (seq, &w) in support.iter().zip(weights) {
        let terms = sequence_terms(seq, theta, &work_r, None, form)?;
        total += terms.information * w;
    }
    Ok(total)
}

pub fn information_matrix(
    design: &AllocationDesign,
    theta: &ModelParams,
    work: &WorkingCorrelation,
    form: ModelForm,
) -> Result<DMatrix<f64>> {
    weighted_information(design.support(), design.weights(), theta, work, form)
}

/// `M⁺`; the information matrix is always singular because the intercept
/// equals the sum of the period indicators.
pub fn model_based_variance(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(symmetric_pinv(m)?.inverse)
}

/// `B⁺ · Meat · B⁺` with the meat built from the true correlation.
pub fn sandwich_variance(
    design: &AllocationDesign,
    theta: &ModelParams,
    work: &WorkingCorrelation,
    truth: &WorkingCorrelation,
    form: ModelForm,
) -> Result<DMatrix<f64>> {
    let (bread, meat) = bread_and_meat(design, theta, work, truth, form)?;
    let b = symmetric_pinv(&bread)?.inverse;
    Ok(&b * meat * &b)
}

fn bread_and_meat(
    design: &AllocationDesign,
    theta: &ModelParams,
    work: &WorkingCorrelation,
    truth: &WorkingCorrelation,
    form: ModelForm,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = check_periods(design.support(), theta)?;
    let (work_r, truth_r) = correlation_pair(p, work, Some(truth))?;
    let m = form.columns(p);
    let mut bread = DMatrix::zeros(m, m);
    let mut meat = DMatrix::zeros(m, m);
    for (seq, &w) in design.support().iter().zip(design.weights()) {
        let terms = sequence_terms(seq, theta, &work_r, truth_r.as_ref(), form)?;
        bread += terms.information * w;
        meat += terms.meat.expect("true correlation supplied") * w;
    }
    Ok((bread, meat))
}

/// Whether the target coordinate lies in the range of `M`.
pub fn is_estimable(pinv: &PseudoInverse, c: &DVector<f64>) -> bool {
    pinv.range_residual(c) <= ESTIMABILITY_TOL
}

/// `c' · full · c` for the target selector, after checking estimability
/// against the information matrix `m`.
pub fn contrast_variance(
    full: &DMatrix<f64>,
    m: &DMatrix<f64>,
    target: ContrastTarget,
    form: ModelForm,
) -> Result<f64> {
    let cols = m.nrows();
    let base = if form.include_carryover { 3 } else { 2 };
    if cols < base + 2 || full.shape() != m.shape() {
        return Err(DesignError::DimensionMismatch(format!(
            "variance {:?} and information {:?} do not fit the model form",
            full.shape(),
            m.shape()
        )));
    }
    let c = target.selector(form, cols - base)?;
    let pinv = symmetric_pinv(m)?;
    if !is_estimable(&pinv, &c) {
        return Err(DesignError::NotEstimable {
            context: format!(
                "{target} contrast, range residual {:.3e}",
                pinv.range_residual(&c)
            ),
        });
    }
    let v = full.dot(&(&c * c.transpose()));
    if !(v > 0.0) || !v.is_finite() {
        return Err(DesignError::NumericalFailure(format!(
            "contrast variance {v} is not positive"
        )));
    }
    Ok(v)
}

/// Full evaluation of one design at one parameter value.
#[derive(Debug, Clone)]
pub struct VarianceResult {
    pub full_matrix: DMatrix<f64>,
    /// `None` when the target is not estimable under this design.
    pub contrast_variance: Option<f64>,
    pub estimable: bool,
    pub m: usize,
}

pub fn evaluate_design(
    design: &AllocationDesign,
    theta: &ModelParams,
    work: &WorkingCorrelation,
    truth: Option<&WorkingCorrelation>,
    target: ContrastTarget,
    form: ModelForm,
) -> Result<VarianceResult> {
    let p = design.periods();
    let (information, full_matrix) = match truth {
        Some(t) => {
            let (bread, meat) = bread_and_meat(design, theta, work, t, form)?;
            let b = symmetric_pinv(&bread)?.inverse;
            let full = &b * meat * &b;
            (bread, full)
        }
        None => {
            let m = information_matrix(design, theta, work, form)?;
            let full = model_based_variance(&m)?;
            (m, full)
        }
    };
    let (contrast_variance, estimable) =
        match contrast_variance(&full_matrix, &information, target, form) {
            Ok(v) => (Some(v), true),
            Err(DesignError::NotEstimable { .. }) => (None, false),
            Err(e) => return Err(e),
        };
    Ok(VarianceResult {
        full_matrix,
        contrast_variance,
        estimable,
        m: parameter_count(form, p),
    })
}
