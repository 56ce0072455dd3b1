//! Treatment sequences, the Φ-coded design matrix of the two-treatment
//! logistic crossover model and the marginal mean/variance maps.
//!
//! Parameters are packed as `(mu, beta_1..beta_p, tau, rho)`; `rho` is
//! dropped when the model has no carryover term.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};

pub const MIN_PERIODS: usize = 2;
pub const MAX_PERIODS: usize = 8;

/// Bernoulli variances below this are treated as a saturated logistic.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Treatment {
    A,
    B,
}

impl Treatment {
    /// Φ coding: A = +1, B = -1.
    pub fn phi(self) -> f64 {
        match self {
            Treatment::A => 1.0,
            Treatment::B => -1.0,
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            Treatment::A => Treatment::B,
            Treatment::B => Treatment::A,
        }
    }

    fn symbol(self) -> char {
        match self {
            Treatment::A => 'A',
            Treatment::B => 'B',
        }
    }
}

/// A length-p word over {A, B}: the treatments one subject receives.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreatmentSequence {
    entries: Vec<Treatment>,
}

impl TreatmentSequence {
    pub fn new(entries: Vec<Treatment>) -> Result<Self> {
        if !(MIN_PERIODS..=MAX_PERIODS).contains(&entries.len()) {
            return Err(DesignError::InvalidSequence(format!(
                "sequence length {} outside {}..={}",
                entries.len(),
                MIN_PERIODS,
                MAX_PERIODS
            )));
        }
        Ok(Self { entries })
    }

    pub fn periods(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Treatment] {
        &self.entries
    }

    /// Swap A and B in every period.
    pub fn dual(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|t| t.swapped()).collect(),
        }
    }

    /// All 2^p sequences in lexicographic order (A before B).
    pub fn universe(periods: usize) -> Result<Vec<Self>> {
        if !(MIN_PERIODS..=MAX_PERIODS).contains(&periods) {
            return Err(DesignError::InvalidSequence(format!(
                "period count {periods} outside {MIN_PERIODS}..={MAX_PERIODS}"
            )));
        }
        Ok((0..1usize << periods)
            .map(|bits| {
                let entries = (0..periods)
                    .map(|i| {
                        if bits >> (periods - 1 - i) & 1 == 0 {
                            Treatment::A
                        } else {
                            Treatment::B
                        }
                    })
                    .collect();
                Self { entries }
            })
            .collect())
    }
}

impl fmt::Display for TreatmentSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.entries {
            write!(f, "{}", t.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for TreatmentSequence {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self> {
        let entries = s
            .trim()
            .chars()
            .map(|c| match c {
                'A' | 'a' => Ok(Treatment::A),
                'B' | 'b' => Ok(Treatment::B),
                other => Err(DesignError::InvalidSequence(format!(
                    "unexpected symbol {other:?} in {s:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }
}

impl Serialize for TreatmentSequence {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TreatmentSequence {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Whether the linear predictor carries a first-order carryover term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelForm {
    pub include_carryover: bool,
}

impl ModelForm {
    pub const CARRYOVER: ModelForm = ModelForm {
        include_carryover: true,
    };
    pub const NO_CARRYOVER: ModelForm = ModelForm {
        include_carryover: false,
    };

    /// Number of packed parameters (design-matrix columns).
    pub fn columns(self, periods: usize) -> usize {
        if self.include_carryover {
            periods + 3
        } else {
            periods + 2
        }
    }

    pub fn tau_index(self, periods: usize) -> usize {
        periods + 1
    }

    pub fn rho_index(self, periods: usize) -> Option<usize> {
        self.include_carryover.then_some(periods + 2)
    }
}

impl Default for ModelForm {
    fn default() -> Self {
        Self::CARRYOVER
    }
}

/// Coefficients of the reparametrized model on the logit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub beta: Vec<f64>,
    pub tau: f64,
    #[serde(default)]
    pub rho: f64,
}

impl ModelParams {
    pub fn new(mu: f64, beta: Vec<f64>, tau: f64, rho: f64) -> Result<Self> {
        let params = Self { mu, beta, tau, rho };
        params.validate()?;
        Ok(params)
    }

    pub fn zero(periods: usize) -> Self {
        Self {
            mu: 0.0,
            beta: vec![0.0; periods],
            tau: 0.0,
            rho: 0.0,
        }
    }

    pub fn periods(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.mu.is_finite()
            && self.tau.is_finite()
            && self.rho.is_finite()
            && self.beta.iter().all(|b| b.is_finite());
        if !finite {
            return Err(DesignError::DimensionMismatch(
                "model parameters must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Parameters with the treatment labels swapped: (mu, beta, -tau, -rho).
    pub fn dual(&self) -> Self {
        Self {
            mu: self.mu,
            beta: self.beta.clone(),
            tau: -self.tau,
            rho: -self.rho,
        }
    }

    /// Pack in design-matrix column order.
    pub fn packed(&self, form: ModelForm) -> DVector<f64> {
        let p = self.periods();
        let mut v = DVector::zeros(form.columns(p));
        v[0] = self.mu;
        for (i, b) in self.beta.iter().enumerate() {
            v[1 + i] = *b;
        }
        v[form.tau_index(p)] = self.tau;
        if let Some(r) = form.rho_index(p) {
            v[r] = self.rho;
        }
        v
    }
}

/// `[intercept | period indicators | Φ_direct | Φ_carry?]`, one row per period.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    form: ModelForm,
}

impl DesignMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn form(&self) -> ModelForm {
        self.form
    }

    pub fn periods(&self) -> usize {
        self.values.nrows()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

pub fn build_design_matrix(seq: &TreatmentSequence, form: ModelForm) -> DesignMatrix {
    let p = seq.periods();
    let mut x = DMatrix::zeros(p, form.columns(p));
    for (i, t) in seq.entries().iter().enumerate() {
        x[(i, 0)] = 1.0;
        x[(i, 1 + i)] = 1.0;
        x[(i, form.tau_index(p))] = t.phi();
        if let Some(r) = form.rho_index(p) {
            // no carryover into the first period
            x[(i, r)] = if i == 0 {
                0.0
            } else {
                seq.entries()[i - 1].phi()
            };
        }
    }
    DesignMatrix { values: x, form }
}

pub fn linear_predictor(x: &DesignMatrix, theta: &ModelParams) -> Result<DVector<f64>> {
    if theta.periods() != x.periods() {
        return Err(DesignError::DimensionMismatch(format!(
            "parameters carry {} period effects, design has {} periods",
            theta.periods(),
            x.periods()
        )));
    }
    Ok(x.matrix() * theta.packed(x.form()))
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(mu: f64) -> f64 {
    (mu / (1.0 - mu)).ln()
}

pub fn mean_response(eta: &DVector<f64>) -> DVector<f64> {
    eta.map(logistic)
}

/// Diagonal of A = diag(mu_i (1 - mu_i)).
pub fn variance_diag(mu: &DVector<f64>) -> Result<DVector<f64>> {
    let mut a = DVector::zeros(mu.len());
    for (i, &m) in mu.iter().enumerate() {
        let v = m * (1.0 - m);
        if !(v >= DEGENERATE_VARIANCE) {
            return Err(DesignError::DegenerateMean {
                period: i + 1,
                variance: v,
            });
        }
        a[i] = v;
    }
    Ok(a)
}
