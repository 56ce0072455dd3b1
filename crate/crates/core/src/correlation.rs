//! Within-subject correlation structures and the marginal covariance
//! `V = A^{1/2} R A^{1/2}`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CorrelationKind {
    #[serde(rename = "ind")]
    Independent,
    #[serde(rename = "cs")]
    CompoundSymmetric,
    #[serde(rename = "ar1")]
    Ar1,
}

impl CorrelationKind {
    pub fn label(self) -> &'static str {
        match self {
            CorrelationKind::Independent => "ind",
            CorrelationKind::CompoundSymmetric => "cs",
            CorrelationKind::Ar1 => "ar1",
        }
    }
}

/// A scalar-parameter working (or true) correlation structure.
///
/// Serialized as `{"kind": "cs" | "ar1" | "ind", "alpha": number}`; the
/// compact string form is `cs:0.4`, `ar1:0.6` or `ind`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingCorrelation {
    pub kind: CorrelationKind,
    #[serde(default)]
    pub alpha: f64,
}

impl WorkingCorrelation {
    pub const INDEPENDENT: WorkingCorrelation = WorkingCorrelation {
        kind: CorrelationKind::Independent,
        alpha: 0.0,
    };

    pub fn independent() -> Self {
        Self::INDEPENDENT
    }

    pub fn compound_symmetric(alpha: f64) -> Self {
        Self {
            kind: CorrelationKind::CompoundSymmetric,
            alpha,
        }
    }

    pub fn ar1(alpha: f64) -> Self {
        Self {
            kind: CorrelationKind::Ar1,
            alpha,
        }
    }

    /// Checks the positive-definiteness range of alpha for `periods`.
    pub fn validate(&self, periods: usize) -> Result<()> {
        let a = self.alpha;
        if !a.is_finite() {
            return Err(DesignError::InvalidCorrelation(format!(
                "alpha {a} is not finite"
            )));
        }
        match self.kind {
            CorrelationKind::Independent => {
                if a != 0.0 {
                    return Err(DesignError::InvalidCorrelation(format!(
                        "independence structure takes alpha = 0, got {a}"
                    )));
                }
            }
            CorrelationKind::CompoundSymmetric => {
                let lower = -1.0 / (periods as f64 - 1.0);
                if !(a > lower && a < 1.0) {
                    return Err(DesignError::InvalidCorrelation(format!(
                        "compound symmetry needs {lower} < alpha < 1 for p = {periods}, got {a}"
                    )));
                }
            }
            CorrelationKind::Ar1 => {
                if !(a.abs() < 1.0) {
                    return Err(DesignError::InvalidCorrelation(format!(
                        "AR(1) needs |alpha| < 1, got {a}"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for WorkingCorrelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            CorrelationKind::Independent => write!(f, "ind"),
            kind => write!(f, "{}:{}", kind.label(), self.alpha),
        }
    }
}

impl FromStr for WorkingCorrelation {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, alpha) = match s.split_once(':') {
            Some((k, a)) => {
                let alpha = a.trim().parse::<f64>().map_err(|e| {
                    DesignError::InvalidCorrelation(format!("bad alpha in {s:?}: {e}"))
                })?;
                (k.trim(), Some(alpha))
            }
            None => (s, None),
        };
        match kind.to_ascii_lowercase().as_str() {
            "ind" | "independent" => Ok(Self::INDEPENDENT),
            "cs" => alpha.map(Self::compound_symmetric).ok_or_else(|| {
                DesignError::InvalidCorrelation(format!("{s:?} needs an alpha, e.g. cs:0.2"))
            }),
            "ar1" => alpha.map(Self::ar1).ok_or_else(|| {
                DesignError::InvalidCorrelation(format!("{s:?} needs an alpha, e.g. ar1:0.4"))
            }),
            other => Err(DesignError::InvalidCorrelation(format!(
                "unknown correlation kind {other:?}"
            ))),
        }
    }
}

pub fn build_correlation(c: &WorkingCorrelation, periods: usize) -> Result<DMatrix<f64>> {
    c.validate(periods)?;
    let a = c.alpha;
    Ok(DMatrix::from_fn(periods, periods, |i, j| {
        if i == j {
            return 1.0;
        }
        match c.kind {
            CorrelationKind::Independent => 0.0,
            CorrelationKind::CompoundSymmetric => a,
            CorrelationKind::Ar1 => a.powi(i.abs_diff(j) as i32),
        }
    }))
}

/// `V = A^{1/2} R A^{1/2}` for diagonal `A` given by its diagonal.
pub fn covariance(a: &DVector<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.len();
    if r.nrows() != p || r.ncols() != p {
        return Err(DesignError::DimensionMismatch(format!(
            "variance diagonal has length {p}, correlation is {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    if let Some((i, &v)) = a.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(DesignError::DegenerateMean {
            period: i + 1,
            variance: v,
        });
    }
    let root = a.map(f64::sqrt);
    Ok(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            a[i]
        } else {
            root[i] * r[(i, j)] * root[j]
        }
    }))
}
