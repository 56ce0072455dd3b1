//! Moore–Penrose pseudo-inverse of small symmetric PSD matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{DesignError, Result};

/// Eigenvalues below `RELATIVE_CUTOFF * max|eigenvalue|` are treated as zero.
pub const RELATIVE_CUTOFF: f64 = 1e-10;

const MAX_SWEEPS: usize = 10_000;

/// `M⁺` together with the orthogonal projector `M M⁺` onto the range of `M`.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub inverse: DMatrix<f64>,
    pub projector: DMatrix<f64>,
    pub rank: usize,
}

impl PseudoInverse {
    /// `‖M M⁺ c − c‖∞`; zero exactly when `c` lies in the range of `M`.
    pub fn range_residual(&self, c: &DVector<f64>) -> f64 {
        (&self.projector * c - c).amax()
    }
}

pub fn symmetric_pinv(m: &DMatrix<f64>) -> Result<PseudoInverse> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(DesignError::DimensionMismatch(format!(
            "pseudo-inverse needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(DesignError::NumericalFailure(
            "matrix has non-finite entries".into(),
        ));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, MAX_SWEEPS).ok_or_else(|| {
        DesignError::NumericalFailure("symmetric eigendecomposition did not converge".into())
    })?;
    let largest = eig.eigenvalues.amax();
    let cutoff = RELATIVE_CUTOFF * largest;
    let mut inverse = DMatrix::zeros(n, n);
    let mut projector = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() <= cutoff || largest == 0.0 {
            continue;
        }
        rank += 1;
        let v = eig.eigenvectors.column(k);
        let outer = v * v.transpose();
        inverse += &outer / lambda;
        projector += outer;
    }
    Ok(PseudoInverse {
        inverse,
        projector,
        rank,
    })
}
