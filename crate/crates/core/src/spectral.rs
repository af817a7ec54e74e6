//! Dense symmetric eigendecomposition and the spectral quantities built on it:
//! graph Fourier transform, Paley–Wiener projections, best-approximation
//! errors, and per-direction energies of multi-channel signals.
//!
//! Eigenvectors are normalized so that the entry of largest magnitude is
//! positive (lowest index wins among magnitudes equal to within 1e-12), which
//! makes every decomposition deterministic. Signals are real vectors of
//! length `N`; multi-channel signals are `N x m` matrices whose columns are
//! the channels.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance under which an eigenvalue of a PSD operator is treated as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-10;

/// Relative gap under which two eigenvalues are considered one degenerate cluster.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("operator must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("operator is not symmetric: max |S - S^T| = {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },
    #[error("operator has non-finite entries")]
    NonFinite,
    #[error("eigensolver did not converge within {max_iterations} iterations")]
    ConvergenceFailure { max_iterations: usize },
    #[error("eigendecomposition failed validation: {0}")]
    Inaccurate(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("eigenvalue {value:e} at position {index} is negative beyond tolerance")]
    NegativeEigenvalue { index: usize, value: f64 },
    #[error("operation requires {0:?} ordering")]
    WrongOrdering(EigenOrdering),
    #[error("eigenvalue {value:e} at position {index} is too small for a gap ratio (disconnected graph?)")]
    DegenerateGap { index: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigenOrdering {
    /// `lambda_1 <= ... <= lambda_N`, used for Laplacian-like operators.
    AscendingValue,
    /// `mu_1 >= ... >= mu_N`, used for propagation filters.
    DescendingValue,
}

/// Orthonormal eigenpairs of a real symmetric operator, sorted by `ordering`.
/// Column `j` of `eigenvectors` pairs with `eigenvalues[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    ordering: EigenOrdering,
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Flips `v` so its largest-magnitude entry (lowest index on ties) is positive.
fn fix_sign(mut v: nalgebra::DVectorViewMut<'_, f64>) {
    let largest = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if let Some(pivot) = v.iter().position(|x| x.abs() >= largest - 1e-12) {
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
    }
}

impl SpectralDecomposition {
    /// Full eigendecomposition of a symmetric matrix.
    ///
    /// The result is validated against the orthonormality (`1e-10`) and
    /// residual (`1e-8 * (1 + |lambda|)`) invariants before it is returned.
    pub fn eigendecompose(
        operator: &DMatrix<f64>,
        ordering: EigenOrdering,
    ) -> Result<Self, SpectralError> {
        let (rows, cols) = operator.shape();
        if rows != cols || rows == 0 {
            return Err(SpectralError::NotSquare { rows, cols });
        }
        if operator.iter().any(|x| !x.is_finite()) {
            return Err(SpectralError::NonFinite);
        }
        let asymmetry = max_abs(&(operator - operator.transpose()));
        if asymmetry > 1e-12 * max_abs(operator) {
            return Err(SpectralError::NotSymmetric { asymmetry });
        }
        let n = rows;
        let max_iterations = 100 * n;
        let eigen = SymmetricEigen::try_new(operator.clone(), f64::EPSILON, max_iterations)
            .ok_or(SpectralError::ConvergenceFailure { max_iterations })?;

        let mut order: Vec<usize> = (0..n).collect();
        // Stable sort: equal eigenvalues keep the solver's column order.
        match ordering {
            EigenOrdering::AscendingValue => {
                order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]))
            }
            EigenOrdering::DescendingValue => {
                order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]))
            }
        }
        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| eigen.eigenvalues[k]));
        let mut eigenvectors = DMatrix::from_fn(n, n, |i, j| eigen.eigenvectors[(i, order[j])]);
        for j in 0..n {
            fix_sign(eigenvectors.column_mut(j));
        }

        let decomposition = Self {
            eigenvalues,
            eigenvectors,
            ordering,
        };
        decomposition.validate_against(operator)?;
        Ok(decomposition)
    }

    /// Checks orthonormality and per-pair residuals against `operator`.
    pub fn validate_against(&self, operator: &DMatrix<f64>) -> Result<(), SpectralError> {
        let n = self.len();
        let gram = self.eigenvectors.transpose() * &self.eigenvectors;
        let orthogonality = max_abs(&(gram - DMatrix::identity(n, n)));
        if orthogonality > 1e-10 {
            return Err(SpectralError::Inaccurate(format!(
                "max |V^T V - I| = {orthogonality:e}"
            )));
        }
        let applied = operator * &self.eigenvectors;
        for j in 0..n {
            let lambda = self.eigenvalues[j];
            let residual = (applied.column(j) - self.eigenvectors.column(j) * lambda).norm();
            if residual > 1e-8 * (1.0 + lambda.abs()) {
                return Err(SpectralError::Inaccurate(format!(
                    "residual {residual:e} for eigenpair {j} (lambda = {lambda})"
                )));
            }
        }
        Ok(())
    }

    /// Validates that the operator is positive semi-definite up to
    /// [`ZERO_EIGENVALUE_TOL`] and snaps every eigenvalue within that
    /// tolerance of zero to exactly `0.0`.
    pub fn into_psd(mut self) -> Result<Self, SpectralError> {
        for (index, value) in self.eigenvalues.iter_mut().enumerate() {
            if *value < -ZERO_EIGENVALUE_TOL {
                return Err(SpectralError::NegativeEigenvalue {
                    index,
                    value: *value,
                });
            }
            if value.abs() <= ZERO_EIGENVALUE_TOL {
                *value = 0.0;
            }
        }
        Ok(self)
    }

    /// Ascending, PSD-validated decomposition of a combinatorial or normalized Laplacian.
    pub fn of_laplacian(laplacian: &DMatrix<f64>) -> Result<Self, SpectralError> {
        Self::eigendecompose(laplacian, EigenOrdering::AscendingValue)?.into_psd()
    }

    /// Assembles a decomposition from precomputed parts, checking shapes,
    /// ordering, and orthonormality.
    pub fn from_parts(
        eigenvalues: DVector<f64>,
        eigenvectors: DMatrix<f64>,
        ordering: EigenOrdering,
    ) -> Result<Self, SpectralError> {
        let n = eigenvalues.len();
        if eigenvectors.shape() != (n, n) {
            return Err(SpectralError::DimensionMismatch {
                expected: n,
                found: eigenvectors.ncols(),
            });
        }
        let sorted = eigenvalues.as_slice().windows(2).all(|w| match ordering {
            EigenOrdering::AscendingValue => w[0] <= w[1],
            EigenOrdering::DescendingValue => w[0] >= w[1],
        });
        if !sorted {
            return Err(SpectralError::WrongOrdering(ordering));
        }
        let decomposition = Self {
            eigenvalues,
            eigenvectors,
            ordering,
        };
        let gram = decomposition.eigenvectors.transpose() * &decomposition.eigenvectors;
        let orthogonality = max_abs(&(gram - DMatrix::identity(n, n)));
        if orthogonality > 1e-10 {
            return Err(SpectralError::Inaccurate(format!(
                "max |V^T V - I| = {orthogonality:e}"
            )));
        }
        Ok(decomposition)
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn ordering(&self) -> EigenOrdering {
        self.ordering
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Eigenvalue at 1-based position `j`.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.eigenvalues[j - 1]
    }

    /// Eigenvector at 1-based position `j`.
    pub fn eigenvector(&self, j: usize) -> DVector<f64> {
        self.eigenvectors.column(j - 1).into_owned()
    }

    /// `V diag(lambda) V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.len(), self.len(), |i, j| {
            self.eigenvectors[(i, j)] * self.eigenvalues[j]
        });
        scaled * self.eigenvectors.transpose()
    }

    /// `max_{n = 3..N} sqrt(lambda_n / lambda_{n-1})` for ascending spectra.
    pub fn gap_ratio(&self) -> Result<f64, SpectralError> {
        if self.ordering != EigenOrdering::AscendingValue {
            return Err(SpectralError::WrongOrdering(EigenOrdering::AscendingValue));
        }
        let mut ratio = 1.0_f64;
        for n in 3..=self.len() {
            let previous = self.eigenvalue(n - 1);
            if previous <= 1e-12 {
                return Err(SpectralError::DegenerateGap {
                    index: n - 1,
                    value: previous,
                });
            }
            ratio = ratio.max((self.eigenvalue(n) / previous).sqrt());
        }
        Ok(ratio)
    }

    /// Positions (1-based) whose eigenvalue lies within a degenerate cluster.
    pub fn degenerate_positions(&self) -> Vec<usize> {
        let n = self.len();
        let close = |a: f64, b: f64| (a - b).abs() <= DEGENERACY_TOL * (1.0 + a.abs());
        (1..=n)
            .filter(|&j| {
                let here = self.eigenvalue(j);
                (j > 1 && close(here, self.eigenvalue(j - 1)))
                    || (j < n && close(here, self.eigenvalue(j + 1)))
            })
            .collect()
    }

    fn check_len(&self, found: usize) -> Result<(), SpectralError> {
        if found != self.len() {
            return Err(SpectralError::DimensionMismatch {
                expected: self.len(),
                found,
            });
        }
        Ok(())
    }

    fn check_index(&self, index: usize) -> Result<(), SpectralError> {
        if index == 0 || index > self.len() {
            return Err(SpectralError::IndexOutOfRange {
                index,
                max: self.len(),
            });
        }
        Ok(())
    }

    /// Graph Fourier transform `V^T f`.
    pub fn gft(&self, f: &DVector<f64>) -> Result<DVector<f64>, SpectralError> {
        self.check_len(f.len())?;
        Ok(self.eigenvectors.tr_mul(f))
    }

    /// Inverse transform `V f_hat`.
    pub fn igft(&self, spectrum: &DVector<f64>) -> Result<DVector<f64>, SpectralError> {
        self.check_len(spectrum.len())?;
        Ok(&self.eigenvectors * spectrum)
    }

    /// Projection onto the span of the first `n` eigenvectors.
    pub fn project_pw(&self, n: usize, f: &DVector<f64>) -> Result<DVector<f64>, SpectralError> {
        if self.ordering != EigenOrdering::AscendingValue {
            return Err(SpectralError::WrongOrdering(EigenOrdering::AscendingValue));
        }
        self.check_index(n)?;
        let mut spectrum = self.gft(f)?;
        spectrum.rows_mut(n, self.len() - n).fill(0.0);
        self.igft(&spectrum)
    }

    /// `E_n(f) = sqrt(sum_{j > n} |f_hat(j)|^2)`.
    pub fn best_approx_error(&self, n: usize, f: &DVector<f64>) -> Result<f64, SpectralError> {
        self.check_index(n)?;
        let spectrum = self.gft(f)?;
        Ok(spectrum.rows(n, self.len() - n).norm())
    }

    /// High-frequency energy `sum_j sum_{i >= 2} <f_j, v_i>^2`, evaluated as the
    /// squared Frobenius norm of `F - v_1 v_1^T F`.
    pub fn high_freq_energy(&self, signal: &DMatrix<f64>) -> Result<f64, SpectralError> {
        self.check_len(signal.nrows())?;
        let low = self.eigenvectors.column(0);
        let coefficients = low.tr_mul(signal);
        let residual = signal - low * coefficients;
        Ok(residual.norm_squared())
    }

    /// `E_i(F) = sum_j <f_j, v_i>^2` for 1-based direction `i`.
    pub fn direction_energy(&self, i: usize, signal: &DMatrix<f64>) -> Result<f64, SpectralError> {
        self.check_index(i)?;
        self.check_len(signal.nrows())?;
        Ok(self
            .eigenvectors
            .column(i - 1)
            .tr_mul(signal)
            .norm_squared())
    }

    /// All direction energies `E_1..E_N` in eigenpair order.
    pub fn direction_energies(&self, signal: &DMatrix<f64>) -> Result<Vec<f64>, SpectralError> {
        self.check_len(signal.nrows())?;
        let coefficients = self.eigenvectors.tr_mul(signal);
        Ok(coefficients
            .row_iter()
            .map(|row| row.norm_squared())
            .collect())
    }

    /// CSV dump: an `eigenvalue` row followed by one row per node, one column per eigenpair.
    pub fn to_csv(&self) -> String {
        let n = self.len();
        let mut out = String::from("row");
        for j in 1..=n {
            let _ = write!(out, ",pair_{j}");
        }
        out.push_str("\neigenvalue");
        for value in self.eigenvalues.iter() {
            let _ = write!(out, ",{value:e}");
        }
        out.push('\n');
        for i in 0..n {
            let _ = write!(out, "node_{i}");
            for j in 0..n {
                let _ = write!(out, ",{:e}", self.eigenvectors[(i, j)]);
            }
            out.push('\n');
        }
        out
    }
}
