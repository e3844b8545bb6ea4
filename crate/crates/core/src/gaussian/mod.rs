//! Covariance-matrix algebra for Gaussian states.
//!
//! Conventions, used everywhere in the crate:
//!
//! * shot-noise units with `[x, p] = 2i`, so the vacuum covariance is the
//!   identity and every variance, excess noise and CM entry is in SNU;
//! * quadratures ordered mode by mode, `(x1, p1, x2, p2, ...)`;
//! * displacement (first moments) is not tracked here; sample-space means
//!   live in [`crate::channel`].

mod entropy;
mod ops;

pub use entropy::{g_von_neumann, symplectic_eigenvalues, von_neumann_entropy};
pub use ops::{
    add_noise, apply_beamsplitter, apply_loss_noise, condition_on_heterodyne,
    condition_on_homodyne, tmsv_cm,
};

use nalgebra::{DMatrix, Matrix2};

use crate::error::{Error, Result};

/// Relative tolerance for every validity check, taken against the largest
/// diagonal entry.
pub const CM_TOLERANCE: f64 = 1e-9;

/// Row/column index of the `x` quadrature of `mode`.
#[inline]
pub(crate) fn x_index(mode: usize) -> usize {
    2 * mode
}

/// Which quadrature a homodyne detector measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Quadrature {
    X,
    P,
}

/// Covariance matrix of an `n`-mode Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    m: DMatrix<f64>,
}

impl CovMatrix {
    /// Wrap a symmetric `2n x 2n` matrix.
    ///
    /// Symmetry is checked to `1e-12` relative; the stored matrix is the
    /// exact symmetric part. Physicality is not checked here, see
    /// [`CovMatrix::validate_physical`].
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 || !m.nrows().is_multiple_of(2) {
            return Err(Error::domain(format!(
                "covariance matrix must be 2n x 2n, got {} x {}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("covariance matrix has non-finite entries"));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::domain(format!(
                "covariance matrix is not symmetric (max |M - M^T| = {asym:e})"
            )));
        }
        let m = (&m + m.transpose()) * 0.5;
        Ok(Self { m })
    }

    pub(crate) fn from_symmetric(m: DMatrix<f64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self {
            m: (&m + m.transpose()) * 0.5,
        }
    }

    /// `n` vacuum modes.
    pub fn vacuum(n_modes: usize) -> Self {
        Self {
            m: DMatrix::identity(2 * n_modes, 2 * n_modes),
        }
    }

    /// Single-mode thermal state with variance `v` in both quadratures.
    pub fn thermal(v: f64) -> Result<Self> {
        if !(v >= 1.0 - CM_TOLERANCE) {
            return Err(Error::domain(format!("thermal variance {v} is below vacuum")));
        }
        Ok(Self {
            m: DMatrix::identity(2, 2) * v,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.m.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// Entry `(r, c)` of the full matrix.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.m[(r, c)]
    }

    /// The 2x2 block coupling modes `i` and `j`.
    pub fn block(&self, i: usize, j: usize) -> Matrix2<f64> {
        self.m.fixed_view::<2, 2>(x_index(i), x_index(j)).into_owned()
    }

    /// `self ⊕ other`, with `other`'s modes appended.
    pub fn direct_sum(&self, other: &CovMatrix) -> CovMatrix {
        let (a, b) = (self.m.nrows(), other.m.nrows());
        let mut m = DMatrix::zeros(a + b, a + b);
        m.view_mut((0, 0), (a, a)).copy_from(&self.m);
        m.view_mut((a, a), (b, b)).copy_from(&other.m);
        CovMatrix { m }
    }

    /// Reduced state of the listed modes, in the listed order.
    pub fn reduce(&self, modes: &[usize]) -> Result<CovMatrix> {
        let n = self.n_modes();
        if let Some(&bad) = modes.iter().find(|&&k| k >= n) {
            return Err(Error::domain(format!("mode {bad} out of range for {n} modes")));
        }
        let idx: Vec<usize> = modes.iter().flat_map(|&k| [2 * k, 2 * k + 1]).collect();
        let m = DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.m[(idx[r], idx[c])]);
        Ok(CovMatrix { m })
    }

    pub(crate) fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes() {
            return Err(Error::domain(format!(
                "mode {mode} out of range for {} modes",
                self.n_modes()
            )));
        }
        Ok(())
    }

    pub(crate) fn scale(&self) -> f64 {
        self.m.diagonal().amax().max(1.0)
    }

    /// Positive definite and every symplectic eigenvalue at least `1 - 1e-9`.
    pub fn validate_physical(&self) -> Result<()> {
        if self.m.clone().cholesky().is_none() {
            return Err(Error::numerical("covariance matrix is not positive definite"));
        }
        let nu = symplectic_eigenvalues(self)?;
        let min = nu.last().copied().unwrap_or(1.0);
        if min < 1.0 - CM_TOLERANCE * self.scale() {
            return Err(Error::numerical(format!(
                "uncertainty relation violated: smallest symplectic eigenvalue {min}"
            )));
        }
        Ok(())
    }

    pub fn is_physical(&self) -> bool {
        self.validate_physical().is_ok()
    }
}

/// Block-diagonal symplectic form `⊕ [[0, 1], [-1, 0]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticForm {
    n_modes: usize,
    m: DMatrix<f64>,
}

impl SymplecticForm {
    pub fn new(n_modes: usize) -> Self {
        let mut m = DMatrix::zeros(2 * n_modes, 2 * n_modes);
        for k in 0..n_modes {
            m[(2 * k, 2 * k + 1)] = 1.0;
            m[(2 * k + 1, 2 * k)] = -1.0;
        }
        Self { n_modes, m }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symplectic_form_is_antisymmetric_and_squares_to_minus_identity() {
        let omega = SymplecticForm::new(3);
        let m = omega.matrix();
        assert_eq!(m.transpose(), -m.clone());
        assert_eq!(m * m, -DMatrix::<f64>::identity(6, 6));
    }

    #[test]
    fn rejects_asymmetric_and_odd_matrices() {
        let mut m = DMatrix::<f64>::identity(2, 2);
        m[(0, 1)] = 0.1;
        assert!(matches!(CovMatrix::new(m), Err(Error::Domain(_))));
        assert!(CovMatrix::new(DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn physicality_checks() {
        assert!(CovMatrix::vacuum(2).is_physical());
        let squeezed_too_far = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 1.5]));
        let cm = CovMatrix::new(squeezed_too_far).unwrap();
        assert!(!cm.is_physical());
        let squeezed = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 2.0]));
        assert!(CovMatrix::new(squeezed).unwrap().is_physical());
    }

    #[test]
    fn reduce_and_direct_sum() {
        let a = CovMatrix::thermal(3.0).unwrap();
        let b = CovMatrix::vacuum(1);
        let ab = a.direct_sum(&b);
        assert_eq!(ab.n_modes(), 2);
        assert_eq!(ab.reduce(&[1, 0]).unwrap(), b.direct_sum(&a));
        assert!(ab.reduce(&[2]).is_err());
    }
}
