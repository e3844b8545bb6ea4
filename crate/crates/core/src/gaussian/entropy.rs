use nalgebra::DMatrix;

use super::{CovMatrix, SymplecticForm, CM_TOLERANCE};
use crate::error::{Error, Result};

/// Symplectic spectrum, descending, one value per mode.
///
/// The spectrum of `i Omega M` is `{±nu_k}`. It is computed from the
/// similar Hermitian matrix `i M^{1/2} Omega M^{1/2}`: with
/// `K = M^{1/2} Omega M^{1/2}` real antisymmetric, `K^T K` is symmetric with
/// every `nu_k^2` appearing twice.
pub fn symplectic_eigenvalues(cm: &CovMatrix) -> Result<Vec<f64>> {
    let m = cm.matrix();
    let scale = cm.scale();
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::domain("symplectic spectrum needs a symmetric matrix"));
    }
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::numerical("covariance matrix is not positive definite"));
    }
    let sqrt_d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let root = &eig.eigenvectors * sqrt_d * eig.eigenvectors.transpose();
    let omega = SymplecticForm::new(cm.n_modes());
    let k = &root * omega.matrix() * &root;
    let kk = k.transpose() * &k;
    let mut sq: Vec<f64> = ((&kk + kk.transpose()) * 0.5)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    sq.sort_by(|a, b| b.total_cmp(a));
    let mut nu = Vec::with_capacity(cm.n_modes());
    for pair in sq.chunks_exact(2) {
        let (a, b) = (pair[0].max(0.0), pair[1].max(0.0));
        if (a - b).abs() > CM_TOLERANCE * a.max(1.0) {
            return Err(Error::numerical(format!(
                "symplectic eigenvalues failed to pair: {a} vs {b}"
            )));
        }
        nu.push((0.5 * (a + b)).sqrt());
    }
    Ok(nu)
}

/// Entropy, in bits, of a thermal mode with symplectic eigenvalue `nu`.
///
/// `g(nu) = ((nu+1)/2) log2((nu+1)/2) - ((nu-1)/2) log2((nu-1)/2)`, with
/// `g(1) = 0`. Values within `1e-9` below 1 are clamped.
pub fn g_von_neumann(nu: f64) -> Result<f64> {
    if !(nu >= 1.0 - CM_TOLERANCE) {
        return Err(Error::domain(format!("symplectic eigenvalue {nu} below 1")));
    }
    if nu <= 1.0 {
        return Ok(0.0);
    }
    let plus = 0.5 * (nu + 1.0);
    let minus = 0.5 * (nu - 1.0);
    Ok(plus * plus.log2() - minus * minus.log2())
}

/// Von Neumann entropy, in bits.
pub fn von_neumann_entropy(cm: &CovMatrix) -> Result<f64> {
    let tol = CM_TOLERANCE * cm.scale();
    symplectic_eigenvalues(cm)?
        .into_iter()
        .map(|nu| {
            if nu < 1.0 - tol {
                Err(Error::numerical(format!("unphysical symplectic eigenvalue {nu}")))
            } else {
                g_von_neumann(nu.max(1.0))
            }
        })
        .sum()
}
