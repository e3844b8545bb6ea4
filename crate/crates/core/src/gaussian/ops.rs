use nalgebra::{DMatrix, Matrix2};

use super::{x_index, CovMatrix, Quadrature, CM_TOLERANCE};
use crate::error::{Error, Result};

/// Two-mode squeezed vacuum with quadrature variance `mu` on each mode.
///
/// `[[mu I, c Z], [c Z, mu I]]` with `c = sqrt(mu^2 - 1)`, `Z = diag(1, -1)`.
/// Heterodyning either mode prepares a Gaussian ensemble of coherent states
/// with modulation variance `mu - 1` on the other.
pub fn tmsv_cm(mu: f64) -> Result<CovMatrix> {
    if !(mu >= 1.0) || !mu.is_finite() {
        return Err(Error::domain(format!("TMSV variance must be >= 1, got {mu}")));
    }
    let c = (mu * mu - 1.0).sqrt();
    let mut m = DMatrix::identity(4, 4) * mu;
    m[(0, 2)] = c;
    m[(2, 0)] = c;
    m[(1, 3)] = -c;
    m[(3, 1)] = -c;
    Ok(CovMatrix { m })
}

/// Thermal-loss channel on one mode: `V -> tau V + (1 - tau + tau xi_in) I`.
///
/// `xi_in` is excess noise referred to the channel input.
pub fn apply_loss_noise(cm: &CovMatrix, mode: usize, tau: f64, xi_in: f64) -> Result<CovMatrix> {
    cm.check_mode(mode)?;
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::domain(format!("transmissivity must lie in (0, 1], got {tau}")));
    }
    if !(xi_in >= 0.0) || !xi_in.is_finite() {
        return Err(Error::domain(format!("excess noise must be >= 0, got {xi_in}")));
    }
    let mut m = cm.m.clone();
    let k = x_index(mode);
    let g = tau.sqrt();
    for r in k..k + 2 {
        m.row_mut(r).scale_mut(g);
        m.column_mut(r).scale_mut(g);
    }
    let added = 1.0 - tau + tau * xi_in;
    m[(k, k)] += added;
    m[(k + 1, k + 1)] += added;
    Ok(CovMatrix::from_symmetric(m))
}

/// Adds classical Gaussian noise of variance `var` to both quadratures of
/// `mode`.
pub fn add_noise(cm: &CovMatrix, mode: usize, var: f64) -> Result<CovMatrix> {
    cm.check_mode(mode)?;
    if !(var >= 0.0) || !var.is_finite() {
        return Err(Error::domain(format!("noise variance must be >= 0, got {var}")));
    }
    let mut m = cm.m.clone();
    let k = x_index(mode);
    m[(k, k)] += var;
    m[(k + 1, k + 1)] += var;
    Ok(CovMatrix { m })
}

/// Beamsplitter of transmittance `t` between modes `i` and `j`.
///
/// Output `i` is `sqrt(t) a_i + sqrt(1-t) a_j`, output `j` is
/// `-sqrt(1-t) a_i + sqrt(t) a_j`; at `t = 1/2` mode `j` carries the
/// difference `(a_j - a_i)/sqrt 2` and mode `i` the sum.
pub fn apply_beamsplitter(cm: &CovMatrix, i: usize, j: usize, t: f64) -> Result<CovMatrix> {
    cm.check_mode(i)?;
    cm.check_mode(j)?;
    if i == j {
        return Err(Error::domain("beamsplitter needs two distinct modes"));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("beamsplitter transmittance must lie in [0, 1], got {t}")));
    }
    let dim = cm.m.nrows();
    let (a, b) = (t.sqrt(), (1.0 - t).sqrt());
    let mut s = DMatrix::<f64>::identity(dim, dim);
    let (ki, kj) = (x_index(i), x_index(j));
    for q in 0..2 {
        s[(ki + q, ki + q)] = a;
        s[(ki + q, kj + q)] = b;
        s[(kj + q, ki + q)] = -b;
        s[(kj + q, kj + q)] = a;
    }
    Ok(CovMatrix::from_symmetric(&s * &cm.m * s.transpose()))
}

fn split(cm: &CovMatrix, mode: usize) -> (DMatrix<f64>, DMatrix<f64>, Matrix2<f64>) {
    let n = cm.n_modes();
    let keep: Vec<usize> = (0..n)
        .filter(|&k| k != mode)
        .flat_map(|k| [2 * k, 2 * k + 1])
        .collect();
    let k = x_index(mode);
    let a = DMatrix::from_fn(keep.len(), keep.len(), |r, c| cm.m[(keep[r], keep[c])]);
    let c = DMatrix::from_fn(keep.len(), 2, |r, c| cm.m[(keep[r], k + c)]);
    (a, c, cm.block(mode, mode))
}

/// Conditional state of the other modes after homodyning `quadrature` of
/// `mode`.
///
/// `A - C (Pi B Pi)^+ C^T`. The projected block is a scalar, so the
/// pseudo-inverse is its reciprocal. The result does not depend on the
/// measured value.
pub fn condition_on_homodyne(cm: &CovMatrix, mode: usize, quadrature: Quadrature) -> Result<CovMatrix> {
    cm.check_mode(mode)?;
    if cm.n_modes() < 2 {
        return Err(Error::domain("homodyne conditioning needs at least two modes"));
    }
    let (a, c, b) = split(cm, mode);
    let q = quadrature as usize;
    let var = b[(q, q)];
    let coupling = c.column(q).into_owned();
    let tol = CM_TOLERANCE * cm.scale();
    if var.abs() <= tol {
        if coupling.amax() > tol {
            return Err(Error::numerical(format!(
                "homodyne on mode {mode}: measured variance {var:e} is singular but coupled"
            )));
        }
        return Ok(CovMatrix::from_symmetric(a));
    }
    let update = &coupling * coupling.transpose() / var;
    Ok(CovMatrix::from_symmetric(a - update))
}

/// Conditional state of the other modes after heterodyning `mode`:
/// `A - C (B + I)^-1 C^T`.
pub fn condition_on_heterodyne(cm: &CovMatrix, mode: usize) -> Result<CovMatrix> {
    cm.check_mode(mode)?;
    if cm.n_modes() < 2 {
        return Err(Error::domain("heterodyne conditioning needs at least two modes"));
    }
    let (a, c, b) = split(cm, mode);
    let inv = (b + Matrix2::identity())
        .try_inverse()
        .expect("B + I is positive definite for any physical state");
    let inv = DMatrix::from_fn(2, 2, |r, k| inv[(r, k)]);
    Ok(CovMatrix::from_symmetric(a - &c * inv * c.transpose()))
}

#[cfg(test)]
mod tests {
    use super::super::symplectic_eigenvalues;
    use super::*;
    use approx::assert_abs_diff_eq;

    fn diag(v: &[f64]) -> CovMatrix {
        CovMatrix::new(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))).unwrap()
    }

    #[test]
    fn tmsv_examples() {
        assert_eq!(tmsv_cm(1.0).unwrap(), CovMatrix::vacuum(2));
        let cm = tmsv_cm(7.5).unwrap();
        let c = 55.25f64.sqrt();
        assert_abs_diff_eq!(cm.get(0, 0), 7.5);
        assert_abs_diff_eq!(cm.get(3, 3), 7.5);
        assert_abs_diff_eq!(cm.get(0, 2), c, epsilon = 1e-14);
        assert_abs_diff_eq!(cm.get(1, 3), -c, epsilon = 1e-14);
        let nu = symplectic_eigenvalues(&tmsv_cm(2.0).unwrap()).unwrap();
        for v in nu {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
        }
        assert!(matches!(tmsv_cm(0.9), Err(Error::Domain(_))));
    }

    #[test]
    fn loss_noise_examples() {
        let vac = CovMatrix::vacuum(1);
        assert_eq!(apply_loss_noise(&vac, 0, 0.56, 0.0).unwrap(), vac);
        let th = CovMatrix::thermal(7.5).unwrap();
        assert_eq!(apply_loss_noise(&th, 0, 1.0, 0.0).unwrap(), th);
        let out = apply_loss_noise(&vac, 0, 0.5, 0.1).unwrap();
        assert_abs_diff_eq!(out.get(0, 0), 1.05, epsilon = 1e-15);
        assert_abs_diff_eq!(out.get(1, 1), 1.05, epsilon = 1e-15);
        assert_abs_diff_eq!(out.get(0, 1), 0.0);
        assert!(apply_loss_noise(&vac, 0, 0.0, 0.0).is_err());
        assert!(apply_loss_noise(&vac, 0, 1.2, 0.0).is_err());
        assert!(apply_loss_noise(&vac, 0, 0.5, -0.1).is_err());
        assert!(apply_loss_noise(&vac, 1, 0.5, 0.0).is_err());
    }

    #[test]
    fn loss_scales_cross_correlations() {
        let cm = apply_loss_noise(&tmsv_cm(3.0).unwrap(), 1, 0.25, 0.0).unwrap();
        assert_abs_diff_eq!(cm.get(0, 2), 0.5 * 8f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(cm.get(2, 2), 0.25 * 3.0 + 0.75, epsilon = 1e-14);
    }

    #[test]
    fn beamsplitter_examples() {
        let out = apply_beamsplitter(&CovMatrix::vacuum(2), 0, 1, 0.5).unwrap();
        assert_abs_diff_eq!((out.matrix() - DMatrix::identity(4, 4)).amax(), 0.0, epsilon = 1e-15);
        let input = diag(&[3.0, 3.0, 1.0, 1.0]);
        assert_eq!(apply_beamsplitter(&input, 0, 1, 1.0).unwrap(), input);
        let out = apply_beamsplitter(&input, 0, 1, 0.5).unwrap();
        for k in 0..2 {
            let local = out.block(k, k) - nalgebra::Matrix2::identity() * 2.0;
            assert_abs_diff_eq!(local.amax(), 0.0, epsilon = 1e-14);
        }
        // sqrt(t(1-t)) (1 - 3) on the cross block
        assert_abs_diff_eq!(out.get(0, 2), -1.0, epsilon = 1e-14);
        assert!(apply_beamsplitter(&input, 0, 0, 0.5).is_err());
        assert!(apply_beamsplitter(&input, 0, 1, 1.5).is_err());
    }

    #[test]
    fn homodyne_examples() {
        let product = diag(&[3.0, 2.0, 5.0, 4.0]);
        assert_eq!(condition_on_homodyne(&product, 1, Quadrature::X).unwrap(), diag(&[3.0, 2.0]));
        for mu in [1.5, 3.0, 7.5] {
            let out = condition_on_homodyne(&tmsv_cm(mu).unwrap(), 1, Quadrature::X).unwrap();
            assert_abs_diff_eq!(out.get(0, 0), 1.0 / mu, epsilon = 1e-13);
            assert_abs_diff_eq!(out.get(1, 1), mu, epsilon = 1e-13);
            assert_abs_diff_eq!(out.get(0, 1), 0.0, epsilon = 1e-13);
        }
        let out = condition_on_homodyne(&tmsv_cm(1.0).unwrap(), 1, Quadrature::P).unwrap();
        assert_eq!(out, CovMatrix::vacuum(1));
        assert!(condition_on_homodyne(&CovMatrix::vacuum(1), 0, Quadrature::X).is_err());
    }

    #[test]
    fn homodyne_singular_coupled_block_is_reported() {
        let mut m = DMatrix::identity(4, 4);
        m[(2, 2)] = 0.0;
        m[(0, 2)] = 0.3;
        m[(2, 0)] = 0.3;
        let cm = CovMatrix::from_symmetric(m);
        assert!(matches!(
            condition_on_homodyne(&cm, 1, Quadrature::X),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn heterodyne_examples() {
        let product = diag(&[3.0, 2.0, 5.0, 4.0]);
        assert_eq!(condition_on_heterodyne(&product, 0).unwrap(), diag(&[5.0, 4.0]));
        for mu in [1.0, 2.0, 7.5] {
            let out = condition_on_heterodyne(&tmsv_cm(mu).unwrap(), 1).unwrap();
            assert_abs_diff_eq!((out.matrix() - DMatrix::identity(2, 2)).amax(), 0.0, epsilon = 1e-13);
        }
    }
}
