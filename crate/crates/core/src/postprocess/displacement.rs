use serde::{Deserialize, Serialize};

use super::stats::CovAccumulator;
use crate::channel::QuadSymbol;
use crate::error::{Error, Result};

/// Coefficients of Bob's quadrature displacement.
///
/// `u_x = (gamma_x - rho x_B) rescale`, `u_p = (gamma_p + beta_disp p_B) rescale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementCoeffs {
    pub rho: f64,
    pub beta_disp: f64,
    pub rescale: f64,
}

impl DisplacementCoeffs {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.beta_disp.is_finite()) {
            return Err(Error::domain("displacement coefficients must be finite"));
        }
        if !(self.rescale > 0.0) || !self.rescale.is_finite() {
            return Err(Error::domain(format!("displacement rescale must be > 0, got {}", self.rescale)));
        }
        Ok(())
    }

    /// Least-squares coefficients: they leave `u` uncorrelated with Bob's
    /// symbols. `rescale` matches the output power to Bob's modulation, so
    /// it maps into Alice's units when both use the same variance.
    pub fn estimate(gamma: &[QuadSymbol], bob: &[QuadSymbol]) -> Result<Self> {
        check_lengths(gamma, bob)?;
        let mut x = CovAccumulator::<2>::default();
        let mut p = CovAccumulator::<2>::default();
        for (g, b) in gamma.iter().zip(bob) {
            x.push([g.x, b.x]);
            p.push([g.p, b.p]);
        }
        let (vbx, vbp) = (x.var(1), p.var(1));
        if !(vbx > 0.0 && vbp > 0.0) {
            return Err(Error::domain("Bob's symbols have zero variance; displacement is undefined"));
        }
        let rho = x.cov(0, 1) / vbx;
        let beta_disp = -p.cov(0, 1) / vbp;
        let res_x = x.var(0) - rho * x.cov(0, 1);
        let res_p = p.var(0) + beta_disp * p.cov(0, 1);
        let residual = res_x + res_p;
        if !(residual > 0.0) {
            return Err(Error::domain("relay output is fully explained by Bob's symbols"));
        }
        let coeffs = Self {
            rho,
            beta_disp,
            rescale: ((vbx + vbp) / residual).sqrt(),
        };
        coeffs.validate()?;
        Ok(coeffs)
    }

    pub fn apply(&self, g: QuadSymbol, b: QuadSymbol) -> QuadSymbol {
        QuadSymbol::new(
            (g.x - self.rho * b.x) * self.rescale,
            (g.p + self.beta_disp * b.p) * self.rescale,
        )
    }
}

fn check_lengths(gamma: &[QuadSymbol], bob: &[QuadSymbol]) -> Result<()> {
    if gamma.len() != bob.len() {
        return Err(Error::domain(format!(
            "displacement length mismatch: {} relay outputs vs {} Bob symbols",
            gamma.len(),
            bob.len()
        )));
    }
    if gamma.len() < 2 {
        return Err(Error::domain("displacement needs at least two symbols"));
    }
    Ok(())
}

/// Bob's estimate of Alice's symbols from the public relay output.
pub fn displacement_infer(
    gamma: &[QuadSymbol],
    bob: &[QuadSymbol],
    coeffs: Option<DisplacementCoeffs>,
) -> Result<(Vec<QuadSymbol>, DisplacementCoeffs)> {
    check_lengths(gamma, bob)?;
    let c = match coeffs {
        Some(c) => {
            c.validate()?;
            c
        }
        None => DisplacementCoeffs::estimate(gamma, bob)?,
    };
    Ok((gamma.iter().zip(bob).map(|(g, b)| c.apply(*g, *b)).collect(), c))
}
