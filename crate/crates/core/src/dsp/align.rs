use num_complex::Complex64;

use super::wrap_angle;
use crate::channel::QuadSymbol;
use crate::error::{Error, Result};

pub const MIN_ALIGN_SYMBOLS: usize = 1000;
/// Required significance of the complex covariance, in standard errors.
const MIN_ALIGN_SIGNIFICANCE: f64 = 5.0;

fn centered(s: &[QuadSymbol]) -> Vec<Complex64> {
    let n = s.len() as f64;
    let mean = s.iter().map(|q| Complex64::from(*q)).sum::<Complex64>() / n;
    s.iter().map(|q| Complex64::from(*q) - mean).collect()
}

fn check_lengths(symbols: &[QuadSymbol], reference: &[QuadSymbol]) -> Result<()> {
    if symbols.len() != reference.len() {
        return Err(Error::domain(format!(
            "alignment length mismatch: {} symbols vs {} reference",
            symbols.len(),
            reference.len()
        )));
    }
    if symbols.len() < MIN_ALIGN_SYMBOLS {
        return Err(Error::domain(format!(
            "alignment needs at least {MIN_ALIGN_SYMBOLS} symbols, have {}",
            symbols.len()
        )));
    }
    Ok(())
}

/// Cov(x_rot, x_ref) + Cov(p_rot, p_ref) after rotating `symbols` by `theta`.
pub fn alignment_covariance(symbols: &[QuadSymbol], reference: &[QuadSymbol], theta: f64) -> Result<f64> {
    check_lengths(symbols, reference)?;
    let a = centered(symbols);
    let r = centered(reference);
    let rot = Complex64::from_polar(1.0, theta);
    let n = a.len() as f64;
    Ok(a.iter().zip(&r).map(|(a, r)| (a * rot * r.conj()).re).sum::<f64>() / n)
}

/// Rotation that maximizes the symbol/reference correlation.
///
/// With C = E[(α − ᾱ)·conj(γ − γ̄)], the summed quadrature covariance after
/// rotating by θ is Re(C·e^{iθ}) = |C|·cos(θ + arg C), so the maximum is at
/// θ̂ = −arg C in closed form and its value is |C|. Fails when |C| is not
/// significantly above its sampling noise.
pub fn phase_align(symbols: &[QuadSymbol], reference: &[QuadSymbol]) -> Result<(f64, Vec<QuadSymbol>)> {
    check_lengths(symbols, reference)?;
    let a = centered(symbols);
    let r = centered(reference);
    let n = a.len() as f64;
    let c = a.iter().zip(&r).map(|(a, r)| a * r.conj()).sum::<Complex64>() / n;
    let rms_a = (a.iter().map(|z| z.norm_sqr()).sum::<f64>() / n).sqrt();
    let rms_r = (r.iter().map(|z| z.norm_sqr()).sum::<f64>() / n).sqrt();
    let scale = rms_a * rms_r;
    let significance = if scale > 0.0 { c.norm() * n.sqrt() / scale } else { 0.0 };
    if !(significance >= MIN_ALIGN_SIGNIFICANCE) {
        return Err(Error::Alignment(format!(
            "symbol/reference covariance not significant ({significance:.2} standard errors)"
        )));
    }
    let theta = wrap_angle(-c.arg());
    let rotated = symbols.iter().map(|s| s.rotate(theta)).collect();
    Ok((theta, rotated))
}

/// Excess noise from a residual Gaussian phase error of std `sigma`.
pub fn phase_noise_to_excess(sigma: f64, v_mod: f64) -> f64 {
    2.0 * v_mod * (1.0 - (-sigma * sigma / 2.0).exp())
}
