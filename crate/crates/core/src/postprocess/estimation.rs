use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::stats::CovAccumulator;
use crate::channel::{CalibrationRecord, QuadSymbol};
use crate::error::{Error, Result};

/// Largest transmissivity estimate accepted before calibration is blamed.
pub const TAU_HAT_MAX: f64 = 1.05;

/// One frame of aligned symbols and SNU-calibrated relay outputs.
#[derive(Debug, Clone, Copy)]
pub struct FrameData<'a> {
    pub alice: &'a [QuadSymbol],
    pub bob: &'a [QuadSymbol],
    pub gamma: &'a [QuadSymbol],
}

/// Joint moments of `(alice, bob, gamma)` per quadrature.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameStats {
    pub x: CovAccumulator<3>,
    pub p: CovAccumulator<3>,
}

impl FrameStats {
    pub fn from_frame(f: &FrameData<'_>) -> Result<Self> {
        if f.alice.len() != f.bob.len() || f.alice.len() != f.gamma.len() {
            return Err(Error::domain(format!(
                "frame arrays differ in length: alice {}, bob {}, gamma {}",
                f.alice.len(),
                f.bob.len(),
                f.gamma.len()
            )));
        }
        let mut s = Self::default();
        for ((a, b), g) in f.alice.iter().zip(f.bob).zip(f.gamma) {
            s.x.push([a.x, b.x, g.x]);
            s.p.push([a.p, b.p, g.p]);
        }
        Ok(s)
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            x: self.x.merge(&other.x),
            p: self.p.merge(&other.p),
        }
    }

    pub fn n(&self) -> u64 {
        self.x.n
    }

    /// `(tau_a, tau_b, xi_relay)` from these moments.
    pub fn channel_estimate(&self, eta: f64) -> Result<(f64, f64, f64)> {
        let mut tau_a = 0.0;
        let mut tau_b = 0.0;
        let mut xi = 0.0;
        for acc in [&self.x, &self.p] {
            if acc.n < 3 {
                return Err(Error::domain("estimation needs at least three symbols per frame"));
            }
            // Regress gamma on both senders' symbols.
            let sxx = Matrix2::new(acc.var(0), acc.cov(0, 1), acc.cov(1, 0), acc.var(1));
            let sxg = Vector2::new(acc.cov(0, 2), acc.cov(1, 2));
            let k = sxx
                .try_inverse()
                .ok_or_else(|| Error::domain("sender symbols are degenerate; channel is not identifiable"))?
                * sxg;
            let residual = acc.var(2) - sxg.dot(&k);
            tau_a += k[0] * k[0] / eta;
            tau_b += k[1] * k[1] / eta;
            xi += (residual - 1.0) / eta;
        }
        // Per quadrature the estimates carry a factor 2/eta; summing the
        // halves averages the two quadratures.
        Ok((tau_a, tau_b, xi))
    }
}

/// Worst-case channel parameters at confidence `1 - epsilon_pe`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub tau_a_wc: f64,
    /// Bob's channel, the lossy one.
    pub tau_wc: f64,
    pub xi_wc: f64,
    pub epsilon_pe: f64,
    pub z: f64,
    pub m_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub tau_a_hat: f64,
    pub tau_b_hat: f64,
    /// Excess noise referred to the relay input, SNU. Includes the relay's
    /// electronic noise.
    pub xi_hat_relay: f64,
    pub frame_xi: Vec<f64>,
    pub frame_tau_a: Vec<f64>,
    pub frame_tau_b: Vec<f64>,
    pub n_used: u64,
    /// Electronic noise seen at calibration, SNU.
    pub electronic_snu: f64,
    /// Set when the pooled excess-noise estimate is below zero.
    pub negative_xi: bool,
    pub worst_case: Option<WorstCase>,
}

/// Channel estimate pooled over all frames, with per-frame values kept.
pub fn estimate_channel(
    frames: &[FrameData<'_>],
    calib: Option<&CalibrationRecord>,
    eta: f64,
) -> Result<EstimationResult> {
    let stats = frames
        .par_iter()
        .map(FrameStats::from_frame)
        .collect::<Result<Vec<_>>>()?;
    estimate_from_stats(&stats, calib, eta)
}

pub fn estimate_from_stats(
    stats: &[FrameStats],
    calib: Option<&CalibrationRecord>,
    eta: f64,
) -> Result<EstimationResult> {
    let calib = calib.ok_or_else(|| Error::domain("estimation needs a shot-noise calibration record"))?;
    calib.validate()?;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain(format!("relay efficiency must lie in (0, 1], got {eta}")));
    }
    if stats.is_empty() {
        return Err(Error::domain("estimation needs at least one frame"));
    }
    let mut frame_xi = Vec::with_capacity(stats.len());
    let mut frame_tau_a = Vec::with_capacity(stats.len());
    let mut frame_tau_b = Vec::with_capacity(stats.len());
    for s in stats {
        let (ta, tb, xi) = s.channel_estimate(eta)?;
        frame_tau_a.push(ta);
        frame_tau_b.push(tb);
        frame_xi.push(xi);
    }
    let pooled = stats.iter().fold(FrameStats::default(), |acc, s| acc.merge(s));
    let (tau_a_hat, tau_b_hat, xi_hat_relay) = pooled.channel_estimate(eta)?;
    for (name, t) in [("Alice", tau_a_hat), ("Bob", tau_b_hat)] {
        if !(0.0..=TAU_HAT_MAX).contains(&t) {
            return Err(Error::numerical(format!(
                "{name}'s transmissivity estimate {t:.4} exceeds {TAU_HAT_MAX}; check calibration"
            )));
        }
    }
    Ok(EstimationResult {
        tau_a_hat,
        tau_b_hat,
        xi_hat_relay,
        frame_xi,
        frame_tau_a,
        frame_tau_b,
        n_used: pooled.n(),
        electronic_snu: calib.electronic_snu(),
        negative_xi: xi_hat_relay < 0.0,
        worst_case: None,
    })
}

/// Upper standard-normal quantile `z` with `P(Z > z) = epsilon`.
pub fn normal_quantile_upper(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::domain(format!("failure probability must lie in (0, 0.5), got {epsilon}")));
    }
    let n = Normal::standard();
    Ok(-n.inverse_cdf(epsilon))
}

fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Confidence bounds from the frame-to-frame scatter.
///
/// `xi_wc = xi + z s_xi / sqrt(m)` and `tau_wc = tau - z s_tau / sqrt(m)`,
/// with `xi_wc` and `tau_wc` floored at zero.
pub fn worst_case_bounds(est: &EstimationResult, epsilon_pe: f64, m_frames: usize) -> Result<EstimationResult> {
    let z = normal_quantile_upper(epsilon_pe)?;
    if m_frames < 2 {
        return Err(Error::domain(format!("worst-case bounds need at least 2 frames, got {m_frames}")));
    }
    if est.frame_xi.len() != m_frames || est.frame_tau_a.len() != m_frames || est.frame_tau_b.len() != m_frames {
        return Err(Error::domain(format!(
            "estimate holds {} frames, expected {m_frames}",
            est.frame_xi.len()
        )));
    }
    let k = z / (m_frames as f64).sqrt();
    let mut out = est.clone();
    out.worst_case = Some(WorstCase {
        tau_a_wc: (est.tau_a_hat - k * sample_std(&est.frame_tau_a)).max(0.0),
        tau_wc: (est.tau_b_hat - k * sample_std(&est.frame_tau_b)).max(0.0),
        xi_wc: (est.xi_hat_relay + k * sample_std(&est.frame_xi)).max(0.0),
        epsilon_pe,
        z,
        m_frames,
    });
    Ok(out)
}
