//! Sample-space simulation of the quantum layer.
//!
//! Channel maps act on symbol means. Vacuum noise is injected exactly once,
//! at the relay detectors (variance 1 per measured quadrature), which keeps
//! the sample model identical to the covariance-matrix model in
//! [`crate::gaussian`].

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One quadrature pair `(x, p)` in sqrt(SNU).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuadSymbol {
    pub x: f64,
    pub p: f64,
}

impl QuadSymbol {
    pub const ZERO: QuadSymbol = QuadSymbol { x: 0.0, p: 0.0 };

    pub fn new(x: f64, p: f64) -> Self {
        Self { x, p }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.p.is_finite()
    }

    pub fn rotate(self, theta: f64) -> Self {
        (Complex64::from(self) * Complex64::from_polar(1.0, theta)).into()
    }

    pub fn conj(self) -> Self {
        Self { x: self.x, p: -self.p }
    }

    fn draw<R: Rng + ?Sized>(rng: &mut R, std: f64) -> Self {
        let x: f64 = rng.sample(StandardNormal);
        let p: f64 = rng.sample(StandardNormal);
        Self { x: std * x, p: std * p }
    }
}

impl From<QuadSymbol> for Complex64 {
    fn from(s: QuadSymbol) -> Self {
        Complex64::new(s.x, s.p)
    }
}

impl From<Complex64> for QuadSymbol {
    fn from(z: Complex64) -> Self {
        Self { x: z.re, p: z.im }
    }
}

/// Fiber channel between one sender and the relay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Transmissivity, in (0, 1].
    pub tau: f64,
    /// Excess noise referred to the channel input, SNU.
    pub xi_in: f64,
    /// Stationary standard deviation of the residual phase, rad.
    pub phase_sigma: f64,
    /// Correlation length of the residual phase, in symbols.
    pub phase_corr_len: f64,
    /// Bulk phase offset between the sender and the relay LO, rad.
    pub phase_mean: f64,
}

impl ChannelParams {
    /// Lossy, noiseless channel with a perfectly locked phase.
    pub fn lossy(tau: f64) -> Self {
        Self {
            tau,
            xi_in: 0.0,
            phase_sigma: 0.0,
            phase_corr_len: 200.0,
            phase_mean: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::domain(format!("transmissivity must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.xi_in >= 0.0) || !self.xi_in.is_finite() {
            return Err(Error::domain(format!("excess noise must be >= 0, got {}", self.xi_in)));
        }
        if !(self.phase_sigma >= 0.0) || !self.phase_sigma.is_finite() {
            return Err(Error::domain(format!("phase sigma must be >= 0, got {}", self.phase_sigma)));
        }
        if !(self.phase_corr_len > 0.0) || !self.phase_corr_len.is_finite() {
            return Err(Error::domain("phase correlation length must be > 0"));
        }
        if !self.phase_mean.is_finite() {
            return Err(Error::domain("phase offset must be finite"));
        }
        Ok(())
    }
}

/// Relay (Bell-state measurement) imperfections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayParams {
    /// Overall quantum efficiency, in (0, 1].
    pub eta: f64,
    /// Electronic noise variance per quadrature, SNU.
    pub nu_el: f64,
    /// Deviation of the beamsplitter transmittance from 1/2.
    pub imbalance: f64,
    /// Raw detector variance per SNU, used only to exercise calibration.
    pub raw_gain: f64,
}

impl RelayParams {
    pub fn ideal() -> Self {
        Self {
            eta: 1.0,
            nu_el: 0.0,
            imbalance: 0.0,
            raw_gain: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::domain(format!("relay efficiency must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.nu_el >= 0.0) || !self.nu_el.is_finite() {
            return Err(Error::domain(format!("electronic noise must be >= 0, got {}", self.nu_el)));
        }
        if !(self.imbalance.abs() <= 0.05) {
            return Err(Error::domain(format!("imbalance must satisfy |d| <= 0.05, got {}", self.imbalance)));
        }
        if !(self.raw_gain > 0.0) || !self.raw_gain.is_finite() {
            return Err(Error::domain("raw detector gain must be > 0"));
        }
        Ok(())
    }

    /// Noiseless relay output for the post-channel amplitudes `a`, `b`.
    ///
    /// `gamma_x = sqrt(eta) (sqrt(t) x_a - sqrt(1-t) x_b)` and
    /// `gamma_p = sqrt(eta) (sqrt(t) p_a + sqrt(1-t) p_b)`, i.e.
    /// `gamma = sqrt(eta) (sqrt(t) a - sqrt(1-t) conj(b))`.
    #[inline]
    pub fn combine(&self, a: Complex64, b: Complex64) -> Complex64 {
        let t = 0.5 + self.imbalance;
        self.eta.sqrt() * (t.sqrt() * a - (1.0 - t).sqrt() * b.conj())
    }
}

/// Blocked-signal calibration of the relay detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    /// Variance with the LO open and signal blocked (vacuum + electronic).
    pub vacuum_variance_raw: f64,
    /// Variance with the LO blocked too (electronic only).
    pub electronic_variance_raw: f64,
    /// Multiplies raw variances into SNU.
    pub snu_scale: f64,
    pub n_samples: usize,
}

impl CalibrationRecord {
    /// Electronic noise in SNU, as measured.
    pub fn electronic_snu(&self) -> f64 {
        self.electronic_variance_raw * self.snu_scale
    }

    /// Converts raw detector records to SNU.
    ///
    /// The electronic contribution stays in the output: with one-time
    /// calibration a vacuum input reads `1 + nu_el`.
    pub fn to_snu(&self, raw: &[QuadSymbol]) -> Vec<QuadSymbol> {
        let s = self.snu_scale.sqrt();
        raw.iter().map(|q| QuadSymbol::new(q.x * s, q.p * s)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.vacuum_variance_raw > self.electronic_variance_raw && self.electronic_variance_raw >= 0.0) {
            return Err(Error::domain("calibration needs vacuum variance > electronic variance >= 0"));
        }
        if !(self.snu_scale > 0.0) || !self.snu_scale.is_finite() {
            return Err(Error::domain("calibration scale must be > 0"));
        }
        Ok(())
    }
}

/// `n` Gaussian-modulated symbols with `x, p ~ N(0, v_mod)` i.i.d.
pub fn draw_symbols<R: Rng + ?Sized>(n: usize, v_mod: f64, rng: &mut R) -> Result<Vec<QuadSymbol>> {
    if n == 0 {
        return Err(Error::domain("need at least one symbol"));
    }
    if !(v_mod >= 0.0) || !v_mod.is_finite() {
        return Err(Error::domain(format!("modulation variance must be >= 0, got {v_mod}")));
    }
    let std = v_mod.sqrt();
    Ok((0..n).map(|_| QuadSymbol::draw(rng, std)).collect())
}

/// Ornstein-Uhlenbeck phase sequence around `mean`.
///
/// Stationary from the first sample: standard deviation `sigma`, lag-k
/// correlation `exp(-k / corr_len)`.
pub fn ou_phase<R: Rng + ?Sized>(n: usize, sigma: f64, corr_len: f64, mean: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![mean; n];
    }
    let a = (-1.0 / corr_len).exp();
    let kick = sigma * (1.0 - a * a).sqrt();
    let mut state = sigma * rng.sample::<f64, _>(StandardNormal);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(mean + state);
        state = a * state + kick * rng.sample::<f64, _>(StandardNormal);
    }
    out
}

/// Channel output with the realizations that produced it.
#[derive(Debug, Clone)]
pub struct Propagated {
    pub symbols: Vec<QuadSymbol>,
    /// Phase applied to each symbol.
    pub phase: Vec<f64>,
    /// Additive excess-noise term of each symbol (variance `tau xi_in`).
    pub noise: Vec<QuadSymbol>,
}

/// `alpha -> sqrt(tau) alpha e^{i theta_k} + n_k`.
///
/// `n_k` has per-quadrature variance `tau * xi_in`; no vacuum term is added
/// here. The phase stream is drawn before the noise stream.
pub fn propagate_channel<R: Rng + ?Sized>(
    symbols: &[QuadSymbol],
    params: &ChannelParams,
    rng: &mut R,
) -> Result<Propagated> {
    params.validate()?;
    let n = symbols.len();
    let phase = ou_phase(n, params.phase_sigma, params.phase_corr_len, params.phase_mean, rng);
    let noise_std = (params.tau * params.xi_in).sqrt();
    let noise: Vec<QuadSymbol> = if noise_std > 0.0 {
        (0..n).map(|_| QuadSymbol::draw(rng, noise_std)).collect()
    } else {
        vec![QuadSymbol::ZERO; n]
    };
    let g = params.tau.sqrt();
    let out = symbols
        .iter()
        .zip(&phase)
        .zip(&noise)
        .map(|((s, &th), nz)| {
            let z = g * Complex64::from(*s) * Complex64::from_polar(1.0, th) + Complex64::from(*nz);
            QuadSymbol::from(z)
        })
        .collect();
    Ok(Propagated {
        symbols: out,
        phase,
        noise,
    })
}

/// Detector noise for `n` relay uses: vacuum plus electronic, variance
/// `1 + nu_el` per quadrature.
pub fn draw_relay_noise<R: Rng + ?Sized>(n: usize, relay: &RelayParams, rng: &mut R) -> Vec<QuadSymbol> {
    let std = (1.0 + relay.nu_el).sqrt();
    (0..n).map(|_| QuadSymbol::draw(rng, std)).collect()
}

/// Continuous-variable Bell measurement on two post-channel symbol streams.
///
/// Returns `gamma` in SNU: x-difference, p-sum, plus detector noise.
pub fn relay_bsm<R: Rng + ?Sized>(
    sym_a: &[QuadSymbol],
    sym_b: &[QuadSymbol],
    relay: &RelayParams,
    rng: &mut R,
) -> Result<Vec<QuadSymbol>> {
    relay.validate()?;
    if sym_a.len() != sym_b.len() {
        return Err(Error::domain(format!(
            "relay inputs differ in length: {} vs {}",
            sym_a.len(),
            sym_b.len()
        )));
    }
    let noise = draw_relay_noise(sym_a.len(), relay, rng);
    Ok(sym_a
        .iter()
        .zip(sym_b)
        .zip(noise)
        .map(|((a, b), n)| QuadSymbol::from(relay.combine((*a).into(), (*b).into()) + Complex64::from(n)))
        .collect())
}

/// Samples per independent stream in [`calibrate_shot_noise_seeded`].
pub const CALIBRATION_CHUNK: usize = 1 << 22;

/// [`calibrate_shot_noise`] over chunks with their own RNG streams.
///
/// Chunks run in parallel; the result depends only on `master_seed` and `n`.
pub fn calibrate_shot_noise_seeded(relay: &RelayParams, n: usize, master_seed: u64) -> Result<CalibrationRecord> {
    relay.validate()?;
    if n < MIN_CALIBRATION_SAMPLES {
        return Err(Error::domain(format!(
            "calibration needs at least {MIN_CALIBRATION_SAMPLES} samples, got {n}"
        )));
    }
    let g = relay.raw_gain.sqrt();
    let el = Normal::new(0.0, relay.nu_el.sqrt()).map_err(|e| Error::domain(e.to_string()))?;
    let (vac, elec) = (0..n.div_ceil(CALIBRATION_CHUNK))
        .into_par_iter()
        .map(|c| {
            let len = CALIBRATION_CHUNK.min(n - c * CALIBRATION_CHUNK);
            let mut rng = crate::rng::stream(master_seed, c as u64, crate::rng::Role::Calibration);
            let mut vac = Moments::default();
            let mut elec = Moments::default();
            for _ in 0..len {
                let shot: f64 = rng.sample(StandardNormal);
                vac.push(g * (shot + el.sample(&mut rng)));
            }
            for _ in 0..len {
                elec.push(g * el.sample(&mut rng));
            }
            (vac, elec)
        })
        .reduce(
            || (Moments::default(), Moments::default()),
            |a, b| (a.0.merge(b.0), a.1.merge(b.1)),
        );
    let (v_vac, v_el) = (vac.variance(), elec.variance());
    let rec = CalibrationRecord {
        vacuum_variance_raw: v_vac,
        electronic_variance_raw: v_el,
        snu_scale: 1.0 / (v_vac - v_el),
        n_samples: n,
    };
    rec.validate()?;
    Ok(rec)
}

/// Minimum record length for shot-noise calibration.
pub const MIN_CALIBRATION_SAMPLES: usize = 100_000;

/// One-time shot-noise calibration from simulated blocked-signal records.
///
/// Two raw records are taken: LO open (vacuum + electronic) and LO blocked
/// (electronic only). `snu_scale` makes their difference exactly one SNU.
pub fn calibrate_shot_noise<R: Rng + ?Sized>(relay: &RelayParams, n: usize, rng: &mut R) -> Result<CalibrationRecord> {
    relay.validate()?;
    if n < MIN_CALIBRATION_SAMPLES {
        return Err(Error::domain(format!(
            "calibration needs at least {MIN_CALIBRATION_SAMPLES} samples, got {n}"
        )));
    }
    let g = relay.raw_gain.sqrt();
    let el = Normal::new(0.0, relay.nu_el.sqrt()).map_err(|e| Error::domain(e.to_string()))?;
    let mut vac = Moments::default();
    let mut elec = Moments::default();
    for _ in 0..n {
        let shot: f64 = rng.sample(StandardNormal);
        vac.push(g * (shot + el.sample(rng)));
    }
    for _ in 0..n {
        elec.push(g * el.sample(rng));
    }
    let (v_vac, v_el) = (vac.variance(), elec.variance());
    let rec = CalibrationRecord {
        vacuum_variance_raw: v_vac,
        electronic_variance_raw: v_el,
        snu_scale: 1.0 / (v_vac - v_el),
        n_samples: n,
    };
    rec.validate()?;
    Ok(rec)
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    fn variance(&self) -> f64 {
        self.m2 / (self.n - 1.0)
    }

    fn merge(self, o: Self) -> Self {
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Self {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }
}
