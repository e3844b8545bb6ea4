use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{PilotSpec, RrcSpec, Waveform};
use crate::channel::QuadSymbol;
use crate::error::{Error, Result};

/// Penalty on stopband energy of the Nyquist correction.
const STOPBAND_WEIGHT: f64 = 1e4;
const MAX_REFINE_ITERS: usize = 60;

type TapKey = (u64, usize, usize);

fn cache() -> &'static Mutex<HashMap<TapKey, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<TapKey, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Unit-energy root-raised-cosine taps whose cascade with themselves is
/// Nyquist to machine precision.
///
/// A truncated RRC leaves residual inter-symbol interference at the 1e-3
/// level. The closed-form taps are therefore corrected by Gauss-Newton steps
/// on the constraints `sum_n h[n] h[n + k sps] = delta_k`, each step being the
/// correction of least stopband energy. The result differs from the textbook
/// taps by a few 1e-3 of the peak and keeps the stopband below -45 dB at the
/// default parameters.
pub fn rrc_taps(spec: &RrcSpec) -> Result<Arc<Vec<f64>>> {
    spec.validate()?;
    let key = (spec.roll_off.to_bits(), spec.span_symbols, spec.samples_per_symbol);
    if let Some(taps) = cache().lock().expect("tap cache poisoned").get(&key) {
        return Ok(taps.clone());
    }
    let taps = Arc::new(design(spec)?);
    cache()
        .lock()
        .expect("tap cache poisoned")
        .insert(key, taps.clone());
    Ok(taps)
}

fn closed_form(spec: &RrcSpec) -> Vec<f64> {
    let sps = spec.samples_per_symbol as f64;
    let beta = spec.roll_off;
    let half = (spec.n_taps() / 2) as f64;
    let mut h: Vec<f64> = (0..spec.n_taps())
        .map(|n| {
            let t = (n as f64 - half) / sps;
            if t.abs() < 1e-12 {
                1.0 - beta + 4.0 * beta / PI
            } else if ((4.0 * beta * t).abs() - 1.0).abs() < 1e-9 {
                beta / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * beta)).sin() + (1.0 - 2.0 / PI) * (PI / (4.0 * beta)).cos())
            } else {
                ((PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos())
                    / (PI * t * (1.0 - (4.0 * beta * t).powi(2)))
            }
        })
        .collect();
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter_mut().for_each(|v| *v /= norm);
    h
}

fn isi(h: &[f64], sps: usize, span: usize) -> DVector<f64> {
    DVector::from_fn(span + 1, |k, _| {
        let s = k * sps;
        h[..h.len() - s].iter().zip(&h[s..]).map(|(a, b)| a * b).sum::<f64>() - if k == 0 { 1.0 } else { 0.0 }
    })
}

fn design(spec: &RrcSpec) -> Result<Vec<f64>> {
    let sps = spec.samples_per_symbol;
    let span = spec.span_symbols;
    let len = spec.n_taps();
    let mut h = closed_form(spec);

    // Quadratic form of the energy above the stopband start, in cycles/sample.
    let f_stop = 1.04 * 0.5 * (1.0 + spec.roll_off) / sps as f64;
    let kernel: Vec<f64> = (0..len)
        .map(|k| {
            if k == 0 {
                1.0 - 2.0 * f_stop
            } else {
                -(2.0 * PI * f_stop * k as f64).sin() / (PI * k as f64)
            }
        })
        .collect();
    let weight = DMatrix::from_fn(len, len, |i, j| {
        let d = kernel[i.abs_diff(j)] * STOPBAND_WEIGHT;
        if i == j {
            1.0 + d
        } else {
            d
        }
    });
    let chol = weight
        .cholesky()
        .ok_or_else(|| Error::numerical("RRC refinement weight is not positive definite"))?;

    for _ in 0..MAX_REFINE_ITERS {
        let c = isi(&h, sps, span);
        if c.amax() < 1e-15 {
            break;
        }
        let mut jt = DMatrix::<f64>::zeros(len, span + 1);
        for k in 0..=span {
            let s = k * sps;
            for m in 0..len - s {
                jt[(m, k)] += h[m + s];
                jt[(m + s, k)] += h[m];
            }
        }
        let x = chol.solve(&jt);
        let gram = jt.transpose() * &x;
        let y = gram
            .lu()
            .solve(&c)
            .ok_or_else(|| Error::numerical("RRC refinement Gram matrix is singular"))?;
        let delta = x * y;
        h.iter_mut().zip(delta.iter()).for_each(|(v, d)| *v -= d);
        // Keep exact linear phase; the solve only breaks symmetry by roundoff.
        for i in 0..len / 2 {
            let m = 0.5 * (h[i] + h[len - 1 - i]);
            h[i] = m;
            h[len - 1 - i] = m;
        }
    }
    let residual = isi(&h, sps, span).amax();
    if residual > 1e-13 {
        return Err(Error::numerical(format!("RRC Nyquist refinement stalled at {residual:e}")));
    }
    Ok(h)
}

/// Pulse-shapes symbols into a complex baseband waveform.
///
/// Symbol `k` launches a copy of the taps starting at sample `k * sps`. The
/// output has `n * sps + span * sps` samples; the last pulse ends one sample
/// before the end. The optional pilot `A exp(i 2 pi f t)` runs over the whole
/// output, with `A = amplitude_ratio * sqrt(mean |symbol|^2 / sps)`.
pub fn modulate_waveform(
    symbols: &[QuadSymbol],
    rrc: &RrcSpec,
    pilot: Option<&PilotSpec>,
    sample_rate: f64,
) -> Result<Waveform> {
    if symbols.is_empty() {
        return Err(Error::domain("cannot modulate an empty symbol sequence"));
    }
    if let Some(p) = pilot {
        p.validate(rrc, sample_rate)?;
    }
    let h = rrc_taps(rrc)?;
    let sps = rrc.samples_per_symbol;
    let len = symbols.len() * sps + rrc.span_symbols * sps;
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (k, s) in symbols.iter().enumerate() {
        let a = Complex64::from(*s);
        for (o, &t) in out[k * sps..k * sps + h.len()].iter_mut().zip(h.iter()) {
            *o += a * t;
        }
    }
    if let Some(p) = pilot {
        let power = symbols.iter().map(|s| s.x * s.x + s.p * s.p).sum::<f64>() / symbols.len() as f64;
        let amp = p.amplitude_ratio * (power / sps as f64).sqrt();
        let w = 2.0 * PI * p.freq / sample_rate;
        for (n, o) in out.iter_mut().enumerate() {
            *o += Complex64::from_polar(amp, w * n as f64);
        }
    }
    Waveform::new(out, sample_rate)
}

/// Matched filter followed by decimation at the symbol instants.
///
/// Symbol `k` is read from `sum_j h[j] rx[delay + k sps + j]`; with
/// unit-energy Nyquist taps a transmitted unit symbol comes back as 1.
pub fn demodulate_symbols(rx: &Waveform, rrc: &RrcSpec, delay: usize, n_symbols: usize) -> Result<Vec<QuadSymbol>> {
    let h = rrc_taps(rrc)?;
    let sps = rrc.samples_per_symbol;
    if n_symbols == 0 {
        return Ok(Vec::new());
    }
    let needed = delay + (n_symbols - 1) * sps + h.len();
    if rx.len() < needed {
        return Err(Error::domain(format!(
            "waveform too short: {} samples, need {needed} for {n_symbols} symbols at delay {delay}",
            rx.len()
        )));
    }
    Ok((0..n_symbols)
        .map(|k| {
            let start = delay + k * sps;
            let acc = rx.samples[start..start + h.len()]
                .iter()
                .zip(h.iter())
                .fold(Complex64::new(0.0, 0.0), |acc, (z, &t)| acc + z * t);
            QuadSymbol::from(acc)
        })
        .collect())
}
