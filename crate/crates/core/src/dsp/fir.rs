use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::{PilotSpec, RrcSpec, Waveform};
use crate::error::{Error, Result};

pub const LOWPASS_CUTOFF_HZ: f64 = 13.5e6;
pub const LOWPASS_TAPS: usize = 801;
/// Kaiser design attenuation for the pilot-removal filter. At 801 taps this
/// gives >= 40 dB from 15 MHz up and < 0.07 dB ripple below 12 MHz.
const LOWPASS_ATTEN_DB: f64 = 40.0;

const FFT_BLOCK: usize = 1 << 15;

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

/// Linear-phase Kaiser-windowed-sinc lowpass with unit DC gain.
///
/// `cutoff` is in cycles per sample; `n_taps` must be odd.
pub fn kaiser_lowpass(n_taps: usize, cutoff: f64, atten_db: f64) -> Vec<f64> {
    assert!(n_taps % 2 == 1, "linear-phase lowpass needs an odd tap count");
    let beta = kaiser_beta(atten_db);
    let mid = (n_taps / 2) as f64;
    let norm = bessel_i0(beta);
    let mut h: Vec<f64> = (0..n_taps)
        .map(|n| {
            let m = n as f64 - mid;
            let sinc = if m == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * m).sin() / (PI * m)
            };
            let r = m / mid;
            sinc * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= dc);
    h
}

/// Filters with an odd-length linear-phase FIR and removes its group delay,
/// so the output is aligned sample-for-sample with the input.
///
/// `y[n] = sum_j h[j] x[n + (L-1)/2 - j]`, with `x` zero outside its
/// support. Overlap-save FFT convolution over independent blocks.
pub fn fir_filter_same(x: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let l = taps.len();
    assert!(l % 2 == 1, "group delay compensation needs an odd tap count");
    if x.is_empty() {
        return Vec::new();
    }
    let d = (l - 1) / 2;
    let fft_len = FFT_BLOCK.max((2 * l).next_power_of_two());
    let valid = fft_len - l + 1;

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    let mut hf: Vec<Complex64> = taps.iter().map(|&t| Complex64::new(t, 0.0)).collect();
    hf.resize(fft_len, Complex64::new(0.0, 0.0));
    fwd.process(&mut hf);
    let scale = 1.0 / fft_len as f64;

    let n = x.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    out.par_chunks_mut(valid).enumerate().for_each(|(b, chunk)| {
        // Output n maps to full-convolution index n + d.
        let c0 = (b * valid + d) as isize;
        let start = c0 - (l as isize - 1);
        let mut buf: Vec<Complex64> = (0..fft_len as isize)
            .map(|i| {
                let idx = start + i;
                if idx >= 0 && (idx as usize) < n {
                    x[idx as usize]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        fwd.process(&mut buf);
        buf.iter_mut().zip(&hf).for_each(|(a, h)| *a *= h * scale);
        inv.process(&mut buf);
        chunk.copy_from_slice(&buf[l - 1..l - 1 + chunk.len()]);
    });
    out
}

/// Gain of `taps` on the raised-cosine pulse at its peak: the centre tap of
/// `rrc * taps * rrc`.
fn raised_cosine_gain(taps: &[f64], rrc: &[f64]) -> f64 {
    let mid = (taps.len() / 2) as isize;
    let n = rrc.len() as isize;
    (-(n - 1)..n)
        .filter(|m| m.abs() <= mid)
        .map(|m| {
            let rc: f64 = (0..n)
                .filter(|&k| (0..n).contains(&(k + m)))
                .map(|k| rrc[k as usize] * rrc[(k + m) as usize])
                .sum();
            rc * taps[(mid + m) as usize]
        })
        .sum()
}

/// Removes the pilot with the 801-tap linear-phase lowpass.
///
/// The cutoff must sit strictly between the signal band edge and the pilot
/// frequency. Group delay is compensated, so delays measured downstream are
/// those of the unfiltered waveform. Taps are scaled so that matched-filtered
/// symbols pass with unit gain; passband ripple would otherwise show up as
/// excess noise.
pub fn lowpass_remove_pilot(w: &Waveform, cutoff: f64, rrc: &RrcSpec, pilot: &PilotSpec) -> Result<Waveform> {
    let edge = rrc.band_edge(w.sample_rate);
    let f_pilot = pilot.freq.abs();
    if !(cutoff > edge && cutoff < f_pilot) {
        return Err(Error::config(format!(
            "lowpass cutoff {cutoff} Hz must lie between the band edge {edge} Hz and the pilot {f_pilot} Hz"
        )));
    }
    let mut taps = kaiser_lowpass(LOWPASS_TAPS, cutoff / w.sample_rate, LOWPASS_ATTEN_DB);
    let g = raised_cosine_gain(&taps, &super::rrc_taps(rrc)?);
    taps.iter_mut().for_each(|t| *t /= g);
    Waveform::new(fir_filter_same(&w.samples, &taps), w.sample_rate)
}
