use std::f64::consts::PI;

use num_complex::Complex64;

use super::fir::{fir_filter_same, kaiser_lowpass};
use super::{wrap_angle, PhaseTrace, PilotSpec, Waveform};
use crate::error::{Error, Result};

/// Passband of the narrowband filter around the down-converted pilot.
const PILOT_PASSBAND_HZ: f64 = 1e6;
/// Start of its stopband. The signal band must begin further out.
const PILOT_STOPBAND_HZ: f64 = 2.5e6;
const PILOT_ATTEN_DB: f64 = 60.0;
/// Trace rate as a multiple of the passband.
const TRACE_OVERSAMPLE: f64 = 8.0;
/// Pilot power below this fraction of the total counts as lost.
const PILOT_MIN_FRACTION: f64 = 1e-3;

/// Unwrapped phase of the pilot tone.
///
/// Mixes the pilot down to DC, isolates it with a narrow linear-phase
/// lowpass, decimates, and unwraps the angle. Filter transients at both
/// ends are dropped.
pub fn pilot_phase_trace(rx: &Waveform, pilot: &PilotSpec) -> Result<PhaseTrace> {
    let fs = rx.sample_rate;
    let trans = (PILOT_STOPBAND_HZ - PILOT_PASSBAND_HZ) / fs;
    let mut n_taps = ((PILOT_ATTEN_DB - 8.0) / (2.285 * 2.0 * PI * trans)).ceil() as usize;
    n_taps |= 1;
    if rx.len() < 4 * n_taps {
        return Err(Error::domain(format!(
            "pilot tracking needs at least {} samples, have {}",
            4 * n_taps,
            rx.len()
        )));
    }
    let w = -2.0 * PI * pilot.freq / fs;
    let mixed: Vec<Complex64> = rx
        .samples
        .iter()
        .enumerate()
        .map(|(n, z)| z * Complex64::from_polar(1.0, w * n as f64))
        .collect();
    let cutoff = 0.5 * (PILOT_PASSBAND_HZ + PILOT_STOPBAND_HZ) / fs;
    let taps = kaiser_lowpass(n_taps, cutoff, PILOT_ATTEN_DB);
    let base = fir_filter_same(&mixed, &taps);

    let decim = ((fs / (TRACE_OVERSAMPLE * PILOT_PASSBAND_HZ)).floor() as usize).max(1);
    let kept = &base[n_taps..base.len() - n_taps];
    let tone_power = kept.iter().map(|z| z.norm_sqr()).sum::<f64>() / kept.len() as f64;
    let total = rx.mean_power();
    if !(tone_power > PILOT_MIN_FRACTION * total) || total == 0.0 {
        return Err(Error::PilotLost(format!(
            "pilot power fraction {:.2e} below {PILOT_MIN_FRACTION:.0e}",
            if total > 0.0 { tone_power / total } else { 0.0 }
        )));
    }

    let mut unwrapped = Vec::with_capacity(kept.len() / decim + 1);
    let mut prev_raw = 0.0_f64;
    let mut acc = 0.0_f64;
    for (k, z) in kept.iter().step_by(decim).enumerate() {
        let a = z.arg();
        acc = if k == 0 { a } else { acc + wrap_angle(a - prev_raw) };
        unwrapped.push(acc);
        prev_raw = a;
    }
    Ok(PhaseTrace::from_unwrapped(unwrapped, fs / decim as f64))
}
