//! Waveform-domain transmitter and receiver processing.
//!
//! Transmit side: zero-stuffed upsampling, root-raised-cosine shaping and an
//! optional pilot tone. Receive side: pilot removal, delay synchronization,
//! matched filtering, pilot phase tracking and covariance-maximizing phase
//! alignment.

mod align;
mod fir;
mod pilot;
mod rrc;
mod sync;

pub use align::{alignment_covariance, phase_align, phase_noise_to_excess, MIN_ALIGN_SYMBOLS};
pub use fir::{fir_filter_same, kaiser_lowpass, lowpass_remove_pilot, LOWPASS_CUTOFF_HZ, LOWPASS_TAPS};
pub use pilot::pilot_phase_trace;
pub use rrc::{demodulate_symbols, modulate_waveform, rrc_taps};
pub use sync::{estimate_delay, MIN_OVERLAP, SYNC_PEAK_RATIO};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex baseband samples at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
}

impl Waveform {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::domain(format!("sample rate must be > 0, got {sample_rate}")));
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::domain("waveform has non-finite samples"));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Self {
        Self {
            samples: vec![Complex64::new(0.0, 0.0); len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Complex conjugate of every sample.
    pub fn conj(&self) -> Self {
        Self {
            samples: self.samples.iter().map(|z| z.conj()).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Delays by `delay` samples, prepending zeros and keeping the length
    /// `len() + delay`.
    pub fn delayed(&self, delay: usize) -> Self {
        let mut samples = vec![Complex64::new(0.0, 0.0); delay];
        samples.extend_from_slice(&self.samples);
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

/// Root-raised-cosine shaping filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrcSpec {
    pub roll_off: f64,
    /// Filter span in symbols; the filter has `span * sps + 1` taps.
    pub span_symbols: usize,
    pub samples_per_symbol: usize,
}

impl Default for RrcSpec {
    fn default() -> Self {
        Self {
            roll_off: 0.2,
            span_symbols: 20,
            samples_per_symbol: 50,
        }
    }
}

impl RrcSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.roll_off > 0.0 && self.roll_off < 1.0) {
            return Err(Error::config(format!("roll-off must lie in (0, 1), got {}", self.roll_off)));
        }
        if self.span_symbols == 0 || !self.span_symbols.is_multiple_of(2) {
            return Err(Error::config(format!(
                "RRC span must be a positive even number of symbols, got {}",
                self.span_symbols
            )));
        }
        if self.samples_per_symbol < 2 {
            return Err(Error::config("need at least two samples per symbol"));
        }
        Ok(())
    }

    pub fn n_taps(&self) -> usize {
        self.span_symbols * self.samples_per_symbol + 1
    }

    /// One-sided occupied bandwidth, `(1 + roll_off) * symbol_rate / 2`.
    pub fn band_edge(&self, sample_rate: f64) -> f64 {
        0.5 * (1.0 + self.roll_off) * sample_rate / self.samples_per_symbol as f64
    }
}

/// Frequency-multiplexed pilot tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotSpec {
    /// Tone frequency, Hz. Negative values sit on the conjugate side.
    pub freq: f64,
    /// Pilot amplitude over the RMS amplitude of the shaped signal.
    pub amplitude_ratio: f64,
}

impl Default for PilotSpec {
    fn default() -> Self {
        Self {
            freq: 15e6,
            amplitude_ratio: 3.0,
        }
    }
}

impl PilotSpec {
    /// Checks the tone sits between the signal band edge and Nyquist.
    pub fn validate(&self, rrc: &RrcSpec, sample_rate: f64) -> Result<()> {
        if !(self.amplitude_ratio > 0.0) || !self.amplitude_ratio.is_finite() {
            return Err(Error::config("pilot amplitude ratio must be > 0"));
        }
        let f = self.freq.abs();
        if f >= 0.5 * sample_rate {
            return Err(Error::config(format!("pilot at {f} Hz is above Nyquist")));
        }
        let edge = rrc.band_edge(sample_rate);
        if f <= edge {
            return Err(Error::config(format!(
                "pilot at {f} Hz lies inside the signal band (edge {edge} Hz)"
            )));
        }
        Ok(())
    }
}

/// Unwrapped pilot phase with summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub unwrapped_phase: Vec<f64>,
    /// Rate of the trace samples, Hz.
    pub sample_rate: f64,
    pub mean: f64,
    pub std: f64,
}

impl PhaseTrace {
    pub(crate) fn from_unwrapped(unwrapped_phase: Vec<f64>, sample_rate: f64) -> Self {
        let n = unwrapped_phase.len().max(1) as f64;
        let mean = unwrapped_phase.iter().sum::<f64>() / n;
        let var = unwrapped_phase.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            unwrapped_phase,
            sample_rate,
            mean,
            std: var.sqrt(),
        }
    }

    /// Applies `phi -> sign * phi + offset`, then shifts by a multiple of
    /// 2 pi so the mean lies in (-pi, pi].
    pub fn transformed(&self, sign: f64, offset: f64) -> Self {
        let raw: Vec<f64> = self.unwrapped_phase.iter().map(|p| sign * p + offset).collect();
        let n = raw.len().max(1) as f64;
        let mean = raw.iter().sum::<f64>() / n;
        let shift = wrap_angle(mean) - mean;
        Self::from_unwrapped(raw.into_iter().map(|p| p + shift).collect(), self.sample_rate)
    }
}

/// Maps an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}
