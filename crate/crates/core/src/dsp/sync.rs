use num_complex::Complex64;
use rustfft::FftPlanner;

use super::Waveform;
use crate::error::{Error, Result};

/// Minimum number of overlapping samples for a delay estimate.
pub const MIN_OVERLAP: usize = 10_000;
/// A peak must exceed this multiple of the RMS correlation floor.
pub const SYNC_PEAK_RATIO: f64 = 5.0;
/// Lags within this distance of the peak are excluded from the floor.
const PEAK_GUARD: usize = 128;
/// At most this many transmitted samples take part in the correlation.
const MAX_WINDOW: usize = 1 << 18;

/// Integer delay of `rx` relative to the transmitted waveform `tx`.
///
/// Searches lags `0..=max_lag` for the maximum of
/// `|sum_n rx[n + lag] conj(tx[n])|`, using at most the first 2^18 samples of
/// `tx`. Taking the magnitude makes the estimate insensitive to a constant
/// complex gain, including the sign flip on the relay's difference port.
pub fn estimate_delay(tx: &Waveform, rx: &Waveform, max_lag: usize) -> Result<usize> {
    let window = tx.len().min(MAX_WINDOW).min(rx.len());
    if window < MIN_OVERLAP {
        return Err(Error::domain(format!(
            "delay estimation needs {MIN_OVERLAP} overlapping samples, have {window}"
        )));
    }
    let max_lag = max_lag.min(rx.len() - window);
    let rx_len = window + max_lag;
    let fft_len = (rx_len + window).next_power_of_two();

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    let zero = Complex64::new(0.0, 0.0);
    let mut a: Vec<Complex64> = rx.samples[..rx_len].to_vec();
    a.resize(fft_len, zero);
    let mut b: Vec<Complex64> = tx.samples[..window].to_vec();
    b.resize(fft_len, zero);
    fwd.process(&mut a);
    fwd.process(&mut b);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y.conj());
    inv.process(&mut a);

    let mag: Vec<f64> = a[..=max_lag].iter().map(|z| z.norm()).collect();
    let (peak_lag, peak) = mag
        .iter()
        .copied()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .expect("at least one lag");
    let floor: Vec<f64> = mag
        .iter()
        .enumerate()
        .filter(|(k, _)| k.abs_diff(peak_lag) > PEAK_GUARD)
        .map(|(_, v)| *v)
        .collect();
    if floor.is_empty() {
        // No room to judge significance; accept the argmax.
        return Ok(peak_lag);
    }
    let rms = (floor.iter().map(|v| v * v).sum::<f64>() / floor.len() as f64).sqrt();
    if !(peak > SYNC_PEAK_RATIO * rms) {
        return Err(Error::Sync(format!(
            "correlation peak {peak:.3e} at lag {peak_lag} is below {SYNC_PEAK_RATIO} x floor RMS {rms:.3e}"
        )));
    }
    Ok(peak_lag)
}
