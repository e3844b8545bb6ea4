use std::f64::consts::PI;

use cvmdi_core::channel::{draw_symbols, ou_phase, CalibrationRecord, QuadSymbol};
use cvmdi_core::dsp::*;
use cvmdi_core::harness::{process_frame, receive_frame, simulate_frame, Mode, ProtocolConfig};
use cvmdi_core::postprocess::{FrameData, FrameStats};
use cvmdi_core::rng::{stream, Role};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

const FS: f64 = 1e9;

fn symbols(n: usize, seed: u64) -> Vec<QuadSymbol> {
    draw_symbols(n, 6.5, &mut stream(seed, 0, Role::Test)).unwrap()
}

fn rms_error(a: &[QuadSymbol], b: &[QuadSymbol]) -> f64 {
    let e: f64 = a.iter().zip(b).map(|(x, y)| (x.x - y.x).powi(2) + (x.p - y.p).powi(2)).sum();
    (e / (2 * a.len()) as f64).sqrt()
}

/// Welch estimate of the power spectral density at `f`, relative to the
/// density at DC.
fn relative_density_db(w: &Waveform, f: f64) -> f64 {
    let seg = 1 << 14;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);
    let window: Vec<f64> = (0..seg).map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / seg as f64).cos()).collect();
    let mut psd = vec![0.0; seg];
    for chunk in w.samples.chunks_exact(seg).step_by(2) {
        let mut buf: Vec<Complex64> = chunk.iter().zip(&window).map(|(z, h)| z * h).collect();
        fft.process(&mut buf);
        psd.iter_mut().zip(&buf).for_each(|(p, z)| *p += z.norm_sqr());
    }
    let bin = (f / FS * seg as f64).round() as usize;
    // Average a few bins on each side to tame the estimator variance.
    let avg = |c: usize| -> f64 { (c - 3..=c + 3).map(|k| psd[k % seg]).sum::<f64>() / 7.0 };
    10.0 * (avg(bin) / avg(seg)).log10()
}

#[test]
fn occupied_band_ends_before_the_pilot() {
    let w = modulate_waveform(&symbols(100_000, 1), &RrcSpec::default(), None, FS).unwrap();
    let at_pilot = relative_density_db(&w, 15e6);
    assert!(at_pilot < -40.0, "{at_pilot} dB at 15 MHz");
    let in_band = relative_density_db(&w, 9e6);
    assert!(in_band > -1.0, "{in_band} dB at 9 MHz");
}

#[test]
fn noiseless_loopback_with_delay() {
    let rrc = RrcSpec::default();
    let s = symbols(5_000, 2);
    let w = modulate_waveform(&s, &rrc, None, FS).unwrap();
    for delay in [0, 137, 4999] {
        let rx = w.delayed(delay);
        let back = demodulate_symbols(&rx, &rrc, delay, s.len()).unwrap();
        assert!(rms_error(&back, &s) < 1e-10 * 6.5f64.sqrt());
    }
}

#[test]
fn pilot_removal_is_transparent() {
    let rrc = RrcSpec::default();
    let pilot = PilotSpec::default();
    let s = symbols(50_000, 3);
    let w = modulate_waveform(&s, &rrc, Some(&pilot), FS).unwrap();
    let clean = lowpass_remove_pilot(&w, LOWPASS_CUTOFF_HZ, &rrc, &pilot).unwrap();
    let back = demodulate_symbols(&clean, &rrc, 0, s.len()).unwrap();
    let excess = rms_error(&back, &s).powi(2);
    assert!(excess < 0.005 * 6.5, "excess variance {excess}");
}

#[test]
fn demodulated_noise_equals_in_band_noise() {
    let rrc = RrcSpec::default();
    let s = symbols(40_000, 4);
    let mut w = modulate_waveform(&s, &rrc, None, FS).unwrap();
    let sigma = 0.3;
    let mut rng = stream(4, 1, Role::Test);
    for z in w.samples.iter_mut() {
        let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        *z += sigma * Complex64::new(a, b);
    }
    let back = demodulate_symbols(&w, &rrc, 0, s.len()).unwrap();
    // Unit-energy matched filter: white noise of variance s^2 per sample
    // arrives with variance s^2 per symbol quadrature.
    let var = rms_error(&back, &s).powi(2);
    assert!((var / (sigma * sigma) - 1.0).abs() < 0.03, "{var}");
}

#[test]
fn delay_is_exact_on_a_grid_of_shifts() {
    let w = modulate_waveform(&symbols(260, 5), &RrcSpec::default(), None, FS).unwrap();
    let max_lag = 10_000;
    for shift in (0..=max_lag).step_by(97).chain([1, 127, 128, 129, max_lag - 1, max_lag]) {
        let mut rx = w.delayed(shift);
        rx.samples.resize(w.len() + max_lag, Complex64::new(0.0, 0.0));
        assert_eq!(estimate_delay(&w, &rx, max_lag).unwrap(), shift);
    }
}

#[test]
fn pilot_trace_follows_channel_phase() {
    let rrc = RrcSpec::default();
    let pilot = PilotSpec::default();
    let n = 20_000;
    let w = modulate_waveform(&symbols(n, 6), &rrc, Some(&pilot), FS).unwrap();
    let phase = ou_phase(n + rrc.span_symbols, 0.06, 200.0, -3.0, &mut stream(6, 0, Role::BobChannel));
    let rx = Waveform::new(
        w.samples
            .iter()
            .enumerate()
            .map(|(k, z)| z * Complex64::from_polar(1.0, phase[k / 50]))
            .collect(),
        FS,
    )
    .unwrap();
    let trace = pilot_phase_trace(&rx, &pilot).unwrap();
    assert!((trace.std / 0.06 - 1.0).abs() < 0.1, "{}", trace.std);
    assert!((wrap_angle(trace.mean) + 3.0).abs() < 0.02, "{}", trace.mean);
}

/// Estimated alignment against alignment with the true channel phases.
#[test]
fn alignment_is_as_good_as_a_genie() {
    let cfg = ProtocolConfig {
        n_symbols: 100_000,
        frame_samples: 5_000_000,
        ..ProtocolConfig::default()
    };
    let calib = CalibrationRecord {
        vacuum_variance_raw: cfg.raw_gain * (1.0 + cfg.nu_el),
        electronic_variance_raw: cfg.raw_gain * cfg.nu_el,
        snu_scale: 1.0 / cfg.raw_gain,
        n_samples: 0,
    };
    let raw = simulate_frame(&cfg, 0, cfg.n_symbols, Mode::Symbol).unwrap();
    let rec = receive_frame(&cfg, &raw).unwrap();
    let aligned = process_frame(&cfg, &calib, &rec).unwrap();
    let alice: Vec<QuadSymbol> = rec.alice.iter().map(|q| q.rotate(cfg.phase_mean_a)).collect();
    let bob: Vec<QuadSymbol> = rec.bob.iter().map(|q| q.rotate(cfg.phase_mean_b)).collect();
    let genie = FrameStats::from_frame(&FrameData {
        alice: &alice,
        bob: &bob,
        gamma: &aligned.gamma,
    })
    .unwrap();
    let (_, _, xi_genie) = genie.channel_estimate(cfg.eta).unwrap();
    let extra = aligned.summary.xi - xi_genie;
    assert!(extra.abs() < 1e-3, "alignment adds {extra} SNU");
}
