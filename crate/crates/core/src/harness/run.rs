use std::f64::consts::PI;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ProtocolConfig;
use crate::channel::{
    calibrate_shot_noise_seeded, draw_relay_noise, draw_symbols, propagate_channel, relay_bsm, CalibrationRecord,
    QuadSymbol,
};
use crate::dsp::{
    demodulate_symbols, estimate_delay, lowpass_remove_pilot, modulate_waveform, phase_align, pilot_phase_trace,
    wrap_angle, Waveform,
};
use crate::error::{Error, Result};
use crate::postprocess::{
    correlation, displacement_infer, estimate_from_stats, rate_asymptotic, rate_finite, worst_case_bounds,
    DisplacementCoeffs, EstimationResult, FrameData, FrameStats, KeyRateReport,
};
use crate::rng::{stream, Role};

/// How the quantum layer is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Direct symbol maps; matches the covariance model exactly.
    Symbol,
    /// Pulse shaping, pilot, relay latency and the full receiver chain.
    Waveform,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symbol" => Ok(Mode::Symbol),
            "waveform" => Ok(Mode::Waveform),
            other => Err(Error::config(format!("unknown mode `{other}` (expected symbol or waveform)"))),
        }
    }
}

/// What the relay hands over for one frame, in raw detector units.
#[derive(Debug, Clone, PartialEq)]
pub enum RawPayload {
    Symbols(Vec<QuadSymbol>),
    Waveform(Waveform),
}

/// One simulated frame before any receiver processing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub frame_id: u64,
    /// Symbols as prepared by each sender, before any channel phase.
    pub alice: Vec<QuadSymbol>,
    pub bob: Vec<QuadSymbol>,
    pub payload: RawPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotStats {
    /// Circular position of the mean phase, rad in (-pi, pi].
    pub mean: f64,
    pub std: f64,
    pub n_points: usize,
}

/// Relay outputs reduced to one raw sample per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub frame_id: u64,
    pub alice: Vec<QuadSymbol>,
    pub bob: Vec<QuadSymbol>,
    pub gamma_raw: Vec<QuadSymbol>,
    pub delay: Option<usize>,
    pub pilot: Option<PilotStats>,
}

/// Per-frame figures kept in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub frame_id: u64,
    pub n_symbols: usize,
    pub xi: f64,
    pub tau_a: f64,
    pub tau_b: f64,
    /// Alignment rotations, circular mean over blocks.
    pub theta_a: f64,
    pub theta_b: f64,
    pub align_blocks: usize,
    pub delay: Option<usize>,
    pub pilot: Option<PilotStats>,
    pub corr_ux_xa: f64,
    pub corr_gx_xa: f64,
    pub corr_ux_xb: f64,
    pub displacement: DisplacementCoeffs,
}

/// A fully processed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub alice: Vec<QuadSymbol>,
    pub bob: Vec<QuadSymbol>,
    /// Relay outputs in SNU.
    pub gamma: Vec<QuadSymbol>,
    /// Bob's inference of Alice's symbols.
    pub displaced: Vec<QuadSymbol>,
    pub summary: FrameSummary,
    pub stats: FrameStats,
}

/// Key-rate results of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    /// Asymptotic rate at the configured channel.
    pub configured: KeyRateReport,
    /// Finite-size rate from the estimates; absent with fewer than two frames.
    pub finite: Option<KeyRateReport>,
    /// Final key length after privacy amplification.
    pub key_bits: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ProtocolConfig,
    pub mode: Mode,
    pub n_frames: usize,
    pub calibration: Option<CalibrationRecord>,
    pub frames: Vec<FrameSummary>,
    pub estimation: Option<EstimationResult>,
    pub rates: Option<RateSummary>,
}

impl RunReport {
    pub fn is_empty(&self) -> bool {
        self.n_frames == 0
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub frames: Vec<FrameRecord>,
}

pub fn calibrate(cfg: &ProtocolConfig) -> Result<CalibrationRecord> {
    calibrate_shot_noise_seeded(&cfg.relay(), cfg.calibration_samples, cfg.seed).map_err(|e| e.in_stage("calibrate"))
}

/// Draws one frame's symbols and passes them through channels and relay.
pub fn simulate_frame(cfg: &ProtocolConfig, frame_id: u64, n_symbols: usize, mode: Mode) -> Result<RawFrame> {
    let seed = cfg.seed;
    let alice = draw_symbols(n_symbols, cfg.v_a, &mut stream(seed, frame_id, Role::AliceSymbols))?;
    let bob = draw_symbols(n_symbols, cfg.v_b, &mut stream(seed, frame_id, Role::BobSymbols))?;
    let pa = propagate_channel(&alice, &cfg.channel_a(), &mut stream(seed, frame_id, Role::AliceChannel))?;
    let pb = propagate_channel(&bob, &cfg.channel_b(), &mut stream(seed, frame_id, Role::BobChannel))?;
    let relay = cfg.relay();
    let gain = relay.raw_gain.sqrt();
    let mut relay_rng = stream(seed, frame_id, Role::Relay);
    let payload = match mode {
        Mode::Symbol => {
            let g = relay_bsm(&pa.symbols, &pb.symbols, &relay, &mut relay_rng)?;
            RawPayload::Symbols(g.into_iter().map(|q| QuadSymbol::new(gain * q.x, gain * q.p)).collect())
        }
        Mode::Waveform => {
            relay.validate()?;
            let rrc = cfg.rrc();
            let pilot = cfg.pilot();
            let fs = cfg.sample_rate;
            let mut wa = modulate_waveform(&alice, &rrc, None, fs)?;
            through_channel(&mut wa, cfg.tau_a, &pa.phase, &pa.noise, cfg)?;
            let mut wb = modulate_waveform(&bob, &rrc, Some(&pilot), fs)?;
            through_channel(&mut wb, cfg.tau_b, &pb.phase, &pb.noise, cfg)?;
            wa.samples
                .par_iter_mut()
                .zip(wb.samples.par_iter())
                .for_each(|(a, b)| *a = relay.combine(*a, *b));
            drop(wb);
            let noise = draw_relay_noise(n_symbols, &relay, &mut relay_rng);
            add_shaped(&mut wa, &noise, cfg)?;
            wa.samples.par_iter_mut().for_each(|z| *z *= gain);
            RawPayload::Waveform(wa.delayed(cfg.relay_delay))
        }
    };
    Ok(RawFrame {
        frame_id,
        alice,
        bob,
        payload,
    })
}

/// `w -> sqrt(tau) e^{i theta(t)} w + shaped(noise)`, with the per-symbol
/// phase interpolated linearly between pulse peaks.
fn through_channel(w: &mut Waveform, tau: f64, phase: &[f64], noise: &[QuadSymbol], cfg: &ProtocolConfig) -> Result<()> {
    let sps = cfg.samples_per_symbol() as f64;
    let center = (cfg.rrc().n_taps() - 1) as f64 / 2.0;
    let g = tau.sqrt();
    let last = phase.len() - 1;
    let constant = phase.windows(2).all(|p| p[0] == p[1]);
    w.samples.par_iter_mut().enumerate().for_each(|(n, z)| {
        let theta = if constant {
            phase[0]
        } else {
            let u = ((n as f64 - center) / sps).clamp(0.0, last as f64);
            let k = (u.floor() as usize).min(last);
            let f = u - k as f64;
            let next = phase[(k + 1).min(last)];
            phase[k] + f * (next - phase[k])
        };
        *z *= g * Complex64::from_polar(1.0, theta);
    });
    if noise.iter().any(|q| q.x != 0.0 || q.p != 0.0) {
        add_shaped(w, noise, cfg)?;
    }
    Ok(())
}

fn add_shaped(w: &mut Waveform, symbols: &[QuadSymbol], cfg: &ProtocolConfig) -> Result<()> {
    let shaped = modulate_waveform(symbols, &cfg.rrc(), None, cfg.sample_rate)?;
    w.samples
        .par_iter_mut()
        .zip(shaped.samples.par_iter())
        .for_each(|(a, b)| *a += b);
    Ok(())
}

/// Receiver chain. Symbol payloads pass through unchanged.
///
/// Waveforms: pilot removal, delay search against Alice's shaped symbols,
/// matched filtering, and phase tracking of Bob's pilot. The relay's
/// difference port carries Bob's field conjugated and negated, so the pilot
/// is tracked on the conjugate waveform and shifted by pi and by the
/// latency.
pub fn receive_frame(cfg: &ProtocolConfig, raw: &RawFrame) -> Result<ReceivedFrame> {
    let n = raw.alice.len();
    let (gamma_raw, delay, pilot) = match &raw.payload {
        RawPayload::Symbols(g) => (g.clone(), None, None),
        RawPayload::Waveform(rx) => {
            let rrc = cfg.rrc();
            let pilot = cfg.pilot();
            let clean = lowpass_remove_pilot(rx, cfg.lowpass_cutoff, &rrc, &pilot)?;
            let reference = modulate_waveform(&raw.alice, &rrc, None, rx.sample_rate)?;
            let delay = estimate_delay(&reference, &clean, cfg.max_delay)?;
            let gamma = demodulate_symbols(&clean, &rrc, delay, n)?;
            drop(clean);
            let trace = pilot_phase_trace(&rx.conj(), &pilot)?;
            let omega = 2.0 * PI * pilot.freq / rx.sample_rate;
            let trace = trace.transformed(1.0, -PI + omega * delay as f64);
            let stats = PilotStats {
                mean: wrap_angle(trace.mean),
                std: trace.std,
                n_points: trace.unwrapped_phase.len(),
            };
            (gamma, Some(delay), Some(stats))
        }
    };
    Ok(ReceivedFrame {
        frame_id: raw.frame_id,
        alice: raw.alice.clone(),
        bob: raw.bob.clone(),
        gamma_raw,
        delay,
        pilot,
    })
}

fn circular_mean(angles: &[f64]) -> f64 {
    let s: Complex64 = angles.iter().map(|a| Complex64::from_polar(1.0, *a)).sum();
    s.arg()
}

/// Calibration, phase alignment, displacement and frame statistics.
pub fn process_frame(cfg: &ProtocolConfig, calib: &CalibrationRecord, rec: &ReceivedFrame) -> Result<FrameRecord> {
    let gamma = calib.to_snu(&rec.gamma_raw);
    let n = gamma.len();
    let block = if cfg.align_block == 0 { n } else { cfg.align_block };
    let bob_ref: Vec<QuadSymbol> = gamma.iter().map(|g| QuadSymbol::new(-g.x, g.p)).collect();
    let mut alice = Vec::with_capacity(n);
    let mut bob = Vec::with_capacity(n);
    let mut theta_a = Vec::new();
    let mut theta_b = Vec::new();
    // A short tail block is folded into its predecessor.
    let mut starts: Vec<usize> = (0..n).step_by(block).collect();
    if starts.len() > 1 && n - starts[starts.len() - 1] < block {
        starts.pop();
    }
    for (i, &s) in starts.iter().enumerate() {
        let e = starts.get(i + 1).copied().unwrap_or(n);
        let (ta, ra) = phase_align(&rec.alice[s..e], &gamma[s..e])?;
        let (tb, rb) = phase_align(&rec.bob[s..e], &bob_ref[s..e])?;
        alice.extend(ra);
        bob.extend(rb);
        theta_a.push(ta);
        theta_b.push(tb);
    }
    let (displaced, coeffs) = displacement_infer(&gamma, &bob, None)?;
    let stats = FrameStats::from_frame(&FrameData {
        alice: &alice,
        bob: &bob,
        gamma: &gamma,
    })?;
    let (tau_a, tau_b, xi) = stats.channel_estimate(cfg.eta)?;
    let col = |v: &[QuadSymbol], p: bool| -> Vec<f64> { v.iter().map(|q| if p { q.p } else { q.x }).collect() };
    let (ux, xa, gx, xb) = (col(&displaced, false), col(&alice, false), col(&gamma, false), col(&bob, false));
    let summary = FrameSummary {
        frame_id: rec.frame_id,
        n_symbols: n,
        xi,
        tau_a,
        tau_b,
        theta_a: circular_mean(&theta_a),
        theta_b: circular_mean(&theta_b),
        align_blocks: theta_a.len(),
        delay: rec.delay,
        pilot: rec.pilot,
        corr_ux_xa: correlation(&ux, &xa),
        corr_gx_xa: correlation(&gx, &xa),
        corr_ux_xb: correlation(&ux, &xb),
        displacement: coeffs,
    };
    Ok(FrameRecord {
        alice,
        bob,
        gamma,
        displaced,
        summary,
        stats,
    })
}

/// Pooled estimate plus worst-case bounds when there are at least two frames.
pub fn estimate_run(cfg: &ProtocolConfig, calib: &CalibrationRecord, stats: &[FrameStats]) -> Result<EstimationResult> {
    let est = estimate_from_stats(stats, Some(calib), cfg.eta)?;
    if stats.len() >= 2 {
        worst_case_bounds(&est, cfg.epsilon_pe, stats.len())
    } else {
        Ok(est)
    }
}

pub fn rate_run(cfg: &ProtocolConfig, est: &EstimationResult) -> Result<RateSummary> {
    let model = cfg.eb_model()?;
    let settings = cfg.rate_settings();
    let configured = rate_asymptotic(&model, &settings)?;
    let n_block = est.n_used as usize;
    let finite = if est.worst_case.is_some() {
        Some(rate_finite(&model, est, n_block, &settings)?)
    } else {
        None
    };
    let key_bits = finite.map(|r| (r.rate_finite * n_block as f64 * (1.0 - r.fer)).floor() as u64);
    Ok(RateSummary {
        configured,
        finite,
        key_bits,
    })
}

fn frame_ids(cfg: &ProtocolConfig) -> Vec<(u64, usize)> {
    cfg.frame_sizes().into_iter().enumerate().map(|(i, n)| (i as u64, n)).collect()
}

/// One frame from symbol draws to statistics, with the failing stage named.
pub fn run_frame(
    cfg: &ProtocolConfig,
    calib: &CalibrationRecord,
    frame_id: u64,
    n_symbols: usize,
    mode: Mode,
) -> Result<FrameRecord> {
    let raw = simulate_frame(cfg, frame_id, n_symbols, mode).map_err(|e| e.in_stage("simulate"))?;
    let rec = receive_frame(cfg, &raw).map_err(|e| e.in_stage("dsp"))?;
    drop(raw);
    process_frame(cfg, calib, &rec).map_err(|e| e.in_stage("estimate"))
}

/// End-to-end run.
pub fn run_experiment(cfg: &ProtocolConfig, mode: Mode) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.n_symbols == 0 {
        return Ok(RunOutput {
            report: RunReport {
                config: cfg.clone(),
                mode,
                n_frames: 0,
                calibration: None,
                frames: Vec::new(),
                estimation: None,
                rates: None,
            },
            frames: Vec::new(),
        });
    }
    let calib = calibrate(cfg)?;
    run_with_calibration(cfg, mode, &calib)
}

/// [`run_experiment`] with a calibration made earlier.
pub fn run_with_calibration(cfg: &ProtocolConfig, mode: Mode, calib: &CalibrationRecord) -> Result<RunOutput> {
    cfg.validate()?;
    let frames = frame_ids(cfg)
        .into_par_iter()
        .map(|(id, n)| run_frame(cfg, calib, id, n, mode))
        .collect::<Result<Vec<_>>>()?;
    let stats: Vec<FrameStats> = frames.iter().map(|f| f.stats).collect();
    let est = estimate_run(cfg, calib, &stats).map_err(|e| e.in_stage("estimate"))?;
    let rates = rate_run(cfg, &est).map_err(|e| e.in_stage("keyrate"))?;
    Ok(RunOutput {
        report: RunReport {
            config: cfg.clone(),
            mode,
            n_frames: frames.len(),
            calibration: Some(*calib),
            frames: frames.iter().map(|f| f.summary.clone()).collect(),
            estimation: Some(est),
            rates: Some(rates),
        },
        frames,
    })
}

/// One point of a transmissivity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau_b: f64,
    /// Fiber length at 0.2 dB/km.
    pub distance_km: f64,
    pub xi_hat: f64,
    pub xi_wc: f64,
    pub rate_configured: f64,
    pub rate_asym: f64,
    pub rate_finite: f64,
    pub rate_finite_signed: f64,
}

/// Runs the configuration at each of Bob's transmissivities, sharing one
/// calibration. Electronic noise is held fixed.
pub fn run_sweep(cfg: &ProtocolConfig, tau_b: &[f64], mode: Mode) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let calib = calibrate(cfg)?;
    tau_b
        .iter()
        .map(|&t| {
            let c = ProtocolConfig { tau_b: t, ..cfg.clone() };
            let out = run_with_calibration(&c, mode, &calib)?;
            let est = out.report.estimation.expect("non-empty run has an estimate");
            let rates = out.report.rates.expect("non-empty run has rates");
            let finite = rates
                .finite
                .ok_or_else(|| Error::config("a sweep needs at least two frames per point"))?;
            Ok(SweepPoint {
                tau_b: t,
                distance_km: 0.0 - 50.0 * t.log10(),
                xi_hat: est.xi_hat_relay,
                xi_wc: est.worst_case.map(|w| w.xi_wc).unwrap_or(f64::NAN),
                rate_configured: rates.configured.rate_asym,
                rate_asym: finite.rate_asym,
                rate_finite: finite.rate_finite,
                rate_finite_signed: finite.rate_finite_signed,
            })
        })
        .collect()
}
