//! Report files.
//!
//! `emit_report` writes into one directory:
//!
//! * `summary.json`: headline numbers (see [`Summary`]).
//! * `run.json`: the complete [`RunReport`].
//! * `frames.csv`: one row per frame (see [`FrameRow`]).
//! * `phase.csv`: alignment angles and pilot statistics per frame.
//! * `keyrate.csv`: configured, estimated-asymptotic and finite-size rates.
//! * `scatter.csv`: leading symbols of the first frame, when arrays are given.
//! * `config.toml`: the configuration sidecar.
//!
//! Floats are written in shortest round-trip form, so every value reads
//! back bit-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ProtocolConfig;
use super::io::ProcessedArrays;
use super::run::{FrameRecord, Mode, RateSummary, RunReport, SweepPoint};
use crate::channel::{CalibrationRecord, QuadSymbol};
use crate::error::{Error, Result};
use crate::postprocess::KeyRateReport;

/// Number of leading symbols written to `scatter.csv`.
pub const SCATTER_POINTS: usize = 2000;

pub const SUMMARY_FORMAT: &str = "cvmdi-summary-1";

/// Configured protocol parameters echoed into the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEcho {
    pub v_a: f64,
    pub v_b: f64,
    pub symbol_rate: f64,
    pub n_symbols: usize,
    /// Configured excess noise at the relay input, SNU.
    pub xi: f64,
    pub tau_a: f64,
    pub tau_b: f64,
    pub eta: f64,
    pub beta_ir: f64,
    pub nu_el: f64,
    pub phase_sigma: f64,
    pub epsilon_pe: f64,
    pub fer: f64,
}

impl ParameterEcho {
    fn new(c: &ProtocolConfig) -> Self {
        Self {
            v_a: c.v_a,
            v_b: c.v_b,
            symbol_rate: c.symbol_rate,
            n_symbols: c.n_symbols,
            xi: c.relay_excess(),
            tau_a: c.tau_a,
            tau_b: c.tau_b,
            eta: c.eta,
            beta_ir: c.beta_ir,
            nu_el: c.nu_el,
            phase_sigma: c.phase_sigma,
            epsilon_pe: c.epsilon_pe,
            fer: c.fer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub n_used: u64,
    pub tau_a_hat: f64,
    pub tau_b_hat: f64,
    pub xi_hat: f64,
    /// Standard deviation of the per-frame excess-noise estimates.
    pub xi_frame_std: f64,
    pub negative_xi: bool,
    pub tau_a_wc: Option<f64>,
    pub tau_b_wc: Option<f64>,
    pub xi_wc: Option<f64>,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub pilot_mean: f64,
    pub pilot_std_mean: f64,
    pub pilot_std_min: f64,
    pub pilot_std_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    /// Smallest per-frame `Corr(u_x, x_A) - Corr(gamma_x, x_A)`.
    pub min_displacement_gain: f64,
    pub max_abs_corr_ux_xb: f64,
    /// Largest per-frame `3 / sqrt(n)`.
    pub orthogonality_bound: f64,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format: String,
    /// True for a run without frames.
    pub empty: bool,
    pub n_frames: usize,
    pub mode: Mode,
    pub seed: u64,
    pub parameters: ParameterEcho,
    pub calibration: Option<CalibrationRecord>,
    pub estimate: Option<EstimateSummary>,
    pub keyrate: Option<RateSummary>,
    pub phase: Option<PhaseSummary>,
    pub correlation: Option<CorrelationSummary>,
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

impl Summary {
    pub fn new(r: &RunReport) -> Self {
        let estimate = r.estimation.as_ref().map(|e| EstimateSummary {
            n_used: e.n_used,
            tau_a_hat: e.tau_a_hat,
            tau_b_hat: e.tau_b_hat,
            xi_hat: e.xi_hat_relay,
            xi_frame_std: std_dev(&e.frame_xi),
            negative_xi: e.negative_xi,
            tau_a_wc: e.worst_case.map(|w| w.tau_a_wc),
            tau_b_wc: e.worst_case.map(|w| w.tau_wc),
            xi_wc: e.worst_case.map(|w| w.xi_wc),
            z: e.worst_case.map(|w| w.z),
        });
        let pilots: Vec<_> = r.frames.iter().filter_map(|f| f.pilot).collect();
        let phase = (!pilots.is_empty()).then(|| {
            let stds: Vec<f64> = pilots.iter().map(|p| p.std).collect();
            let means: Vec<f64> = pilots.iter().map(|p| p.mean).collect();
            let c: num_complex::Complex64 = means.iter().map(|m| num_complex::Complex64::from_polar(1.0, *m)).sum();
            PhaseSummary {
                pilot_mean: c.arg(),
                pilot_std_mean: stds.iter().sum::<f64>() / stds.len() as f64,
                pilot_std_min: stds.iter().copied().fold(f64::INFINITY, f64::min),
                pilot_std_max: stds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        });
        let correlation = (!r.frames.is_empty()).then(|| CorrelationSummary {
            min_displacement_gain: r
                .frames
                .iter()
                .map(|f| f.corr_ux_xa - f.corr_gx_xa)
                .fold(f64::INFINITY, f64::min),
            max_abs_corr_ux_xb: r.frames.iter().map(|f| f.corr_ux_xb.abs()).fold(0.0, f64::max),
            orthogonality_bound: r
                .frames
                .iter()
                .map(|f| 3.0 / (f.n_symbols as f64).sqrt())
                .fold(0.0, f64::max),
        });
        Self {
            format: SUMMARY_FORMAT.to_string(),
            empty: r.is_empty(),
            n_frames: r.n_frames,
            mode: r.mode,
            seed: r.config.seed,
            parameters: ParameterEcho::new(&r.config),
            calibration: r.calibration,
            estimate,
            keyrate: r.rates.clone(),
            phase,
            correlation,
        }
    }
}

/// One row of `frames.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub frame_id: u64,
    pub n_symbols: usize,
    pub xi: f64,
    pub tau_a: f64,
    pub tau_b: f64,
    pub rho: f64,
    pub beta_disp: f64,
    pub rescale: f64,
    pub corr_ux_xa: f64,
    pub corr_gx_xa: f64,
    pub corr_ux_xb: f64,
    pub delay: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PhaseRow {
    frame_id: u64,
    theta_a: f64,
    theta_b: f64,
    align_blocks: usize,
    pilot_mean: Option<f64>,
    pilot_std: Option<f64>,
    pilot_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RateRow {
    case: &'static str,
    i_ab: f64,
    chi: f64,
    rate_signed: f64,
    rate: f64,
    delta: f64,
    throughput: f64,
}

impl RateRow {
    fn asym(case: &'static str, r: &KeyRateReport) -> Self {
        Self {
            case,
            i_ab: r.i_ab,
            chi: r.chi_asym,
            rate_signed: r.rate_asym_signed,
            rate: r.rate_asym,
            delta: 0.0,
            throughput: r.rate_asym * r.symbol_rate * (1.0 - r.fer),
        }
    }

    fn finite(r: &KeyRateReport) -> Self {
        Self {
            case: "finite",
            i_ab: r.i_ab,
            chi: r.chi,
            rate_signed: r.rate_finite_signed,
            rate: r.rate_finite,
            delta: r.delta,
            throughput: r.throughput,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScatterRow {
    index: usize,
    x_a: f64,
    p_a: f64,
    u_x: f64,
    u_p: f64,
    gamma_x: f64,
    gamma_p: f64,
    x_b: f64,
    p_b: f64,
}

/// Symbol arrays of one frame for `scatter.csv`.
#[derive(Debug, Clone, Copy)]
pub struct ScatterSource<'a> {
    pub alice: &'a [QuadSymbol],
    pub bob: &'a [QuadSymbol],
    pub gamma: &'a [QuadSymbol],
    pub displaced: &'a [QuadSymbol],
}

impl<'a> From<&'a FrameRecord> for ScatterSource<'a> {
    fn from(f: &'a FrameRecord) -> Self {
        Self {
            alice: &f.alice,
            bob: &f.bob,
            gamma: &f.gamma,
            displaced: &f.displaced,
        }
    }
}

impl<'a> From<&'a ProcessedArrays> for ScatterSource<'a> {
    fn from(f: &'a ProcessedArrays) -> Self {
        Self {
            alice: &f.alice,
            bob: &f.bob,
            gamma: &f.gamma,
            displaced: &f.displaced,
        }
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn emit_report(run: &RunReport, scatter: Option<ScatterSource<'_>>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("summary.json"), &Summary::new(run))?;
    write_json(&dir.join("run.json"), run)?;
    fs::write(dir.join("config.toml"), run.config.to_toml_string())?;
    write_csv(
        &dir.join("frames.csv"),
        run.frames.iter().map(|f| FrameRow {
            frame_id: f.frame_id,
            n_symbols: f.n_symbols,
            xi: f.xi,
            tau_a: f.tau_a,
            tau_b: f.tau_b,
            rho: f.displacement.rho,
            beta_disp: f.displacement.beta_disp,
            rescale: f.displacement.rescale,
            corr_ux_xa: f.corr_ux_xa,
            corr_gx_xa: f.corr_gx_xa,
            corr_ux_xb: f.corr_ux_xb,
            delay: f.delay,
        }),
    )?;
    write_csv(
        &dir.join("phase.csv"),
        run.frames.iter().map(|f| PhaseRow {
            frame_id: f.frame_id,
            theta_a: f.theta_a,
            theta_b: f.theta_b,
            align_blocks: f.align_blocks,
            pilot_mean: f.pilot.map(|p| p.mean),
            pilot_std: f.pilot.map(|p| p.std),
            pilot_points: f.pilot.map(|p| p.n_points),
        }),
    )?;
    let mut rates = Vec::new();
    if let Some(r) = &run.rates {
        rates.push(RateRow::asym("configured_asymptotic", &r.configured));
        if let Some(f) = &r.finite {
            rates.push(RateRow::asym("estimated_asymptotic", f));
            rates.push(RateRow::finite(f));
        }
    }
    write_csv(&dir.join("keyrate.csv"), rates)?;
    if let Some(s) = scatter {
        let n = SCATTER_POINTS.min(s.alice.len());
        write_csv(
            &dir.join("scatter.csv"),
            (0..n).map(|k| ScatterRow {
                index: k,
                x_a: s.alice[k].x,
                p_a: s.alice[k].p,
                u_x: s.displaced[k].x,
                u_p: s.displaced[k].p,
                gamma_x: s.gamma[k].x,
                gamma_p: s.gamma[k].p,
                x_b: s.bob[k].x,
                p_b: s.bob[k].p,
            }),
        )?;
    }
    Ok(())
}

pub fn write_sweep(points: &[SweepPoint], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    write_csv(path, points)
}

pub fn read_run(path: &Path) -> Result<RunReport> {
    serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::run_experiment;

    fn cfg(n: usize) -> ProtocolConfig {
        ProtocolConfig {
            n_symbols: n,
            frame_samples: 50 * 20_000,
            calibration_samples: 1_000_000,
            ..ProtocolConfig::default()
        }
    }

    fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut v: Vec<_> = fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let c = cfg(40_000);
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        for d in [&d1, &d2] {
            let out = run_experiment(&c, Mode::Symbol).unwrap();
            emit_report(&out.report, Some((&out.frames[0]).into()), d.path()).unwrap();
        }
        let a = read_dir(d1.path());
        assert_eq!(a, read_dir(d2.path()));
        let names: Vec<_> = a.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(
            names,
            ["config.toml", "frames.csv", "keyrate.csv", "phase.csv", "run.json", "scatter.csv", "summary.json"]
        );
    }

    #[test]
    fn summary_echoes_parameters_and_is_lossless() {
        let c = cfg(40_000);
        let d = tempfile::tempdir().unwrap();
        let out = run_experiment(&c, Mode::Symbol).unwrap();
        emit_report(&out.report, None, d.path()).unwrap();
        let s: Summary = serde_json::from_str(&fs::read_to_string(d.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(s.parameters.v_a, 6.5);
        assert_eq!(s.parameters.tau_b, 0.56);
        assert_eq!(s.parameters.eta, 0.94);
        assert_eq!(s.parameters.beta_ir, 0.97);
        assert_eq!(s.parameters.symbol_rate, 20e6);
        assert!((s.parameters.xi - 0.0395).abs() < 1e-15);
        assert!(!s.empty);
        assert_eq!(read_run(&d.path().join("run.json")).unwrap(), out.report);

        let mut rdr = csv::Reader::from_path(d.path().join("frames.csv")).unwrap();
        let rows: Vec<FrameRow> = rdr.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].xi.to_bits(), out.report.frames[1].xi.to_bits());
    }

    #[test]
    fn empty_run_has_marker() {
        let d = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg(0), Mode::Symbol).unwrap();
        emit_report(&out.report, None, d.path()).unwrap();
        let s: Summary = serde_json::from_str(&fs::read_to_string(d.path().join("summary.json")).unwrap()).unwrap();
        assert!(s.empty);
        assert_eq!(s.n_frames, 0);
        assert!(s.estimate.is_none());
    }

    #[test]
    fn unwritable_destination_is_io_error() {
        let d = tempfile::tempdir().unwrap();
        let blocker = d.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let out = run_experiment(&cfg(0), Mode::Symbol).unwrap();
        let err = emit_report(&out.report, None, &blocker.join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
        assert_eq!(err.exit_code(), 5);
    }
}
