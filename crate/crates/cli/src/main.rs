//! Command-line front end.
//!
//! Stages exchange files inside the output directory:
//!
//! | stage       | reads                              | writes                          |
//! |-------------|------------------------------------|---------------------------------|
//! | `calibrate` |                                    | `calibration.json`              |
//! | `simulate`  |                                    | `raw.cvm`, `config.toml`        |
//! | `dsp`       | `raw.cvm`                          | `received.cvm`                  |
//! | `estimate`  | `received.cvm`, `calibration.json` | `processed.cvm`, `run.json`     |
//! | `keyrate`   | `run.json`                         | `run.json` with rates           |
//! | `report`    | `run.json`, `processed.cvm`        | summary and tables              |
//!
//! `run` does everything in memory and writes the report; `sweep` writes
//! `sweep.csv`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cvmdi_core::channel::CalibrationRecord;
use cvmdi_core::harness::*;
use cvmdi_core::postprocess::FrameStats;
use cvmdi_core::{Error, Result};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "cvmdi", version, about = "CV-MDI QKD simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure shot noise and electronic noise with the signals blocked.
    Calibrate(Common),
    /// Simulate frames and persist the relay output.
    Simulate(Common),
    /// Synchronize, filter and demodulate persisted frames.
    Dsp(Common),
    /// Align, displace and estimate channel parameters.
    Estimate(Common),
    /// Asymptotic and finite-size key rates from the estimates.
    Keyrate(Common),
    /// Write summary, tables and scatter samples.
    Report(Common),
    /// End-to-end run.
    Run(Common),
    /// Key rate against Bob's channel transmissivity.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// Configuration file (TOML). Defaults to `<out>/config.toml` if present,
    /// else the reference configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Number of full frames; overrides the symbol count.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Bob's transmissivities.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.8, 0.63, 0.5, 0.4, 0.32, 0.25, 0.2, 0.16, 0.13])]
    tau_b: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Symbol,
    Waveform,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Symbol => Mode::Symbol,
            ModeArg::Waveform => Mode::Waveform,
        }
    }
}

const CALIBRATION: &str = "calibration.json";
const RAW: &str = "raw.cvm";
const RECEIVED: &str = "received.cvm";
const PROCESSED: &str = "processed.cvm";
const RUN: &str = "run.json";
const CONFIG: &str = "config.toml";

impl Common {
    fn config(&self) -> Result<ProtocolConfig> {
        let sidecar = self.out.join(CONFIG);
        let mut cfg = match &self.config {
            Some(p) => ProtocolConfig::load(p)?,
            None if sidecar.exists() => ProtocolConfig::load(&sidecar)?,
            None => ProtocolConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(f) = self.frames {
            cfg.n_symbols = f * cfg.symbols_per_frame();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn mode(&self) -> Mode {
        self.mode.map_or(Mode::Symbol, Mode::from)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, s + "\n")?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Reads a container and checks it was produced under `cfg`.
fn open(path: &Path, cfg: &ProtocolConfig) -> Result<Container> {
    let c = read_container(path)?;
    if c.digest != cfg.digest() {
        return Err(Error::Config(format!(
            "{} was written under a different configuration",
            path.display()
        )));
    }
    Ok(c)
}

fn calibration(a: &Common, cfg: &ProtocolConfig) -> Result<CalibrationRecord> {
    let p = a.path(CALIBRATION);
    if p.exists() {
        read_json(&p)
    } else {
        let c = calibrate(cfg)?;
        write_json(&p, &c)?;
        Ok(c)
    }
}

fn cmd_calibrate(a: &Common) -> Result<()> {
    let cfg = a.config()?;
    let c = calibrate(&cfg)?;
    write_json(&a.path(CALIBRATION), &c)?;
    println!(
        "vacuum {:.6e}, electronic {:.6e} raw units ({:.4} SNU) from {} samples",
        c.vacuum_variance_raw,
        c.electronic_variance_raw,
        c.electronic_variance_raw * c.snu_scale,
        c.n_samples
    );
    Ok(())
}

fn cmd_simulate(a: &Common) -> Result<()> {
    let cfg = a.config()?;
    let mode = a.mode();
    let frames = cfg
        .frame_sizes()
        .into_par_iter()
        .enumerate()
        .map(|(id, n)| simulate_frame(&cfg, id as u64, n, mode))
        .collect::<Result<Vec<_>>>()?;
    let kind = match mode {
        Mode::Symbol => ContentKind::RawSymbols,
        Mode::Waveform => ContentKind::RawWaveform,
    };
    fs::write(a.path(CONFIG), cfg.to_toml_string())?;
    write_container(
        &a.path(RAW),
        &Container {
            kind,
            digest: cfg.digest(),
            frames: frames.iter().map(RawFrame::to_block).collect(),
        },
    )?;
    println!("{} frames ({:?}) written to {}", frames.len(), mode, a.path(RAW).display());
    Ok(())
}

fn cmd_dsp(a: &Common) -> Result<()> {
    let cfg = a.config()?;
    let raw = open(&a.path(RAW), &cfg)?;
    let received = raw
        .frames
        .par_iter()
        .map(|b| receive_frame(&cfg, &RawFrame::from_block(raw.kind, b)?).map(|r| r.to_block()))
        .collect::<Result<Vec<_>>>()?;
    for b in &received {
        let meta = &b.arrays[6];
        println!("frame {}: delay {} samples, pilot std {:.4} rad", b.frame_id, meta[0], meta[2]);
    }
    write_container(
        &a.path(RECEIVED),
        &Container {
            kind: ContentKind::Received,
            digest: cfg.digest(),
            frames: received,
        },
    )
}

fn cmd_estimate(a: &Common) -> Result<()> {
    let cfg = a.config()?;
    let calib = calibration(a, &cfg)?;
    let received = open(&a.path(RECEIVED), &cfg)?;
    // Only the waveform chain measures a delay.
    let mode = if received.frames.first().is_some_and(|b| !b.arrays[6][0].is_nan()) {
        Mode::Waveform
    } else {
        Mode::Symbol
    };
    let frames = received
        .frames
        .par_iter()
        .map(|b| process_frame(&cfg, &calib, &ReceivedFrame::from_block(b)?))
        .collect::<Result<Vec<_>>>()?;
    let stats: Vec<FrameStats> = frames.iter().map(|f| f.stats).collect();
    let est = estimate_run(&cfg, &calib, &stats)?;
    println!(
        "xi {:.2} mSNU, tau_A {:.4}, tau_B {:.4} over {} frames{}",
        1e3 * est.xi_hat_relay,
        est.tau_a_hat,
        est.tau_b_hat,
        frames.len(),
        est.worst_case.map_or(String::new(), |w| format!(", worst case {:.2} mSNU", 1e3 * w.xi_wc))
    );
    write_container(
        &a.path(PROCESSED),
        &Container {
            kind: ContentKind::Processed,
            digest: cfg.digest(),
            frames: frames.iter().map(FrameRecord::to_block).collect(),
        },
    )?;
    write_json(
        &a.path(RUN),
        &RunReport {
            config: cfg,
            mode,
            n_frames: frames.len(),
            calibration: Some(calib),
            frames: frames.into_iter().map(|f| f.summary).collect(),
            estimation: Some(est),
            rates: None,
        },
    )
}

fn cmd_keyrate(a: &Common) -> Result<()> {
    let mut run = read_run(&a.path(RUN))?;
    let est = run
        .estimation
        .as_ref()
        .ok_or_else(|| Error::Config("run has no estimates; run `estimate` first".into()))?;
    let rates = rate_run(&run.config, est)?;
    println!("asymptotic rate at the configured channel {:.4} bit/use", rates.configured.rate_asym);
    if let Some(f) = &rates.finite {
        println!(
            "finite-size rate {:.4} bit/use ({:.3} Mbit/s), asymptotic at the estimates {:.4}",
            f.rate_finite,
            f.throughput / 1e6,
            f.rate_asym
        );
    }
    run.rates = Some(rates);
    write_json(&a.path(RUN), &run)
}

fn cmd_report(a: &Common) -> Result<()> {
    let run = read_run(&a.path(RUN))?;
    let processed = a.path(PROCESSED);
    let first = if processed.exists() {
        let c = open(&processed, &run.config)?;
        c.frames.first().map(ProcessedArrays::from_block).transpose()?
    } else {
        None
    };
    emit_report(&run, first.as_ref().map(Into::into), &a.out)?;
    println!("report written to {}", a.out.display());
    Ok(())
}

fn cmd_run(a: &Common) -> Result<()> {
    let cfg = a.config()?;
    let out = run_experiment(&cfg, a.mode())?;
    emit_report(&out.report, out.frames.first().map(Into::into), &a.out)?;
    let s = Summary::new(&out.report);
    println!("{}", serde_json::to_string_pretty(&s).map_err(|e| Error::Format(e.to_string()))?);
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let cfg = a.common.config()?;
    let points = run_sweep(&cfg, &a.tau_b, a.common.mode())?;
    for p in &points {
        println!(
            "{:6.1} km  tau_B {:.3}  xi {:6.2} mSNU  asym {:.4}  finite {:+.4}",
            p.distance_km,
            p.tau_b,
            1e3 * p.xi_hat,
            p.rate_asym,
            p.rate_finite_signed
        );
    }
    write_sweep(&points, &a.common.path("sweep.csv"))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let out = match &cli.command {
        Command::Sweep(s) => &s.common.out,
        Command::Calibrate(c)
        | Command::Simulate(c)
        | Command::Dsp(c)
        | Command::Estimate(c)
        | Command::Keyrate(c)
        | Command::Report(c)
        | Command::Run(c) => &c.out,
    };
    fs::create_dir_all(out)?;
    match &cli.command {
        Command::Calibrate(c) => cmd_calibrate(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Dsp(c) => cmd_dsp(c),
        Command::Estimate(c) => cmd_estimate(c),
        Command::Keyrate(c) => cmd_keyrate(c),
        Command::Report(c) => cmd_report(c),
        Command::Run(c) => cmd_run(c),
        Command::Sweep(s) => cmd_sweep(s),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
