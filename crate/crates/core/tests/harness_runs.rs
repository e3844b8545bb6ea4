use std::collections::HashSet;
use std::fs;

use cvmdi_core::harness::*;
use cvmdi_core::Error;

fn small(n_symbols: usize) -> ProtocolConfig {
    ProtocolConfig {
        n_symbols,
        frame_samples: 50 * 20_000,
        calibration_samples: 2_000_000,
        ..ProtocolConfig::default()
    }
}

#[test]
fn frames_account_for_every_symbol_once() {
    let cfg = small(130_000);
    let out = run_experiment(&cfg, Mode::Symbol).unwrap();
    let total: usize = out.report.frames.iter().map(|f| f.n_symbols).sum();
    assert_eq!(total, cfg.n_symbols);
    assert_eq!(out.report.n_frames, 7);
    let ids: HashSet<u64> = out.report.frames.iter().map(|f| f.frame_id).collect();
    assert_eq!(ids.len(), out.report.n_frames);
    assert_eq!(out.report.estimation.as_ref().unwrap().n_used as usize, cfg.n_symbols);
    // Frames draw from independent streams: no two frames share symbols.
    let firsts: HashSet<u64> = out.frames.iter().map(|f| f.alice[0].x.to_bits()).collect();
    assert_eq!(firsts.len(), out.frames.len());
}

#[test]
fn noiseless_configuration_beats_the_reference() {
    let ideal = ProtocolConfig {
        nu_el: 0.0,
        phase_sigma: 0.0,
        ..ProtocolConfig::default()
    };
    let out = run_experiment(&ideal, Mode::Symbol).unwrap();
    let xi = out.report.estimation.unwrap().xi_hat_relay;
    assert!(xi < 2e-3, "xi {xi}");
    let reference = run_experiment(&small(400_000), Mode::Symbol).unwrap();
    let r_ideal = out.report.rates.unwrap().configured.rate_asym;
    let r_ref = reference.report.rates.unwrap().configured.rate_asym;
    assert!(r_ideal > r_ref, "{r_ideal} vs {r_ref}");
}

#[test]
fn reports_are_reproducible_byte_for_byte() {
    let cfg = small(60_000);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out = run_experiment(&cfg, Mode::Symbol).unwrap();
        emit_report(&out.report, Some((&out.frames[0]).into()), d.path()).unwrap();
    }
    for name in ["summary.json", "run.json", "config.toml", "frames.csv", "phase.csv", "keyrate.csv", "scatter.csv"] {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    let back = read_run(&dirs[0].path().join("run.json")).unwrap();
    assert_eq!(back, run_experiment(&cfg, Mode::Symbol).unwrap().report);
}

#[test]
fn persisted_waveform_replays_bit_exactly() {
    let cfg = small(20_000);
    let raw = simulate_frame(&cfg, 3, 20_000, Mode::Waveform).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("raw.cvm");
    write_container(
        &path,
        &Container {
            kind: raw.kind(),
            digest: cfg.digest(),
            frames: vec![raw.to_block()],
        },
    )
    .unwrap();
    let c = read_container(&path).unwrap();
    assert_eq!(c.digest, cfg.digest());
    let back = RawFrame::from_block(c.kind, &c.frames[0]).unwrap();
    let direct = receive_frame(&cfg, &raw).unwrap();
    let replay = receive_frame(&cfg, &back).unwrap();
    assert_eq!(direct, replay);
    assert_eq!(direct.delay, Some(cfg.relay_delay));
}

#[test]
fn sweep_rates_fall_with_distance() {
    let cfg = ProtocolConfig {
        n_symbols: 400_000,
        frame_samples: 50 * 20_000,
        calibration_samples: 20_000_000,
        ..ProtocolConfig::default()
    };
    let points = run_sweep(&cfg, &[1.0, 0.8, 0.6, 0.4], Mode::Symbol).unwrap();
    let configured: Vec<f64> = points.iter().map(|p| p.rate_configured).collect();
    assert!(configured.windows(2).all(|w| w[1] <= w[0]), "{configured:?}");
    for p in &points {
        assert!(p.rate_finite_signed <= p.rate_asym + 1e-12);
        assert!(p.xi_wc >= p.xi_hat);
    }
    let dir = tempfile::tempdir().unwrap();
    write_sweep(&points, &dir.path().join("sweep.csv")).unwrap();
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), points.len() + 1);
}

#[test]
fn invalid_configurations_fail_before_any_work() {
    let cfg = ProtocolConfig {
        pilot_freq: 10e6,
        ..small(1000)
    };
    let err = run_experiment(&cfg, Mode::Waveform).unwrap_err();
    assert!(matches!(err.root(), Error::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}
