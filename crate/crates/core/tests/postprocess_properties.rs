use cvmdi_core::channel::{CalibrationRecord, QuadSymbol};
use cvmdi_core::harness::{estimate_run, run_frame, Mode, ProtocolConfig};
use cvmdi_core::postprocess::*;
use cvmdi_core::rng::{stream, Role};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn exact_calibration(cfg: &ProtocolConfig) -> CalibrationRecord {
    CalibrationRecord {
        vacuum_variance_raw: cfg.raw_gain * (1.0 + cfg.nu_el),
        electronic_variance_raw: cfg.raw_gain * cfg.nu_el,
        snu_scale: 1.0 / cfg.raw_gain,
        n_samples: 0,
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// 50 independent runs of 1e5 symbols, each split into 10 frames.
#[test]
fn estimator_is_consistent_and_its_scatter_is_calibrated() {
    let base = ProtocolConfig {
        n_symbols: 100_000,
        frame_samples: 500_000,
        ..ProtocolConfig::default()
    };
    let calib = exact_calibration(&base);
    let mut xi = Vec::new();
    let mut predicted = Vec::new();
    for seed in 0..50u64 {
        let cfg = ProtocolConfig { seed, ..base.clone() };
        let stats: Vec<_> = cfg
            .frame_sizes()
            .into_iter()
            .enumerate()
            .map(|(id, n)| run_frame(&cfg, &calib, id as u64, n, Mode::Symbol).unwrap().stats)
            .collect();
        let est = estimate_run(&cfg, &calib, &stats).unwrap();
        let (_, s) = mean_std(&est.frame_xi);
        xi.push(est.xi_hat_relay);
        predicted.push(s / (stats.len() as f64).sqrt());
    }
    let (m, spread) = mean_std(&xi);
    let (s_pred, _) = mean_std(&predicted);
    let truth = base.relay_excess();
    println!("xi mean {m:.5} truth {truth:.5} spread {spread:.5} frame-wise {s_pred:.5}");
    assert!((m - truth).abs() < 1e-3, "mean {m} vs truth {truth}");
    assert!((spread / s_pred - 1.0).abs() < 0.3, "spread {spread} vs frame-wise {s_pred}");
}

fn synthetic(seed: u64, n: usize, k_a: f64, k_b: f64, noise: f64) -> (Vec<QuadSymbol>, Vec<QuadSymbol>, Vec<QuadSymbol>) {
    let mut rng = stream(seed, 0, Role::Test);
    let mut draw = |s: f64| -> f64 { s * rng.sample::<f64, _>(StandardNormal) };
    let (mut a, mut b, mut g) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let qa = QuadSymbol::new(draw(2.5), draw(2.5));
        let qb = QuadSymbol::new(draw(2.5), draw(2.5));
        g.push(QuadSymbol::new(
            k_a * qa.x - k_b * qb.x + draw(noise),
            k_a * qa.p + k_b * qb.p + draw(noise),
        ));
        a.push(qa);
        b.push(qb);
    }
    (a, b, g)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(48) })]

    #[test]
    fn displacement_removes_bob(
        seed in any::<u64>(), n in 2_000usize..20_000,
        k_a in 0.1f64..1.0, k_b in 0.1f64..1.0, noise in 0.5f64..2.0,
    ) {
        let (alice, bob, gamma) = synthetic(seed, n, k_a, k_b, noise);
        let (u, _) = displacement_infer(&gamma, &bob, None).unwrap();
        let ux: Vec<f64> = u.iter().map(|q| q.x).collect();
        let up: Vec<f64> = u.iter().map(|q| q.p).collect();
        let xb: Vec<f64> = bob.iter().map(|q| q.x).collect();
        let pb: Vec<f64> = bob.iter().map(|q| q.p).collect();
        let bound = 3.0 / (n as f64).sqrt();
        prop_assert!(correlation(&ux, &xb).abs() < bound);
        prop_assert!(correlation(&up, &pb).abs() < bound);
        let xa: Vec<f64> = alice.iter().map(|q| q.x).collect();
        let gx: Vec<f64> = gamma.iter().map(|q| q.x).collect();
        prop_assert!(correlation(&ux, &xa) > correlation(&gx, &xa));
    }

    #[test]
    fn finite_rate_never_exceeds_asymptotic(
        tau_b in 0.2f64..=1.0, tau_a in 0.5f64..=1.0, xi in 0.0f64..0.15,
        s_xi in 0.0f64..0.03, s_tau in 0.0f64..0.02, eta in 0.6f64..=1.0,
        beta in 0.85f64..=1.0, delta_coeff in 0.0f64..2.0, bob_ref in any::<bool>(),
    ) {
        let model = EbModel::from_relay_excess(6.5, 6.5, tau_a, tau_b, eta, xi, EfficiencyModel::Trusted).unwrap();
        let m = 20;
        let spread = |c: f64, s: f64| -> Vec<f64> { (0..m).map(|i| c + s * if i % 2 == 0 { 1.0 } else { -1.0 }).collect() };
        let est = EstimationResult {
            tau_a_hat: tau_a,
            tau_b_hat: tau_b,
            xi_hat_relay: xi,
            frame_xi: spread(xi, s_xi),
            frame_tau_a: spread(tau_a, s_tau),
            frame_tau_b: spread(tau_b, s_tau),
            n_used: 4_000_000,
            electronic_snu: 0.0,
            negative_xi: false,
            worst_case: None,
        };
        let est = worst_case_bounds(&est, 1e-10, m).unwrap();
        let settings = RateSettings {
            beta_ir: beta,
            delta_coeff,
            reference: if bob_ref { Reference::Bob } else { Reference::Alice },
            ..RateSettings::default()
        };
        let fin = rate_finite(&model, &est, 4_000_000, &settings).unwrap();
        let asym = rate_asymptotic(&model, &settings).unwrap();
        prop_assert!(fin.rate_finite_signed <= asym.rate_asym_signed + 1e-12,
            "finite {} asym {}", fin.rate_finite_signed, asym.rate_asym_signed);
        prop_assert!(fin.rate_finite <= asym.rate_asym + 1e-12);
        prop_assert!((fin.throughput - fin.rate_finite * fin.symbol_rate * (1.0 - fin.fer)).abs() < 1e-6);
    }
}

fn reference_model(xi: f64) -> EbModel {
    EbModel::from_relay_excess(6.5, 6.5, 1.0, 0.56, 0.94, xi, EfficiencyModel::Trusted).unwrap()
}

fn signed_rate(model: &EbModel, beta: f64) -> f64 {
    let settings = RateSettings {
        beta_ir: beta,
        ..RateSettings::default()
    };
    rate_asymptotic(model, &settings).unwrap().rate_asym_signed
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn asymptotic_rate_monotonicity() {
    let by_xi: Vec<f64> = grid(0.0, 0.08, 5).into_iter().map(|x| signed_rate(&reference_model(x), 0.97)).collect();
    assert!(non_increasing(&by_xi), "{by_xi:?}");

    let by_nu: Vec<f64> = grid(0.0, 0.05, 5)
        .into_iter()
        .map(|nu| signed_rate(&EbModel { nu_el: nu, ..reference_model(0.0) }, 0.97))
        .collect();
    assert!(non_increasing(&by_nu), "{by_nu:?}");

    let by_eta: Vec<f64> = grid(0.8, 1.0, 5)
        .into_iter()
        .map(|eta| signed_rate(&EbModel::from_relay_excess(6.5, 6.5, 1.0, 0.56, eta, 0.0395, EfficiencyModel::Trusted).unwrap(), 0.97))
        .collect();
    assert!(non_increasing(&by_eta.iter().rev().copied().collect::<Vec<_>>()), "{by_eta:?}");

    let by_tau: Vec<f64> = grid(0.3, 1.0, 5)
        .into_iter()
        .map(|t| signed_rate(&EbModel { tau_b: t, ..reference_model(0.0395) }, 0.97))
        .collect();
    assert!(non_increasing(&by_tau.iter().rev().copied().collect::<Vec<_>>()), "{by_tau:?}");

    let by_beta: Vec<f64> = grid(0.9, 1.0, 5).into_iter().map(|b| signed_rate(&reference_model(0.0395), b)).collect();
    assert!(non_increasing(&by_beta.iter().rev().copied().collect::<Vec<_>>()), "{by_beta:?}");
}

#[test]
fn finite_rate_falls_with_worst_case_excess_noise() {
    let model = reference_model(0.0395);
    let rates: Vec<f64> = grid(0.0, 0.01, 10)
        .into_iter()
        .map(|s| {
            let est = EstimationResult {
                tau_a_hat: 1.0,
                tau_b_hat: 0.56,
                xi_hat_relay: 0.0395,
                frame_xi: (0..20).map(|i| 0.0395 + if i % 2 == 0 { s } else { -s }).collect(),
                frame_tau_a: vec![1.0; 20],
                frame_tau_b: vec![0.56; 20],
                n_used: 4_000_000,
                electronic_snu: 0.0,
                negative_xi: false,
                worst_case: None,
            };
            let est = worst_case_bounds(&est, 1e-10, 20).unwrap();
            rate_finite(&model, &est, 4_000_000, &RateSettings::default()).unwrap().rate_finite_signed
        })
        .collect();
    assert!(rates.windows(2).all(|w| w[1] < w[0]), "{rates:?}");
}

#[test]
fn privacy_amplification_output_is_exact_length_and_deterministic() {
    let mut rng = stream(1, 0, Role::Test);
    let bits: Vec<bool> = (0..4096).map(|_| rng.random()).collect();
    let a = privacy_amplify(&bits, 99, 1000).unwrap();
    assert_eq!(a.len(), 1000);
    assert_eq!(a, privacy_amplify(&bits, 99, 1000).unwrap());
    assert_ne!(a, privacy_amplify(&bits, 100, 1000).unwrap());
    assert!(privacy_amplify(&bits, 99, 4097).is_err());
}
