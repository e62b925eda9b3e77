use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use paircraft::counting_model::predict_counts;
use paircraft::estimators::{correlation_coefficient, fit_cosine};
use paircraft::fixtures;
use paircraft::spectral_model::{
    apply_umzi, build_cw_state, fringe_scan, single_photon_interference, span_covering, Detection, Path,
    SpectralState, TemporalFilter, UmziConfig,
};
use paircraft::timetag_sim::{histogram_coincidences, simulate_cw, window_counts};

fn reference_setup(points_per_band: usize) -> (Detection, SpectralState) {
    let (signal, idler, omega_p0) = fixtures::reference_filters();
    let det = Detection {
        signal,
        idler,
        eta_s: 1.0,
        eta_i: 1.0,
        window: fixtures::COINCIDENCE_WINDOW_S,
    };
    let step = signal.bandwidth / points_per_band as f64;
    let span = span_covering(omega_p0, &[signal, idler], step, 4);
    let state = build_cw_state(omega_p0, span, (span / step).ceil() as usize, 1.0, &[signal, idler]).unwrap();
    (det, state)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optical_elements_preserve_norm(
        split in 0.05f64..0.95,
        tau_ab in 0.0f64..2e-9,
        phi in 0.0f64..TAU,
        t in 0.05f64..0.95,
        delay in -20e-12f64..20e-12,
    ) {
        let (_, input) = reference_setup(100);
        let cfg = UmziConfig { tau_ab, phi_a: phi, split_ratio: split };
        let out = apply_umzi(&input, &cfg, TemporalFilter::None).unwrap();
        let n0 = input.norm_squared();
        prop_assert!((out.norm_squared() / n0 - 1.0).abs() < 1e-12);

        let kept = apply_umzi(&input, &cfg, TemporalFilter::CentralPeak).unwrap();
        let k0 = kept.norm_squared();
        let mixed = kept.delay(Path::C, delay, phi).beam_splitter((Path::C, Path::D), (Path::E, Path::F), t);
        prop_assert!((mixed.norm_squared() / k0 - 1.0).abs() < 1e-12);
    }
}

#[test]
fn two_photon_fringe_has_half_period() {
    let (det, input) = reference_setup(200);
    let tau_ab = fixtures::UMZI_DELAY_S;
    let phases: Vec<f64> = (0..48).map(|k| TAU * k as f64 / 48.0).collect();
    let pair: Vec<f64> = fringe_scan(&input, tau_ab, &phases, &det, false)
        .unwrap()
        .iter()
        .map(|p| 1e4 * p.rate)
        .collect();
    let single: Vec<f64> = phases
        .iter()
        .map(|&phi| 1e4 * single_photon_interference(det.signal.center, &UmziConfig::new(tau_ab, phi)))
        .collect();
    let p2 = fit_cosine(&phases, &pair, None).unwrap().period;
    let p1 = fit_cosine(&phases, &single, None).unwrap().period;
    assert!((p2 / p1 - 0.5).abs() < 1e-6, "{p2} / {p1}");
    assert!((p1 - TAU).abs() < 1e-6);
}

#[test]
fn accidental_floor_over_random_configurations() {
    let optical = fixtures::reference_optical_source_model();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let window = 300i64;
    // offsets start past the 30 ns dead time that follows every true pair
    let offsets: Vec<i64> = (0..400).flat_map(|j| [50_000 + j * window, -50_000 - j * window]).collect();
    for trial in 0..20 {
        let power = 10f64.powf(rng.random_range(-2.0..0.5));
        let c1 = rng.random_range(1..=6);
        let c2 = loop {
            let c = rng.random_range(1..=6);
            if c != c1 {
                break c;
            }
        };
        let (d1, d2) = (fixtures::snspd(c1), fixtures::snspd(c2));
        let detected = optical.detected_by(d1.efficiency, d2.efficiency, d1.dark_rate, d2.dark_rate);
        let n_s = predict_counts(&detected, power, 1e-12).unwrap().n_s;
        let duration = (2e5 / n_s).min(20.0);
        let ev = simulate_cw(&optical, (&d1, &d2), power, duration, trial).unwrap();
        let singles = ev.signal.len() as f64 * ev.idler.len() as f64 / (duration * duration);
        let expected = singles * window as f64 * 1e-12 * duration;
        let hist = histogram_coincidences(&ev.signal, &ev.idler, 10, 2 * 200_000).unwrap();
        let w = window_counts(&hist, window, 0, &offsets).unwrap();
        let sigma = (expected / w.n_offsets as f64).sqrt();
        assert!(
            (w.a_cc - expected).abs() < 3.0 * sigma,
            "trial {trial} (P = {power}, ch {c1}/{c2}): {} vs {expected} ± {sigma}",
            w.a_cc
        );
    }
}

#[test]
fn franson_correlation_from_fitted_fringes() {
    let (c0, v) = (800.0, 0.92);
    let theta: Vec<f64> = (0..32).map(|k| TAU * k as f64 / 32.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let signs = [[1.0, -1.0], [-1.0, 1.0]];
    let mut fits = Vec::new();
    for row in signs {
        for s in row {
            let y: Vec<f64> = theta
                .iter()
                .map(|&t| Poisson::new(c0 * (1.0 + s * v * t.cos())).unwrap().sample(&mut rng))
                .collect();
            fits.push(fit_cosine(&theta, &y, Some(TAU)).unwrap());
        }
    }
    let sigma_v = fits.iter().map(|f| f.visibility_sigma()).fold(0.0, f64::max);
    let sigma_phi = fits.iter().map(|f| f.covariance[2][2].sqrt()).fold(0.0, f64::max);
    let tol = 3.0 * (sigma_v * sigma_v + v * v * sigma_phi * sigma_phi).sqrt();
    for k in 0..64 {
        let t = PI * k as f64 / 32.0;
        let r: Vec<f64> = fits.iter().map(|f| f.eval(t)).collect();
        let e = correlation_coefficient([[r[0], r[1]], [r[2], r[3]]]).unwrap();
        assert!((e - v * t.cos()).abs() < tol, "θ = {t}: {e} vs {}", v * t.cos());
    }
}
