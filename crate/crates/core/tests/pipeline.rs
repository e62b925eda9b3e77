use std::f64::consts::TAU;

use paircraft::counting_model::predict_counts;
use paircraft::estimators::{bootstrap_beating, bootstrap_fringe, fit_beating, fit_cosine, BeatingParams};
use paircraft::fixtures;
use paircraft::reproduce::{beating_delays, synthetic_beating};
use paircraft::spectral_model::{
    antibunching_phase, apply_umzi, beating_scan, build_cw_state, span_covering, Detection, TemporalFilter,
    UmziConfig,
};
use paircraft::timetag_sim::{histogram_coincidences, simulate_cw, window_counts};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

fn wrap(x: f64) -> f64 {
    (x + TAU / 2.0).rem_euclid(TAU) - TAU / 2.0
}

#[test]
fn accidental_floor_matches_product_of_singles() {
    let optical = fixtures::reference_optical_source_model();
    for (power, (c1, c2), duration) in [(0.05, (1, 2), 20.0), (0.5, (3, 4), 4.0), (2.0, (5, 6), 1.0)] {
        let (d1, d2) = (fixtures::snspd(c1), fixtures::snspd(c2));
        let detected = optical.detected_by(d1.efficiency, d2.efficiency, d1.dark_rate, d2.dark_rate);
        let window = 300i64;
        let predicted = predict_counts(&detected, power, window as f64 * 1e-12).unwrap();
        let ev = simulate_cw(&optical, (&d1, &d2), power, duration, 17).unwrap();
        let (n_s, n_i) = (ev.signal.len() as f64 / duration, ev.idler.len() as f64 / duration);
        // dead time thins each stream to N/(1 + N·t_d)
        for (measured, rate) in [(n_s, predicted.n_s), (n_i, predicted.n_i)] {
            let thinned = rate / (1.0 + rate * d1.dead_time);
            let rel = 4.0 / (thinned * duration).sqrt();
            assert!((measured / thinned - 1.0).abs() < rel, "P = {power}: {measured} vs {thinned}");
        }
        let expected = n_s * n_i * window as f64 * 1e-12 * duration;
        // offsets start past the 30 ns dead time that follows every true pair
        let offsets: Vec<i64> = (0..400).flat_map(|j| [50_000 + j * window, -50_000 - j * window]).collect();
        let hist = histogram_coincidences(&ev.signal, &ev.idler, 10, 2 * 200_000).unwrap();
        let w = window_counts(&hist, window, 0, &offsets).unwrap();
        let sigma = (expected / w.n_offsets as f64).sqrt();
        assert!((w.a_cc - expected).abs() < 4.0 * sigma, "P = {power}: {} vs {expected} ± {sigma}", w.a_cc);
    }
}

#[test]
fn engine_beating_recovers_filter_geometry() {
    let (signal, idler, omega_p0) = fixtures::reference_filters();
    let det = Detection {
        signal,
        idler,
        eta_s: 1.0,
        eta_i: 1.0,
        window: fixtures::COINCIDENCE_WINDOW_S,
    };
    let step = signal.bandwidth / 1000.0;
    let span = span_covering(omega_p0, &[signal, idler], step, 4);
    let input = build_cw_state(omega_p0, span, (span / step).ceil() as usize, 1.0, &[signal, idler]).unwrap();
    let tau_ab = fixtures::UMZI_DELAY_S;
    let anti = apply_umzi(
        &input,
        &UmziConfig::new(tau_ab, antibunching_phase(omega_p0, tau_ab)),
        TemporalFilter::CentralPeak,
    )
    .unwrap();
    let delays = beating_delays();
    let pts = beating_scan(&anti, &delays, &det, 0.0).unwrap();
    let full = pts.iter().map(|p| p.rate).fold(0.0, f64::max);
    let y: Vec<f64> = pts.iter().map(|p| 2000.0 * p.rate / full).collect();
    let fit = fit_beating(&delays, &y).unwrap();
    let p = fit.params;
    let detuning = (signal.center - omega_p0).abs();
    assert!((p.omega / signal.bandwidth - 1.0).abs() < 5e-3, "{}", p.omega);
    assert!((p.delta_omega / (2.0 * detuning) - 1.0).abs() < 5e-3, "{}", p.delta_omega);
    assert!((p.visibility - 1.0).abs() < 1e-2, "{}", p.visibility);
    assert!(p.tau0.abs() < 0.05e-12, "{}", p.tau0);
}

#[test]
fn beating_fit_consistent_across_count_scales() {
    let tau = beating_delays();
    for (k, c0) in [300.0, 2000.0, 20_000.0].into_iter().enumerate() {
        let truth: BeatingParams = fixtures::reference_beating_params(c0);
        let y = synthetic_beating(&truth, &tau, 100 + k as u64);
        let fit = fit_beating(&tau, &y).unwrap();
        let sigma = bootstrap_beating(&fit, &tau, &y, 200, 7).unwrap();
        let (got, want) = (fit.params.to_vec(), truth.to_vec());
        for j in 0..6 {
            let diff = if j == 4 { wrap(got[j] - want[j]) } else { got[j] - want[j] };
            assert!(diff.abs() < 4.0 * sigma[j], "c0 = {c0}, param {j}: {} vs {}", got[j], want[j]);
        }
    }
}

#[test]
fn fringe_fit_consistent_across_count_scales() {
    let x: Vec<f64> = (0..24).map(|k| TAU * k as f64 / 24.0).collect();
    for (k, c0) in [50.0, 1000.0, 50_000.0].into_iter().enumerate() {
        let (v, phase0) = (0.9, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let y: Vec<f64> = x
            .iter()
            .map(|&t| Poisson::new(c0 * (1.0 + v * (t + phase0).cos())).unwrap().sample(&mut rng))
            .collect();
        let fit = fit_cosine(&x, &y, Some(TAU)).unwrap();
        let sigma = bootstrap_fringe(&fit, &x, &y, 300, 3).unwrap();
        assert!((fit.c0 - c0).abs() < 4.0 * sigma[0], "c0 = {c0}: {}", fit.c0);
        assert!((fit.visibility - v).abs() < 4.0 * sigma[1], "c0 = {c0}: {}", fit.visibility);
        assert!(wrap(fit.phase0 - phase0).abs() < 4.0 * sigma[2], "c0 = {c0}: {}", fit.phase0);
    }
}
