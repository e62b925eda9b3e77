//! Reference data and the calibrated models built from it.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::counting_model::{calibrate_noise_for_car, SourceModel};
use crate::estimators::{BeatingParams, FringeFit};
use crate::quantum_state::{Basis, DensityMatrix};
use crate::spectral_model::FilterSpec;
use crate::timetag_sim::DetectorModel;
use crate::tomography::{FreqBinParams, ProjectionCountTable};

/// Two-photon time-bin projection counts, 16 rows.
pub const TIMEBIN_COUNTS_CSV: &str = include_str!("../../../fixtures/timebin_counts.csv");

pub fn timebin_counts() -> ProjectionCountTable {
    ProjectionCountTable::from_csv(TIMEBIN_COUNTS_CSV).expect("bundled table parses")
}

pub const PUMP_NM: f64 = 1540.46;
pub const SIGNAL_NM: f64 = 1531.72;
pub const IDLER_NM: f64 = 1549.34;
/// DWDM channel width, Hz.
pub const FILTER_BANDWIDTH_HZ: f64 = 125e9;
/// UMZI arm imbalance and double-pulse spacing, s.
pub const UMZI_DELAY_S: f64 = 625e-12;
pub const COINCIDENCE_WINDOW_S: f64 = 300e-12;
pub const INTEGRATION_S: f64 = 20.0;

/// Operating point of the reference CAR.
pub const REFERENCE_CAR_POWER_MW: f64 = 0.273;
pub const REFERENCE_CAR: f64 = 52_600.0;
/// Pair generation rate at that power, Hz.
pub const REFERENCE_PAIR_RATE_HZ: f64 = 52.3e3;
/// Total collection efficiencies, detectors included.
pub const REFERENCE_ETA_S: f64 = 0.27;
pub const REFERENCE_ETA_I: f64 = 0.23;

/// Per-channel dark rate (Hz) and efficiency of the six detector channels.
pub const SNSPD_CHANNELS: [(f64, f64); 6] = [
    (150.0, 0.68),
    (200.0, 0.63),
    (150.0, 0.68),
    (150.0, 0.65),
    (150.0, 0.67),
    (100.0, 0.72),
];
/// Timing jitter, full width at half maximum.
pub const SNSPD_JITTER_FWHM_S: f64 = 100e-12;
pub const SNSPD_DEAD_TIME_S: f64 = 30e-9;

/// Detector model of channel `ch` (1-based).
pub fn snspd(ch: usize) -> DetectorModel {
    let (dark, eff) = SNSPD_CHANNELS[ch - 1];
    DetectorModel {
        efficiency: eff,
        dark_rate: dark,
        jitter_sigma: SNSPD_JITTER_FWHM_S / (8.0 * 2f64.ln()).sqrt(),
        dead_time: SNSPD_DEAD_TIME_S,
    }
}

/// Rate model with detector efficiencies folded into `η`, noise collected
/// like pairs (`η^r = η`), dark rates of channels 1 and 2, and a common noise
/// coefficient chosen so that the CAR at 0.273 mW and 300 ps is 52,600.
///
/// This reproduces the operating point by construction; it is a calibration,
/// not a prediction.
pub fn reference_source_model() -> SourceModel {
    let base = SourceModel {
        pair_coeff: REFERENCE_PAIR_RATE_HZ / (REFERENCE_CAR_POWER_MW * REFERENCE_CAR_POWER_MW),
        noise_coeff_s: 0.0,
        noise_coeff_i: 0.0,
        eta_s: REFERENCE_ETA_S,
        eta_i: REFERENCE_ETA_I,
        eta_s_r: REFERENCE_ETA_S,
        eta_i_r: REFERENCE_ETA_I,
        dark_s: SNSPD_CHANNELS[0].0,
        dark_i: SNSPD_CHANNELS[1].0,
    };
    calibrate_noise_for_car(&base, REFERENCE_CAR_POWER_MW, COINCIDENCE_WINDOW_S, REFERENCE_CAR)
        .expect("reference operating point is reachable")
}

/// The same source before the detectors: optical efficiencies only, no
/// darks. Detecting it with channels 1 and 2 gives [`reference_source_model`].
pub fn reference_optical_source_model() -> SourceModel {
    let m = reference_source_model();
    let (es, ei) = (SNSPD_CHANNELS[0].1, SNSPD_CHANNELS[1].1);
    SourceModel {
        eta_s: m.eta_s / es,
        eta_i: m.eta_i / ei,
        eta_s_r: m.eta_s_r / es,
        eta_i_r: m.eta_i_r / ei,
        dark_s: 0.0,
        dark_i: 0.0,
        ..m
    }
}

/// Reference time-bin density matrix, rounded to four decimals.
pub fn reference_timebin_matrix() -> DensityMatrix {
    let c = Complex64::new;
    let rows = [
        [c(0.4527, 0.0), c(-0.0006, -0.0104), c(0.0367, -0.0411), c(0.3973, 0.2241)],
        [c(-0.0006, 0.0104), c(0.0042, 0.0), c(-0.0015, -0.0011), c(-0.0036, 0.0255)],
        [c(0.0367, 0.0411), c(-0.0015, 0.0011), c(0.0091, 0.0), c(0.0020, 0.0443)],
        [c(0.3973, -0.2241), c(-0.0036, -0.0255), c(0.0020, -0.0443), c(0.5295, 0.0)],
    ];
    DensityMatrix::from_rows(rows, Basis::TimeBin).expect("reference matrix is finite")
}

pub const REFERENCE_TIMEBIN_DIAGONAL: [f64; 4] = [0.4527, 0.0042, 0.0091, 0.5295];
pub const REFERENCE_TIMEBIN_FIDELITY: f64 = 0.8970;
pub const REFERENCE_TIMEBIN_FIDELITY_SIGMA: f64 = 0.0435;

pub fn reference_freqbin_params() -> FreqBinParams {
    FreqBinParams {
        a: 0.502,
        visibility: 0.9685,
        phi: 0.182,
    }
}

pub const REFERENCE_FREQBIN_FIDELITY: f64 = 0.9756;

/// Reference beating-fit values. The frequency spacing is given as
/// 2.220e12 "rad/s"; the filter centres give 2π × 2.2258e12 rad/s.
pub fn reference_beating_params(c0: f64) -> BeatingParams {
    BeatingParams {
        c0,
        visibility: 0.9685,
        omega: TAU * 116.4e9,
        delta_omega: 2.220e12,
        phi: 0.182,
        tau0: 0.0,
    }
}

/// Franson visibilities and uncertainties for port pairs
/// `(A1,B1), (A1,B2), (A2,B1), (A2,B2)`.
pub const FRANSON_VISIBILITIES: [((u8, u8), f64, f64); 4] = [
    ((1, 1), 0.9459, 0.0243),
    ((1, 2), 0.9212, 0.0251),
    ((2, 1), 0.9030, 0.0236),
    ((2, 2), 0.9405, 0.0239),
];
pub const REFERENCE_POOLED_VISIBILITY: f64 = 0.9175;
pub const REFERENCE_ENERGY_TIME_VISIBILITY: f64 = 0.9574;

/// Fringe records carrying the reference visibilities, with
/// anti-correlated ports shifted by π and a 2π period.
pub fn reference_franson_fits() -> BTreeMap<(u8, u8), FringeFit> {
    FRANSON_VISIBILITIES
        .iter()
        .map(|&(ports, v, s)| {
            let phase0 = if (ports.0 + ports.1) % 2 == 0 { 0.0 } else { PI };
            let fit = FringeFit {
                c0: 1000.0,
                visibility: v,
                phase0,
                period: TAU,
                period_fixed: true,
                covariance: vec![vec![0.0; 3]; 3],
                bootstrap_sigma: Some(vec![0.0, s, 0.0]),
                chi2: 0.0,
                dof: 0,
                unidentifiable: Vec::new(),
            };
            (ports, fit)
        })
        .collect()
}

/// Signal and idler DWDM filters, and the pump frequency halfway between.
/// Returns `(signal, idler, ω_p0)`; the idler filter is centred on the
/// exact energy-conserving partner of the signal channel.
pub fn reference_filters() -> (FilterSpec, FilterSpec, f64) {
    let signal = FilterSpec::from_wavelength(SIGNAL_NM, FILTER_BANDWIDTH_HZ).expect("valid filter");
    let idler_nominal = FilterSpec::from_wavelength(IDLER_NM, FILTER_BANDWIDTH_HZ).expect("valid filter");
    let omega_p0 = 0.5 * (signal.center + idler_nominal.center);
    (signal, signal.mirrored(omega_p0), omega_p0)
}
