//! Algebraic count-rate model for a pair source with linear noise and dark
//! counts, its inversion, and the polynomial power-sweep fit used to split
//! detected singles into pair and noise contributions.
//!
//! With pump power `P` (mW), pair generation rate `R = pair_coeff·P²` and
//! noise generation `R_{s,i} = noise_coeff_{s,i}·P`:
//!
//! ```text
//! N_s  = R·η_s + R_s·η_s^r + d_s
//! N_i  = R·η_i + R_i·η_i^r + d_i
//! C_c  = R·η_s·η_i + A_cc
//! A_cc = N_s·N_i·Δτ
//! ```
//!
//! Everything here is a rate in Hz. Multiply by an integration time to get
//! counts.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Effective rate coefficients and efficiencies of a pair source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    /// Hz/mW²
    pub pair_coeff: f64,
    /// Hz/mW
    pub noise_coeff_s: f64,
    /// Hz/mW
    pub noise_coeff_i: f64,
    pub eta_s: f64,
    pub eta_i: f64,
    /// Collection efficiency for noise photons in the signal channel.
    pub eta_s_r: f64,
    pub eta_i_r: f64,
    /// Hz
    pub dark_s: f64,
    /// Hz
    pub dark_i: f64,
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("pair_coeff", self.pair_coeff),
            ("noise_coeff_s", self.noise_coeff_s),
            ("noise_coeff_i", self.noise_coeff_i),
            ("dark_s", self.dark_s),
            ("dark_i", self.dark_i),
        ];
        for (name, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        let effs = [
            ("eta_s", self.eta_s),
            ("eta_i", self.eta_i),
            ("eta_s_r", self.eta_s_r),
            ("eta_i_r", self.eta_i_r),
        ];
        for (name, v) in effs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Pair generation rate `R` in Hz.
    pub fn pair_rate(&self, power_mw: f64) -> f64 {
        self.pair_coeff * power_mw * power_mw
    }

    /// Noise generation rates `(R_s, R_i)` in Hz.
    pub fn noise_rates(&self, power_mw: f64) -> (f64, f64) {
        (self.noise_coeff_s * power_mw, self.noise_coeff_i * power_mw)
    }

    /// Detected noise rates `(R_s·η_s^r, R_i·η_i^r)`.
    pub fn noise_terms(&self, power_mw: f64) -> NoiseTerms {
        let (rs, ri) = self.noise_rates(power_mw);
        NoiseTerms {
            signal: rs * self.eta_s_r,
            idler: ri * self.eta_i_r,
        }
    }

    /// The same source seen through detectors with the given efficiencies and
    /// dark rates: every efficiency is multiplied by the detector's and the
    /// darks are replaced.
    pub fn detected_by(&self, eff_s: f64, eff_i: f64, dark_s: f64, dark_i: f64) -> SourceModel {
        SourceModel {
            eta_s: self.eta_s * eff_s,
            eta_i: self.eta_i * eff_i,
            eta_s_r: self.eta_s_r * eff_s,
            eta_i_r: self.eta_i_r * eff_i,
            dark_s,
            dark_i,
            ..*self
        }
    }
}

/// Forward prediction of singles, coincidence and accidental rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountPrediction {
    pub n_s: f64,
    pub n_i: f64,
    pub c_c: f64,
    pub a_cc: f64,
    /// Coincidence window in seconds.
    pub window: f64,
}

impl CountPrediction {
    pub fn car(&self) -> Result<f64> {
        car(self.c_c, self.a_cc)
    }

    /// Multiplies every rate by an integration time.
    pub fn counts(&self, integration_s: f64) -> CountPrediction {
        CountPrediction {
            n_s: self.n_s * integration_s,
            n_i: self.n_i * integration_s,
            c_c: self.c_c * integration_s,
            a_cc: self.a_cc * integration_s,
            window: self.window,
        }
    }
}

pub fn predict_counts(model: &SourceModel, power_mw: f64, window_s: f64) -> Result<CountPrediction> {
    model.validate()?;
    if !(power_mw >= 0.0 && power_mw.is_finite()) {
        return Err(Error::domain(format!("pump power {power_mw} mW must be >= 0")));
    }
    if !(window_s > 0.0 && window_s.is_finite()) {
        return Err(Error::domain(format!("coincidence window {window_s} s must be > 0")));
    }
    let r = model.pair_rate(power_mw);
    let noise = model.noise_terms(power_mw);
    let n_s = r * model.eta_s + noise.signal + model.dark_s;
    let n_i = r * model.eta_i + noise.idler + model.dark_i;
    let a_cc = n_s * n_i * window_s;
    let c_c = r * model.eta_s * model.eta_i + a_cc;
    Ok(CountPrediction {
        n_s,
        n_i,
        c_c,
        a_cc,
        window: window_s,
    })
}

/// Coincidence-to-accidental ratio `C_c / A_cc`.
pub fn car(c_c: f64, a_cc: f64) -> Result<f64> {
    if c_c < 0.0 || a_cc < 0.0 || !c_c.is_finite() || !a_cc.is_finite() {
        return Err(Error::domain(format!("counts must be >= 0 (c_c = {c_c}, a_cc = {a_cc})")));
    }
    if a_cc == 0.0 {
        return Err(Error::ZeroAccidentals);
    }
    Ok(c_c / a_cc)
}

/// Detected noise rates `R_s·η_s^r` and `R_i·η_i^r` in Hz.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseTerms {
    pub signal: f64,
    pub idler: f64,
}

/// Pair generation rate and pair collection efficiencies recovered from
/// observed rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateInversion {
    /// Hz
    pub pair_rate: f64,
    pub eta_s: f64,
    pub eta_i: f64,
}

/// Solves the rate model for `(R, η_s, η_i)` given observed rates, the dark
/// rates and the detected noise terms (normally the linear component of a
/// power-sweep fit evaluated at the operating power).
pub fn invert_rates(
    observed: &CountPrediction,
    dark_s: f64,
    dark_i: f64,
    noise: NoiseTerms,
) -> Result<RateInversion> {
    let excess = observed.c_c - observed.a_cc;
    if !(excess > 0.0) {
        return Err(Error::NoPairSignal {
            coincidences: observed.c_c,
            accidentals: observed.a_cc,
        });
    }
    // R·η_s and R·η_i
    let pair_s = observed.n_s - noise.signal - dark_s;
    let pair_i = observed.n_i - noise.idler - dark_i;
    if !(pair_s > 0.0) || !(pair_i > 0.0) {
        return Err(Error::validation(format!(
            "singles do not exceed dark + noise (signal excess {pair_s}, idler excess {pair_i})"
        )));
    }
    let eta_s = excess / pair_i;
    let eta_i = excess / pair_s;
    Ok(RateInversion {
        pair_rate: pair_s / eta_s,
        eta_s,
        eta_i,
    })
}

/// Finds a common noise coefficient (Hz/mW, same for both channels) such that
/// the predicted CAR at `power_mw` equals `target_car`.
pub fn calibrate_noise_for_car(
    base: &SourceModel,
    power_mw: f64,
    window_s: f64,
    target_car: f64,
) -> Result<SourceModel> {
    if !(target_car > 1.0) {
        return Err(Error::domain("target CAR must exceed 1"));
    }
    let quiet = SourceModel {
        noise_coeff_s: 0.0,
        noise_coeff_i: 0.0,
        ..*base
    };
    let p0 = predict_counts(&quiet, power_mw, window_s)?;
    let signal = p0.c_c - p0.a_cc;
    let product_needed = signal / (target_car - 1.0) / window_s;
    let (a0, b0) = (p0.n_s, p0.n_i);
    if product_needed < a0 * b0 {
        return Err(Error::domain(format!(
            "target CAR {target_car} exceeds the dark-count-limited CAR {}",
            p0.car()?
        )));
    }
    let (a, b) = (base.eta_s_r * power_mw, base.eta_i_r * power_mw);
    // (a0 + a k)(b0 + b k) = product_needed
    let qa = a * b;
    let qb = a0 * b + a * b0;
    let qc = a0 * b0 - product_needed;
    let k = if qa == 0.0 {
        if qb == 0.0 {
            return Err(Error::domain("noise collection efficiencies are zero"));
        }
        -qc / qb
    } else {
        (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa)
    };
    Ok(SourceModel {
        noise_coeff_s: k,
        noise_coeff_i: k,
        ..*base
    })
}

/// Power (mW) maximizing the predicted CAR, by golden-section search in
/// `log P` between `lo` and `hi`.
pub fn car_maximizing_power(model: &SourceModel, window_s: f64, lo: f64, hi: f64) -> Result<f64> {
    let eval = |lp: f64| -> Result<f64> { predict_counts(model, lp.exp(), window_s)?.car() };
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(d)?;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Least-squares polynomial fit of a power sweep. Coefficients are stored in
/// ascending order of power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSweepFit {
    pub degree: usize,
    pub coefficients: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub residual_sum_squares: f64,
    pub dof: usize,
    pub power_range: (f64, f64),
}

impl PowerSweepFit {
    pub fn constant(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn linear(&self) -> f64 {
        self.coefficients.get(1).copied().unwrap_or(0.0)
    }

    pub fn quadratic(&self) -> f64 {
        self.coefficients.get(2).copied().unwrap_or(0.0)
    }

    pub fn sigma(&self, k: usize) -> f64 {
        self.covariance[k][k].sqrt()
    }

    pub fn eval(&self, power_mw: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * power_mw + c)
    }

    /// Pair contribution `c₂·P²`.
    pub fn quadratic_part(&self, power_mw: f64) -> f64 {
        self.quadratic() * power_mw * power_mw
    }

    /// Noise contribution `c₁·P`.
    pub fn linear_part(&self, power_mw: f64) -> f64 {
        self.linear() * power_mw
    }

    /// Checks the fitted curve on a dense grid over the fitted range.
    pub fn is_nonnegative_on_range(&self) -> bool {
        let (lo, hi) = self.power_range;
        (0..=256).all(|k| self.eval(lo + (hi - lo) * k as f64 / 256.0) >= 0.0)
    }
}

pub fn fit_power_sweep(powers_mw: &[f64], counts_hz: &[f64], degree: usize) -> Result<PowerSweepFit> {
    if !(1..=2).contains(&degree) {
        return Err(Error::domain(format!("polynomial degree {degree} not supported (1 or 2)")));
    }
    if powers_mw.len() != counts_hz.len() {
        return Err(Error::validation("powers and counts differ in length"));
    }
    let n = powers_mw.len();
    if n < 4 {
        return Err(Error::validation(format!("power sweep needs >= 4 points, got {n}")));
    }
    if powers_mw.iter().chain(counts_hz).any(|v| !v.is_finite()) {
        return Err(Error::validation("power sweep contains non-finite values"));
    }
    let p = degree + 1;
    let design = DMatrix::from_fn(n, p, |i, j| powers_mw[i].powi(j as i32));
    let y = DVector::from_column_slice(counts_hz);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::Singular(format!(
            "power sweep design matrix is rank deficient (singular values {smin:.3e}/{smax:.3e})"
        )));
    }
    let coeffs = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let resid = &y - &design * &coeffs;
    let rss = resid.norm_squared();
    let dof = n - p;
    let s2 = rss / dof as f64;
    let xtx_inv = (design.transpose() * &design)
        .try_inverse()
        .ok_or_else(|| Error::Singular("normal matrix not invertible".into()))?;
    let cov = xtx_inv * s2;
    let lo = powers_mw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = powers_mw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fit = PowerSweepFit {
        degree,
        coefficients: coeffs.iter().copied().collect(),
        covariance: (0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect(),
        residual_sum_squares: rss,
        dof,
        power_range: (lo, hi),
    };
    if !fit.is_nonnegative_on_range() {
        log::warn!("fitted power-sweep curve goes negative inside the fitted range");
    }
    Ok(fit)
}
