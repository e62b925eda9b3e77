//! Quantum-beating fits,
//! `C(τ) = c0·[1 − V·sinc(Ω·(τ−τ0))·cos(Δω·(τ−τ0) + φ)]` with
//! `sinc(x) = sin(x)/x`.
//!
//! Internally delays are in picoseconds and frequencies in rad/ps so that all
//! six parameters are of order one; the public interface is SI.

use std::f64::consts::{PI, TAU};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, poisson_sigmas, LmConfig, LmFit};
use crate::error::{Error, Result};
use crate::spectral_model::sinc;

pub const BEATING_PARAMS: [&str; 6] = ["c0", "visibility", "omega", "delta_omega", "phi", "tau0"];

/// SI scale of each parameter relative to the internal units.
const SCALE: [f64; 6] = [1.0, 1.0, 1e12, 1e12, 1.0, 1e-12];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeatingParams {
    pub c0: f64,
    pub visibility: f64,
    /// rad/s
    pub omega: f64,
    /// rad/s
    pub delta_omega: f64,
    pub phi: f64,
    /// s
    pub tau0: f64,
}

impl BeatingParams {
    pub fn eval(&self, tau: f64) -> f64 {
        let u = tau - self.tau0;
        self.c0 * (1.0 - self.visibility * sinc(self.omega * u) * (self.delta_omega * u + self.phi).cos())
    }

    pub fn to_vec(&self) -> [f64; 6] {
        [self.c0, self.visibility, self.omega, self.delta_omega, self.phi, self.tau0]
    }

    pub fn from_slice(p: &[f64]) -> Self {
        BeatingParams {
            c0: p[0],
            visibility: p[1],
            omega: p[2],
            delta_omega: p[3],
            phi: p[4],
            tau0: p[5],
        }
    }

    fn internal(&self) -> Vec<f64> {
        self.to_vec().iter().zip(SCALE).map(|(v, s)| v / s).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub phi0: f64,
    pub chi2: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeatingDiagnostics {
    pub iterations: usize,
    pub starts: Vec<StartRecord>,
    /// Parameters the data cannot determine (for example Ω when V = 0).
    pub unidentifiable: Vec<String>,
    /// Dominant angular frequency of the residual oscillation, rad/s.
    pub spectral_peak: f64,
    /// Nyquist angular frequency of the delay sampling, rad/s.
    pub nyquist: f64,
    pub oscillation_detected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeatingFit {
    pub params: BeatingParams,
    /// SI units, parameter order as in [`BEATING_PARAMS`].
    pub covariance: Vec<Vec<f64>>,
    pub bootstrap_sigma: Option<Vec<f64>>,
    pub chi2: f64,
    pub dof: usize,
    pub diagnostics: BeatingDiagnostics,
}

impl BeatingFit {
    pub fn sigma(&self, k: usize) -> f64 {
        self.covariance[k][k].sqrt()
    }
}

fn dsinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        -x / 3.0 + x * x * x / 30.0
    } else {
        (x * x.cos() - x.sin()) / (x * x)
    }
}

/// Model in internal units, with analytic Jacobian.
fn model(tau: f64, p: &[f64], j: &mut [f64]) -> f64 {
    let (c0, v, om, dw, phi, t0) = (p[0], p[1], p[2], p[3], p[4], p[5]);
    let u = tau - t0;
    let s = sinc(om * u);
    let ds = dsinc(om * u);
    let arg = dw * u + phi;
    let (c, sn) = (arg.cos(), arg.sin());
    j[0] = 1.0 - v * s * c;
    j[1] = -c0 * s * c;
    j[2] = -c0 * v * c * ds * u;
    j[3] = c0 * v * s * sn * u;
    j[4] = c0 * v * s * sn;
    j[5] = c0 * v * (ds * om * c - s * sn * dw);
    c0 * (1.0 - v * s * c)
}

fn config() -> LmConfig {
    LmConfig::unbounded(6)
        .bound(0, 0.0, f64::INFINITY)
        .bound(1, 0.0, 1.0)
        .bound(2, 1e-9, f64::INFINITY)
        .bound(3, 0.0, f64::INFINITY)
}

struct Seed {
    c0: f64,
    visibility: f64,
    omega: f64,
    delta_omega: f64,
    tau0: f64,
    peak: f64,
    nyquist: f64,
    significant: bool,
}

/// Seeds Δω and Ω from the spectrum of the normalized oscillation. The
/// spectrum of `sinc(Ωτ)·cos(Δωτ)` is flat on `[Δω − Ω, Δω + Ω]`.
fn spectral_seed(tau_ps: &[f64], y: &[f64]) -> Result<Seed> {
    let n = tau_ps.len();
    let dt = (tau_ps[n - 1] - tau_ps[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::domain("delays must increase"));
    }
    for (k, w) in tau_ps.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
            return Err(Error::domain(format!("delays must be evenly spaced (step {k})")));
        }
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    if !(mean > 0.0) {
        return Err(Error::domain("all counts are zero"));
    }
    let pad = (8 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = y.iter().map(|v| Complex::new(1.0 - v / mean, 0.0)).collect();
    buf.resize(pad, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(pad).process(&mut buf);
    let power: Vec<f64> = buf[..pad / 2].iter().map(|c| c.norm_sqr()).collect();
    let freq = |m: usize| TAU * m as f64 / (pad as f64 * dt);
    let (m_peak, &p_peak) = power
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap_or((0, &0.0));
    let mut sorted = power.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let significant = p_peak > 25.0 * median.max(1e-300);
    let mut lo = m_peak;
    while lo > 0 && power[lo - 1] >= 0.25 * p_peak {
        lo -= 1;
    }
    let mut hi = m_peak;
    while hi + 1 < power.len() && power[hi + 1] >= 0.25 * p_peak {
        hi += 1;
    }
    let (f_lo, f_hi) = (freq(lo), freq(hi));
    let nyquist = PI / dt;
    let amp = y.iter().map(|v| (v / mean - 1.0).abs()).fold(0.0, f64::max);
    let weight: Vec<f64> = y.iter().map(|v| (v / mean - 1.0).powi(2)).collect();
    let wsum: f64 = weight.iter().sum();
    let tau0 = if wsum > 0.0 {
        tau_ps.iter().zip(&weight).map(|(t, w)| t * w).sum::<f64>() / wsum
    } else {
        0.0
    };
    Ok(Seed {
        c0: mean,
        visibility: amp.clamp(0.05, 1.0),
        omega: (0.5 * (f_hi - f_lo)).max(freq(1)),
        delta_omega: 0.5 * (f_hi + f_lo),
        tau0,
        peak: freq(m_peak),
        nyquist,
        significant,
    })
}

/// Fits the beating model with starts at `φ ∈ {0, π}` and keeps the lowest χ².
pub fn fit_beating(tau: &[f64], y: &[f64]) -> Result<BeatingFit> {
    if tau.len() != y.len() {
        return Err(Error::domain("tau and y lengths differ"));
    }
    if tau.len() < 40 {
        return Err(Error::domain(format!("beating fit needs >= 40 points, got {}", tau.len())));
    }
    if y.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::domain("counts must be finite and >= 0"));
    }
    let tau_ps: Vec<f64> = tau.iter().map(|t| t * 1e12).collect();
    let seed = spectral_seed(&tau_ps, y)?;
    if seed.significant {
        let band_top = seed.delta_omega + seed.omega;
        if band_top >= 0.95 * seed.nyquist {
            return Err(Error::validation(format!(
                "beat undersampled: oscillation reaches {:.3e} rad/s, Nyquist is {:.3e} rad/s",
                band_top * 1e12,
                seed.nyquist * 1e12
            )));
        }
        let half_span = 0.5 * (tau_ps[tau_ps.len() - 1] - tau_ps[0]);
        if half_span * seed.omega < TAU {
            return Err(Error::validation(
                "delay range covers fewer than two envelope zeros on each side",
            ));
        }
    }
    let sigma = poisson_sigmas(y);
    let mut best: Option<LmFit> = None;
    let mut starts = Vec::new();
    let mut last_err = None;
    for phi0 in [0.0, PI] {
        let p0 = [seed.c0, seed.visibility, seed.omega, seed.delta_omega, phi0, seed.tau0];
        match levenberg_marquardt(model, &tau_ps, y, &sigma, &p0, &config()) {
            Ok(fit) => {
                starts.push(StartRecord {
                    phi0,
                    chi2: Some(fit.chi2),
                    error: None,
                });
                if best.as_ref().is_none_or(|b| fit.chi2 < b.chi2) {
                    best = Some(fit);
                }
            }
            Err(e) => {
                starts.push(StartRecord {
                    phi0,
                    chi2: None,
                    error: Some(e.to_string()),
                });
                last_err = Some(e);
            }
        }
    }
    let fit = match best {
        Some(f) => f,
        None => return Err(last_err.expect("at least one start ran")),
    };
    Ok(assemble(
        fit,
        BeatingDiagnostics {
            iterations: 0,
            starts,
            unidentifiable: Vec::new(),
            spectral_peak: seed.peak * 1e12,
            nyquist: seed.nyquist * 1e12,
            oscillation_detected: seed.significant,
        },
    ))
}

/// Single LM run from a known start, used for warm-started refits.
pub fn fit_beating_from(tau: &[f64], y: &[f64], start: &BeatingParams) -> Result<BeatingFit> {
    let tau_ps: Vec<f64> = tau.iter().map(|t| t * 1e12).collect();
    let sigma = poisson_sigmas(y);
    let fit = levenberg_marquardt(model, &tau_ps, y, &sigma, &start.internal(), &config())?;
    Ok(assemble(
        fit,
        BeatingDiagnostics {
            iterations: 0,
            starts: vec![StartRecord {
                phi0: start.phi,
                chi2: None,
                error: None,
            }],
            unidentifiable: Vec::new(),
            spectral_peak: f64::NAN,
            nyquist: f64::NAN,
            oscillation_detected: true,
        },
    ))
}

fn assemble(fit: LmFit, mut diagnostics: BeatingDiagnostics) -> BeatingFit {
    let mut p: Vec<f64> = fit.params.iter().zip(SCALE).map(|(v, s)| v * s).collect();
    p[4] = (p[4] + PI).rem_euclid(TAU) - PI;
    let covariance = (0..6)
        .map(|a| (0..6).map(|b| fit.covariance[a][b] * SCALE[a] * SCALE[b]).collect())
        .collect();
    diagnostics.iterations = fit.iterations;
    diagnostics.unidentifiable = fit.unidentifiable.iter().map(|&j| BEATING_PARAMS[j].to_string()).collect();
    BeatingFit {
        params: BeatingParams::from_slice(&p),
        covariance,
        bootstrap_sigma: None,
        chi2: fit.chi2,
        dof: fit.dof,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn reference() -> BeatingParams {
        BeatingParams {
            c0: 2000.0,
            visibility: 0.9685,
            omega: TAU * 116.4e9,
            delta_omega: 2.220e12,
            phi: 0.182,
            tau0: 0.0,
        }
    }

    fn delays() -> Vec<f64> {
        (0..=150).map(|k| (-15.0 + 0.2 * k as f64) * 1e-12).collect()
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = reference().internal();
        let mut j = [0.0; 6];
        for tau in [-7.3, -0.01, 0.0, 2.2, 11.0] {
            model(tau, &p, &mut j);
            for k in 0..6 {
                let h = 1e-6 * p[k].abs().max(1e-3);
                let mut up = p.clone();
                let mut dn = p.clone();
                up[k] += h;
                dn[k] -= h;
                let mut dummy = [0.0; 6];
                let fd = (model(tau, &up, &mut dummy) - model(tau, &dn, &mut dummy)) / (2.0 * h);
                assert!((fd - j[k]).abs() <= 1e-5 * (1.0 + fd.abs()), "param {k} at {tau}: {fd} vs {}", j[k]);
            }
        }
    }

    #[test]
    fn noiseless_recovery() {
        let truth = reference();
        let tau = delays();
        let y: Vec<f64> = tau.iter().map(|t| truth.eval(*t)).collect();
        let fit = fit_beating(&tau, &y).unwrap();
        let got = fit.params.to_vec();
        for (k, want) in truth.to_vec().iter().enumerate() {
            let tol = 1e-6 * want.abs().max(1e-3 * SCALE[k]);
            assert!((got[k] - want).abs() < tol, "{}: {} vs {want}", BEATING_PARAMS[k], got[k]);
        }
    }

    #[test]
    fn flat_data_flags_envelope() {
        let tau = delays();
        let y = vec![1500.0; tau.len()];
        let fit = fit_beating(&tau, &y).unwrap();
        assert!(fit.params.visibility < 1e-9);
        assert!(fit.diagnostics.unidentifiable.contains(&"omega".to_string()));
        assert!(!fit.diagnostics.oscillation_detected);
    }

    #[test]
    fn undersampled_beat_rejected() {
        let truth = BeatingParams {
            delta_omega: 15.2e12,
            ..reference()
        };
        let tau = delays();
        let y: Vec<f64> = tau.iter().map(|t| truth.eval(*t)).collect();
        assert!(matches!(fit_beating(&tau, &y), Err(Error::Validation(_))));
    }

    #[test]
    fn needs_forty_points() {
        let tau: Vec<f64> = (0..30).map(|k| k as f64 * 1e-12).collect();
        assert!(fit_beating(&tau, &vec![1.0; 30]).is_err());
    }
}
