//! Cosine fringe fits, `y = c0·[1 + V·cos(k·x + φ₀)]` with `k = 2π/period`.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, poisson_sigmas, LmConfig, LmFit};
use crate::error::{Error, Result};

pub const FRINGE_PARAMS: [&str; 4] = ["c0", "visibility", "phase0", "k"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub c0: f64,
    pub visibility: f64,
    /// Wrapped to `(−π, π]`.
    pub phase0: f64,
    /// Period in the units of `x` (radians for phase scans).
    pub period: f64,
    pub period_fixed: bool,
    /// Over `[c0, V, φ₀]`, plus `k` when the period is free.
    pub covariance: Vec<Vec<f64>>,
    pub bootstrap_sigma: Option<Vec<f64>>,
    pub chi2: f64,
    pub dof: usize,
    pub unidentifiable: Vec<String>,
}

impl FringeFit {
    pub fn params(&self) -> Vec<f64> {
        let mut p = vec![self.c0, self.visibility, self.phase0];
        if !self.period_fixed {
            p.push(TAU / self.period);
        }
        p
    }

    pub fn visibility_sigma(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn period_sigma(&self) -> Option<f64> {
        (!self.period_fixed).then(|| {
            let k = TAU / self.period;
            self.covariance[3][3].sqrt() * TAU / (k * k)
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.c0 * (1.0 + self.visibility * (TAU / self.period * x + self.phase0).cos())
    }

    /// Extremes of the fitted curve give `(max − min)/(max + min)`.
    pub fn curve_visibility(&self) -> f64 {
        let max = self.c0 * (1.0 + self.visibility);
        let min = self.c0 * (1.0 - self.visibility);
        (max - min) / (max + min)
    }
}

fn cosine_fixed(k: f64) -> impl Fn(f64, &[f64], &mut [f64]) -> f64 {
    move |x, p, j| {
        let (c, s) = ((k * x + p[2]).cos(), (k * x + p[2]).sin());
        j[0] = 1.0 + p[1] * c;
        j[1] = p[0] * c;
        j[2] = -p[0] * p[1] * s;
        p[0] * (1.0 + p[1] * c)
    }
}

fn cosine_free(x: f64, p: &[f64], j: &mut [f64]) -> f64 {
    let arg = p[3] * x + p[2];
    let (c, s) = (arg.cos(), arg.sin());
    j[0] = 1.0 + p[1] * c;
    j[1] = p[0] * c;
    j[2] = -p[0] * p[1] * s;
    j[3] = -p[0] * p[1] * s * x;
    p[0] * (1.0 + p[1] * c)
}

/// Weighted linear fit of `a + b·cos(kx) + c·sin(kx)`; returns the starting
/// point `[c0, V, φ₀]` and its χ².
fn linear_seed(x: &[f64], y: &[f64], w: &[f64], k: f64) -> Option<([f64; 3], f64)> {
    let n = x.len();
    let a = DMatrix::from_fn(n, 3, |i, j| {
        let v = match j {
            0 => 1.0,
            1 => (k * x[i]).cos(),
            _ => (k * x[i]).sin(),
        };
        v / w[i]
    });
    let b = DVector::from_fn(n, |i, _| y[i] / w[i]);
    let sol = a.clone().svd(true, true).solve(&b, 1e-12).ok()?;
    let chi2 = (a * &sol - b).norm_squared();
    let (c0, bc, bs) = (sol[0], sol[1], sol[2]);
    if !(c0 > 0.0) {
        return None;
    }
    let v = (bc.hypot(bs) / c0).min(1.0);
    Some(([c0, v, (-bs).atan2(bc)], chi2))
}

fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(TAU) - PI;
    if w <= -PI { w + TAU } else { w }
}

fn validate(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::domain("x and y lengths differ"));
    }
    if x.len() < 5 {
        return Err(Error::domain(format!("fringe fit needs >= 5 points, got {}", x.len())));
    }
    if y.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("counts must be finite and >= 0; x must be finite"));
    }
    if y.iter().all(|&v| v == 0.0) {
        return Err(Error::domain("all counts are zero"));
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // each sample covers one spacing, so N points at 2π/N cover a full turn
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut dx: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    dx.sort_by(f64::total_cmp);
    Ok(hi - lo + dx.get(dx.len() / 2).copied().unwrap_or(0.0))
}

fn bounds(n: usize) -> LmConfig {
    LmConfig::unbounded(n).bound(0, 0.0, f64::INFINITY).bound(1, 0.0, 1.0)
}

fn assemble(fit: LmFit, fixed_k: Option<f64>) -> FringeFit {
    let k = fixed_k.unwrap_or(fit.params.get(3).copied().unwrap_or(1.0));
    FringeFit {
        c0: fit.params[0],
        visibility: fit.params[1],
        phase0: wrap_phase(fit.params[2]),
        period: TAU / k,
        period_fixed: fixed_k.is_some(),
        unidentifiable: fit.unidentifiable.iter().map(|&j| FRINGE_PARAMS[j].to_string()).collect(),
        covariance: fit.covariance,
        bootstrap_sigma: None,
        chi2: fit.chi2,
        dof: fit.dof,
    }
}

/// Poisson-weighted cosine fit. With `fixed_period` the period is held;
/// otherwise it is located by a scan over linear fits and then refined.
pub fn fit_cosine(x: &[f64], y: &[f64], fixed_period: Option<f64>) -> Result<FringeFit> {
    let extent = validate(x, y)?;
    let sigma = poisson_sigmas(y);
    match fixed_period {
        Some(period) => {
            if !(period > 0.0) {
                return Err(Error::domain("period must be > 0"));
            }
            if extent < period * (1.0 - 1e-9) {
                return Err(Error::domain(format!(
                    "x spans {extent:.4}, less than one period ({period:.4})"
                )));
            }
            let k = TAU / period;
            let (seed, _) = linear_seed(x, y, &sigma, k).unwrap_or(([mean(y).max(1e-12), 0.0, 0.0], 0.0));
            fit_cosine_from(x, y, &sigma, &seed, Some(k))
        }
        None => {
            if !(extent > 0.0) {
                return Err(Error::domain("x values must not all coincide"));
            }
            let mut dx: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0]).abs()).filter(|d| *d > 0.0).collect();
            dx.sort_by(f64::total_cmp);
            let k_max = PI / dx.get(dx.len() / 2).copied().unwrap_or(extent);
            let k_min = TAU / extent;
            let step = TAU / (8.0 * extent);
            let mut best: Option<([f64; 3], f64, f64)> = None;
            let mut k = k_min;
            while k <= k_max {
                if let Some((seed, chi2)) = linear_seed(x, y, &sigma, k) {
                    if best.as_ref().is_none_or(|b| chi2 < b.1) {
                        best = Some((seed, chi2, k));
                    }
                }
                k += step;
            }
            let (seed, _, k) = best.ok_or_else(|| Error::domain("no usable period found in scan"))?;
            let p0 = [seed[0], seed[1], seed[2], k];
            fit_cosine_from(x, y, &sigma, &p0, None)
        }
    }
}

/// LM refinement from an explicit start (`[c0, V, φ₀]` plus `k` when free).
pub fn fit_cosine_from(x: &[f64], y: &[f64], sigma: &[f64], p0: &[f64], fixed_k: Option<f64>) -> Result<FringeFit> {
    let fit = match fixed_k {
        Some(k) => levenberg_marquardt(cosine_fixed(k), x, y, sigma, p0, &bounds(3))?,
        None => levenberg_marquardt(cosine_free, x, y, sigma, p0, &bounds(4))?,
    };
    Ok(assemble(fit, fixed_k))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize, span: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * span / (n - 1) as f64).collect()
    }

    #[test]
    fn noiseless_recovery() {
        let x = grid(50, 2.0 * TAU);
        let y: Vec<f64> = x.iter().map(|v| 100.0 * (1.0 + 0.9 * (v + 0.3).cos())).collect();
        let f = fit_cosine(&x, &y, Some(TAU)).unwrap();
        assert!((f.c0 - 100.0).abs() < 1e-6);
        assert!((f.visibility - 0.9).abs() < 1e-6);
        assert!((f.phase0 - 0.3).abs() < 1e-6);
        let g = fit_cosine(&x, &y, None).unwrap();
        assert!((g.period - TAU).abs() < 1e-6, "{}", g.period);
        assert!((g.visibility - 0.9).abs() < 1e-6);
    }

    #[test]
    fn half_period_found_when_free() {
        let x = grid(60, TAU);
        let y: Vec<f64> = x.iter().map(|v| 500.0 * (1.0 + 0.7 * (2.0 * v - 1.0).cos())).collect();
        let g = fit_cosine(&x, &y, None).unwrap();
        assert!((g.period - PI).abs() < 1e-6);
        assert!((g.phase0 + 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_data_gives_zero_visibility() {
        let x = grid(20, TAU);
        let y = vec![250.0; 20];
        let f = fit_cosine(&x, &y, Some(TAU)).unwrap();
        assert!(f.visibility < 1e-9);
        assert!(f.unidentifiable.contains(&"phase0".to_string()) || f.covariance[2][2] > 1e6);
    }

    #[test]
    fn too_few_points_or_short_span() {
        assert!(fit_cosine(&[0.0, 1.0, 2.0, 3.0], &[1.0; 4], Some(TAU)).is_err());
        let x = grid(10, 3.0);
        assert!(fit_cosine(&x, &[5.0; 10], Some(TAU)).is_err());
    }

    #[test]
    fn curve_visibility_matches_parameter() {
        let x = grid(30, TAU);
        let y: Vec<f64> = x.iter().map(|v| 80.0 * (1.0 + 0.4 * (v - 2.0).cos())).collect();
        let f = fit_cosine(&x, &y, Some(TAU)).unwrap();
        assert!((f.curve_visibility() - f.visibility).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn scale_invariance(
            v in 0.2f64..0.98,
            phi in -3.0f64..3.0,
            scale in 0.1f64..50.0,
            jitter in proptest::collection::vec(-0.05f64..0.05, 40),
        ) {
            let x = grid(40, 2.0 * TAU);
            let y: Vec<f64> = x.iter().zip(&jitter).map(|(a, e)| 1000.0 * (1.0 + v * (a + phi).cos()) * (1.0 + e)).collect();
            let ys: Vec<f64> = y.iter().map(|a| a * scale).collect();
            let f = fit_cosine(&x, &y, Some(TAU)).unwrap();
            let g = fit_cosine(&x, &ys, Some(TAU)).unwrap();
            prop_assert!((f.visibility - g.visibility).abs() < 1e-9);
            prop_assert!((wrap_phase(f.phase0 - g.phase0)).abs() < 1e-9);
        }
    }
}
