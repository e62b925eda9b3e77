//! Box-constrained Levenberg-Marquardt with analytic Jacobians.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const GRADIENT_TOLERANCE: f64 = 1e-10;

/// `σ_i = √y_i`, or 1 where `y_i = 0`.
pub fn poisson_sigmas(y: &[f64]) -> Vec<f64> {
    y.iter().map(|&v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect()
}

#[derive(Clone, Debug)]
pub struct LmConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LmConfig {
    pub fn unbounded(n: usize) -> Self {
        LmConfig {
            max_iterations: MAX_ITERATIONS,
            gradient_tolerance: GRADIENT_TOLERANCE,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn bound(mut self, index: usize, lo: f64, hi: f64) -> Self {
        self.lower[index] = lo;
        self.upper[index] = hi;
        self
    }
}

/// Result of a converged fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// `(JᵀWJ)⁻¹`; rows and columns of unidentifiable parameters are infinite
    /// on the diagonal.
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    /// Indices of parameters the data cannot determine.
    pub unidentifiable: Vec<usize>,
}

impl LmFit {
    pub fn sigma(&self, k: usize) -> f64 {
        self.covariance[k][k].sqrt()
    }

    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi2 / self.dof as f64
        }
    }
}

struct Linearization {
    chi2: f64,
    jtj: DMatrix<f64>,
    jtr: DVector<f64>,
}

fn linearize<F>(model: &F, x: &[f64], y: &[f64], sigma: &[f64], p: &[f64]) -> Linearization
where
    F: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    let n = p.len();
    let mut jtj = DMatrix::zeros(n, n);
    let mut jtr = DVector::zeros(n);
    let mut row = vec![0.0; n];
    let mut chi2 = 0.0;
    for ((&xi, &yi), &si) in x.iter().zip(y).zip(sigma) {
        let f = model(xi, p, &mut row);
        let r = (yi - f) / si;
        chi2 += r * r;
        for a in 0..n {
            let ja = row[a] / si;
            jtr[a] += ja * r;
            for b in 0..=a {
                jtj[(a, b)] += ja * row[b] / si;
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            jtj[(b, a)] = jtj[(a, b)];
        }
    }
    Linearization { chi2, jtj, jtr }
}

fn chi2_at<F>(model: &F, x: &[f64], y: &[f64], sigma: &[f64], p: &[f64]) -> f64
where
    F: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    let mut row = vec![0.0; p.len()];
    x.iter()
        .zip(y)
        .zip(sigma)
        .map(|((&xi, &yi), &si)| {
            let r = (yi - model(xi, p, &mut row)) / si;
            r * r
        })
        .sum()
}

/// True when the χ² decrease predicted by an undamped step on the free
/// parameters is below the rounding noise of evaluating χ² itself, which is
/// bounded by `2ε·|r|·|y/σ|`.
fn gain_below_rounding(lin: &Linearization, active: &[bool], data_scale: f64) -> bool {
    let mut a = lin.jtj.clone();
    let mut g = lin.jtr.clone();
    for (j, &frozen) in active.iter().enumerate() {
        if frozen {
            a.row_mut(j).fill(0.0);
            a.column_mut(j).fill(0.0);
            a[(j, j)] = 1.0;
            g[j] = 0.0;
        }
    }
    let Some(step) = a.cholesky().map(|c| c.solve(&g)) else {
        return false;
    };
    g.dot(&step).abs() <= 4.0 * f64::EPSILON * (lin.chi2 * data_scale).sqrt()
}

/// Largest cosine between the residual vector and a free Jacobian column.
/// Zero at a stationary point; invariant under rescaling of data or
/// parameters. Components pushing into an active bound are ignored.
fn stationarity(lin: &Linearization, p: &[f64], cfg: &LmConfig) -> f64 {
    if lin.chi2 == 0.0 {
        return 0.0;
    }
    (0..p.len())
        .map(|j| {
            let g = lin.jtr[j];
            let blocked = (p[j] <= cfg.lower[j] && g < 0.0) || (p[j] >= cfg.upper[j] && g > 0.0);
            let h = lin.jtj[(j, j)];
            if blocked || h <= 0.0 {
                0.0
            } else {
                g.abs() / (h * lin.chi2).sqrt()
            }
        })
        .fold(0.0, f64::max)
}

/// Minimizes `Σ ((y_i − f(x_i; p))/σ_i)²`. `model(x, p, jac)` returns
/// `f(x; p)` and writes `∂f/∂p` into `jac`.
pub fn levenberg_marquardt<F>(
    model: F,
    x: &[f64],
    y: &[f64],
    sigma: &[f64],
    p0: &[f64],
    cfg: &LmConfig,
) -> Result<LmFit>
where
    F: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    let n = p0.len();
    if x.len() != y.len() || y.len() != sigma.len() {
        return Err(Error::domain("x, y and sigma must have equal length"));
    }
    if cfg.lower.len() != n || cfg.upper.len() != n {
        return Err(Error::domain("bounds do not match parameter count"));
    }
    if x.len() < n {
        return Err(Error::domain(format!("{} points cannot determine {n} parameters", x.len())));
    }
    if sigma.iter().any(|s| !(*s > 0.0)) || y.iter().chain(x).any(|v| !v.is_finite()) {
        return Err(Error::domain("data must be finite with positive sigmas"));
    }
    let clamp = |p: &mut [f64]| {
        for ((v, lo), hi) in p.iter_mut().zip(&cfg.lower).zip(&cfg.upper) {
            *v = v.clamp(*lo, *hi);
        }
    };
    let mut p = p0.to_vec();
    clamp(&mut p);
    let mut lin = linearize(&model, x, y, sigma, &p);
    if !lin.chi2.is_finite() {
        return Err(Error::domain("model is not finite at the starting point"));
    }
    let data_scale: f64 = y.iter().zip(sigma).map(|(v, s)| (v / s).powi(2)).sum::<f64>().max(1.0);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let converged = loop {
        let stat = stationarity(&lin, &p, cfg);
        if stat <= cfg.gradient_tolerance || lin.chi2 <= 1e-28 * data_scale {
            break true;
        }
        if iterations >= cfg.max_iterations {
            break false;
        }
        iterations += 1;
        let active: Vec<bool> = (0..n)
            .map(|j| (p[j] <= cfg.lower[j] && lin.jtr[j] < 0.0) || (p[j] >= cfg.upper[j] && lin.jtr[j] > 0.0))
            .collect();
        let mut accepted = false;
        while lambda <= 1e16 {
            let mut a = lin.jtj.clone();
            let mut g = lin.jtr.clone();
            for j in 0..n {
                if active[j] {
                    a.row_mut(j).fill(0.0);
                    a.column_mut(j).fill(0.0);
                    a[(j, j)] = 1.0;
                    g[j] = 0.0;
                } else {
                    let d = lin.jtj[(j, j)].max(1e-300);
                    a[(j, j)] += lambda * d;
                }
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&g)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp(&mut trial);
            let c2 = chi2_at(&model, x, y, sigma, &trial);
            if c2.is_finite() && c2 <= lin.chi2 {
                let moved = trial.iter().zip(&p).any(|(a, b)| a != b);
                let improvement = lin.chi2 - c2;
                p = trial;
                lin = linearize(&model, x, y, sigma, &p);
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if !moved || improvement <= 1e-15 * lin.chi2.max(1e-300) {
                    // numerically flat: no further decrease is representable
                    if stationarity(&lin, &p, cfg) <= 1e-6 || gain_below_rounding(&lin, &active, data_scale) {
                        return finish(&lin, p, x.len(), iterations);
                    }
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step exists at any damping
            break stationarity(&lin, &p, cfg) <= 1e-6;
        }
    };
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            chi2: lin.chi2,
            gradient: stationarity(&lin, &p, cfg),
        });
    }
    finish(&lin, p, x.len(), iterations)
}

fn finish(lin: &Linearization, params: Vec<f64>, points: usize, iterations: usize) -> Result<LmFit> {
    let n = params.len();
    let svd = lin.jtj.clone().svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Singular("SVD of the normal matrix failed".into())),
    };
    let smax = svd.singular_values.max();
    let cutoff = smax * 1e-12;
    let mut cov = DMatrix::zeros(n, n);
    let mut unidentifiable = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            cov += vt.row(k).transpose() * u.column(k).transpose() / s;
        } else {
            for j in 0..n {
                if vt[(k, j)].abs() > 1e-3 && !unidentifiable.contains(&j) {
                    unidentifiable.push(j);
                }
            }
        }
    }
    unidentifiable.sort_unstable();
    let mut covariance: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| cov[(a, b)]).collect()).collect();
    for &j in &unidentifiable {
        covariance[j][j] = f64::INFINITY;
    }
    Ok(LmFit {
        params,
        covariance,
        chi2: lin.chi2,
        dof: points.saturating_sub(n),
        iterations,
        unidentifiable,
    })
}
