//! Poisson bootstrap of fitted parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use super::beating::{fit_beating_from, BeatingFit};
use super::fringe::{fit_cosine_from, FringeFit};
use super::lm::poisson_sigmas;
use crate::error::{Error, Result};
use crate::timetag_sim::derive_seeds;

pub const DEFAULT_RESAMPLES: usize = 1000;

/// Largest tolerated fraction of failed refits.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

/// Replaces every count by a Poisson draw with that count as its mean.
pub fn poisson_resample(y: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    y.iter()
        .map(|&m| {
            if m > 0.0 {
                Poisson::new(m).map(|d| d.sample(&mut rng)).unwrap_or(m)
            } else {
                0.0
            }
        })
        .collect()
}

/// Sample standard deviation of each parameter over `n_resamples` Poisson
/// resamples of `y`. Resample `k` uses a seed derived from `seed`, so the
/// result does not depend on thread scheduling.
pub fn bootstrap_sigma<F>(fit_fn: F, x: &[f64], y: &[f64], n_resamples: usize, seed: u64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Sync,
{
    if n_resamples < 2 {
        return Err(Error::domain("bootstrap needs at least two resamples"));
    }
    if y.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::domain("bootstrap needs non-negative counts"));
    }
    let seeds = derive_seeds(seed, n_resamples);
    let results: Vec<Option<Vec<f64>>> = seeds
        .par_iter()
        .map(|&s| fit_fn(x, &poisson_resample(y, s)).ok())
        .collect();
    let ok: Vec<&Vec<f64>> = results.iter().flatten().collect();
    let failures = n_resamples - ok.len();
    if failures as f64 > MAX_FAILURE_FRACTION * n_resamples as f64 || ok.len() < 2 {
        return Err(Error::validation(format!(
            "{failures} of {n_resamples} bootstrap refits failed"
        )));
    }
    let dim = ok[0].len();
    Ok((0..dim)
        .map(|k| {
            let n = ok.len() as f64;
            let mean = ok.iter().map(|p| p[k]).sum::<f64>() / n;
            (ok.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect())
}

/// Moves `phase` by whole turns to lie within π of `reference`.
fn unwrap_near(phase: f64, reference: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    phase - TAU * ((phase - reference + PI) / TAU).floor()
}

/// Bootstrap of a fringe fit, warm-started from it. Returns sigmas in the
/// order of [`FringeFit::params`].
pub fn bootstrap_fringe(base: &FringeFit, x: &[f64], y: &[f64], n_resamples: usize, seed: u64) -> Result<Vec<f64>> {
    let p0 = base.params();
    let fixed_k = base.period_fixed.then(|| std::f64::consts::TAU / base.period);
    bootstrap_sigma(
        |x, yr| {
            let f = fit_cosine_from(x, yr, &poisson_sigmas(yr), &p0, fixed_k)?;
            let mut p = f.params();
            p[2] = unwrap_near(p[2], base.phase0);
            Ok(p)
        },
        x,
        y,
        n_resamples,
        seed,
    )
}

/// Bootstrap of a beating fit, warm-started from it. Sigmas are SI, in the
/// parameter order of the fit.
pub fn bootstrap_beating(base: &BeatingFit, tau: &[f64], y: &[f64], n_resamples: usize, seed: u64) -> Result<Vec<f64>> {
    bootstrap_sigma(
        |t, yr| {
            let f = fit_beating_from(t, yr, &base.params)?;
            let mut p = f.params.to_vec().to_vec();
            p[4] = unwrap_near(p[4], base.params.phi);
            Ok(p)
        },
        tau,
        y,
        n_resamples,
        seed,
    )
}
