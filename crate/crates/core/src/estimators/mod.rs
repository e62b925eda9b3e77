//! Curve fits for fringes and quantum beating, bootstrap uncertainties and
//! the two-photon correlation coefficient.

mod beating;
mod bootstrap;
mod fringe;
pub mod lm;

pub use beating::{
    fit_beating, fit_beating_from, BeatingDiagnostics, BeatingFit, BeatingParams, StartRecord, BEATING_PARAMS,
};
pub use bootstrap::{
    bootstrap_beating, bootstrap_fringe, bootstrap_sigma, poisson_resample, DEFAULT_RESAMPLES,
    MAX_FAILURE_FRACTION,
};
pub use fringe::{fit_cosine, fit_cosine_from, FringeFit, FRINGE_PARAMS};
pub use lm::{levenberg_marquardt, poisson_sigmas, LmConfig, LmFit};

use crate::error::{Error, Result};

/// `E = Σ(−1)^{i+j}·R_ij / Σ R_ij` for the four detector pairings
/// `counts[i][j]` = port `i+1` of A with port `j+1` of B.
pub fn correlation_coefficient(counts: [[f64; 2]; 2]) -> Result<f64> {
    let flat = [counts[0][0], counts[0][1], counts[1][0], counts[1][1]];
    if flat.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
        return Err(Error::domain("counts must be finite and >= 0"));
    }
    let total: f64 = flat.iter().sum();
    if total == 0.0 {
        return Err(Error::domain("all counts are zero"));
    }
    Ok((counts[0][0] - counts[0][1] - counts[1][0] + counts[1][1]) / total)
}
