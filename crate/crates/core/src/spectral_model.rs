//! Discretized two-photon spectral-amplitude engine.
//!
//! A CW-pumped pair is delta-correlated in frequency, so the joint amplitude
//! collapses to one axis: the signal-labelled photon at `ω` always travels with
//! an idler-labelled photon at `2ω_p0 − ω`. The grid is laid out symmetrically
//! about `ω_p0`, which makes the partner of grid point `k` exactly grid point
//! `n − 1 − k`.
//!
//! Amplitudes are stored per `(signal path, idler path)` label pair. Optical
//! elements act on each photon independently: beam splitters mix path labels,
//! delays multiply by `e^{−i(ω·τ + φ)}` using each photon's own frequency.
//!
//! Because the signal axis spans both filter bands, every physical pair shows
//! up twice on the grid (once with the signal label in each band), and a
//! detector pair sees the coherent sum of both assignments. Coincidence rates
//! divide the band-integrated `|amplitude|²` by 4 to undo that double count,
//! which makes `μ_c` the detected pair flux per filter band of an open,
//! loss-free channel.
//!
//! Coincidence windows are assumed long compared with `2π/Ω`, so the
//! time-domain window integral becomes a frequency-domain integral. The
//! window is checked against that assumption, never integrated explicitly.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units;

/// Spatial mode labels. `Input` feeds an interferometer; `A`/`B` are the long
/// and short UMZI arms; `C`/`D` the UMZI outputs; `E`/`F` the outputs of the
/// beating beam splitter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Path {
    Input,
    A,
    B,
    C,
    D,
    E,
    F,
}

/// Uniform signal-frequency grid, symmetric about `ω_p0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGrid {
    omega_p0: f64,
    span: f64,
    points: usize,
}

impl SpectralGrid {
    pub fn new(omega_p0: f64, span: f64, points: usize) -> Result<Self> {
        if points < 64 {
            return Err(Error::domain(format!("grid needs >= 64 points, got {points}")));
        }
        if !(omega_p0 > 0.0 && span > 0.0 && span < 2.0 * omega_p0) {
            return Err(Error::domain("grid span must be positive and smaller than 2·ω_p0"));
        }
        Ok(SpectralGrid {
            omega_p0,
            span,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn omega_p0(&self) -> f64 {
        self.omega_p0
    }

    pub fn step(&self) -> f64 {
        self.span / self.points as f64
    }

    /// Cell centre of point `k`.
    pub fn omega(&self, k: usize) -> f64 {
        self.omega_p0 - 0.5 * self.span + (k as f64 + 0.5) * self.step()
    }

    /// Index of the energy-conserving partner frequency `2ω_p0 − ω_k`.
    pub fn partner(&self, k: usize) -> usize {
        self.points - 1 - k
    }

    pub fn lower_edge(&self) -> f64 {
        self.omega_p0 - 0.5 * self.span
    }

    pub fn upper_edge(&self) -> f64 {
        self.omega_p0 + 0.5 * self.span
    }

    /// Fraction of cell `k` inside `[lo, hi]`.
    fn overlap(&self, k: usize, lo: f64, hi: f64) -> f64 {
        let h = self.step();
        let c = self.omega(k);
        let w = (c + 0.5 * h).min(hi) - (c - 0.5 * h).max(lo);
        (w / h).clamp(0.0, 1.0)
    }

    fn covers(&self, filter: &FilterSpec) -> bool {
        filter.lower() >= self.lower_edge() && filter.upper() <= self.upper_edge()
    }
}

/// Ideal rectangular band-pass filter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    /// rad/s
    pub center: f64,
    /// Full width Ω in rad/s.
    pub bandwidth: f64,
}

impl FilterSpec {
    pub fn new(center: f64, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && center > 0.0) {
            return Err(Error::domain("filter centre and bandwidth must be > 0"));
        }
        Ok(FilterSpec { center, bandwidth })
    }

    /// Filter from a centre wavelength (nm) and ordinary-frequency width (Hz).
    pub fn from_wavelength(lambda_nm: f64, bandwidth_hz: f64) -> Result<Self> {
        Self::new(units::wavelength_nm_to_angular(lambda_nm), TAU * bandwidth_hz)
    }

    pub fn lower(&self) -> f64 {
        self.center - 0.5 * self.bandwidth
    }

    pub fn upper(&self) -> f64 {
        self.center + 0.5 * self.bandwidth
    }

    /// Filter centred on the energy-conserving partner frequency.
    pub fn mirrored(&self, omega_p0: f64) -> FilterSpec {
        FilterSpec {
            center: 2.0 * omega_p0 - self.center,
            bandwidth: self.bandwidth,
        }
    }
}

/// Filters, efficiencies and coincidence window of one detector pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Filter in front of the detector that counts the "signal" port.
    pub signal: FilterSpec,
    pub idler: FilterSpec,
    pub eta_s: f64,
    pub eta_i: f64,
    /// Coincidence window in seconds.
    pub window: f64,
}

impl Detection {
    /// Rejects windows that are not long compared with the filters' inverse
    /// bandwidth (`window·Ω/2π ≥ 10`).
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("signal", &self.signal), ("idler", &self.idler)] {
            let ratio = self.window * f.bandwidth / TAU;
            if !(ratio >= 10.0) {
                return Err(Error::validation(format!(
                    "coincidence window {:.3e} s too short for the {name} filter (window·Ω/2π = {ratio:.2}, need >= 10)",
                    self.window
                )));
            }
        }
        for eta in [self.eta_s, self.eta_i] {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::domain(format!("efficiency {eta} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Unbalanced Mach-Zehnder interferometer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UmziConfig {
    /// Long-minus-short arm delay, seconds.
    pub tau_ab: f64,
    /// Additional phase on the long arm, per photon.
    pub phi_a: f64,
    /// Amplitude transmission of both beam splitters.
    pub split_ratio: f64,
}

impl UmziConfig {
    pub fn new(tau_ab: f64, phi_a: f64) -> Self {
        UmziConfig {
            tau_ab,
            phi_a,
            split_ratio: FRAC_1_SQRT_2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::domain(format!(
                "split ratio {} must lie strictly between 0 and 1",
                self.split_ratio
            )));
        }
        if !(self.tau_ab >= 0.0) {
            return Err(Error::domain("UMZI delay must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemporalFilter {
    /// Keep only the both-long and both-short components.
    CentralPeak,
    None,
}

/// Two-photon amplitude over path labels and the signal-frequency grid.
#[derive(Clone, Debug)]
pub struct SpectralState {
    grid: Arc<SpectralGrid>,
    mu_c: f64,
    components: BTreeMap<(Path, Path), Vec<Complex64>>,
}

/// CW-pumped pair state on `Path::Input` with uniform amplitude `√μ_c`.
///
/// `grid_span` is the full width of the signal axis (rad/s) centred on
/// `omega_p0`; every filter in `cover` must lie inside it.
pub fn build_cw_state(
    omega_p0: f64,
    grid_span: f64,
    grid_points: usize,
    mu_c: f64,
    cover: &[FilterSpec],
) -> Result<SpectralState> {
    if !(mu_c > 0.0) {
        return Err(Error::domain("mu_c must be > 0"));
    }
    let grid = SpectralGrid::new(omega_p0, grid_span, grid_points)?;
    for f in cover {
        if !grid.covers(f) {
            return Err(Error::domain(format!(
                "grid [{:.6e}, {:.6e}] rad/s does not cover filter band at {:.2} nm",
                grid.lower_edge(),
                grid.upper_edge(),
                units::angular_to_wavelength_nm(f.center)
            )));
        }
    }
    let amp = Complex64::new(mu_c.sqrt(), 0.0);
    let mut components = BTreeMap::new();
    components.insert((Path::Input, Path::Input), vec![amp; grid_points]);
    Ok(SpectralState {
        grid: Arc::new(grid),
        mu_c,
        components,
    })
}

/// Smallest symmetric span covering every filter, padded by `margin` cells.
pub fn span_covering(omega_p0: f64, filters: &[FilterSpec], step: f64, margin: usize) -> f64 {
    let half = filters
        .iter()
        .map(|f| (f.upper() - omega_p0).abs().max((f.lower() - omega_p0).abs()))
        .fold(0.0, f64::max);
    2.0 * (half + margin as f64 * step)
}

impl SpectralState {
    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn mu_c(&self) -> f64 {
        self.mu_c
    }

    pub fn labels(&self) -> impl Iterator<Item = (Path, Path)> + '_ {
        self.components.keys().copied()
    }

    pub fn component(&self, signal: Path, idler: Path) -> Option<&[Complex64]> {
        self.components.get(&(signal, idler)).map(Vec::as_slice)
    }

    /// `Σ |ψ|² dω` over all labels.
    pub fn norm_squared(&self) -> f64 {
        self.components.keys().map(|&(s, i)| self.component_norm(s, i)).sum()
    }

    pub fn component_norm(&self, signal: Path, idler: Path) -> f64 {
        self.components
            .get(&(signal, idler))
            .map(|v| v.iter().map(Complex64::norm_sqr).sum::<f64>() * self.grid.step())
            .unwrap_or(0.0)
    }

    fn with_components(&self, components: BTreeMap<(Path, Path), Vec<Complex64>>) -> SpectralState {
        SpectralState {
            grid: Arc::clone(&self.grid),
            mu_c: self.mu_c,
            components,
        }
    }

    /// Applies a single-photon mode map to both photons. Paths missing from
    /// the map are left unchanged.
    pub fn transform(&self, map: &dyn Fn(Path) -> Option<Vec<(Path, f64)>>) -> SpectralState {
        let n = self.grid.len();
        let route = |p: Path| map(p).unwrap_or_else(|| vec![(p, 1.0)]);
        let mut out: BTreeMap<(Path, Path), Vec<Complex64>> = BTreeMap::new();
        for (&(ps, pi), amps) in &self.components {
            for (qs, cs) in route(ps) {
                for &(qi, ci) in &route(pi) {
                    let c = cs * ci;
                    if c == 0.0 {
                        continue;
                    }
                    let target = out.entry((qs, qi)).or_insert_with(|| vec![Complex64::default(); n]);
                    for (t, a) in target.iter_mut().zip(amps) {
                        *t += a * c;
                    }
                }
            }
        }
        self.with_components(out)
    }

    /// Two-port beam splitter: `in1 → t·out1 + r·out2`, `in2 → r·out1 − t·out2`.
    pub fn beam_splitter(&self, inputs: (Path, Path), outputs: (Path, Path), t: f64) -> SpectralState {
        let r = (1.0 - t * t).sqrt();
        self.transform(&|p| {
            if p == inputs.0 {
                Some(vec![(outputs.0, t), (outputs.1, r)])
            } else if p == inputs.1 {
                Some(vec![(outputs.0, r), (outputs.1, -t)])
            } else {
                None
            }
        })
    }

    /// Multiplies each photon on `path` by `e^{−i(ω·delay + phase)}`.
    pub fn delay(&self, path: Path, delay: f64, phase: f64) -> SpectralState {
        let g = &self.grid;
        let factor = |w: f64| Complex64::from_polar(1.0, -(w * delay + phase));
        let components = self
            .components
            .iter()
            .map(|(&(ps, pi), amps)| {
                let v = amps
                    .iter()
                    .enumerate()
                    .map(|(k, a)| {
                        let mut a = *a;
                        if ps == path {
                            a *= factor(g.omega(k));
                        }
                        if pi == path {
                            a *= factor(g.omega(g.partner(k)));
                        }
                        a
                    })
                    .collect();
                ((ps, pi), v)
            })
            .collect();
        self.with_components(components)
    }

    /// Keeps only the listed label pairs.
    pub fn retain(&self, keep: &[(Path, Path)]) -> SpectralState {
        let components = self
            .components
            .iter()
            .filter(|(k, _)| keep.contains(k))
            .map(|(k, v)| (*k, v.clone()))
            .collect();
        self.with_components(components)
    }

    /// Coincidence rate between a detector on `port_s` behind the signal
    /// filter and one on `port_i` behind the idler filter.
    pub fn coincidence(&self, port_s: Path, port_i: Path, det: &Detection) -> Result<f64> {
        det.validate()?;
        let g = &self.grid;
        for f in [&det.signal, &det.idler] {
            if !g.covers(f) {
                return Err(Error::domain("filter band lies outside the spectral grid"));
            }
        }
        let zero: Vec<Complex64> = Vec::new();
        let direct = self.components.get(&(port_s, port_i)).unwrap_or(&zero);
        let swapped = self.components.get(&(port_i, port_s)).unwrap_or(&zero);
        let at = |v: &[Complex64], k: usize| v.get(k).copied().unwrap_or_default();
        // signal frequencies whose partner also passes the idler filter
        let two_p0 = 2.0 * g.omega_p0();
        let lo = det.signal.lower().max(two_p0 - det.idler.upper());
        let hi = det.signal.upper().min(two_p0 - det.idler.lower());
        let integral: f64 = (0..g.len())
            .filter_map(|k| {
                let kp = g.partner(k);
                let w = g.overlap(k, lo, hi);
                (w > 0.0).then(|| w * (at(direct, k) + at(swapped, kp)).norm_sqr())
            })
            .sum::<f64>()
            * g.step();
        Ok(det.eta_s * det.eta_i * integral / (4.0 * det.signal.bandwidth))
    }

    fn only_input(&self) -> Result<()> {
        if self.components.keys().any(|&k| k != (Path::Input, Path::Input)) {
            return Err(Error::validation(
                "interferometer input must be a state on Path::Input only",
            ));
        }
        Ok(())
    }
}

/// Sends a state through an unbalanced Mach-Zehnder interferometer.
///
/// With `TemporalFilter::CentralPeak` only the both-long and both-short
/// components survive. The two-photon phase is `2ω_p0·τ_ab + 2φ_a`, so the
/// state is purely bunched when it is a multiple of 2π and purely anti-bunched
/// when it is an odd multiple of π. A single photon only picks up `φ_a`.
pub fn apply_umzi(state: &SpectralState, cfg: &UmziConfig, temporal: TemporalFilter) -> Result<SpectralState> {
    cfg.validate()?;
    state.only_input()?;
    let t = cfg.split_ratio;
    let r = (1.0 - t * t).sqrt();
    let split = state.transform(&|p| (p == Path::Input).then(|| vec![(Path::A, t), (Path::B, r)]));
    let arms = split.delay(Path::A, cfg.tau_ab, cfg.phi_a);
    let arms = match temporal {
        TemporalFilter::CentralPeak => arms.retain(&[(Path::A, Path::A), (Path::B, Path::B)]),
        TemporalFilter::None => arms,
    };
    Ok(arms.beam_splitter((Path::A, Path::B), (Path::C, Path::D), t))
}

/// Both photons detected at UMZI output `C`.
pub fn coincidence_same_port(state: &SpectralState, det: &Detection) -> Result<f64> {
    state.coincidence(Path::C, Path::C, det)
}

/// Signal detected at `C`, idler at `D`.
pub fn coincidence_cross_port(state: &SpectralState, det: &Detection) -> Result<f64> {
    state.coincidence(Path::C, Path::D, det)
}

/// Fraction of a single photon at angular frequency `omega` leaving the
/// UMZI at port `C`; `1 + cos(ω·τ_ab + φ_a)` up to a factor ½ for a balanced
/// device.
pub fn single_photon_interference(omega: f64, cfg: &UmziConfig) -> f64 {
    let t2 = cfg.split_ratio * cfg.split_ratio;
    let r2 = 1.0 - t2;
    (Complex64::from_polar(t2, -(omega * cfg.tau_ab + cfg.phi_a)) + r2).norm_sqr()
}

/// Spatial quantum beating: delays path `C` by `tau` relative to `D`,
/// recombines both on a beam splitter with power transmission
/// `0.5 + bs_imbalance`, and counts signal at `E` against idler at `F`.
pub fn quantum_beating(
    antibunched: &SpectralState,
    tau: f64,
    det: &Detection,
    bs_imbalance: f64,
) -> Result<f64> {
    if !(bs_imbalance.abs() < 0.5) {
        return Err(Error::domain("beam-splitter imbalance must lie in (-0.5, 0.5)"));
    }
    let total = antibunched.norm_squared();
    let anti = antibunched.component_norm(Path::C, Path::D) + antibunched.component_norm(Path::D, Path::C);
    if !(total > 0.0) || (total - anti) > 1e-9 * total {
        return Err(Error::validation(
            "quantum beating needs a spatially anti-bunched state on paths C/D",
        ));
    }
    let t = (0.5 + bs_imbalance).sqrt();
    antibunched
        .delay(Path::C, tau, 0.0)
        .beam_splitter((Path::C, Path::D), (Path::E, Path::F), t)
        .coincidence(Path::E, Path::F, det)
}

pub fn same_port_closed_form(eta_s: f64, eta_i: f64, mu_c: f64, omega_p0: f64, cfg: &UmziConfig) -> f64 {
    eta_s * eta_i * mu_c / 8.0 * (1.0 + (2.0 * omega_p0 * cfg.tau_ab + 2.0 * cfg.phi_a).cos())
}

pub fn cross_port_closed_form(eta_s: f64, eta_i: f64, mu_c: f64, omega_p0: f64, cfg: &UmziConfig) -> f64 {
    eta_s * eta_i * mu_c / 8.0 * (1.0 - (2.0 * omega_p0 * cfg.tau_ab + 2.0 * cfg.phi_a).cos())
}

/// `sin(x)/x`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Beating rate for a balanced beam splitter and rectangular filters of full
/// width `bandwidth`:
/// `(η_s η_i μ_c / 8)·[1 − sinc(Ω·τ)·cos(δω·τ)]`.
///
/// The symmetric anti-bunched state bunches at zero delay, hence the dip.
/// The envelope argument is `Ω·τ` (not `Ω·τ/2`) because the beat between
/// the two frequency assignments runs at twice the detuning inside the band.
pub fn beating_closed_form(eta_s: f64, eta_i: f64, mu_c: f64, bandwidth: f64, delta_omega: f64, tau: f64) -> f64 {
    eta_s * eta_i * mu_c / 8.0 * (1.0 - sinc(bandwidth * tau) * (delta_omega * tau).cos())
}

/// A spectral-engine scan result: `x` is the scanned parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub x: f64,
    pub rate: f64,
}

/// Same-port and cross-port coincidences versus `φ_a` (rad).
pub fn fringe_scan(
    input: &SpectralState,
    tau_ab: f64,
    phases: &[f64],
    det: &Detection,
    cross: bool,
) -> Result<Vec<ScanPoint>> {
    phases
        .par_iter()
        .map(|&phi| {
            let out = apply_umzi(input, &UmziConfig::new(tau_ab, phi), TemporalFilter::CentralPeak)?;
            let rate = if cross {
                coincidence_cross_port(&out, det)?
            } else {
                coincidence_same_port(&out, det)?
            };
            Ok(ScanPoint { x: phi, rate })
        })
        .collect()
}

/// Beating coincidences versus relative delay (s).
pub fn beating_scan(
    antibunched: &SpectralState,
    delays: &[f64],
    det: &Detection,
    bs_imbalance: f64,
) -> Result<Vec<ScanPoint>> {
    delays
        .par_iter()
        .map(|&tau| {
            Ok(ScanPoint {
                x: tau,
                rate: quantum_beating(antibunched, tau, det, bs_imbalance)?,
            })
        })
        .collect()
}

/// UMZI long-arm phase that makes the CW state purely anti-bunched for a
/// given delay: `2ω_p0·τ_ab + 2φ_a ≡ π (mod 2π)`.
pub fn antibunching_phase(omega_p0: f64, tau_ab: f64) -> f64 {
    (PI / 2.0 - omega_p0 * tau_ab).rem_euclid(PI)
}

/// Writes `x,rate` CSV.
pub fn scan_to_csv(points: &[ScanPoint]) -> String {
    let mut out = String::from("x,rate\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.x, p.rate));
    }
    out
}
