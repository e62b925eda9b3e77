//! Flat `key = value` run configuration with explicit unit suffixes.
//!
//! ```text
//! # comment
//! pump_powers = 0.05, 0.1, 0.273 mW
//! window = 300 ps
//! signal_wavelength = 1531.72 nm
//! detector.2.dark_rate = 180 Hz
//! seed = 7
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures;
use crate::timetag_sim::DetectorModel;
use crate::units;

pub const SEED_ENV: &str = "PAIRCRAFT_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub pump_powers_mw: Vec<f64>,
    pub pump_nm: f64,
    pub signal_nm: f64,
    pub idler_nm: f64,
    pub filter_bandwidth_hz: f64,
    /// s
    pub window: f64,
    /// s
    pub umzi_delay: f64,
    /// s
    pub duration: f64,
    pub detectors: Vec<DetectorModel>,
    pub signal_channel: usize,
    pub idler_channel: usize,
    pub grid_points_per_band: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pump_powers_mw: vec![0.02, 0.05, 0.1, 0.2, 0.273, 0.5, 1.0],
            pump_nm: fixtures::PUMP_NM,
            signal_nm: fixtures::SIGNAL_NM,
            idler_nm: fixtures::IDLER_NM,
            filter_bandwidth_hz: fixtures::FILTER_BANDWIDTH_HZ,
            window: fixtures::COINCIDENCE_WINDOW_S,
            umzi_delay: fixtures::UMZI_DELAY_S,
            duration: fixtures::INTEGRATION_S,
            detectors: (1..=6).map(fixtures::snspd).collect(),
            signal_channel: 1,
            idler_channel: 2,
            grid_points_per_band: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy)]
enum Dim {
    Time,
    Length,
    Power,
    Frequency,
    Rate,
    Fraction,
    Count,
}

/// Splits `"300 ps"` into the number and its SI scale for the dimension.
fn quantity(raw: &str, dim: Dim, line: usize) -> Result<f64> {
    let raw = raw.trim();
    let split = raw
        .find(|c: char| c.is_ascii_alphabetic() || c == '%')
        .unwrap_or(raw.len());
    let (num, unit) = (raw[..split].trim(), raw[split..].trim());
    let value: f64 = num
        .parse()
        .map_err(|_| Error::parse(Some(line), format!("invalid number {num:?}")))?;
    let scale = match (dim, unit) {
        (Dim::Time, "ps") => 1e-12,
        (Dim::Time, "ns") => 1e-9,
        (Dim::Time, "us") => 1e-6,
        (Dim::Time, "ms") => 1e-3,
        (Dim::Time, "s") => 1.0,
        (Dim::Length, "nm") => 1.0,
        (Dim::Power, "mW") => 1.0,
        (Dim::Power, "uW") => 1e-3,
        (Dim::Frequency | Dim::Rate, "Hz") => 1.0,
        (Dim::Frequency | Dim::Rate, "kHz") => 1e3,
        (Dim::Frequency | Dim::Rate, "MHz") => 1e6,
        (Dim::Frequency, "GHz") => 1e9,
        (Dim::Frequency, "THz") => 1e12,
        (Dim::Fraction, "") => 1.0,
        (Dim::Fraction, "%") => 1e-2,
        (Dim::Count, "") => 1.0,
        (_, "") => {
            return Err(Error::parse(Some(line), format!("{raw:?} needs a unit")));
        }
        (_, u) => return Err(Error::parse(Some(line), format!("unit {u:?} not valid here"))),
    };
    let v = value * scale;
    if !v.is_finite() {
        return Err(Error::parse(Some(line), "value is not finite"));
    }
    Ok(v)
}

fn positive(v: f64, key: &str, line: usize) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::parse(Some(line), format!("{key} must be > 0")))
    }
}

fn channel(value: &str, n: usize, line: usize) -> Result<usize> {
    let c: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::parse(Some(line), format!("invalid channel {value:?}")))?;
    if !(1..=n).contains(&c) {
        return Err(Error::parse(Some(line), format!("channel {c} outside 1..={n}")));
    }
    Ok(c)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::parse(Some(line), "expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::parse(Some(line), format!("duplicate key {key:?}")));
            }
            match key {
                "pump_powers" => {
                    // the unit may follow only the last element
                    let parts: Vec<&str> = value.split(',').collect();
                    let unit = parts
                        .last()
                        .map(|p| p.trim_start_matches(|c: char| c.is_ascii_digit() || ".eE+- ".contains(c)))
                        .unwrap_or("");
                    cfg.pump_powers_mw = parts
                        .iter()
                        .map(|p| {
                            let p = p.trim();
                            let with_unit = if p.ends_with(unit) { p.to_string() } else { format!("{p} {unit}") };
                            let v = quantity(&with_unit, Dim::Power, line)?;
                            if v >= 0.0 {
                                Ok(v)
                            } else {
                                Err(Error::parse(Some(line), "pump power must be >= 0"))
                            }
                        })
                        .collect::<Result<_>>()?;
                    if cfg.pump_powers_mw.is_empty() {
                        return Err(Error::parse(Some(line), "pump_powers is empty"));
                    }
                }
                "pump_wavelength" => cfg.pump_nm = positive(quantity(value, Dim::Length, line)?, key, line)?,
                "signal_wavelength" => cfg.signal_nm = positive(quantity(value, Dim::Length, line)?, key, line)?,
                "idler_wavelength" => cfg.idler_nm = positive(quantity(value, Dim::Length, line)?, key, line)?,
                "filter_bandwidth" => {
                    cfg.filter_bandwidth_hz = positive(quantity(value, Dim::Frequency, line)?, key, line)?
                }
                "window" => cfg.window = positive(quantity(value, Dim::Time, line)?, key, line)?,
                "umzi_delay" => cfg.umzi_delay = positive(quantity(value, Dim::Time, line)?, key, line)?,
                "duration" => cfg.duration = positive(quantity(value, Dim::Time, line)?, key, line)?,
                "signal_channel" => cfg.signal_channel = channel(value, cfg.detectors.len(), line)?,
                "idler_channel" => cfg.idler_channel = channel(value, cfg.detectors.len(), line)?,
                "grid_points_per_band" => {
                    let v = quantity(value, Dim::Count, line)?;
                    if !(v >= 16.0 && v.fract() == 0.0 && v <= 1e7) {
                        return Err(Error::parse(Some(line), "grid_points_per_band must be an integer >= 16"));
                    }
                    cfg.grid_points_per_band = v as usize;
                }
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| Error::parse(Some(line), format!("invalid seed {value:?}")))?
                }
                k if k.starts_with("detector.") => {
                    let mut it = k.splitn(3, '.').skip(1);
                    let (Some(ch), Some(field)) = (it.next(), it.next()) else {
                        return Err(Error::parse(Some(line), format!("malformed key {k:?}")));
                    };
                    let ch = channel(ch, cfg.detectors.len(), line)?;
                    let d = &mut cfg.detectors[ch - 1];
                    match field {
                        "dark_rate" => d.dark_rate = quantity(value, Dim::Rate, line)?,
                        "efficiency" => d.efficiency = quantity(value, Dim::Fraction, line)?,
                        "jitter_fwhm" => d.jitter_sigma = quantity(value, Dim::Time, line)? / (8.0 * 2f64.ln()).sqrt(),
                        "dead_time" => d.dead_time = quantity(value, Dim::Time, line)?,
                        other => return Err(Error::parse(Some(line), format!("unknown detector field {other:?}"))),
                    }
                    d.validate().map_err(|e| Error::parse(Some(line), e.to_string()))?;
                }
                other => return Err(Error::parse(Some(line), format!("unknown key {other:?}"))),
            }
        }
        Ok(cfg)
    }

    /// Applies a seed override given as text (the value of `PAIRCRAFT_SEED`).
    pub fn with_seed_override(mut self, value: Option<&str>) -> Result<Self> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::parse(None, format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(self)
    }

    /// Reads the seed override from the environment.
    pub fn with_env_seed(self) -> Result<Self> {
        let v = std::env::var(SEED_ENV).ok();
        self.with_seed_override(v.as_deref())
    }

    pub fn signal_detector(&self) -> DetectorModel {
        self.detectors[self.signal_channel - 1]
    }

    pub fn idler_detector(&self) -> DetectorModel {
        self.detectors[self.idler_channel - 1]
    }

    /// Angular frequencies `(ω_p, ω_s, ω_i)`, converted once.
    pub fn angular_frequencies(&self) -> (f64, f64, f64) {
        (
            units::wavelength_nm_to_angular(self.pump_nm),
            units::wavelength_nm_to_angular(self.signal_nm),
            units::wavelength_nm_to_angular(self.idler_nm),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_fixtures() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.window, 300e-12);
    }

    #[test]
    fn units_and_lists() {
        let c = RunConfig::parse(
            "# sweep\npump_powers = 0.05, 0.1, 0.273 mW\nwindow = 0.3 ns\nfilter_bandwidth = 100 GHz\n\
             detector.2.dark_rate = 1.5 kHz\ndetector.2.efficiency = 70 %\nseed = 9 # trailing\n",
        )
        .unwrap();
        assert_eq!(c.pump_powers_mw, vec![0.05, 0.1, 0.273]);
        assert!((c.window - 300e-12).abs() < 1e-24);
        assert_eq!(c.filter_bandwidth_hz, 100e9);
        assert_eq!(c.detectors[1].dark_rate, 1500.0);
        assert!((c.detectors[1].efficiency - 0.7).abs() < 1e-15);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn errors_carry_lines() {
        for (text, line) in [
            ("window = 300", 1),
            ("\nwindow = 300 nm", 2),
            ("window = -3 ps", 1),
            ("bogus = 1", 1),
            ("seed = 1\nseed = 2", 2),
            ("detector.9.dark_rate = 1 Hz", 1),
            ("detector.1.efficiency = 2", 1),
            ("no equals sign", 1),
        ] {
            match RunConfig::parse(text) {
                Err(Error::Parse { line: Some(l), .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn seed_override() {
        let c = RunConfig::default().with_seed_override(Some("42")).unwrap();
        assert_eq!(c.seed, 42);
        assert!(RunConfig::default().with_seed_override(Some("x")).is_err());
        assert_eq!(RunConfig::default().with_seed_override(None).unwrap().seed, 0);
    }
}
