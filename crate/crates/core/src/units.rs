//! Physical constants and unit conversions.

use std::f64::consts::TAU;

/// Exact, in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub const PS: f64 = 1e-12;
pub const NS: f64 = 1e-9;

/// Optical frequency in Hz for a vacuum wavelength in nm.
pub fn wavelength_nm_to_hz(lambda_nm: f64) -> f64 {
    SPEED_OF_LIGHT / (lambda_nm * 1e-9)
}

/// Angular frequency in rad/s for a vacuum wavelength in nm.
pub fn wavelength_nm_to_angular(lambda_nm: f64) -> f64 {
    TAU * wavelength_nm_to_hz(lambda_nm)
}

pub fn angular_to_wavelength_nm(omega: f64) -> f64 {
    TAU * SPEED_OF_LIGHT / omega * 1e9
}

/// Converts seconds to integer picoseconds, rounding to nearest.
pub fn seconds_to_ps(t: f64) -> i64 {
    (t / PS).round() as i64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavelength_round_trip() {
        for lambda in [770.23, 1531.72, 1540.46, 1549.34] {
            let back = angular_to_wavelength_nm(wavelength_nm_to_angular(lambda));
            assert!((back - lambda).abs() < 1e-9);
        }
    }

    #[test]
    fn signal_idler_spacing() {
        let dnu = wavelength_nm_to_hz(1531.72) - wavelength_nm_to_hz(1549.34);
        // 2.2258 THz ordinary frequency; 1.3985e13 rad/s angular.
        assert!((dnu - 2.2258e12).abs() < 1e8, "{dnu}");
        assert!((TAU * dnu - 1.39851e13).abs() < 1e9);
    }
}
