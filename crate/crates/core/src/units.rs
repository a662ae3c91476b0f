//! Physical constants and the MHz <-> rad/s boundary conversions.

use std::f64::consts::PI;

/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;
/// Atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Mass of 87Rb, kg.
pub const RB87_MASS: f64 = 86.909_180_531 * AMU;

/// Linear frequency in MHz to angular frequency in rad/s.
#[inline]
pub fn mhz_to_angular(mhz: f64) -> f64 {
    2.0 * PI * mhz * 1e6
}

/// Angular frequency in rad/s to linear frequency in MHz.
#[inline]
pub fn angular_to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e6)
}

#[inline]
pub fn hz_to_angular(hz: f64) -> f64 {
    2.0 * PI * hz
}

#[inline]
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Wavenumber `2π/λ` for a wavelength in nm, in rad/m.
#[inline]
pub fn wavenumber_nm(wavelength_nm: f64) -> f64 {
    2.0 * PI / (wavelength_nm * 1e-9)
}
