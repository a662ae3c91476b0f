//! Atomic reference: laser, vapor and Rydberg-level parameters.

use serde::{Deserialize, Serialize};

use crate::units::{wavenumber_nm, K_B};
use crate::{Error, Result};

/// One laser beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserParams {
    pub wavelength_nm: f64,
    pub power_w: f64,
    /// 1/e² intensity radius.
    pub waist_radius_m: f64,
    /// FWHM of the pre-stabilized laser, Hz.
    pub residual_linewidth_hz: f64,
    /// rad/s
    pub static_detuning: f64,
}

impl LaserParams {
    pub fn new(wavelength_nm: f64, power_w: f64, waist_radius_m: f64) -> Self {
        Self {
            wavelength_nm,
            power_w,
            waist_radius_m,
            residual_linewidth_hz: 0.0,
            static_detuning: 0.0,
        }
    }

    /// Wavenumber in rad/m.
    pub fn wavenumber(&self) -> f64 {
        wavenumber_nm(self.wavelength_nm)
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.wavelength_nm > 0.0 && self.wavelength_nm.is_finite()) {
            return Err(Error::invalid(format!("{name}.wavelength_nm"), "must be > 0"));
        }
        if !(self.power_w >= 0.0 && self.power_w.is_finite()) {
            return Err(Error::invalid(format!("{name}.power_w"), "must be >= 0"));
        }
        if !(self.waist_radius_m > 0.0 && self.waist_radius_m.is_finite()) {
            return Err(Error::invalid(format!("{name}.waist_radius_m"), "must be > 0"));
        }
        if !(self.residual_linewidth_hz >= 0.0 && self.residual_linewidth_hz.is_finite()) {
            return Err(Error::invalid(format!("{name}.residual_linewidth_hz"), "must be >= 0"));
        }
        Ok(())
    }
}

/// Relaxation rates of the ladder, all angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DecayRates {
    /// Intermediate-state population decay.
    pub gamma_e: f64,
    /// Rydberg-state population decay.
    pub gamma_r: f64,
    /// Transit-time dephasing of the two-photon coherence.
    pub gamma_transit: f64,
    /// Relative two-photon laser dephasing.
    pub gamma_rel_laser: f64,
}

impl DecayRates {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma_e", self.gamma_e),
            ("gamma_r", self.gamma_r),
            ("gamma_transit", self.gamma_transit),
            ("gamma_rel_laser", self.gamma_rel_laser),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("rates.{name}"), "must be >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Series {
    S,
    D,
}

impl Series {
    /// Literature quantum defect for Rb; a default only.
    pub fn default_quantum_defect(self) -> f64 {
        match self {
            Series::S => 3.13,
            Series::D => 1.35,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RydbergLevel {
    pub n: u32,
    pub series: Series,
    pub quantum_defect: f64,
}

impl RydbergLevel {
    pub fn new(n: u32, series: Series, quantum_defect: f64) -> Result<Self> {
        let level = Self {
            n,
            series,
            quantum_defect,
        };
        level.validate()?;
        Ok(level)
    }

    /// Level with the series' default quantum defect.
    pub fn with_default_defect(n: u32, series: Series) -> Result<Self> {
        Self::new(n, series, series.default_quantum_defect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 5 {
            return Err(Error::invalid("level.n", "must be >= 5"));
        }
        if !(self.quantum_defect >= 0.0 && self.quantum_defect < self.n as f64) {
            return Err(Error::invalid("level.quantum_defect", "must satisfy 0 <= defect < n"));
        }
        Ok(())
    }

    pub fn effective_quantum_number(&self) -> f64 {
        self.n as f64 - self.quantum_defect
    }
}

/// Effective principal quantum number `n - δ`.
pub fn effective_quantum_number(level: &RydbergLevel) -> f64 {
    level.effective_quantum_number()
}

/// A measured coupling Rabi frequency at a known power, waist and level,
/// used to scale to other settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingCalibration {
    /// rad/s
    pub rabi: f64,
    pub power_w: f64,
    pub waist_radius_m: f64,
    pub level: RydbergLevel,
    /// Amplitude ratio S/D at equal n*. Default `10^{-1/2}`, from an
    /// A-coefficient ratio of ten.
    pub s_over_d_amplitude: f64,
}

impl CouplingCalibration {
    pub const DEFAULT_S_OVER_D_AMPLITUDE: f64 = 0.316_227_766_016_837_94;

    pub fn new(rabi: f64, power_w: f64, waist_radius_m: f64, level: RydbergLevel) -> Self {
        Self {
            rabi,
            power_w,
            waist_radius_m,
            level,
            s_over_d_amplitude: Self::DEFAULT_S_OVER_D_AMPLITUDE,
        }
    }
}

/// Coupling Rabi frequency scaled from a calibration point:
/// `Ω = Ω_ref · sqrt(P/P_ref) · (w_ref/w) · (n*_ref/n*)^{3/2} · s`.
pub fn coupling_rabi_frequency(
    laser: &LaserParams,
    level: &RydbergLevel,
    reference: &CouplingCalibration,
) -> Result<f64> {
    for (field, v) in [
        ("reference.rabi", reference.rabi),
        ("reference.power_w", reference.power_w),
        ("reference.waist_radius_m", reference.waist_radius_m),
        ("reference.s_over_d_amplitude", reference.s_over_d_amplitude),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(field, "must be > 0"));
        }
    }
    laser.validate("coupling")?;
    level.validate()?;
    reference.level.validate()?;

    let series_factor = match (reference.level.series, level.series) {
        (Series::D, Series::S) => reference.s_over_d_amplitude,
        (Series::S, Series::D) => 1.0 / reference.s_over_d_amplitude,
        _ => 1.0,
    };
    let n_ratio = reference.level.effective_quantum_number() / level.effective_quantum_number();
    Ok(reference.rabi
        * (laser.power_w / reference.power_w).sqrt()
        * (reference.waist_radius_m / laser.waist_radius_m)
        * n_ratio.powf(1.5)
        * series_factor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaporParams {
    pub temperature_k: f64,
    pub atomic_mass_kg: f64,
    pub cell_length_m: f64,
    /// Resonant two-level Doppler-broadened optical depth.
    pub peak_optical_depth: f64,
}

impl VaporParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_k > 0.0 && self.temperature_k.is_finite()) {
            return Err(Error::invalid("vapor.temperature_k", "must be > 0"));
        }
        if !(self.atomic_mass_kg > 0.0) {
            return Err(Error::invalid("vapor.atomic_mass_kg", "must be > 0"));
        }
        if !(self.peak_optical_depth >= 0.0 && self.peak_optical_depth.is_finite()) {
            return Err(Error::invalid("vapor.peak_optical_depth", "must be >= 0"));
        }
        Ok(())
    }

    /// One-dimensional rms velocity `sqrt(k_B T / m)`, m/s.
    pub fn rms_velocity(&self) -> f64 {
        (K_B * self.temperature_k.max(0.0) / self.atomic_mass_kg).sqrt()
    }
}

/// 1σ Doppler width of the one-photon detuning, `k · sqrt(k_B T / m)`, rad/s.
pub fn doppler_sigma(vapor: &VaporParams, wavelength_nm: f64) -> f64 {
    wavenumber_nm(wavelength_nm) * vapor.rms_velocity()
}
