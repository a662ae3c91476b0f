//! Scenario configuration: schema, defaults, validation and digest.
//!
//! A scenario is one TOML document. Units at this boundary are MHz for
//! detunings and rates (the value of `rate / 2π`), nm for wavelengths, µm for
//! beam waists and SI elsewhere; powers are numbers in W or strings with a
//! `W`, `mW`, `uW`/`µW` or `nW` suffix. Only the wavelengths, the optical
//! depth and the coupling Rabi frequency are required:
//!
//! ```toml
//! seed = 7
//!
//! [system]
//! probe_wavelength_nm = 780.24
//! coupling_wavelength_nm = 480.0
//! optical_depth = 1.0
//! coupling_rabi_mhz = 2.0
//! ```
//!
//! Instead of `coupling_rabi_mhz`, a coupling power together with
//! `[system.rydberg]` and `[system.calibration]` tables scales a measured
//! Rabi frequency to the requested power and level. Unknown keys are errors.

use std::f64::consts::PI;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::atomic::{
    coupling_rabi_frequency, CouplingCalibration, DecayRates, LaserParams, RydbergLevel, Series, VaporParams,
};
use crate::eit::{CascadeSystem, QuadratureMethod, QuadratureSpec};
use crate::fm::FmParams;
use crate::metrology::{BeatNoteSettings, Detrend};
use crate::presets;
use crate::servo::{ControllerConfig, FastBranch, LockSettings, NoiseModel, SlowBranch, DEFAULT_SAMPLE_BUDGET};
use crate::units::{mhz_to_angular, AMU, RB87_MASS};
use crate::{seed, Error, Result};

/// Optical power in W. Deserializes from a number (W) or a string with a
/// unit suffix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Power(pub f64);

impl Power {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let t = text.trim();
        let split = t
            .find(|c: char| c.is_alphabetic() || c == 'µ' || c == 'μ')
            .ok_or_else(|| format!("power {text:?} lacks a unit (W, mW, uW, nW)"))?;
        let (num, unit) = t.split_at(split);
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|_| format!("power {text:?} has no valid number"))?;
        let divisor = match unit.trim() {
            "W" => 1.0,
            "mW" => 1e3,
            "uW" | "µW" | "μW" => 1e6,
            "nW" => 1e9,
            other => return Err(format!("unknown power unit {other:?} (W, mW, uW, nW)")),
        };
        Ok(Power(value / divisor))
    }
}

impl<'de> Deserialize<'de> for Power {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Power;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a power in W or a string such as \"1 mW\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Power, E> {
                Ok(Power(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Power, E> {
                Ok(Power(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Power, E> {
                Ok(Power(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Power, E> {
                Power::parse(v).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

/// 64-bit seeds; TOML integers are signed, so seeds above `i64::MAX` are
/// written as strings.
mod seed_format {
    use super::*;

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
        match i64::try_from(*v) {
            Ok(i) => s.serialize_i64(i),
            Err(_) => s.serialize_str(&v.to_string()),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = u64;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a non-negative 64-bit integer")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<u64, E> {
                u64::try_from(v).map_err(|_| E::custom("seed must be >= 0"))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<u64, E> {
                Ok(v)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<u64, E> {
                v.parse()
                    .map_err(|_| E::custom("seed must be a 64-bit unsigned integer"))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSection {
    pub n: u32,
    pub series: Series,
    /// Defaults to the series value (S 3.13, D 1.35).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantum_defect: Option<f64>,
}

impl LevelSection {
    fn level(&self) -> Result<RydbergLevel> {
        RydbergLevel::new(
            self.n,
            self.series,
            self.quantum_defect.unwrap_or(self.series.default_quantum_defect()),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSection {
    /// Measured Ω/2π at the reference point, MHz.
    pub rabi_mhz: f64,
    pub power: Power,
    pub waist_um: f64,
    pub level: LevelSection,
    #[serde(default = "default_s_over_d")]
    pub s_over_d_amplitude: f64,
}

fn default_s_over_d() -> f64 {
    CouplingCalibration::DEFAULT_S_OVER_D_AMPLITUDE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemSection {
    pub probe_wavelength_nm: Option<f64>,
    pub coupling_wavelength_nm: Option<f64>,
    /// Peak optical depth of the bare probe transition.
    pub optical_depth: Option<f64>,
    /// Ω_c/2π, MHz.
    pub coupling_rabi_mhz: Option<f64>,
    pub probe_power: Power,
    pub coupling_power: Power,
    pub probe_waist_um: f64,
    pub coupling_waist_um: f64,
    /// Residual probe FWHM, MHz.
    pub probe_linewidth_mhz: f64,
    pub probe_detuning_mhz: f64,
    pub coupling_detuning_mhz: f64,
    pub gamma_e_mhz: f64,
    pub gamma_r_mhz: f64,
    pub gamma_transit_mhz: f64,
    /// Relative probe–coupling laser dephasing, MHz.
    pub gamma_rel_laser_mhz: f64,
    pub temperature_k: f64,
    pub atomic_mass_amu: f64,
    pub cell_length_m: f64,
    pub counter_propagating: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rydberg: Option<LevelSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationSection>,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            probe_wavelength_nm: None,
            coupling_wavelength_nm: None,
            optical_depth: None,
            coupling_rabi_mhz: None,
            probe_power: Power(4e-6),
            coupling_power: Power(1e-3),
            probe_waist_um: 100.0,
            coupling_waist_um: 100.0,
            probe_linewidth_mhz: 0.0,
            probe_detuning_mhz: 0.0,
            coupling_detuning_mhz: 0.0,
            gamma_e_mhz: presets::GAMMA_E_MHZ,
            gamma_r_mhz: 0.01,
            gamma_transit_mhz: 0.1,
            gamma_rel_laser_mhz: 0.0,
            temperature_k: 293.0,
            atomic_mass_amu: RB87_MASS / AMU,
            cell_length_m: 0.075,
            counter_propagating: true,
            rydberg: None,
            calibration: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FmSection {
    /// ω_m/2π, MHz.
    pub modulation_mhz: f64,
    pub beta: f64,
    /// Demodulation phase, rad; omitted selects the dispersion quadrature.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_rad: Option<f64>,
    /// V per unit beat amplitude.
    pub electronic_gain: f64,
    pub detector_rolloff: f64,
}

impl Default for FmSection {
    fn default() -> Self {
        let d = FmParams::default();
        Self {
            modulation_mhz: 10.0,
            beta: d.beta,
            theta_rad: None,
            electronic_gain: d.electronic_gain,
            detector_rolloff: d.detector_rolloff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanSection {
    /// Probe detuning held during the coupling scan, MHz.
    pub probe_detuning_mhz: f64,
    /// Full width of the coupling scan, MHz.
    pub span_mhz: f64,
    pub coarse_points: usize,
    /// Width of the refined window around each expected feature, MHz.
    pub fine_width_mhz: f64,
    pub fine_points: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            probe_detuning_mhz: 0.0,
            span_mhz: 60.0,
            coarse_points: 1201,
            fine_width_mhz: 2.0,
            fine_points: 401,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSection {
    pub method: QuadratureMethod,
    pub node_count: usize,
    /// Trapezoid cutoff in Doppler widths.
    pub velocity_cutoff: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence_tol: Option<f64>,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        let q = QuadratureSpec::default();
        Self {
            method: q.method,
            node_count: q.node_count,
            velocity_cutoff: q.velocity_cutoff,
            convergence_tol: q.convergence_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSection {
    /// One-sided white frequency-noise level S0, Hz²/Hz (FWHM = π·S0).
    pub white_psd: f64,
    /// Frequency random-walk diffusion constant, Hz²/s.
    pub random_walk: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            white_psd: 1e6 / PI,
            random_walk: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerSection {
    pub proportional_gain: f64,
    pub integrator_corner_hz: f64,
    pub cutoff_hz: f64,
    /// Slow-branch integrator gain, 1/s.
    pub slow_integrator_gain: f64,
    pub slow_range_mhz: f64,
    pub sign: f64,
    /// Defaults to 1/|slope|.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actuator_gain_hz_per_v: Option<f64>,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let c = ControllerConfig::default();
        Self {
            proportional_gain: c.fast.proportional_gain,
            integrator_corner_hz: c.fast.integrator_corner_hz,
            cutoff_hz: c.fast.cutoff_hz,
            slow_integrator_gain: c.slow.integrator_gain,
            slow_range_mhz: c.slow.output_range_hz / 1e6,
            sign: c.sign,
            actuator_gain_hz_per_v: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminantKind {
    /// Interpolated error-signal trace, saturating outside the capture range.
    Trace,
    /// Linear at the trace's slope.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LockSection {
    pub sample_rate_mhz: f64,
    pub duration_s: f64,
    pub initial_offset_hz: f64,
    pub unlock_dwell_us: f64,
    /// Detector noise per sample, V rms.
    pub detector_noise_v: f64,
    pub discriminant: DiscriminantKind,
    pub sample_budget: usize,
    /// Low-pass applied before the rms-over-slope estimate, Hz.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurement_bandwidth_hz: Option<f64>,
    pub detrend: Detrend,
}

impl Default for LockSection {
    fn default() -> Self {
        Self {
            sample_rate_mhz: 10.0,
            duration_s: 0.01,
            initial_offset_hz: 0.0,
            unlock_dwell_us: 1.0,
            detector_noise_v: 0.0,
            discriminant: DiscriminantKind::Trace,
            sample_budget: DEFAULT_SAMPLE_BUDGET,
            measurement_bandwidth_hz: Some(10e3),
            detrend: Detrend::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeatSection {
    pub sample_rate_mhz: f64,
    pub duration_s: f64,
    pub segment_ms: f64,
    pub fft_divisions: usize,
    pub max_windows: usize,
    pub smoothing_fraction: f64,
}

impl Default for BeatSection {
    fn default() -> Self {
        let b = BeatNoteSettings::default();
        Self {
            sample_rate_mhz: 40.0,
            duration_s: 0.02,
            segment_ms: b.segment_length_s * 1e3,
            fft_divisions: b.fft_divisions,
            max_windows: b.max_windows,
            smoothing_fraction: b.smoothing_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSection {
    /// CSV with `detuning_MHz` and transmission columns; omitted generates
    /// a synthetic spectrum from `[system]` with a cold (Doppler-free)
    /// medium and the `synthetic_*` dephasing rates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    pub span_mhz: f64,
    pub points: usize,
    /// Per-point noise of synthetic data and fit weights.
    pub noise_sigma: f64,
    /// Relative laser dephasing of the synthetic spectrum, MHz.
    pub synthetic_gamma_rel_mhz: f64,
    /// Transit dephasing of the synthetic spectrum, MHz.
    pub synthetic_transit_mhz: f64,
    /// Transit dephasing assumed by the model, MHz.
    pub model_transit_mhz: f64,
    pub initial_rabi_mhz: f64,
    pub initial_gamma_rel_mhz: f64,
    pub free_baseline: bool,
    /// Duration the spectrum was acquired over, s.
    pub scan_time_s: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            data: None,
            span_mhz: 20.0,
            points: 401,
            noise_sigma: 0.005,
            synthetic_gamma_rel_mhz: 0.28,
            synthetic_transit_mhz: 0.0,
            model_transit_mhz: 0.0,
            initial_rabi_mhz: 2.5,
            initial_gamma_rel_mhz: 0.5,
            free_baseline: false,
            scan_time_s: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputsSection {
    /// Output directory; `--out` and `EITLOCK_OUT` take precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Keep every n-th sample of time series.
    pub decimation: usize,
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self {
            dir: None,
            decimation: 1,
        }
    }
}

/// One numerical experiment. See the module docs for the format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ScenarioConfig {
    #[serde(with = "seed_format")]
    pub seed: u64,
    pub system: SystemSection,
    pub fm: FmSection,
    pub scan: ScanSection,
    pub quadrature: QuadratureSection,
    pub noise: NoiseSection,
    pub controller: ControllerSection,
    pub lock: LockSection,
    pub beat: BeatSection,
    pub fit: FitSection,
    pub outputs: OutputsSection,
}

struct Checker {
    errors: Vec<String>,
}

impl Checker {
    fn fail(&mut self, field: &str, constraint: impl fmt::Display) {
        self.errors.push(format!("{field}: {constraint}"));
    }

    fn positive(&mut self, field: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.fail(field, format!("must be > 0 (got {v})"));
        }
    }

    fn non_negative(&mut self, field: &str, v: f64) {
        if !(v >= 0.0 && v.is_finite()) {
            self.fail(field, format!("must be >= 0 (got {v})"));
        }
    }

    fn finite(&mut self, field: &str, v: f64) {
        if !v.is_finite() {
            self.fail(field, format!("must be finite (got {v})"));
        }
    }

    fn at_least(&mut self, field: &str, v: usize, min: usize) {
        if v < min {
            self.fail(field, format!("must be >= {min} (got {v})"));
        }
    }
}

impl ScenarioConfig {
    /// The default desk-scale scenario: a room-temperature cell with the
    /// documented defaults and Ω_c/2π = 2 MHz.
    pub fn desk_default() -> Self {
        let mut c = Self::default();
        c.system.probe_wavelength_nm = Some(presets::PROBE_WAVELENGTH_NM);
        c.system.coupling_wavelength_nm = Some(presets::COUPLING_WAVELENGTH_NM);
        c.system.optical_depth = Some(1.0);
        c.system.coupling_rabi_mhz = Some(2.0);
        c
    }

    /// Parse and validate a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        validate_config(text)
    }

    /// Effective configuration with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// SHA-256 (hex) of the canonical JSON form, excluding the output
    /// directory.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.outputs.dir = None;
        let json = serde_json::to_string(&c).expect("scenario serializes to JSON");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Seed of the named module stream.
    pub fn stream_seed(&self, label: &str) -> u64 {
        seed::derive_seed(self.seed, label)
    }

    /// Range and consistency checks; every violation is reported.
    pub fn validate(&self) -> Result<()> {
        let mut c = Checker { errors: Vec::new() };
        let s = &self.system;
        for (field, v) in [
            ("system.probe_wavelength_nm", s.probe_wavelength_nm),
            ("system.coupling_wavelength_nm", s.coupling_wavelength_nm),
            ("system.optical_depth", s.optical_depth),
        ] {
            match v {
                None => c.fail(field, "required"),
                Some(v) if field.ends_with("_nm") => c.positive(field, v),
                Some(v) => c.non_negative(field, v),
            }
        }
        c.positive("system.probe_power", s.probe_power.0);
        c.positive("system.coupling_power", s.coupling_power.0);
        c.positive("system.probe_waist_um", s.probe_waist_um);
        c.positive("system.coupling_waist_um", s.coupling_waist_um);
        c.non_negative("system.probe_linewidth_mhz", s.probe_linewidth_mhz);
        c.finite("system.probe_detuning_mhz", s.probe_detuning_mhz);
        c.finite("system.coupling_detuning_mhz", s.coupling_detuning_mhz);
        c.positive("system.gamma_e_mhz", s.gamma_e_mhz);
        c.non_negative("system.gamma_r_mhz", s.gamma_r_mhz);
        c.non_negative("system.gamma_transit_mhz", s.gamma_transit_mhz);
        c.non_negative("system.gamma_rel_laser_mhz", s.gamma_rel_laser_mhz);
        c.non_negative("system.temperature_k", s.temperature_k);
        c.positive("system.atomic_mass_amu", s.atomic_mass_amu);
        c.positive("system.cell_length_m", s.cell_length_m);
        match (s.coupling_rabi_mhz, &s.calibration, &s.rydberg) {
            (Some(r), None, _) => c.non_negative("system.coupling_rabi_mhz", r),
            (Some(_), Some(_), _) => c.fail(
                "system.coupling_rabi_mhz",
                "give either coupling_rabi_mhz or a [system.calibration] table, not both",
            ),
            (None, Some(cal), Some(level)) => {
                c.positive("system.calibration.rabi_mhz", cal.rabi_mhz);
                c.positive("system.calibration.power", cal.power.0);
                c.positive("system.calibration.waist_um", cal.waist_um);
                c.positive("system.calibration.s_over_d_amplitude", cal.s_over_d_amplitude);
                if let Err(e) = cal.level.level() {
                    c.fail("system.calibration.level", e);
                }
                if let Err(e) = level.level() {
                    c.fail("system.rydberg", e);
                }
            }
            (None, Some(_), None) => c.fail("system.rydberg", "required with [system.calibration]"),
            (None, None, _) => c.fail(
                "system.coupling_rabi_mhz",
                "required (or give coupling_power with [system.rydberg] and [system.calibration])",
            ),
        }

        let fm = &self.fm;
        c.positive("fm.modulation_mhz", fm.modulation_mhz);
        if !(fm.beta > 0.0 && fm.beta <= 0.5) {
            c.fail("fm.beta", format!("must be in (0, 0.5] (got {})", fm.beta));
        }
        if let Some(t) = fm.theta_rad {
            c.finite("fm.theta_rad", t);
        }
        c.finite("fm.electronic_gain", fm.electronic_gain);
        if !(fm.detector_rolloff > 0.0 && fm.detector_rolloff <= 1.0) {
            c.fail(
                "fm.detector_rolloff",
                format!("must be in (0, 1] (got {})", fm.detector_rolloff),
            );
        }

        let sc = &self.scan;
        c.finite("scan.probe_detuning_mhz", sc.probe_detuning_mhz);
        c.positive("scan.span_mhz", sc.span_mhz);
        c.at_least("scan.coarse_points", sc.coarse_points, 2);
        c.non_negative("scan.fine_width_mhz", sc.fine_width_mhz);

        let q = &self.quadrature;
        if q.node_count < 8 {
            c.fail(
                "quadrature.node_count",
                format!("node_count ≥ 8 (got {})", q.node_count),
            );
        }
        c.positive("quadrature.velocity_cutoff", q.velocity_cutoff);
        if let Some(t) = q.convergence_tol {
            c.positive("quadrature.convergence_tol", t);
        }

        c.non_negative("noise.white_psd", self.noise.white_psd);
        c.non_negative("noise.random_walk", self.noise.random_walk);

        let ct = &self.controller;
        c.finite("controller.proportional_gain", ct.proportional_gain);
        c.non_negative("controller.integrator_corner_hz", ct.integrator_corner_hz);
        c.positive("controller.cutoff_hz", ct.cutoff_hz);
        c.finite("controller.slow_integrator_gain", ct.slow_integrator_gain);
        c.non_negative("controller.slow_range_mhz", ct.slow_range_mhz);
        if ct.sign != 1.0 && ct.sign != -1.0 {
            c.fail("controller.sign", format!("must be +1 or -1 (got {})", ct.sign));
        }
        if let Some(k) = ct.actuator_gain_hz_per_v {
            c.positive("controller.actuator_gain_hz_per_v", k);
        }

        let l = &self.lock;
        c.positive("lock.sample_rate_mhz", l.sample_rate_mhz);
        c.positive("lock.duration_s", l.duration_s);
        c.finite("lock.initial_offset_hz", l.initial_offset_hz);
        c.non_negative("lock.unlock_dwell_us", l.unlock_dwell_us);
        c.non_negative("lock.detector_noise_v", l.detector_noise_v);
        if let Some(b) = l.measurement_bandwidth_hz {
            c.positive("lock.measurement_bandwidth_hz", b);
        }
        if l.sample_rate_mhz * 1e6 < 10.0 * ct.cutoff_hz {
            c.fail(
                "lock.sample_rate_mhz",
                format!(
                    "must be at least 10 × controller.cutoff_hz ({} MHz)",
                    10.0 * ct.cutoff_hz / 1e6
                ),
            );
        }
        let samples = l.sample_rate_mhz * 1e6 * l.duration_s;
        if samples > l.sample_budget as f64 {
            c.fail(
                "lock.duration_s",
                format!("{samples:.0} samples exceed lock.sample_budget = {}", l.sample_budget),
            );
        }

        let b = &self.beat;
        c.positive("beat.sample_rate_mhz", b.sample_rate_mhz);
        c.positive("beat.duration_s", b.duration_s);
        c.positive("beat.segment_ms", b.segment_ms);
        c.at_least("beat.fft_divisions", b.fft_divisions, 1);
        c.at_least("beat.max_windows", b.max_windows, 1);
        if !(0.0..1.0).contains(&b.smoothing_fraction) {
            c.fail(
                "beat.smoothing_fraction",
                format!("must be in [0, 1) (got {})", b.smoothing_fraction),
            );
        }
        if b.segment_ms * 1e-3 > b.duration_s {
            c.fail("beat.segment_ms", "must not exceed beat.duration_s");
        }
        if b.sample_rate_mhz * 1e6 * b.duration_s > l.sample_budget as f64 {
            c.fail(
                "beat.duration_s",
                format!("samples exceed lock.sample_budget = {}", l.sample_budget),
            );
        }

        let f = &self.fit;
        c.positive("fit.span_mhz", f.span_mhz);
        c.at_least("fit.points", f.points, 8);
        c.positive("fit.noise_sigma", f.noise_sigma);
        c.non_negative("fit.synthetic_gamma_rel_mhz", f.synthetic_gamma_rel_mhz);
        c.non_negative("fit.synthetic_transit_mhz", f.synthetic_transit_mhz);
        c.non_negative("fit.model_transit_mhz", f.model_transit_mhz);
        c.positive("fit.initial_rabi_mhz", f.initial_rabi_mhz);
        c.positive("fit.initial_gamma_rel_mhz", f.initial_gamma_rel_mhz);
        c.positive("fit.scan_time_s", f.scan_time_s);

        c.at_least("outputs.decimation", self.outputs.decimation, 1);

        if c.errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(c.errors))
        }
    }

    /// Resolved physics configuration. Call after [`validate`](Self::validate).
    pub fn cascade_system(&self) -> Result<CascadeSystem> {
        let s = &self.system;
        let required = |v: Option<f64>, field: &str| v.ok_or_else(|| Error::invalid(field, "required"));
        let mut probe = LaserParams::new(
            required(s.probe_wavelength_nm, "system.probe_wavelength_nm")?,
            s.probe_power.0,
            s.probe_waist_um / 1e6,
        );
        probe.residual_linewidth_hz = s.probe_linewidth_mhz * 1e6;
        probe.static_detuning = mhz_to_angular(s.probe_detuning_mhz);
        let mut coupling = LaserParams::new(
            required(s.coupling_wavelength_nm, "system.coupling_wavelength_nm")?,
            s.coupling_power.0,
            s.coupling_waist_um / 1e6,
        );
        coupling.static_detuning = mhz_to_angular(s.coupling_detuning_mhz);
        let omega_c = match (s.coupling_rabi_mhz, &s.calibration, &s.rydberg) {
            (Some(r), _, _) => mhz_to_angular(r),
            (None, Some(cal), Some(level)) => {
                let reference = CouplingCalibration {
                    rabi: mhz_to_angular(cal.rabi_mhz),
                    power_w: cal.power.0,
                    waist_radius_m: cal.waist_um / 1e6,
                    level: cal.level.level()?,
                    s_over_d_amplitude: cal.s_over_d_amplitude,
                };
                coupling_rabi_frequency(&coupling, &level.level()?, &reference)?
            }
            _ => return Err(Error::invalid("system.coupling_rabi_mhz", "required")),
        };
        let sys = CascadeSystem {
            probe,
            coupling,
            rates: DecayRates {
                gamma_e: mhz_to_angular(s.gamma_e_mhz),
                gamma_r: mhz_to_angular(s.gamma_r_mhz),
                gamma_transit: mhz_to_angular(s.gamma_transit_mhz),
                gamma_rel_laser: mhz_to_angular(s.gamma_rel_laser_mhz),
            },
            vapor: VaporParams {
                temperature_k: s.temperature_k,
                atomic_mass_kg: s.atomic_mass_amu * AMU,
                cell_length_m: s.cell_length_m,
                peak_optical_depth: required(s.optical_depth, "system.optical_depth")?,
            },
            omega_c,
            counter_propagating: s.counter_propagating,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn fm_params(&self) -> FmParams {
        FmParams {
            omega_m: mhz_to_angular(self.fm.modulation_mhz),
            beta: self.fm.beta,
            theta: self.fm.theta_rad,
            electronic_gain: self.fm.electronic_gain,
            detector_rolloff: self.fm.detector_rolloff,
        }
    }

    pub fn quadrature_spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            method: self.quadrature.method,
            node_count: self.quadrature.node_count,
            velocity_cutoff: self.quadrature.velocity_cutoff,
            convergence_tol: self.quadrature.convergence_tol,
        }
    }

    /// Laser noise keyed to `label`, so independent lasers draw
    /// independent streams.
    pub fn noise_model(&self, label: &str) -> NoiseModel {
        NoiseModel {
            white_psd: self.noise.white_psd,
            random_walk_coeff: self.noise.random_walk,
            seed: self.stream_seed(label),
        }
    }

    pub fn controller_config(&self) -> ControllerConfig {
        let c = &self.controller;
        ControllerConfig {
            fast: FastBranch {
                proportional_gain: c.proportional_gain,
                integrator_corner_hz: c.integrator_corner_hz,
                cutoff_hz: c.cutoff_hz,
            },
            slow: SlowBranch {
                integrator_gain: c.slow_integrator_gain,
                output_range_hz: c.slow_range_mhz * 1e6,
            },
            sign: c.sign,
            actuator_gain_hz_per_v: c.actuator_gain_hz_per_v,
        }
    }

    pub fn lock_settings(&self) -> LockSettings {
        let l = &self.lock;
        LockSettings {
            sample_rate: l.sample_rate_mhz * 1e6,
            duration: l.duration_s,
            initial_offset_hz: l.initial_offset_hz,
            unlock_dwell_s: l.unlock_dwell_us / 1e6,
            sample_budget: l.sample_budget,
        }
    }

    pub fn beat_settings(&self) -> BeatNoteSettings {
        BeatNoteSettings {
            segment_length_s: self.beat.segment_ms / 1e3,
            fft_divisions: self.beat.fft_divisions,
            max_windows: self.beat.max_windows,
            smoothing_fraction: self.beat.smoothing_fraction,
        }
    }
}

/// Parse a TOML scenario, apply defaults and validate. Unknown keys and all
/// range violations are reported together.
pub fn validate_config(text: &str) -> Result<ScenarioConfig> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| Error::Config(vec![format!("syntax: {e}")]))?;
    let mut unknown = Vec::new();
    let config: ScenarioConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| Error::Config(vec![e.to_string().trim().to_string()]))?;
    let mut errors: Vec<String> = unknown.into_iter().map(|k| format!("{k}: unknown key")).collect();
    match config.validate() {
        Ok(()) => {}
        Err(Error::Config(list)) => errors.extend(list),
        Err(e) => errors.push(e.to_string()),
    }
    if errors.is_empty() {
        // catches inconsistencies only visible after resolution
        config
            .cascade_system()
            .map_err(|e| Error::Config(vec![e.to_string()]))?;
        Ok(config)
    } else {
        Err(Error::Config(errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[system]
probe_wavelength_nm = 780.24
coupling_wavelength_nm = 480.0
optical_depth = 1.0
coupling_rabi_mhz = 2.0
"#;

    fn errors(text: &str) -> Vec<String> {
        match validate_config(text) {
            Err(Error::Config(list)) => list,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = validate_config(MINIMAL).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.quadrature.node_count, 200);
        assert_eq!(c.fm.modulation_mhz, 10.0);
        assert_eq!(c.system.gamma_e_mhz, 6.07);
        let sys = c.cascade_system().unwrap();
        assert!((sys.omega_c - mhz_to_angular(2.0)).abs() < 1e-6);
        assert_eq!(sys, presets::hot_cell().with_omega_c(sys.omega_c));
    }

    #[test]
    fn desk_default_matches_minimal() {
        let d = ScenarioConfig::desk_default();
        d.validate().unwrap();
        assert_eq!(d, validate_config(MINIMAL).unwrap());
    }

    #[test]
    fn negative_power_names_field() {
        let text = format!("{MINIMAL}coupling_power = \"-1 mW\"\n");
        let errs = errors(&text);
        assert_eq!(errs.len(), 1);
        assert!(errs[0].starts_with("system.coupling_power: must be > 0"), "{errs:?}");
    }

    #[test]
    fn small_node_count_rejected() {
        let errs = errors(&format!("{MINIMAL}[quadrature]\nnode_count = 4\n"));
        assert!(errs[0].contains("node_count ≥ 8"), "{errs:?}");
    }

    #[test]
    fn errors_are_aggregated() {
        let text = r#"
seed = 3
[system]
probe_wavelength_nm = -1
coupling_wavelength_nm = 480.0
coupling_rabi_mhz = 2.0
tempreature_k = 300
[fm]
beta = 0.9
"#;
        let errs = errors(text);
        assert!(
            errs.iter().any(|e| e == "system.tempreature_k: unknown key"),
            "{errs:?}"
        );
        assert!(errs.iter().any(|e| e.starts_with("system.probe_wavelength_nm")));
        assert!(errs.iter().any(|e| e == "system.optical_depth: required"));
        assert!(errs.iter().any(|e| e.starts_with("fm.beta")));
        assert_eq!(errs.len(), 4);
    }

    #[test]
    fn power_suffixes() {
        assert_eq!(Power::parse("1 mW").unwrap().0, 1e-3);
        assert_eq!(Power::parse("4uW").unwrap().0, 4e-6);
        assert_eq!(Power::parse("4 µW").unwrap().0, 4e-6);
        assert_eq!(Power::parse("200 nW").unwrap().0, 200e-9);
        assert_eq!(Power::parse("0.5W").unwrap().0, 0.5);
        assert!(Power::parse("3 kW").is_err());
        assert!(Power::parse("3").is_err());
    }

    #[test]
    fn calibrated_coupling() {
        let text = r#"
[system]
probe_wavelength_nm = 780.24
coupling_wavelength_nm = 480.0
optical_depth = 1.0
coupling_power = "4 mW"
rydberg = { n = 43, series = "D" }
calibration = { rabi_mhz = 2.0, power = "1 mW", waist_um = 100, level = { n = 43, series = "D" } }
"#;
        let sys = validate_config(text).unwrap().cascade_system().unwrap();
        assert!((sys.omega_c / mhz_to_angular(4.0) - 1.0).abs() < 1e-12);
        let both = text.replace("coupling_power", "coupling_rabi_mhz = 1.0\ncoupling_power");
        assert!(errors(&both)[0].contains("not both"));
    }

    #[test]
    fn echo_preserves_digest() {
        let c = validate_config(MINIMAL).unwrap();
        let echoed = validate_config(&c.to_toml()).unwrap();
        assert_eq!(c, echoed);
        assert_eq!(c.digest(), echoed.digest());
    }

    #[test]
    fn digest_ignores_whitespace_and_output_dir() {
        let spaced = MINIMAL.replace(" = ", "   =   ").replace('\n', "\n\n");
        let a = validate_config(MINIMAL).unwrap();
        let mut b = validate_config(&spaced).unwrap();
        assert_eq!(a.digest(), b.digest());
        b.outputs.dir = Some("elsewhere".into());
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn large_seeds_round_trip() {
        let mut c = validate_config(MINIMAL).unwrap();
        c.seed = u64::MAX;
        assert_eq!(validate_config(&c.to_toml()).unwrap().seed, u64::MAX);
    }

    #[test]
    fn syntax_error_reported() {
        let errs = errors("[system\n");
        assert!(errs[0].starts_with("syntax:"));
    }
}
