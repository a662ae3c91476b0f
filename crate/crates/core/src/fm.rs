//! FM spectroscopy: sideband beat amplitude, phase-sensitive detection and
//! error-signal analysis.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eit::{CascadeSystem, Medium};
use crate::special::{bessel_j0, bessel_j1};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmParams {
    /// Modulation frequency, rad/s.
    pub omega_m: f64,
    /// Modulation index. First-order sidebands only, so at most 0.5.
    pub beta: f64,
    /// Demodulation phase in radians. `None` selects the dispersion
    /// quadrature with positive carrier slope.
    pub theta: Option<f64>,
    /// Volts per unit beat amplitude.
    pub electronic_gain: f64,
    /// Detector response at the modulation frequency, multiplies `B`.
    pub detector_rolloff: f64,
}

impl Default for FmParams {
    fn default() -> Self {
        Self {
            omega_m: 2.0 * PI * 10e6,
            beta: 0.3,
            theta: None,
            electronic_gain: 1.0,
            detector_rolloff: 1.0,
        }
    }
}

impl FmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_m > 0.0 && self.omega_m.is_finite()) {
            return Err(Error::invalid("fm.omega_m", "must be > 0"));
        }
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return Err(Error::invalid("fm.beta", "must satisfy 0 < beta <= 0.5"));
        }
        if !(self.electronic_gain > 0.0 && self.electronic_gain.is_finite()) {
            return Err(Error::invalid("fm.electronic_gain", "must be > 0"));
        }
        if !(self.detector_rolloff > 0.0 && self.detector_rolloff <= 1.0) {
            return Err(Error::invalid("fm.detector_rolloff", "must be in (0, 1]"));
        }
        if let Some(theta) = self.theta {
            if !theta.is_finite() {
                return Err(Error::invalid("fm.theta", "must be finite"));
            }
        }
        Ok(())
    }

    /// `J0(β)·J1(β)`.
    pub fn sideband_product(&self) -> f64 {
        bessel_j0(self.beta) * bessel_j1(self.beta)
    }
}

/// Beat amplitude from the three field transmissions seen by the lower
/// sideband, carrier and upper sideband.
pub fn beat_from_transmissions(t_minus: Complex64, t_carrier: Complex64, t_plus: Complex64, beta: f64) -> Complex64 {
    bessel_j0(beta) * bessel_j1(beta) * (t_plus * t_carrier.conj() - t_carrier * t_minus.conj())
}

/// Complex photocurrent amplitude at `ω_m` (coefficient of `e^{iω_m t}`).
pub fn fm_beat_amplitude(delta_p0: f64, delta_c: f64, medium: &Medium, fm: &FmParams) -> Result<Complex64> {
    let t_minus = medium.transmission(delta_p0 - fm.omega_m, delta_c)?;
    let t0 = medium.transmission(delta_p0, delta_c)?;
    let t_plus = medium.transmission(delta_p0 + fm.omega_m, delta_c)?;
    Ok(fm.detector_rolloff * beat_from_transmissions(t_minus, t0, t_plus, fm.beta))
}

/// Mixer output `gain · Re[B e^{-iθ}]`.
pub fn demodulate(beat: Complex64, gain: f64, theta: f64) -> f64 {
    gain * (beat * Complex64::from_polar(1.0, -theta)).re
}

/// Transmitted power fraction of the whole modulated beam (carrier plus
/// both first-order sidebands), normalized to 1 for a transparent cell.
pub fn modulated_transmission(delta_p0: f64, delta_c: f64, medium: &Medium, fm: &FmParams) -> Result<f64> {
    let j0 = bessel_j0(fm.beta).powi(2);
    let j1 = bessel_j1(fm.beta).powi(2);
    let t_minus = medium.transmission(delta_p0 - fm.omega_m, delta_c)?;
    let t0 = medium.transmission(delta_p0, delta_c)?;
    let t_plus = medium.transmission(delta_p0 + fm.omega_m, delta_c)?;
    Ok((j0 * t0.norm_sqr() + j1 * (t_minus.norm_sqr() + t_plus.norm_sqr())) / (j0 + 2.0 * j1))
}

/// Demodulation phase maximizing the carrier zero-crossing slope, with the
/// sign chosen so the slope is positive.
pub fn dispersion_phase(medium: &Medium, fm: &FmParams) -> Result<f64> {
    let h = 2.0 * PI * 1e3;
    let plus = fm_beat_amplitude(0.0, h, medium, fm)?;
    let minus = fm_beat_amplitude(0.0, -h, medium, fm)?;
    let derivative = (plus - minus) / (2.0 * h);
    if derivative.norm() == 0.0 {
        return Ok(0.0);
    }
    Ok(derivative.arg())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub fm: FmParams,
    /// Phase actually used for demodulation.
    pub theta: f64,
    pub system: CascadeSystem,
    /// `+1` when volts increase with coupling frequency through the carrier
    /// crossing.
    pub carrier_slope_sign: i8,
    pub warnings: Vec<String>,
}

/// Demodulated error signal versus coupling detuning.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSignalTrace {
    /// Coupling detunings, rad/s, strictly increasing.
    pub detunings: Vec<f64>,
    pub volts: Vec<f64>,
    pub meta: TraceMeta,
}

impl ErrorSignalTrace {
    /// Linear interpolation, clamped to the end values outside the grid.
    pub fn interpolate(&self, delta: f64) -> f64 {
        interpolate(&self.detunings, &self.volts, delta)
    }
}

pub(crate) fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => ys[0],
        n => {
            if x <= xs[0] {
                return ys[0];
            }
            if x >= xs[n - 1] {
                return ys[n - 1];
            }
            let k = xs.partition_point(|&v| v <= x) - 1;
            let f = (x - xs[k]) / (xs[k + 1] - xs[k]);
            ys[k] + f * (ys[k + 1] - ys[k])
        }
    }
}

/// Rough width of the narrowest EIT feature in a coupling scan, rad/s.
pub fn expected_feature_width(sys: &CascadeSystem) -> f64 {
    2.0 * sys.gamma_two_photon() + sys.omega_c * sys.omega_c / (2.0 * sys.gamma_ge())
}

/// Error signal over a coupling-detuning grid with the probe carrier locked
/// at zero detuning.
pub fn error_signal_scan(delta_c_grid: &[f64], medium: &Medium, fm: &FmParams) -> Result<ErrorSignalTrace> {
    fm.validate()?;
    if delta_c_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("delta_c_grid", "must be strictly increasing"));
    }
    let theta = match fm.theta {
        Some(theta) => theta,
        None => dispersion_phase(medium, fm)?,
    };
    let volts = delta_c_grid
        .par_iter()
        .map(|&dc| fm_beat_amplitude(0.0, dc, medium, fm).map(|b| demodulate(b, fm.electronic_gain, theta)))
        .collect::<Result<Vec<f64>>>()?;

    let mut warnings = Vec::new();
    let width = expected_feature_width(&medium.sys);
    let max_step = delta_c_grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if max_step > width / 10.0 {
        warnings.push(format!(
            "grid step {:.3} MHz exceeds a tenth of the expected feature width {:.3} MHz",
            max_step / (2.0 * PI * 1e6),
            width / (2.0 * PI * 1e6)
        ));
    }
    let h = 2.0 * PI * 1e3;
    let slope = demodulate(fm_beat_amplitude(0.0, h, medium, fm)?, 1.0, theta)
        - demodulate(fm_beat_amplitude(0.0, -h, medium, fm)?, 1.0, theta);
    Ok(ErrorSignalTrace {
        detunings: delta_c_grid.to_vec(),
        volts,
        meta: TraceMeta {
            fm: *fm,
            theta,
            system: medium.sys,
            carrier_slope_sign: if slope >= 0.0 { 1 } else { -1 },
            warnings,
        },
    })
}

/// Zero crossing of an error-signal feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroCrossing {
    /// rad/s
    pub crossing: f64,
    /// V per rad/s
    pub slope: f64,
    /// Distance between the flanking extrema, rad/s.
    pub capture_range: f64,
}

/// Locate the single zero crossing inside `[lo, hi]` and measure its slope.
pub fn zero_crossing_slope(trace: &ErrorSignalTrace, window: (f64, f64)) -> Result<ZeroCrossing> {
    let xs = &trace.detunings;
    let ys = &trace.volts;
    let (lo, hi) = window;
    let idx: Vec<usize> = (0..xs.len()).filter(|&k| xs[k] >= lo && xs[k] <= hi).collect();
    if idx.len() < 2 {
        return Err(Error::NoCrossing);
    }
    // zeros count as positive so an exact zero sample is one crossing
    let positive = |y: f64| y >= 0.0;
    let brackets: Vec<usize> = idx
        .windows(2)
        .filter(|p| positive(ys[p[0]]) != positive(ys[p[1]]))
        .map(|p| p[0])
        .collect();
    let k = match brackets.as_slice() {
        [] => return Err(Error::NoCrossing),
        [k] => *k,
        many => return Err(Error::AmbiguousCrossing { count: many.len() }),
    };

    // flanking extrema: walk outward while the magnitude keeps growing
    let left_sign = if positive(ys[k]) { 1.0 } else { -1.0 };
    let right_sign = -left_sign;
    let mut left = k;
    while left > 0 && left_sign * ys[left - 1] >= left_sign * ys[left] {
        left -= 1;
    }
    let mut right = k + 1;
    while right + 1 < xs.len() && right_sign * ys[right + 1] >= right_sign * ys[right] {
        right += 1;
    }
    let capture_range = xs[right] - xs[left];

    // bisection on the linear interpolant
    let tol = (1e-3 * capture_range).max(f64::EPSILON * xs[k].abs().max(1.0));
    let (mut a, mut b) = (xs[k], xs[k + 1]);
    let f = |x: f64| interpolate(xs, ys, x);
    let left_positive = positive(f(a));
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if positive(f(mid)) == left_positive {
            a = mid;
        } else {
            b = mid;
        }
    }
    let crossing = 0.5 * (a + b);

    // least-squares slope over the central quarter of the peak-to-peak range
    let peak_to_peak = (ys[right] - ys[left]).abs();
    let band = 0.125 * peak_to_peak;
    let mut pts: Vec<(f64, f64)> = (left..=right)
        .filter(|&j| ys[j].abs() <= band)
        .map(|j| (xs[j], ys[j]))
        .collect();
    if pts.len() < 2 {
        pts = vec![(xs[k], ys[k]), (xs[k + 1], ys[k + 1])];
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(ZeroCrossing {
        crossing,
        slope: sxy / sxx,
        capture_range,
    })
}
