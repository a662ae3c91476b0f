//! Weak-probe response of the ladder system.
//!
//! The single-velocity susceptibility is
//!
//! ```text
//! χ(v) = i γ_ge / [ γ_ge − iΔp + (Ωc²/4) / (γ_2 − i(Δp + Δc)) ]
//! ```
//!
//! with `Δp = δp − k_p v`, `Δc = δc ± k_c v` (plus for counter-propagating
//! beams). It is normalized so that the bare two-level resonance gives
//! `χ = i`. Doppler averaging is done either in closed form (partial
//! fractions against the Faddeeva function) or by quadrature.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::{DecayRates, LaserParams, VaporParams};
use crate::special::{gauss_hermite, gaussian_mean_inverse};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeSystem {
    pub probe: LaserParams,
    pub coupling: LaserParams,
    pub rates: DecayRates,
    pub vapor: VaporParams,
    /// Coupling Rabi frequency, rad/s.
    pub omega_c: f64,
    pub counter_propagating: bool,
}

impl CascadeSystem {
    pub fn validate(&self) -> Result<()> {
        self.probe.validate("probe")?;
        self.coupling.validate("coupling")?;
        self.rates.validate()?;
        self.vapor.validate()?;
        if !(self.omega_c >= 0.0 && self.omega_c.is_finite()) {
            return Err(Error::invalid("omega_c", "must be >= 0"));
        }
        Ok(())
    }

    /// Probe coherence damping: `Γe/2` plus `π·FWHM` of the probe laser.
    pub fn gamma_ge(&self) -> f64 {
        self.rates.gamma_e / 2.0 + PI * self.probe.residual_linewidth_hz
    }

    /// Two-photon coherence damping.
    pub fn gamma_two_photon(&self) -> f64 {
        self.rates.gamma_r / 2.0 + self.rates.gamma_transit + self.rates.gamma_rel_laser
    }

    /// Coefficients `(∂Δp/∂v, ∂(Δp+Δc)/∂v)`.
    fn velocity_slopes(&self) -> (f64, f64) {
        let kp = self.probe.wavenumber();
        let kc = self.coupling.wavenumber();
        let two_photon = if self.counter_propagating { kc - kp } else { -(kc + kp) };
        (-kp, two_photon)
    }

    pub fn with_omega_c(mut self, omega_c: f64) -> Self {
        self.omega_c = omega_c;
        self
    }
}

/// Normalized complex lineshape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexResponse(pub Complex64);

impl ComplexResponse {
    pub fn re(&self) -> f64 {
        self.0.re
    }
    pub fn im(&self) -> f64 {
        self.0.im
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMethod {
    /// Exact velocity average via partial fractions and the Faddeeva function.
    Faddeeva,
    GaussHermite,
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub method: QuadratureMethod,
    pub node_count: usize,
    /// Integration half-range in thermal widths (trapezoid only).
    pub velocity_cutoff: f64,
    /// When set, node-based methods are re-evaluated with twice the nodes
    /// and fail if the result moves by more than this.
    pub convergence_tol: Option<f64>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            method: QuadratureMethod::Faddeeva,
            node_count: 200,
            velocity_cutoff: 6.0,
            convergence_tol: None,
        }
    }
}

impl QuadratureSpec {
    pub fn gauss_hermite(node_count: usize) -> Self {
        Self {
            method: QuadratureMethod::GaussHermite,
            node_count,
            ..Self::default()
        }
    }

    pub fn trapezoid(node_count: usize, velocity_cutoff: f64) -> Self {
        Self {
            method: QuadratureMethod::Trapezoid,
            node_count,
            velocity_cutoff,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count < 8 {
            return Err(Error::invalid("quadrature.node_count", "node_count ≥ 8"));
        }
        if !(self.velocity_cutoff > 0.0 && self.velocity_cutoff.is_finite()) {
            return Err(Error::invalid("quadrature.velocity_cutoff", "must be > 0"));
        }
        if let Some(tol) = self.convergence_tol {
            if !(tol > 0.0) {
                return Err(Error::invalid("quadrature.convergence_tol", "must be > 0"));
            }
        }
        Ok(())
    }
}

/// Weak-probe susceptibility for a single velocity class `v` (m/s).
pub fn susceptibility_single_velocity(delta_p: f64, delta_c: f64, v: f64, sys: &CascadeSystem) -> ComplexResponse {
    let (dp_dv, d2_dv) = sys.velocity_slopes();
    let dp = delta_p + sys.probe.static_detuning + dp_dv * v;
    let d2 = delta_p + sys.probe.static_detuning + delta_c + sys.coupling.static_detuning + d2_dv * v;
    ComplexResponse(chi_from_detunings(dp, d2, sys))
}

fn chi_from_detunings(dp: f64, d2: f64, sys: &CascadeSystem) -> Complex64 {
    let i = Complex64::i();
    let g = sys.gamma_ge();
    let dressing = if sys.omega_c > 0.0 {
        Complex64::from(sys.omega_c * sys.omega_c / 4.0) / (sys.gamma_two_photon() - i * d2)
    } else {
        Complex64::new(0.0, 0.0)
    };
    i * g / (g - i * dp + dressing)
}

type NodeTable = Arc<(Vec<f64>, Vec<f64>)>;

fn gh_table(n: usize) -> NodeTable {
    static CACHE: OnceLock<Mutex<HashMap<usize, NodeTable>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard.entry(n).or_insert_with(|| Arc::new(gauss_hermite(n))).clone()
}

fn doppler_nodes(
    delta_p: f64,
    delta_c: f64,
    sys: &CascadeSystem,
    method: QuadratureMethod,
    n: usize,
    cutoff: f64,
) -> Complex64 {
    let sigma_v = sys.vapor.rms_velocity();
    match method {
        QuadratureMethod::GaussHermite => {
            let table = gh_table(n);
            let scale = 2f64.sqrt() * sigma_v;
            let sum: Complex64 = table
                .0
                .iter()
                .zip(&table.1)
                .map(|(&x, &w)| susceptibility_single_velocity(delta_p, delta_c, scale * x, sys).0 * w)
                .sum();
            sum / PI.sqrt()
        }
        QuadratureMethod::Trapezoid => {
            let h = 2.0 * cutoff / (n - 1) as f64;
            let norm = 1.0 / (2.0 * PI).sqrt();
            let sum: Complex64 = (0..n)
                .map(|j| {
                    let x = -cutoff + h * j as f64;
                    let edge = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                    let weight = edge * norm * (-0.5 * x * x).exp() * h;
                    susceptibility_single_velocity(delta_p, delta_c, sigma_v * x, sys).0 * weight
                })
                .sum();
            sum
        }
        QuadratureMethod::Faddeeva => unreachable!("closed form has no nodes"),
    }
}

/// Closed-form Gaussian average of the rational lineshape.
fn doppler_closed_form(delta_p: f64, delta_c: f64, sys: &CascadeSystem) -> Complex64 {
    let i = Complex64::i();
    let sigma_v = sys.vapor.rms_velocity();
    let scale = 2f64.sqrt() * sigma_v;
    let (dp_dv, d2_dv) = sys.velocity_slopes();
    // Δp = a0 + a1 u, Δ2 = b0 + b1 u with u = v / (√2 σ_v)
    let a0 = delta_p + sys.probe.static_detuning;
    let b0 = a0 + delta_c + sys.coupling.static_detuning;
    let a1 = dp_dv * scale;
    let b1 = d2_dv * scale;
    let g = sys.gamma_ge();
    let omega_sq = sys.omega_c * sys.omega_c / 4.0;

    if omega_sq == 0.0 {
        // χ = iγ / (γ − i a0 − i a1 u) = (iγ / (−i a1)) / (u − r)
        let p1 = -i * a1;
        let r = -(g - i * a0) / p1;
        return i * g / p1 * gaussian_mean_inverse(r);
    }

    let p0 = g - i * a0;
    let p1 = -i * a1;
    let q0 = sys.gamma_two_photon() - i * b0;
    let q1 = -i * b1;

    if b1.abs() < 1e-12 * a1.abs() {
        // Equal wavenumbers: the two-photon detuning has no Doppler shift.
        if q0.norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let r = -(p0 * q0 + omega_sq) / (p1 * q0);
        return i * g / p1 * gaussian_mean_inverse(r);
    }

    let a = p1 * q1;
    let b = p0 * q1 + p1 * q0;
    let c = p0 * q0 + omega_sq;
    let disc = (b * b - 4.0 * a * c).sqrt();
    let q = if (b.conj() * disc).re >= 0.0 {
        -(b + disc) / 2.0
    } else {
        -(b - disc) / 2.0
    };
    let r1 = q / a;
    let r2 = c / q;
    let sep = (r1 - r2).norm();
    if sep < 1e-9 * (r1.norm() + r2.norm() + 1.0) {
        // Double pole; fall back to a dense trapezoid.
        return doppler_nodes(delta_p, delta_c, sys, QuadratureMethod::Trapezoid, 200_001, 8.0);
    }
    let c1 = (q0 + q1 * r1) / (r1 - r2);
    let c2 = (q0 + q1 * r2) / (r2 - r1);
    i * g / a * (c1 * gaussian_mean_inverse(r1) + c2 * gaussian_mean_inverse(r2))
}

/// Gaussian velocity average of [`susceptibility_single_velocity`].
pub fn susceptibility_doppler(
    delta_p: f64,
    delta_c: f64,
    sys: &CascadeSystem,
    quad: &QuadratureSpec,
) -> Result<ComplexResponse> {
    let sigma_v = sys.vapor.rms_velocity();
    // A frozen vapor is a single velocity class.
    if sigma_v * sys.probe.wavenumber() <= 1e-12 * sys.gamma_ge().max(1.0) {
        return Ok(susceptibility_single_velocity(delta_p, delta_c, 0.0, sys));
    }
    let value = match quad.method {
        QuadratureMethod::Faddeeva => doppler_closed_form(delta_p, delta_c, sys),
        method => {
            let n = quad.node_count;
            let base = doppler_nodes(delta_p, delta_c, sys, method, n, quad.velocity_cutoff);
            if let Some(tolerance) = quad.convergence_tol {
                let doubled = doppler_nodes(delta_p, delta_c, sys, method, 2 * n, quad.velocity_cutoff);
                let change = (doubled - base).norm();
                if change > tolerance {
                    return Err(Error::NotConverged { change, tolerance });
                }
            }
            base
        }
    };
    Ok(ComplexResponse(value))
}

/// How the medium samples the velocity distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Averaging {
    Doppler(QuadratureSpec),
    /// v = 0 only.
    Cold,
}

/// A cell or cloud ready to evaluate transmissions, with the optical-depth
/// normalization precomputed.
#[derive(Debug, Clone, Copy)]
pub struct Medium {
    pub sys: CascadeSystem,
    pub averaging: Averaging,
    od_scale: f64,
}

impl Medium {
    pub fn hot(sys: CascadeSystem, quad: QuadratureSpec) -> Result<Self> {
        sys.validate()?;
        quad.validate()?;
        Self::build(sys, Averaging::Doppler(quad))
    }

    pub fn cold(sys: CascadeSystem) -> Result<Self> {
        sys.validate()?;
        Self::build(sys, Averaging::Cold)
    }

    fn build(sys: CascadeSystem, averaging: Averaging) -> Result<Self> {
        let mut reference = sys.with_omega_c(0.0);
        reference.probe.static_detuning = 0.0;
        reference.coupling.static_detuning = 0.0;
        let bare = Medium {
            sys: reference,
            averaging,
            od_scale: 0.0,
        };
        let anchor = bare.susceptibility(0.0, 0.0)?.im();
        let od_scale = if sys.vapor.peak_optical_depth == 0.0 {
            0.0
        } else {
            sys.vapor.peak_optical_depth / anchor
        };
        Ok(Medium {
            sys,
            averaging,
            od_scale,
        })
    }

    pub fn susceptibility(&self, delta_p: f64, delta_c: f64) -> Result<ComplexResponse> {
        match &self.averaging {
            Averaging::Doppler(quad) => susceptibility_doppler(delta_p, delta_c, &self.sys, quad),
            Averaging::Cold => Ok(susceptibility_single_velocity(delta_p, delta_c, 0.0, &self.sys)),
        }
    }

    /// Complex field transmission `exp((i Re χ − Im χ)·OD_norm/2)`.
    pub fn transmission(&self, delta_p: f64, delta_c: f64) -> Result<Complex64> {
        let chi = self.susceptibility(delta_p, delta_c)?.0;
        Ok(transmission_from_chi(chi, self.od_scale))
    }

    /// Scale converting `Im χ` to intensity optical depth.
    pub fn od_scale(&self) -> f64 {
        self.od_scale
    }
}

pub(crate) fn transmission_from_chi(chi: Complex64, od_scale: f64) -> Complex64 {
    (Complex64::new(-chi.im, chi.re) * (od_scale / 2.0)).exp()
}

/// Complex field transmission of a hot cell.
pub fn field_transmission(delta_p: f64, delta_c: f64, sys: &CascadeSystem, quad: &QuadratureSpec) -> Result<Complex64> {
    Medium::hot(*sys, *quad)?.transmission(delta_p, delta_c)
}

/// Intensity transmission `|t|²` of a Doppler-free cloud over a probe scan.
pub fn cold_spectrum(delta_p_grid: &[f64], sys: &CascadeSystem) -> Result<Vec<f64>> {
    let medium = Medium::cold(*sys)?;
    delta_p_grid
        .iter()
        .map(|&dp| medium.transmission(dp, 0.0).map(|t| t.norm_sqr()))
        .collect()
}

/// One row of a coupling-scan spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    pub delta_c: f64,
    pub chi: Complex64,
    pub transmission: f64,
}

/// Carrier susceptibility and intensity transmission over a coupling scan
/// at fixed probe detuning. Grid points are evaluated in parallel.
pub fn coupling_scan(medium: &Medium, delta_p: f64, delta_c_grid: &[f64]) -> Result<Vec<SpectrumPoint>> {
    delta_c_grid
        .par_iter()
        .map(|&dc| {
            let chi = medium.susceptibility(delta_p, dc)?.0;
            Ok(SpectrumPoint {
                delta_c: dc,
                chi,
                transmission: transmission_from_chi(chi, medium.od_scale).norm_sqr(),
            })
        })
        .collect()
}

/// Coarse uniform grid over `[-span/2, span/2]` merged with fine windows
/// of width `fine_width` around each center. Sorted and deduplicated.
pub fn two_tier_grid(
    span: f64,
    coarse_points: usize,
    centers: &[f64],
    fine_width: f64,
    fine_points: usize,
) -> Vec<f64> {
    let mut grid = linspace(-span / 2.0, span / 2.0, coarse_points);
    if fine_points >= 2 && fine_width > 0.0 {
        for &c in centers {
            grid.extend(linspace(c - fine_width / 2.0, c + fine_width / 2.0, fine_points));
        }
    }
    grid.retain(|x| x.abs() <= span / 2.0 * (1.0 + 1e-12));
    grid.sort_by(|a, b| a.total_cmp(b));
    let tol = span.abs() * 1e-12;
    grid.dedup_by(|a, b| (*a - *b).abs() <= tol);
    grid
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![(lo + hi) / 2.0],
        _ => (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect(),
    }
}

/// Local maxima with their topographic prominence at least
/// `min_prominence`; positions refined by a parabola through the three
/// points around each maximum.
pub fn find_peaks(xs: &[f64], ys: &[f64], min_prominence: f64) -> Vec<f64> {
    let n = ys.len();
    let mut peaks = Vec::new();
    for k in 1..n.saturating_sub(1) {
        if !(ys[k] > ys[k - 1] && ys[k] >= ys[k + 1]) {
            continue;
        }
        let mut left_min = ys[k];
        for j in (0..k).rev() {
            if ys[j] > ys[k] {
                break;
            }
            left_min = left_min.min(ys[j]);
        }
        let mut right_min = ys[k];
        for &y in &ys[k + 1..] {
            if y > ys[k] {
                break;
            }
            right_min = right_min.min(y);
        }
        if ys[k] - left_min.max(right_min) < min_prominence {
            continue;
        }
        peaks.push(parabolic_vertex(
            (xs[k - 1], ys[k - 1]),
            (xs[k], ys[k]),
            (xs[k + 1], ys[k + 1]),
        ));
    }
    peaks
}

fn parabolic_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let (x1, y1) = a;
    let (x2, y2) = b;
    let (x3, y3) = c;
    let denom = (x1 - x2) * (x1 - x3) * (x2 - x3);
    let ca = (x3 * (y2 - y1) + x2 * (y1 - y3) + x1 * (y3 - y2)) / denom;
    let cb = (x3 * x3 * (y1 - y2) + x2 * x2 * (y3 - y1) + x1 * x1 * (y2 - y3)) / denom;
    if ca >= 0.0 || !ca.is_finite() {
        return x2;
    }
    (-cb / (2.0 * ca)).clamp(x1, x3)
}
