//! Closed-loop simulation of a laser locked to the EIT error signal.
//!
//! Loop per sample `k` (sample period `dt`):
//!
//! ```text
//! ν[k]  = ν_free[k] + offset − u[k−1]          laser frequency error, Hz
//! V[k]  = D(ν[k]) + n[k]                        discriminant + detector noise
//! x[k]  = sign · K_a · V[k]                     actuator units, Hz
//! u[k]  = LPF(PI(x))[k] + clamp(∫ K_i x)[k]     fast + slow branch
//! ```
//!
//! All filters use the bilinear (Tustin) map `s → (2/dt)(1 − z⁻¹)/(1 + z⁻¹)`
//! without prewarping:
//!
//! * PI: `Kp [(1 + a) − (1 − a) z⁻¹] / (1 − z⁻¹)`, `a = ω_i dt / 2`
//! * low-pass: `α (1 + z⁻¹) / [(1 + α) − (1 − α) z⁻¹]`, `α = ω_c dt / 2`
//! * slow integrator: `(K_i dt / 2)(1 + z⁻¹) / (1 − z⁻¹)`

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::fm::{interpolate, ErrorSignalTrace, ZeroCrossing};
use crate::seed;
use crate::{Error, Result};

/// Upper bound on samples per simulated series.
pub const DEFAULT_SAMPLE_BUDGET: usize = 50_000_000;

/// Free-running laser frequency noise.
///
/// `white_psd` is the one-sided frequency-noise level `S0` (Hz²/Hz); each
/// sample carries variance `S0 · f_s / 2`, and the resulting field spectrum
/// is Lorentzian with FWHM `π · S0`. `random_walk_coeff` is the diffusion
/// constant of the frequency random walk, Hz²/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub white_psd: f64,
    pub random_walk_coeff: f64,
    pub seed: u64,
}

impl NoiseModel {
    /// White noise whose Lorentzian FWHM is `fwhm_hz`.
    pub fn white_for_linewidth(fwhm_hz: f64, seed: u64) -> Self {
        Self {
            white_psd: fwhm_hz / PI,
            random_walk_coeff: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.white_psd >= 0.0 && self.white_psd.is_finite()) {
            return Err(Error::invalid("noise.white_psd", "must be >= 0"));
        }
        if !(self.random_walk_coeff >= 0.0 && self.random_walk_coeff.is_finite()) {
            return Err(Error::invalid("noise.random_walk_coeff", "must be >= 0"));
        }
        Ok(())
    }

    /// One-sided PSD of the sampled free-running frequency, Hz²/Hz.
    pub fn psd(&self, f: f64, sample_rate: f64) -> f64 {
        let walk = if self.random_walk_coeff > 0.0 {
            let s = (PI * f / sample_rate).sin();
            2.0 * self.random_walk_coeff / (sample_rate * sample_rate) / (4.0 * s * s)
        } else {
            0.0
        };
        self.white_psd + walk
    }
}

/// Uniformly sampled frequency (or voltage) record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTimeSeries {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    /// Seed the stream was drawn from, and how it was derived.
    pub seed: u64,
    pub lineage: String,
}

impl FrequencyTimeSeries {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

fn sample_count(sample_rate: f64, duration: f64, budget: usize) -> Result<usize> {
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::invalid("sample_rate", "must be > 0"));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid("duration", "must be > 0"));
    }
    let n = (sample_rate * duration).round();
    if n > budget as f64 {
        return Err(Error::BudgetExceeded {
            requested: n as usize,
            budget,
        });
    }
    Ok(n as usize)
}

/// Free-running frequency noise: white plus random walk, deterministic per
/// seed. The white and walk components use separate derived streams.
pub fn simulate_free_run(noise: &NoiseModel, sample_rate: f64, duration: f64) -> Result<FrequencyTimeSeries> {
    simulate_free_run_with_budget(noise, sample_rate, duration, DEFAULT_SAMPLE_BUDGET)
}

pub fn simulate_free_run_with_budget(
    noise: &NoiseModel,
    sample_rate: f64,
    duration: f64,
    budget: usize,
) -> Result<FrequencyTimeSeries> {
    noise.validate()?;
    let n = sample_count(sample_rate, duration, budget)?;
    let mut samples = vec![0.0; n];
    if noise.white_psd > 0.0 {
        let sigma = (noise.white_psd * sample_rate / 2.0).sqrt();
        let mut rng = seed::rng(noise.seed, "free_run.white");
        for s in samples.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *s += sigma * z;
        }
    }
    if noise.random_walk_coeff > 0.0 {
        let step = (noise.random_walk_coeff / sample_rate).sqrt();
        let mut rng = seed::rng(noise.seed, "free_run.walk");
        let mut walk = 0.0;
        for s in samples.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            walk += step * z;
            *s += walk;
        }
    }
    Ok(FrequencyTimeSeries {
        samples,
        sample_rate,
        seed: noise.seed,
        lineage: format!("free_run(seed={})", noise.seed),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastBranch {
    /// Dimensionless loop gain of the proportional path.
    pub proportional_gain: f64,
    pub integrator_corner_hz: f64,
    pub cutoff_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowBranch {
    /// 1/s
    pub integrator_gain: f64,
    /// Clamp on the slow actuator, ±Hz.
    pub output_range_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub fast: FastBranch,
    pub slow: SlowBranch,
    /// +1 or −1.
    pub sign: f64,
    /// Hz of correction per volt of error. Defaults to `1/|slope|`, which
    /// makes the loop gain independent of the discriminant slope.
    pub actuator_gain_hz_per_v: Option<f64>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            fast: FastBranch {
                proportional_gain: 1.0,
                integrator_corner_hz: 200e3,
                cutoff_hz: 1e6,
            },
            slow: SlowBranch {
                integrator_gain: 2.0 * PI * 10.0,
                output_range_hz: 1e9,
            },
            sign: 1.0,
            actuator_gain_hz_per_v: None,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let fast = &self.fast;
        if !(fast.cutoff_hz > 0.0 && fast.cutoff_hz.is_finite()) {
            return Err(Error::invalid("controller.fast.cutoff_hz", "must be > 0"));
        }
        if !fast.proportional_gain.is_finite()
            || !(fast.integrator_corner_hz >= 0.0 && fast.integrator_corner_hz.is_finite())
        {
            return Err(Error::invalid(
                "controller.fast",
                "gains must be finite and the corner >= 0",
            ));
        }
        if !self.slow.integrator_gain.is_finite() || !(self.slow.output_range_hz >= 0.0) {
            return Err(Error::invalid("controller.slow", "gain must be finite and range >= 0"));
        }
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(Error::invalid("controller.sign", "must be +1 or -1"));
        }
        if let Some(k) = self.actuator_gain_hz_per_v {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::invalid("controller.actuator_gain_hz_per_v", "must be > 0"));
            }
        }
        Ok(())
    }

    /// Scale both branches' gains by `factor`.
    pub fn with_gain_scaled(mut self, factor: f64) -> Self {
        self.fast.proportional_gain *= factor;
        self.slow.integrator_gain *= factor;
        self
    }
}

/// Error-signal transduction from frequency (Hz) to volts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminant {
    /// V/Hz at the lock point.
    pub slope: f64,
    /// Sampled error signal around the lock point: (Hz offsets, V). `None`
    /// means the discriminant is forced linear.
    pub shape: Option<(Vec<f64>, Vec<f64>)>,
    /// rms of the additive detector noise per sample, V.
    pub detector_noise_rms: f64,
    /// Distance between the flanking extrema, Hz.
    pub capture_range_hz: f64,
    /// Subtracted from the interpolated shape so that `voltage(0) == 0`.
    pub offset: f64,
}

impl Discriminant {
    pub fn linear(slope: f64, detector_noise_rms: f64) -> Self {
        Self {
            slope,
            shape: None,
            detector_noise_rms,
            capture_range_hz: f64::INFINITY,
            offset: 0.0,
        }
    }

    /// Discriminant centered on a located crossing of an error-signal scan.
    pub fn from_trace(trace: &ErrorSignalTrace, crossing: &ZeroCrossing, detector_noise_rms: f64) -> Self {
        let to_hz = 1.0 / (2.0 * PI);
        let xs: Vec<f64> = trace
            .detunings
            .iter()
            .map(|d| (d - crossing.crossing) * to_hz)
            .collect();
        let offset = interpolate(&xs, &trace.volts, 0.0);
        Self {
            slope: crossing.slope * 2.0 * PI,
            shape: Some((xs, trace.volts.clone())),
            detector_noise_rms,
            capture_range_hz: crossing.capture_range * to_hz,
            offset,
        }
    }

    /// Same slope and noise, saturation removed.
    pub fn linearized(&self) -> Self {
        Self::linear(self.slope, self.detector_noise_rms)
    }

    pub fn validate(&self) -> Result<()> {
        if self.slope == 0.0 || !self.slope.is_finite() {
            return Err(Error::ZeroSlope);
        }
        if !(self.detector_noise_rms >= 0.0) {
            return Err(Error::invalid("discriminant.detector_noise_rms", "must be >= 0"));
        }
        if let Some((xs, _)) = &self.shape {
            if xs.is_empty() || xs[0] > 0.0 || *xs.last().unwrap() < 0.0 {
                return Err(Error::invalid("discriminant.shape", "must contain the crossing"));
            }
        }
        Ok(())
    }

    /// Noise-free error voltage at frequency offset `nu_hz`.
    pub fn voltage(&self, nu_hz: f64) -> f64 {
        match &self.shape {
            None => self.slope * nu_hz,
            Some((xs, ys)) => interpolate(xs, ys, nu_hz) - self.offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockSettings {
    pub sample_rate: f64,
    pub duration: f64,
    /// Frequency error at t = 0, Hz.
    pub initial_offset_hz: f64,
    /// Time outside half the capture range before an unlock is reported.
    pub unlock_dwell_s: f64,
    pub sample_budget: usize,
}

impl Default for LockSettings {
    fn default() -> Self {
        Self {
            sample_rate: 10e6,
            duration: 0.1,
            initial_offset_hz: 0.0,
            unlock_dwell_s: 1e-6,
            sample_budget: DEFAULT_SAMPLE_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnlockEvent {
    pub start_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockResult {
    /// Laser frequency error, Hz.
    pub error_series: FrequencyTimeSeries,
    /// Error voltage seen by the controller (including detector noise), V.
    pub error_volts: FrequencyTimeSeries,
    /// Total actuator correction, Hz.
    pub control_series: FrequencyTimeSeries,
    pub unlock_events: Vec<UnlockEvent>,
}

struct Tustin {
    kp: f64,
    a: f64,
    alpha: f64,
    ki_half_dt: f64,
    range: f64,
    x_prev: f64,
    pi_prev: f64,
    lp_prev: f64,
    slow_prev: f64,
}

impl Tustin {
    fn new(controller: &ControllerConfig, dt: f64) -> Self {
        Self {
            kp: controller.fast.proportional_gain,
            a: 2.0 * PI * controller.fast.integrator_corner_hz * dt / 2.0,
            alpha: 2.0 * PI * controller.fast.cutoff_hz * dt / 2.0,
            ki_half_dt: controller.slow.integrator_gain * dt / 2.0,
            range: controller.slow.output_range_hz,
            x_prev: 0.0,
            pi_prev: 0.0,
            lp_prev: 0.0,
            slow_prev: 0.0,
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let pi = self.pi_prev + self.kp * ((1.0 + self.a) * x - (1.0 - self.a) * self.x_prev);
        let lp = (self.alpha * (pi + self.pi_prev) + (1.0 - self.alpha) * self.lp_prev) / (1.0 + self.alpha);
        let slow = (self.slow_prev + self.ki_half_dt * (x + self.x_prev)).clamp(-self.range, self.range);
        self.x_prev = x;
        self.pi_prev = pi;
        self.lp_prev = lp;
        self.slow_prev = slow;
        lp + slow
    }
}

fn actuator_gain(controller: &ControllerConfig, disc: &Discriminant) -> f64 {
    controller.actuator_gain_hz_per_v.unwrap_or(1.0 / disc.slope.abs())
}

/// Run the lock loop against a free-running noise realization.
pub fn simulate_locked(
    noise: &NoiseModel,
    controller: &ControllerConfig,
    disc: &Discriminant,
    settings: &LockSettings,
) -> Result<LockResult> {
    let free = simulate_free_run_with_budget(noise, settings.sample_rate, settings.duration, settings.sample_budget)?;
    simulate_locked_on(&free, noise.seed, controller, disc, settings)
}

/// Run the lock loop against a given free-running series. `seed` keys the
/// detector-noise stream.
pub fn simulate_locked_on(
    free: &FrequencyTimeSeries,
    seed: u64,
    controller: &ControllerConfig,
    disc: &Discriminant,
    settings: &LockSettings,
) -> Result<LockResult> {
    controller.validate()?;
    disc.validate()?;
    let fs = free.sample_rate;
    if fs < 10.0 * controller.fast.cutoff_hz {
        return Err(Error::invalid(
            "sample_rate",
            format!("must be at least 10 × cutoff ({} Hz)", 10.0 * controller.fast.cutoff_hz),
        ));
    }
    let ka = actuator_gain(controller, disc);
    // probe the loop sign before running
    let probe = controller.sign * ka * (disc.voltage(1.0) - disc.voltage(-1.0));
    if !(probe > 0.0) {
        return Err(Error::WrongSign);
    }

    let n = free.samples.len();
    let dt = 1.0 / fs;
    let mut filt = Tustin::new(controller, dt);
    let mut det_rng = seed::rng(seed, "servo.detector");
    let dwell = (settings.unlock_dwell_s * fs).ceil().max(1.0) as usize;
    let threshold = disc.capture_range_hz / 2.0;

    let mut err = Vec::with_capacity(n);
    let mut volts = Vec::with_capacity(n);
    let mut control = Vec::with_capacity(n);
    let mut events = Vec::new();
    let mut outside_since: Option<usize> = None;
    let mut u = 0.0;
    for (k, &nu_free) in free.samples.iter().enumerate() {
        let nu = nu_free + settings.initial_offset_hz - u;
        let noise_v = if disc.detector_noise_rms > 0.0 {
            let z: f64 = det_rng.sample(StandardNormal);
            disc.detector_noise_rms * z
        } else {
            0.0
        };
        let v = disc.voltage(nu) + noise_v;
        u = filt.step(controller.sign * ka * v);
        err.push(nu);
        volts.push(v);
        control.push(u);

        if nu.abs() > threshold {
            outside_since.get_or_insert(k);
        } else if let Some(start) = outside_since.take() {
            if k - start >= dwell {
                events.push(UnlockEvent {
                    start_s: start as f64 * dt,
                    duration_s: (k - start) as f64 * dt,
                });
            }
        }
    }
    if let Some(start) = outside_since {
        if n - start >= dwell {
            events.push(UnlockEvent {
                start_s: start as f64 * dt,
                duration_s: (n - start) as f64 * dt,
            });
        }
    }

    let series = |samples: Vec<f64>, what: &str| FrequencyTimeSeries {
        samples,
        sample_rate: fs,
        seed,
        lineage: format!("{}/{what}", free.lineage),
    };
    Ok(LockResult {
        error_series: series(err, "locked.error_hz"),
        error_volts: series(volts, "locked.error_v"),
        control_series: series(control, "locked.control_hz"),
        unlock_events: events,
    })
}

/// Polynomial in `z⁻¹`, lowest order first.
type Poly = Vec<f64>;

fn poly_mul(a: &[f64], b: &[f64]) -> Poly {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Poly {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, x) in b.iter().enumerate() {
        out[i] += x;
    }
    out
}

fn poly_eval(p: &[f64], zinv: Complex64) -> Complex64 {
    p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * zinv + c)
}

/// Linearized open loop `G(z) = z⁻¹ · sign · K_d · K_a · C(z)` of the
/// discretized controller and discriminant slope.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoop {
    numerator: Poly,
    denominator: Poly,
    pub sample_rate: f64,
    pub slope: f64,
    pub actuator_gain: f64,
}

impl OpenLoop {
    pub fn new(controller: &ControllerConfig, disc: &Discriminant, sample_rate: f64) -> Self {
        let dt = 1.0 / sample_rate;
        let a = PI * controller.fast.integrator_corner_hz * dt;
        let alpha = PI * controller.fast.cutoff_hz * dt;
        let kp = controller.fast.proportional_gain;
        let ki = controller.slow.integrator_gain * dt / 2.0;
        let ka = actuator_gain(controller, disc);

        let pi_num = [kp * (1.0 + a), -kp * (1.0 - a)];
        let lp_num = [alpha, alpha];
        let lp_den = [1.0 + alpha, -(1.0 - alpha)];
        let int_den = [1.0, -1.0];
        let slow_num = [ki, ki];
        let c_num = poly_add(&poly_mul(&pi_num, &lp_num), &poly_mul(&slow_num, &lp_den));
        let gain = controller.sign * disc.slope * ka;
        // z⁻¹ delay
        let mut numerator = vec![0.0];
        numerator.extend(c_num.iter().map(|c| c * gain));
        Self {
            numerator,
            denominator: poly_mul(&int_den, &lp_den),
            sample_rate,
            slope: disc.slope,
            actuator_gain: ka,
        }
    }

    pub fn gain(&self, f: f64) -> Complex64 {
        let zinv = Complex64::from_polar(1.0, -2.0 * PI * f / self.sample_rate);
        poly_eval(&self.numerator, zinv) / poly_eval(&self.denominator, zinv)
    }

    /// Sensitivity `1 / (1 + G)`.
    pub fn sensitivity(&self, f: f64) -> Complex64 {
        1.0 / (1.0 + self.gain(f))
    }

    /// Closed-loop poles in the z plane.
    pub fn closed_loop_poles(&self) -> Vec<Complex64> {
        let chr = poly_add(&self.denominator, &self.numerator);
        // z^d · chr(z⁻¹) = chr[0] z^d + chr[1] z^{d−1} + …
        let mut coeffs = chr.clone();
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        let d = coeffs.len() - 1;
        if d == 0 {
            return Vec::new();
        }
        let lead = coeffs[0];
        let companion = DMatrix::from_fn(d, d, |i, j| {
            if i == 0 {
                -coeffs[j + 1] / lead
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        companion.complex_eigenvalues().iter().copied().collect()
    }

    pub fn is_stable(&self) -> bool {
        self.closed_loop_poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Highest frequency below Nyquist where `|G| >= 1`, located by
    /// bisection on a log grid. `None` when `|G| < 1` everywhere.
    pub fn unity_gain_frequency(&self) -> Option<f64> {
        let nyquist = self.sample_rate / 2.0;
        let grid: Vec<f64> = (0..=4000)
            .map(|k| nyquist * 10f64.powf(-7.0 * (1.0 - k as f64 / 4000.0)))
            .collect();
        let idx = grid.iter().rposition(|&f| self.gain(f).norm() >= 1.0)?;
        if idx + 1 >= grid.len() {
            return Some(grid[idx]);
        }
        let (mut lo, mut hi) = (grid[idx], grid[idx + 1]);
        for _ in 0..60 {
            let mid = (lo * hi).sqrt();
            if self.gain(mid).norm() >= 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }
}

/// Predicted one-sided PSD of the locked frequency error,
/// `|S|² S_ν + |G/(1+G)|² S_n / K_d²`, Hz²/Hz.
pub fn closed_loop_psd_prediction(
    noise: &NoiseModel,
    controller: &ControllerConfig,
    disc: &Discriminant,
    sample_rate: f64,
    f_grid: &[f64],
) -> Vec<f64> {
    let ol = OpenLoop::new(controller, disc, sample_rate);
    let detector_psd = 2.0 * disc.detector_noise_rms.powi(2) / sample_rate / (disc.slope * disc.slope);
    f_grid
        .iter()
        .map(|&f| {
            let g = ol.gain(f);
            let s = 1.0 / (1.0 + g);
            s.norm_sqr() * noise.psd(f, sample_rate) + (g * s).norm_sqr() * detector_psd
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SLOPE: f64 = 20e-3 / 1e6;

    fn quiet() -> NoiseModel {
        NoiseModel {
            white_psd: 0.0,
            random_walk_coeff: 0.0,
            seed: 1,
        }
    }

    fn short() -> LockSettings {
        LockSettings {
            duration: 2e-3,
            ..Default::default()
        }
    }

    fn variance(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn free_run_without_noise_is_zero() {
        let s = simulate_free_run(&quiet(), 1e6, 1e-3).unwrap();
        assert_eq!(s.samples.len(), 1000);
        assert!(s.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn white_noise_variance() {
        let noise = NoiseModel::white_for_linewidth(1e3, 2);
        let s = simulate_free_run(&noise, 1e4, 10.0).unwrap();
        let expect = noise.white_psd * 1e4 / 2.0;
        assert!((variance(&s.samples) / expect - 1.0).abs() < 0.03);
    }

    #[test]
    fn budget_is_enforced() {
        let err = simulate_free_run_with_budget(&quiet(), 1e6, 1.0, 1000).unwrap_err();
        assert!(matches!(
            err,
            Error::BudgetExceeded {
                requested: 1_000_000,
                budget: 1000
            }
        ));
    }

    #[test]
    fn no_noise_gives_zero_error() {
        let r = simulate_locked(
            &quiet(),
            &ControllerConfig::default(),
            &Discriminant::linear(SLOPE, 0.0),
            &short(),
        )
        .unwrap();
        assert!(r.error_series.samples.iter().all(|&v| v == 0.0));
        assert!(r.unlock_events.is_empty());
    }

    #[test]
    fn pulls_in_initial_offset() {
        let settings = LockSettings {
            initial_offset_hz: 100e3,
            ..short()
        };
        let r = simulate_locked(
            &quiet(),
            &ControllerConfig::default(),
            &Discriminant::linear(SLOPE, 0.0),
            &settings,
        )
        .unwrap();
        let last = *r.error_series.samples.last().unwrap();
        assert!(last.abs() < 1e-3 * 100e3, "{last}");
    }

    #[test]
    fn same_seed_same_series() {
        let noise = NoiseModel {
            white_psd: 1e4,
            random_walk_coeff: 1e8,
            seed: 42,
        };
        let disc = Discriminant::linear(SLOPE, 1e-4);
        let a = simulate_locked(&noise, &ControllerConfig::default(), &disc, &short()).unwrap();
        let b = simulate_locked(&noise, &ControllerConfig::default(), &disc, &short()).unwrap();
        assert_eq!(a, b);
        let c = simulate_locked(
            &NoiseModel { seed: 43, ..noise },
            &ControllerConfig::default(),
            &disc,
            &short(),
        )
        .unwrap();
        assert_ne!(a.error_series.samples, c.error_series.samples);
    }

    #[test]
    fn wrong_sign_is_detected() {
        let controller = ControllerConfig {
            sign: -1.0,
            ..Default::default()
        };
        let err = simulate_locked(&quiet(), &controller, &Discriminant::linear(SLOPE, 0.0), &short()).unwrap_err();
        assert!(matches!(err, Error::WrongSign));
        let flipped = simulate_locked(&quiet(), &controller, &Discriminant::linear(-SLOPE, 0.0), &short());
        assert!(flipped.is_ok());
    }

    #[test]
    fn undersampled_controller_rejected() {
        let settings = LockSettings {
            sample_rate: 5e6,
            ..short()
        };
        assert!(simulate_locked(
            &quiet(),
            &ControllerConfig::default(),
            &Discriminant::linear(SLOPE, 0.0),
            &settings
        )
        .is_err());
    }

    #[test]
    fn default_loop_is_stable() {
        let ol = OpenLoop::new(&ControllerConfig::default(), &Discriminant::linear(SLOPE, 0.0), 10e6);
        assert!(ol.is_stable());
        let ugf = ol.unity_gain_frequency().unwrap();
        assert!(ugf > 100e3 && ugf < 1e6, "{ugf}");
        assert!(ol.sensitivity(1e3).norm() < 1e-2);
        let hot = OpenLoop::new(
            &ControllerConfig::default().with_gain_scaled(100.0),
            &Discriminant::linear(SLOPE, 0.0),
            10e6,
        );
        assert!(!hot.is_stable());
    }

    #[test]
    fn vanishing_gain_passes_noise_through() {
        let controller = ControllerConfig::default().with_gain_scaled(1e-9);
        let noise = NoiseModel::white_for_linewidth(1e5, 0);
        let disc = Discriminant::linear(SLOPE, 0.0);
        let f = [1e2, 1e4, 1e6];
        for (p, &fk) in closed_loop_psd_prediction(&noise, &controller, &disc, 10e6, &f)
            .iter()
            .zip(&f)
        {
            assert!((p / noise.psd(fk, 10e6) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sensitivity_is_unity_far_above_crossover() {
        let ol = OpenLoop::new(&ControllerConfig::default(), &Discriminant::linear(SLOPE, 0.0), 200e6);
        let ugf = ol.unity_gain_frequency().unwrap();
        let s = ol.sensitivity(30.0 * ugf).norm();
        assert!((s - 1.0).abs() < 0.05, "{s}");
    }

    #[test]
    fn poles_match_impulse_response_decay() {
        // a stable loop rings down from an offset step
        let settings = LockSettings {
            initial_offset_hz: 1e3,
            duration: 2e-4,
            ..Default::default()
        };
        let r = simulate_locked(
            &quiet(),
            &ControllerConfig::default(),
            &Discriminant::linear(SLOPE, 0.0),
            &settings,
        )
        .unwrap();
        let rmax = OpenLoop::new(&ControllerConfig::default(), &Discriminant::linear(SLOPE, 0.0), 10e6)
            .closed_loop_poles()
            .iter()
            .map(|p| p.norm())
            .fold(0.0, f64::max);
        let n = r.error_series.samples.len();
        let bound = 1e3 * 1e3 * rmax.powi(n as i32 / 2);
        assert!(r.error_series.samples[n / 2..].iter().all(|v| v.abs() <= bound + 1e-6));
    }

    #[test]
    fn saturating_discriminant_matches_linear_at_small_noise() {
        let width = 2e5;
        let xs: Vec<f64> = (-2000..=2000).map(|k| k as f64 * 1e3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| SLOPE * width * (x / width).tanh()).collect();
        let shaped = Discriminant {
            slope: SLOPE,
            shape: Some((xs, ys)),
            detector_noise_rms: 0.0,
            capture_range_hz: 4e5,
            offset: 0.0,
        };
        let noise = NoiseModel {
            white_psd: 1.0,
            random_walk_coeff: 1e6,
            seed: 9,
        };
        let a = simulate_locked(&noise, &ControllerConfig::default(), &shaped, &short()).unwrap();
        let b = simulate_locked(&noise, &ControllerConfig::default(), &shaped.linearized(), &short()).unwrap();
        let (va, vb) = (variance(&a.error_series.samples), variance(&b.error_series.samples));
        assert!((va.sqrt() / vb.sqrt() - 1.0).abs() < 0.01, "{va} {vb}");
    }

    #[test]
    fn unlock_events_reported() {
        let disc = Discriminant {
            capture_range_hz: 1e3,
            ..Discriminant::linear(SLOPE, 0.0)
        };
        let settings = LockSettings {
            initial_offset_hz: 1e4,
            ..short()
        };
        let r = simulate_locked(&quiet(), &ControllerConfig::default(), &disc, &settings).unwrap();
        assert_eq!(r.unlock_events.len(), 1);
        assert_eq!(r.unlock_events[0].start_s, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn locking_reduces_drift_variance(
            kp in 0.1f64..2.0,
            corner in 1e3f64..2e5,
            cutoff in 2e5f64..1e6,
            seed in 0u64..1000,
        ) {
            let controller = ControllerConfig {
                fast: FastBranch { proportional_gain: kp, integrator_corner_hz: corner, cutoff_hz: cutoff },
                ..Default::default()
            };
            let disc = Discriminant::linear(SLOPE, 0.0);
            prop_assume!(OpenLoop::new(&controller, &disc, 10e6).is_stable());
            let noise = NoiseModel { white_psd: 0.0, random_walk_coeff: 1e10, seed };
            let free = simulate_free_run(&noise, 10e6, 1e-3).unwrap();
            let locked = simulate_locked_on(&free, seed, &controller, &disc, &LockSettings::default()).unwrap();
            prop_assert!(variance(&locked.error_series.samples) <= variance(&free.samples));
        }
    }
}
