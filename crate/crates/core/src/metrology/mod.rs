//! Linewidth estimators and stability statistics.
//!
//! * [`linewidth_rms_over_slope`]: in-loop error-voltage rms divided by the
//!   discriminant slope.
//! * [`beat_note_linewidth`]: FWHM of the beat between two independent
//!   frequency records at increasing averaging depth.
//! * [`fit_cold_eit`]: weighted nonlinear least squares of the cold-cloud
//!   EIT model, reporting the residual laser linewidth.
//! * [`allan_deviation`]: overlapping Allan deviation of a frequency record.

mod allan;
mod beat;
mod fit;

pub use allan::{allan_deviation, octave_taus, AllanPoint};
pub use beat::{beat_field, beat_note_linewidth, BeatNoteSettings};
pub use fit::{fit_cold_eit, ColdEitModel, FitOptions, FitParams, FitResult, FreeParams};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::servo::FrequencyTimeSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinewidthMethod {
    RmsOverSlope,
    BeatNote,
    SpectrumFit,
}

/// A linewidth with its uncertainty and the conditions it was measured at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinewidthEstimate {
    /// Hz.
    pub value: f64,
    /// One standard deviation, Hz.
    pub uncertainty: f64,
    pub method: LinewidthMethod,
    /// Averaging window the estimate refers to, s.
    pub window_s: f64,
    /// Resolution or measurement bandwidth, Hz, where one applies.
    pub bandwidth_hz: Option<f64>,
    /// The true width is at most `value`; the estimator hit its resolution.
    pub upper_bound: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detrend {
    None,
    Mean,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsOptions {
    /// Length of each averaging window, s. The rms is taken per window and
    /// combined in quadrature.
    pub averaging_window_s: f64,
    pub detrend: Detrend,
    /// Optional two-pole low-pass applied before the rms, Hz.
    pub bandwidth_hz: Option<f64>,
}

impl Default for RmsOptions {
    fn default() -> Self {
        Self {
            averaging_window_s: f64::INFINITY,
            detrend: Detrend::Mean,
            bandwidth_hz: None,
        }
    }
}

/// Two cascaded bilinear first-order low-pass sections at `corner_hz`.
pub fn low_pass(samples: &[f64], sample_rate: f64, corner_hz: f64) -> Vec<f64> {
    let alpha = PI * corner_hz / sample_rate;
    let mut out = samples.to_vec();
    for _ in 0..2 {
        let (mut x_prev, mut y_prev) = (0.0, 0.0);
        for s in out.iter_mut() {
            let y = (alpha * (*s + x_prev) + (1.0 - alpha) * y_prev) / (1.0 + alpha);
            x_prev = *s;
            y_prev = y;
            *s = y;
        }
    }
    out
}

fn detrended_sum_sq(x: &[f64], detrend: Detrend) -> f64 {
    match detrend {
        Detrend::None => x.iter().map(|v| v * v).sum(),
        Detrend::Mean => {
            let m = x.iter().sum::<f64>() / x.len() as f64;
            x.iter().map(|v| (v - m) * (v - m)).sum()
        }
        Detrend::Linear => {
            let n = x.len() as f64;
            let tm = (n - 1.0) / 2.0;
            let ym = x.iter().sum::<f64>() / n;
            let (mut sty, mut stt) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let t = i as f64 - tm;
                sty += t * (v - ym);
                stt += t * t;
            }
            let b = if stt > 0.0 { sty / stt } else { 0.0 };
            x.iter()
                .enumerate()
                .map(|(i, v)| {
                    let r = v - ym - b * (i as f64 - tm);
                    r * r
                })
                .sum()
        }
    }
}

/// Rms of a voltage record after optional filtering and detrending.
pub fn error_rms(volts: &FrequencyTimeSeries, opts: &RmsOptions) -> Result<f64> {
    if !(opts.averaging_window_s > 0.0) {
        return Err(Error::invalid("averaging_window_s", "must be > 0"));
    }
    let filtered;
    let x: &[f64] = match opts.bandwidth_hz {
        Some(b) if b > 0.0 => {
            filtered = low_pass(&volts.samples, volts.sample_rate, b);
            &filtered
        }
        Some(_) => return Err(Error::invalid("bandwidth_hz", "must be > 0")),
        None => &volts.samples,
    };
    let window = if opts.averaging_window_s.is_finite() {
        (opts.averaging_window_s * volts.sample_rate).round() as usize
    } else {
        x.len()
    };
    if window < 2 || x.len() < window {
        return Err(Error::InsufficientSamples {
            needed: window.max(2),
            available: x.len(),
        });
    }
    let chunks = x.len() / window;
    let total: f64 = x.chunks_exact(window).map(|c| detrended_sum_sq(c, opts.detrend)).sum();
    Ok((total / (chunks * window) as f64).sqrt())
}

/// Linewidth as rms error voltage over discriminant slope (V/Hz).
///
/// The result is an in-loop figure: it measures the residual seen by the
/// detector, which is blind to noise common to laser and reference.
pub fn linewidth_rms_over_slope(
    volts: &FrequencyTimeSeries,
    slope_v_per_hz: f64,
    opts: &RmsOptions,
) -> Result<LinewidthEstimate> {
    if slope_v_per_hz == 0.0 || !slope_v_per_hz.is_finite() {
        return Err(Error::ZeroSlope);
    }
    let rms = error_rms(volts, opts)?;
    let window_s = if opts.averaging_window_s.is_finite() {
        opts.averaging_window_s
    } else {
        volts.duration()
    };
    let value = rms / slope_v_per_hz.abs();
    let n = volts.samples.len() as f64;
    Ok(LinewidthEstimate {
        value,
        uncertainty: value / (2.0 * n).sqrt(),
        method: LinewidthMethod::RmsOverSlope,
        window_s,
        bandwidth_hz: opts.bandwidth_hz,
        upper_bound: false,
    })
}
