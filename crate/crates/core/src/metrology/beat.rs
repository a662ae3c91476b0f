use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{LinewidthEstimate, LinewidthMethod};
use crate::servo::FrequencyTimeSeries;
use crate::spectral::{self, Periodogram};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatNoteSettings {
    /// Duration of one measurement, s.
    pub segment_length_s: f64,
    /// Each measurement is a Welch average of FFTs of
    /// `segment / fft_divisions` samples with 50 % overlap.
    pub fft_divisions: usize,
    /// Most sliding windows evaluated per depth.
    pub max_windows: usize,
    /// Boxcar smoothing applied before the half-maximum search, as a
    /// fraction of the full-record width.
    pub smoothing_fraction: f64,
}

impl Default for BeatNoteSettings {
    fn default() -> Self {
        Self {
            segment_length_s: 1e-3,
            fft_divisions: 8,
            max_windows: 256,
            smoothing_fraction: 0.1,
        }
    }
}

const MIN_FFT_LEN: usize = 16;
/// Deeper averages must still contain this many disjoint windows.
const MIN_INDEPENDENT_WINDOWS: usize = 4;

/// Unit-amplitude beat field `exp(i(φa − φb))`, each phase the running
/// integral of its frequency record.
pub fn beat_field(a: &FrequencyTimeSeries, b: &FrequencyTimeSeries) -> Vec<Complex64> {
    let dt = 1.0 / a.sample_rate;
    let mut phi = 0.0;
    a.samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| {
            let z = Complex64::from_polar(1.0, phi);
            phi += 2.0 * PI * (x - y) * dt;
            z
        })
        .collect()
}

/// Beat-note linewidth of two frequency records at averaging depths of
/// 1, 2, 4, … measurements, up to a quarter of the record.
///
/// The beat field is `exp(i(φa − φb))` with each phase the running integral
/// of its frequency record. Measurement spectra are averaged over sliding
/// windows of `depth` consecutive measurements; the estimate at each depth is
/// the mean FWHM over those windows. Each averaged spectrum is smoothed with
/// a boxcar of `smoothing_fraction` times the full-record width before its
/// half-maximum points are located. Widths below four resolution bandwidths
/// are returned with `upper_bound` set.
pub fn beat_note_linewidth(
    a: &FrequencyTimeSeries,
    b: &FrequencyTimeSeries,
    settings: &BeatNoteSettings,
) -> Result<Vec<LinewidthEstimate>> {
    if a.sample_rate != b.sample_rate {
        return Err(Error::invalid(
            "beat.sample_rate",
            "both records must share one sample rate",
        ));
    }
    if a.samples.len() != b.samples.len() {
        return Err(Error::invalid("beat.samples", "both records must have equal length"));
    }
    if settings.fft_divisions == 0 || settings.max_windows == 0 {
        return Err(Error::invalid("beat.fft_divisions", "must be >= 1"));
    }
    if !(0.0..1.0).contains(&settings.smoothing_fraction) {
        return Err(Error::invalid("beat.smoothing_fraction", "must be in [0, 1)"));
    }
    let fs = a.sample_rate;
    let seg = (settings.segment_length_s * fs).round() as usize;
    if !(settings.segment_length_s > 0.0) || seg > a.samples.len() {
        return Err(Error::SegmentTooShort {
            reason: format!(
                "segment of {} s does not fit in a {} s record",
                settings.segment_length_s,
                a.duration()
            ),
        });
    }
    let fft_len = seg / settings.fft_divisions;
    if fft_len < MIN_FFT_LEN {
        return Err(Error::SegmentTooShort {
            reason: format!("FFT length {fft_len} below {MIN_FFT_LEN} samples"),
        });
    }

    let dt = 1.0 / fs;
    let beat = beat_field(a, b);

    let count = beat.len() / seg;
    let hop = fft_len / 2;
    let per_segment = (seg - fft_len) / hop + 1;
    let mut engine = Periodogram::new(fft_len, fs);
    // prefix sums of per-measurement spectra
    let mut prefix = vec![vec![0.0; fft_len]; count + 1];
    for m in 0..count {
        let mut acc = vec![0.0; fft_len];
        let base = m * seg;
        for j in 0..per_segment {
            let s = base + j * hop;
            engine.accumulate(beat[s..s + fft_len].iter().copied(), &mut acc);
        }
        let (head, tail) = prefix.split_at_mut(m + 1);
        for ((out, prev), v) in tail[0].iter_mut().zip(&head[m]).zip(&acc) {
            *out = prev + v / per_segment as f64;
        }
    }

    let rbw = spectral::enbw(&spectral::hann(fft_len), fs);
    let unresolved = || Error::SegmentTooShort {
        reason: "beat spectrum wider than the sampled span".into(),
    };
    let (freqs, full) = spectral::fft_shift(&prefix[count], fs);
    let df = fs / fft_len as f64;
    let pilot = spectral::fwhm(&freqs, &spectral::smooth(&full, 5)).ok_or_else(unresolved)?;
    let kernel = ((settings.smoothing_fraction * pilot / df).round() as usize).clamp(1, fft_len / 8) | 1;
    let mut out = Vec::new();
    let mut depth = 1;
    while depth == 1 || depth * MIN_INDEPENDENT_WINDOWS <= count {
        let starts = count - depth + 1;
        let stride = starts.div_ceil(settings.max_windows).max(1);
        let mut widths = Vec::new();
        let mut avg = vec![0.0; fft_len];
        for s in (0..starts).step_by(stride) {
            for ((v, hi), lo) in avg.iter_mut().zip(&prefix[s + depth]).zip(&prefix[s]) {
                *v = hi - lo;
            }
            let (_, psd) = spectral::fft_shift(&avg, fs);
            let w = spectral::fwhm(&freqs, &spectral::smooth(&psd, kernel)).ok_or_else(unresolved)?;
            widths.push(w);
        }
        let n = widths.len() as f64;
        let mean = widths.iter().sum::<f64>() / n;
        let var = widths.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        let independent = (count / depth).max(1) as f64;
        out.push(LinewidthEstimate {
            value: mean,
            uncertainty: (var / independent).sqrt(),
            method: LinewidthMethod::BeatNote,
            window_s: depth as f64 * seg as f64 * dt,
            bandwidth_hz: Some(rbw),
            upper_bound: mean < 4.0 * rbw,
        });
        depth *= 2;
    }
    Ok(out)
}
