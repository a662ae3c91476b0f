//! Welch power spectral densities with a Hann window.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
        .collect()
}

/// Equivalent noise bandwidth of a window at the given sample rate, Hz.
pub fn enbw(window: &[f64], sample_rate: f64) -> f64 {
    let s1: f64 = window.iter().sum();
    let s2: f64 = window.iter().map(|w| w * w).sum();
    sample_rate * s2 / (s1 * s1)
}

/// Periodogram engine for one segment length.
pub struct Periodogram {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    norm: f64,
    buf: Vec<Complex64>,
}

impl Periodogram {
    pub fn new(len: usize, sample_rate: f64) -> Self {
        let window = hann(len);
        let s2: f64 = window.iter().map(|w| w * w).sum();
        Self {
            fft: FftPlanner::new().plan_fft_forward(len),
            norm: 1.0 / (sample_rate * s2),
            window,
            buf: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Add the two-sided periodogram of `segment` (FFT bin order) into `acc`.
    pub fn accumulate(&mut self, segment: impl Iterator<Item = Complex64>, acc: &mut [f64]) {
        for ((b, x), w) in self.buf.iter_mut().zip(segment).zip(&self.window) {
            *b = x * w;
        }
        self.fft.process(&mut self.buf);
        for (a, b) in acc.iter_mut().zip(&self.buf) {
            *a += b.norm_sqr() * self.norm;
        }
    }
}

/// Segment start offsets for 50 % overlap.
fn starts(total: usize, len: usize) -> Vec<usize> {
    let hop = (len / 2).max(1);
    if total < len {
        return Vec::new();
    }
    (0..=(total - len) / hop).map(|j| j * hop).collect()
}

/// One-sided Welch PSD of a real series; returns `(frequencies, psd)` from
/// DC to Nyquist.
pub fn welch_real(x: &[f64], sample_rate: f64, segment_len: usize) -> (Vec<f64>, Vec<f64>) {
    let mut engine = Periodogram::new(segment_len, sample_rate);
    let mut acc = vec![0.0; segment_len];
    let offsets = starts(x.len(), segment_len);
    for &s in &offsets {
        engine.accumulate(x[s..s + segment_len].iter().map(|&v| Complex64::new(v, 0.0)), &mut acc);
    }
    let count = offsets.len().max(1) as f64;
    let half = segment_len / 2;
    let freqs = (0..=half)
        .map(|k| k as f64 * sample_rate / segment_len as f64)
        .collect();
    let psd = (0..=half)
        .map(|k| {
            let two_sided = acc[k] / count;
            if k == 0 || (segment_len.is_multiple_of(2) && k == half) {
                two_sided
            } else {
                2.0 * two_sided
            }
        })
        .collect();
    (freqs, psd)
}

/// Two-sided Welch PSD of a complex series, frequencies ascending from
/// `-fs/2`.
pub fn welch_complex(z: &[Complex64], sample_rate: f64, segment_len: usize) -> (Vec<f64>, Vec<f64>) {
    let mut engine = Periodogram::new(segment_len, sample_rate);
    let mut acc = vec![0.0; segment_len];
    let offsets = starts(z.len(), segment_len);
    for &s in &offsets {
        engine.accumulate(z[s..s + segment_len].iter().copied(), &mut acc);
    }
    let count = offsets.len().max(1) as f64;
    for a in acc.iter_mut() {
        *a /= count;
    }
    fft_shift(&acc, sample_rate)
}

/// Reorder FFT bins to ascending frequency.
pub fn fft_shift(bins: &[f64], sample_rate: f64) -> (Vec<f64>, Vec<f64>) {
    let n = bins.len();
    let neg = n / 2;
    let mut freqs = Vec::with_capacity(n);
    let mut vals = Vec::with_capacity(n);
    for j in 0..n {
        let k = (j + n - neg) % n;
        let signed = if k >= n - neg {
            k as isize - n as isize
        } else {
            k as isize
        };
        freqs.push(signed as f64 * sample_rate / n as f64);
        vals.push(bins[k]);
    }
    (freqs, vals)
}

/// Centered moving average over `width` bins (odd), truncated at the ends.
pub fn smooth(values: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    if half == 0 {
        return values.to_vec();
    }
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Full width at half maximum of the highest peak, by linear interpolation
/// between bins. `None` if the half-maximum is not reached on both sides.
pub fn fwhm(freqs: &[f64], psd: &[f64]) -> Option<f64> {
    let (peak, &max) = psd.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let half = max / 2.0;
    let mut l = peak;
    while l > 0 && psd[l - 1] > half {
        l -= 1;
    }
    if l == 0 {
        return None;
    }
    let mut r = peak;
    while r + 1 < psd.len() && psd[r + 1] > half {
        r += 1;
    }
    if r + 1 == psd.len() {
        return None;
    }
    let cross = |inside: usize, outside: usize| {
        let f = (psd[inside] - half) / (psd[inside] - psd[outside]);
        freqs[inside] + f * (freqs[outside] - freqs[inside])
    };
    Some(cross(r, r + 1) - cross(l, l - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_noise_level() {
        // deterministic pseudo-noise: the PSD of a unit-variance sequence
        // integrates to its variance
        let mut state = 1u64;
        let x: Vec<f64> = (0..1 << 16)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 12f64.sqrt()
            })
            .collect();
        let fs = 1000.0;
        let (f, p) = welch_real(&x, fs, 1024);
        let df = f[1] - f[0];
        let total: f64 = p.iter().sum::<f64>() * df;
        assert!((total - 1.0).abs() < 0.03, "{total}");
    }

    #[test]
    fn fwhm_of_sampled_lorentzian() {
        let freqs: Vec<f64> = (-2000..=2000).map(|k| k as f64).collect();
        let gamma = 100.0;
        let psd: Vec<f64> = freqs.iter().map(|f| 1.0 / (1.0 + (2.0 * f / gamma).powi(2))).collect();
        assert!((fwhm(&freqs, &psd).unwrap() - gamma).abs() < 0.1);
    }

    #[test]
    fn smoothing_preserves_constants_and_lines() {
        assert_eq!(smooth(&[2.0; 9], 5), vec![2.0; 9]);
        let line: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let s = smooth(&line, 3);
        assert!(s[1..19].iter().zip(&line[1..19]).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(smooth(&line, 1), line);
    }

    #[test]
    fn shift_orders_frequencies() {
        let (f, v) = fft_shift(&[0.0, 1.0, 2.0, 3.0], 4.0);
        assert_eq!(f, vec![-2.0, -1.0, 0.0, 1.0]);
        assert_eq!(v, vec![2.0, 3.0, 0.0, 1.0]);
    }
}
