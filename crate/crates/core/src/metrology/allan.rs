use serde::{Deserialize, Serialize};

use crate::servo::FrequencyTimeSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllanPoint {
    pub tau_s: f64,
    /// Same unit as the input samples.
    pub deviation: f64,
    /// Number of second differences averaged.
    pub terms: usize,
}

/// Overlapping Allan deviation of a frequency record at each `tau`.
///
/// `tau` is rounded to a whole number of samples; taus longer than a
/// quarter of the record are rejected.
pub fn allan_deviation(series: &FrequencyTimeSeries, taus: &[f64]) -> Result<Vec<AllanPoint>> {
    let n = series.samples.len();
    let fs = series.sample_rate;
    // phase (time error) as the running sum of frequency
    let mut phase = Vec::with_capacity(n + 1);
    phase.push(0.0);
    let mut acc = 0.0;
    for &y in &series.samples {
        acc += y / fs;
        phase.push(acc);
    }
    taus.iter()
        .map(|&tau| {
            if !(tau > 0.0) {
                return Err(Error::invalid("tau", "must be > 0"));
            }
            let m = (tau * fs).round().max(1.0) as usize;
            if 4 * m > n {
                return Err(Error::InsufficientSamples {
                    needed: 4 * m,
                    available: n,
                });
            }
            let tau = m as f64 / fs;
            let terms = n + 1 - 2 * m;
            let sum: f64 = (0..terms)
                .map(|i| {
                    let d = phase[i + 2 * m] - 2.0 * phase[i + m] + phase[i];
                    d * d
                })
                .sum();
            Ok(AllanPoint {
                tau_s: tau,
                deviation: (sum / (2.0 * tau * tau * terms as f64)).sqrt(),
                terms,
            })
        })
        .collect()
}

/// Log-spaced taus from one sample to a quarter of the record.
pub fn octave_taus(series: &FrequencyTimeSeries) -> Vec<f64> {
    let max_m = series.samples.len() / 4;
    std::iter::successors(Some(1usize), |m| Some(m * 2))
        .take_while(|&m| m <= max_m)
        .map(|m| m as f64 / series.sample_rate)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::servo::{simulate_free_run, NoiseModel};

    fn slope(points: &[AllanPoint]) -> f64 {
        let xs: Vec<f64> = points.iter().map(|p| p.tau_s.ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.deviation.ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    }

    #[test]
    fn white_frequency_noise_slope() {
        let noise = NoiseModel {
            white_psd: 1.0,
            random_walk_coeff: 0.0,
            seed: 3,
        };
        let s = simulate_free_run(&noise, 1000.0, 200.0).unwrap();
        let taus: Vec<f64> = [0.01, 0.03, 0.1, 0.3, 1.0, 3.0].to_vec();
        let pts = allan_deviation(&s, &taus).unwrap();
        assert!((slope(&pts) + 0.5).abs() < 0.05, "{}", slope(&pts));
        // σ_y(τ) = sqrt(S0 / (2τ)) for one-sided S0
        let expect = (1.0f64 / (2.0 * 0.1)).sqrt();
        assert!((pts[2].deviation / expect - 1.0).abs() < 0.05);
    }

    #[test]
    fn random_walk_slope() {
        let noise = NoiseModel {
            white_psd: 0.0,
            random_walk_coeff: 1.0,
            seed: 4,
        };
        let s = simulate_free_run(&noise, 100.0, 2000.0).unwrap();
        let pts = allan_deviation(&s, &[0.1, 0.3, 1.0, 3.0, 10.0]).unwrap();
        assert!((slope(&pts) - 0.5).abs() < 0.05, "{}", slope(&pts));
    }

    #[test]
    fn constant_series_is_zero() {
        let s = FrequencyTimeSeries {
            samples: vec![7.0; 1000],
            sample_rate: 10.0,
            seed: 0,
            lineage: String::new(),
        };
        for p in allan_deviation(&s, &octave_taus(&s)).unwrap() {
            assert!(p.deviation < 1e-9);
        }
    }

    #[test]
    fn long_tau_rejected() {
        let s = FrequencyTimeSeries {
            samples: vec![0.0; 100],
            sample_rate: 1.0,
            seed: 0,
            lineage: String::new(),
        };
        assert!(matches!(
            allan_deviation(&s, &[30.0]),
            Err(Error::InsufficientSamples { .. })
        ));
    }
}
