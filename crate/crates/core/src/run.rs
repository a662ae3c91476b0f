//! Orchestration of one scenario run: module pipelines, artifacts and the
//! run manifest.
//!
//! Each subcommand writes its CSV artifacts, `summary.json`,
//! `effective_config.toml` and `manifest.json` into the output directory.
//!
//! | subcommand     | artifacts                                                   |
//! |----------------|-------------------------------------------------------------|
//! | `spectrum`     | `spectrum.csv`                                              |
//! | `error-signal` | `error_signal.csv`, `error_signal.toml`                     |
//! | `lock`         | `lock_error_hz.csv`, `lock_error_v.csv`, `free_run_hz.csv`  |
//! | `beat`         | `beat_linewidth.csv`, `beat_psd.csv`, `allan.csv`           |
//! | `fit`          | `fit_residuals.csv`                                         |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::eit::{find_peaks, linspace, two_tier_grid, CascadeSystem, Medium};
use crate::fm::{
    error_signal_scan, expected_feature_width, modulated_transmission, zero_crossing_slope, ErrorSignalTrace,
    ZeroCrossing,
};
use crate::io::{self, Table};
use crate::metrology::{
    allan_deviation, beat_field, beat_note_linewidth, fit_cold_eit, linewidth_rms_over_slope, octave_taus,
    ColdEitModel, FitOptions, FitParams, FreeParams, RmsOptions,
};
use crate::scenario::{DiscriminantKind, ScenarioConfig};
use crate::servo::{simulate_free_run_with_budget, simulate_locked_on, Discriminant, FrequencyTimeSeries, OpenLoop};
use crate::spectral;
use crate::units::{angular_to_mhz, mhz_to_angular};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Spectrum,
    ErrorSignal,
    Lock,
    Beat,
    Fit,
}

impl Subcommand {
    pub const ALL: [Subcommand; 5] = [
        Subcommand::Spectrum,
        Subcommand::ErrorSignal,
        Subcommand::Lock,
        Subcommand::Beat,
        Subcommand::Fit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Spectrum => "spectrum",
            Subcommand::ErrorSignal => "error-signal",
            Subcommand::Lock => "lock",
            Subcommand::Beat => "beat",
            Subcommand::Fit => "fit",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid("subcommand", "one of spectrum, error-signal, lock, beat, fit"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: Subcommand,
    /// SHA-256 of the effective configuration.
    pub digest: String,
    pub seed: u64,
    pub tool_version: String,
    /// Artifact name → path.
    pub artifacts: BTreeMap<String, PathBuf>,
    /// Stage → wall-clock seconds.
    pub timings_s: BTreeMap<String, f64>,
    /// Estimates and diagnostics, also written to `summary.json`.
    pub summary: Value,
}

struct Outputs<'a> {
    dir: &'a Path,
    decimation: usize,
    artifacts: BTreeMap<String, PathBuf>,
}

impl Outputs<'_> {
    fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        let path = self.dir.join(name);
        io::write_csv(&path, table)?;
        self.artifacts.insert(name.to_string(), path);
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        io::write_atomic(&path, text.as_bytes())?;
        self.artifacts.insert(name.to_string(), path);
        Ok(())
    }

    fn series(&mut self, name: &str, unit: &str, s: &FrequencyTimeSeries) -> Result<()> {
        let mut t = Table::new(&["time_s", &format!("value_{unit}")]);
        for (k, v) in s.samples.iter().enumerate().step_by(self.decimation) {
            t.push(vec![k as f64 / s.sample_rate, *v]);
        }
        self.csv(name, &t)
    }
}

struct Timer {
    timings: BTreeMap<String, f64>,
}

impl Timer {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.timings.insert(stage.to_string(), start.elapsed().as_secs_f64());
        out
    }
}

/// Validate, run the pipeline for `subcommand` and write every artifact
/// plus `manifest.json` into `out_dir`.
pub fn run_scenario(config: &ScenarioConfig, subcommand: Subcommand, out_dir: &Path) -> Result<RunManifest> {
    config.validate()?;
    let mut out = Outputs {
        dir: out_dir,
        decimation: config.outputs.decimation,
        artifacts: BTreeMap::new(),
    };
    let mut timer = Timer {
        timings: BTreeMap::new(),
    };
    let summary = match subcommand {
        Subcommand::Spectrum => spectrum(config, &mut out, &mut timer)?,
        Subcommand::ErrorSignal => error_signal(config, &mut out, &mut timer)?,
        Subcommand::Lock => lock(config, &mut out, &mut timer)?,
        Subcommand::Beat => beat(config, &mut out, &mut timer)?,
        Subcommand::Fit => fit(config, &mut out, &mut timer)?,
    };
    out.text("effective_config.toml", &config.to_toml())?;
    let pretty = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    out.text("summary.json", &pretty)?;
    let manifest = RunManifest {
        subcommand,
        digest: config.digest(),
        seed: config.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        artifacts: out.artifacts,
        timings_s: timer.timings,
        summary,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    io::write_atomic(&out_dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

/// Coupling detunings where the carrier and the two first-order sidebands
/// meet two-photon resonance for the resonant velocity class.
pub fn expected_features(sys: &CascadeSystem, delta_p0: f64, omega_m: f64) -> [f64; 3] {
    let ratio = sys.probe.wavelength_nm / sys.coupling.wavelength_nm;
    let sign = if sys.counter_propagating { -1.0 } else { 1.0 };
    [-omega_m, 0.0, omega_m].map(|k| sign * ratio * (delta_p0 + k))
}

fn scan_grid(config: &ScenarioConfig, sys: &CascadeSystem) -> Vec<f64> {
    let sc = &config.scan;
    let centers = expected_features(
        sys,
        mhz_to_angular(sc.probe_detuning_mhz),
        mhz_to_angular(config.fm.modulation_mhz),
    );
    two_tier_grid(
        mhz_to_angular(sc.span_mhz),
        sc.coarse_points,
        &centers,
        mhz_to_angular(sc.fine_width_mhz),
        sc.fine_points,
    )
}

fn hot_medium(config: &ScenarioConfig) -> Result<Medium> {
    Medium::hot(config.cascade_system()?, config.quadrature_spec())
}

fn spectrum(config: &ScenarioConfig, out: &mut Outputs, timer: &mut Timer) -> Result<Value> {
    let medium = hot_medium(config)?;
    let fm = config.fm_params();
    fm.validate()?;
    let grid = scan_grid(config, &medium.sys);
    let dp = mhz_to_angular(config.scan.probe_detuning_mhz);
    let rows: Vec<[f64; 4]> = timer.time("scan", || {
        grid.par_iter()
            .map(|&dc| {
                let chi = medium.susceptibility(dp, dc)?.0;
                let t = modulated_transmission(dp, dc, &medium, &fm)?;
                Ok([angular_to_mhz(dc), chi.re, chi.im, t])
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut table = Table::new(&["detuning_MHz", "re_chi", "im_chi", "transmission"]);
    for r in &rows {
        table.push(r.to_vec());
    }
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let peaks = find_peaks(&xs, &ys, 1e-6);
    out.csv("spectrum.csv", &table)?;
    Ok(json!({
        "points": rows.len(),
        "transparency_peaks_MHz": peaks,
        "expected_features_MHz": expected_features(&medium.sys, dp, fm.omega_m).map(angular_to_mhz),
        "od_scale": medium.od_scale(),
    }))
}

/// Error-signal trace over the scan grid and its carrier crossing.
pub fn carrier_error_signal(config: &ScenarioConfig) -> Result<(Medium, ErrorSignalTrace, ZeroCrossing)> {
    let medium = hot_medium(config)?;
    let fm = config.fm_params();
    let grid = scan_grid(config, &medium.sys);
    let trace = error_signal_scan(&grid, &medium, &fm)?;
    let center = expected_features(&medium.sys, mhz_to_angular(config.scan.probe_detuning_mhz), fm.omega_m)[1];
    let half = expected_feature_width(&medium.sys).max(mhz_to_angular(config.scan.fine_width_mhz) / 2.0);
    let crossing = zero_crossing_slope(&trace, (center - half, center + half))?;
    Ok((medium, trace, crossing))
}

fn crossing_json(c: &ZeroCrossing) -> Value {
    json!({
        "crossing_MHz": angular_to_mhz(c.crossing),
        "slope_V_per_MHz": c.slope * mhz_to_angular(1.0),
        "capture_range_MHz": angular_to_mhz(c.capture_range),
    })
}

fn error_signal(config: &ScenarioConfig, out: &mut Outputs, timer: &mut Timer) -> Result<Value> {
    let (_, trace, crossing) = timer.time("scan", || carrier_error_signal(config))?;
    let xs: Vec<f64> = trace.detunings.iter().map(|&d| angular_to_mhz(d)).collect();
    out.csv(
        "error_signal.csv",
        &Table::from_columns(&["detuning_MHz", "signal_V"], &[&xs, &trace.volts])?,
    )?;
    let sidecar = toml::to_string(&trace.meta).map_err(|e| Error::invalid("error_signal.meta", e.to_string()))?;
    out.text("error_signal.toml", &sidecar)?;
    Ok(json!({
        "points": xs.len(),
        "theta_rad": trace.meta.theta,
        "carrier": crossing_json(&crossing),
        "warnings": trace.meta.warnings,
    }))
}

fn lock(config: &ScenarioConfig, out: &mut Outputs, timer: &mut Timer) -> Result<Value> {
    let (_, trace, crossing) = timer.time("scan", || carrier_error_signal(config))?;
    let shaped = Discriminant::from_trace(&trace, &crossing, config.lock.detector_noise_v);
    let disc = match config.lock.discriminant {
        DiscriminantKind::Trace => shaped,
        DiscriminantKind::Linear => shaped.linearized(),
    };
    let controller = config.controller_config();
    let settings = config.lock_settings();
    let noise = config.noise_model("lock.laser");
    let free = timer.time("free_run", || {
        simulate_free_run_with_budget(&noise, settings.sample_rate, settings.duration, settings.sample_budget)
    })?;
    let locked = timer.time("loop", || {
        simulate_locked_on(&free, config.stream_seed("lock.servo"), &controller, &disc, &settings)
    })?;

    // free-running error voltage through the same discriminant and detector
    let mut rng = seed::rng(config.stream_seed("lock.free_detector"), "detector");
    let free_volts = FrequencyTimeSeries {
        samples: free
            .samples
            .iter()
            .map(|&nu| {
                let n: f64 = rng.sample(StandardNormal);
                disc.voltage(nu + settings.initial_offset_hz) + disc.detector_noise_rms * n
            })
            .collect(),
        lineage: format!("{}/free_error_v", free.lineage),
        ..free.clone()
    };
    let opts = RmsOptions {
        bandwidth_hz: config.lock.measurement_bandwidth_hz,
        detrend: config.lock.detrend,
        ..Default::default()
    };
    let free_lw = linewidth_rms_over_slope(&free_volts, disc.slope, &opts)?;
    let locked_lw = linewidth_rms_over_slope(&locked.error_volts, disc.slope, &opts)?;
    let ol = OpenLoop::new(&controller, &disc, settings.sample_rate);

    out.series("lock_error_hz.csv", "Hz", &locked.error_series)?;
    out.series("lock_error_v.csv", "V", &locked.error_volts)?;
    out.series("free_run_hz.csv", "Hz", &free)?;
    Ok(json!({
        "carrier": crossing_json(&crossing),
        "free_running": free_lw,
        "locked": locked_lw,
        "reduction": free_lw.value / locked_lw.value,
        "unity_gain_frequency_Hz": ol.unity_gain_frequency(),
        "stable": ol.is_stable(),
        "unlock_events": locked.unlock_events,
        "samples": free.samples.len(),
    }))
}

fn beat(config: &ScenarioConfig, out: &mut Outputs, timer: &mut Timer) -> Result<Value> {
    let fs = config.beat.sample_rate_mhz * 1e6;
    let budget = config.lock.sample_budget;
    let (a, b) = timer.time("free_run", || {
        let a = simulate_free_run_with_budget(&config.noise_model("beat.laser_a"), fs, config.beat.duration_s, budget)?;
        let b = simulate_free_run_with_budget(&config.noise_model("beat.laser_b"), fs, config.beat.duration_s, budget)?;
        Ok((a, b))
    })?;
    let settings = config.beat_settings();
    let estimates = timer.time("beat", || beat_note_linewidth(&a, &b, &settings))?;
    let mut table = Table::new(&["window_s", "fwhm_Hz", "uncertainty_Hz", "rbw_Hz", "upper_bound"]);
    for e in &estimates {
        table.push(vec![
            e.window_s,
            e.value,
            e.uncertainty,
            e.bandwidth_hz.unwrap_or(f64::NAN),
            f64::from(u8::from(e.upper_bound)),
        ]);
    }
    out.csv("beat_linewidth.csv", &table)?;

    let fft_len = ((settings.segment_length_s * fs).round() as usize / settings.fft_divisions).max(16);
    let (freqs, psd) = spectral::welch_complex(&beat_field(&a, &b), fs, fft_len);
    out.csv(
        "beat_psd.csv",
        &Table::from_columns(&["frequency_Hz", "psd_per_Hz"], &[&freqs, &psd])?,
    )?;

    let adev = timer.time("allan", || allan_deviation(&a, &octave_taus(&a)))?;
    let mut at = Table::new(&["tau_s", "adev_Hz"]);
    for p in &adev {
        at.push(vec![p.tau_s, p.deviation]);
    }
    out.csv("allan.csv", &at)?;
    Ok(json!({
        "single_laser_white_fwhm_Hz": std::f64::consts::PI * config.noise.white_psd,
        "estimates": estimates,
    }))
}

fn fit(config: &ScenarioConfig, out: &mut Outputs, timer: &mut Timer) -> Result<Value> {
    let f = &config.fit;
    let sys = config.cascade_system()?;
    let (x, y, synthetic): (Vec<f64>, Vec<f64>, bool) = match &f.data {
        Some(path) => {
            let t = io::read_csv(Path::new(path))?;
            if t.columns.len() < 2 || t.columns[0] != "detuning_MHz" {
                return Err(Error::invalid(
                    "fit.data",
                    "first column must be detuning_MHz, second the transmission",
                ));
            }
            let x = t.rows.iter().map(|r| mhz_to_angular(r[0])).collect();
            let y = t.rows.iter().map(|r| r[1]).collect();
            (x, y, false)
        }
        None => {
            let x = linspace(
                -mhz_to_angular(f.span_mhz) / 2.0,
                mhz_to_angular(f.span_mhz) / 2.0,
                f.points,
            );
            let mut truth_sys = sys;
            truth_sys.rates.gamma_transit = mhz_to_angular(f.synthetic_transit_mhz);
            let truth = FitParams {
                omega_c: sys.omega_c,
                gamma_rel_laser: mhz_to_angular(f.synthetic_gamma_rel_mhz),
                amplitude: 1.0,
                baseline: 0.0,
                center: 0.0,
            };
            let clean = ColdEitModel::new(truth_sys).evaluate(&truth, &x)?;
            let mut rng = seed::rng(config.stream_seed("fit.noise"), "spectrum");
            let y = clean
                .iter()
                .map(|v| v + f.noise_sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            (x, y, true)
        }
    };
    let mut model_sys = sys;
    model_sys.rates.gamma_transit = mhz_to_angular(f.model_transit_mhz);
    let model = ColdEitModel {
        system: model_sys,
        free: FreeParams {
            baseline: f.free_baseline,
            ..FreeParams::default()
        },
    };
    let initial = FitParams {
        omega_c: mhz_to_angular(f.initial_rabi_mhz),
        gamma_rel_laser: mhz_to_angular(f.initial_gamma_rel_mhz),
        amplitude: 1.0,
        baseline: 0.0,
        center: 0.0,
    };
    let result = timer.time("fit", || {
        fit_cold_eit(&x, &y, Some(f.noise_sigma), &model, &initial, &FitOptions::default())
    })?;
    let fitted = model.evaluate(&result.params, &x)?;
    let mut table = Table::new(&["detuning_MHz", "data", "model", "residual"]);
    for ((xi, yi), mi) in x.iter().zip(&y).zip(&fitted) {
        table.push(vec![angular_to_mhz(*xi), *yi, *mi, yi - mi]);
    }
    out.csv("fit_residuals.csv", &table)?;
    Ok(json!({
        "synthetic": synthetic,
        "linewidth": result.linewidth(f.scan_time_s),
        "gamma_rel_laser_MHz": angular_to_mhz(result.params.gamma_rel_laser),
        "coupling_rabi_MHz": angular_to_mhz(result.params.omega_c),
        "fit": result,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn subcommand_names_round_trip() {
        for c in Subcommand::ALL {
            assert_eq!(c.name().parse::<Subcommand>().unwrap(), c);
        }
        assert!("plot".parse::<Subcommand>().is_err());
    }

    #[test]
    fn expected_features_follow_wavelength_ratio() {
        let sys = presets::hot_cell();
        let f = expected_features(&sys, 0.0, mhz_to_angular(10.0)).map(angular_to_mhz);
        let r = 780.24 / 480.0 * 10.0;
        assert!((f[0] - r).abs() < 1e-9 && f[1] == 0.0 && (f[2] + r).abs() < 1e-9);
        let mut co = sys;
        co.counter_propagating = false;
        assert!((angular_to_mhz(expected_features(&co, 0.0, mhz_to_angular(10.0))[2]) - r).abs() < 1e-9);
    }
}
