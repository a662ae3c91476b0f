use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use eitlock::eit::find_peaks;
use eitlock::io::read_csv;

const SIDEBAND_SCENARIO: &str = r#"
seed = 11

[system]
probe_wavelength_nm = 780.0
coupling_wavelength_nm = 480.0
optical_depth = 1.0
coupling_rabi_mhz = 2.0

[fm]
modulation_mhz = 10.0
"#;

fn eitlock(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_eitlock"));
    cmd.args(args).env_remove("EITLOCK_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn spectrum_shows_carrier_and_sideband_features() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SIDEBAND_SCENARIO);
    let out = tmp.path().join("out");
    let o = eitlock(
        &["spectrum", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());

    let t = read_csv(&out.join("spectrum.csv")).unwrap();
    assert_eq!(t.columns, ["detuning_MHz", "re_chi", "im_chi", "transmission"]);
    let x = t.column("detuning_MHz").unwrap();
    let y = t.column("transmission").unwrap();
    let peaks = find_peaks(&x, &y, 1e-6);
    assert_eq!(peaks.len(), 3, "{peaks:?}");
    let side = 780.0 / 480.0 * 10.0;
    for (p, e) in peaks.iter().zip([-side, 0.0, side]) {
        assert!((p - e).abs() <= 0.03 * side, "peak {p} vs {e}");
    }
}

#[test]
fn lock_without_noise_has_zero_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("{SIDEBAND_SCENARIO}\n[noise]\nwhite_psd = 0.0\n\n[lock]\nduration_s = 0.001\n"),
    );
    let out = tmp.path().join("out");
    let o = eitlock(
        &["lock", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_csv(&out.join("lock_error_hz.csv")).unwrap();
    assert_eq!(t.columns, ["time_s", "value_Hz"]);
    assert_eq!(t.rows.len(), 10_000);
    assert!(t.column("value_Hz").unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SIDEBAND_SCENARIO}\n[lock]\nduration_s = 0.002\n"));
    let dirs = ["a", "b", "c"].map(|d| tmp.path().join(d));
    for (dir, seed) in dirs.iter().zip(["5", "5", "6"]) {
        let o = eitlock(
            &[
                "lock",
                "--config",
                &cfg,
                "--seed",
                seed,
                "--out",
                dir.to_str().unwrap(),
                "--quiet",
            ],
            &[],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in [
        "lock_error_hz.csv",
        "lock_error_v.csv",
        "free_run_hz.csv",
        "summary.json",
        "effective_config.toml",
    ] {
        assert_eq!(
            fs::read(dirs[0].join(name)).unwrap(),
            fs::read(dirs[1].join(name)).unwrap(),
            "{name}"
        );
    }
    assert_eq!(manifest(&dirs[0])["digest"], manifest(&dirs[1])["digest"]);
    assert_ne!(manifest(&dirs[0])["digest"], manifest(&dirs[2])["digest"]);
    assert_ne!(
        fs::read(dirs[0].join("free_run_hz.csv")).unwrap(),
        fs::read(dirs[2].join("free_run_hz.csv")).unwrap()
    );
}

#[test]
fn effective_config_reproduces_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SIDEBAND_SCENARIO);
    let first = tmp.path().join("first");
    assert!(eitlock(
        &[
            "error-signal",
            "--config",
            &cfg,
            "--out",
            first.to_str().unwrap(),
            "--quiet"
        ],
        &[]
    )
    .status
    .success());
    let echoed = first.join("effective_config.toml");
    let second = tmp.path().join("second");
    let o = eitlock(
        &[
            "error-signal",
            "--config",
            echoed.to_str().unwrap(),
            "--out",
            second.to_str().unwrap(),
            "--quiet",
        ],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&first)["digest"], manifest(&second)["digest"]);
    assert_eq!(
        fs::read(first.join("error_signal.csv")).unwrap(),
        fs::read(second.join("error_signal.csv")).unwrap()
    );
}

#[test]
fn invalid_config_gives_error_record() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = SIDEBAND_SCENARIO.replace(
        "coupling_rabi_mhz = 2.0",
        "coupling_rabi_mhz = 2.0\ncoupling_power = \"-1 mW\"\ncolour = 3",
    );
    let cfg = write_config(tmp.path(), &format!("{bad}\n[quadrature]\nnode_count = 4\n"));
    let out = tmp.path().join("out");
    let o = eitlock(&["spectrum", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let record: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(record["error"], "config");
    let details: Vec<String> = serde_json::from_value(record["details"].clone()).unwrap();
    assert_eq!(details.len(), 3, "{details:?}");
    assert!(details
        .iter()
        .any(|d| d.starts_with("system.coupling_power: must be > 0")));
    assert!(details.iter().any(|d| d == "system.colour: unknown key"));
    assert!(details.iter().any(|d| d.contains("node_count ≥ 8")));
    assert!(!out.exists());
}

#[test]
fn missing_config_file_is_io_error() {
    let o = eitlock(&["spectrum", "--config", "/nonexistent/scenario.toml"], &[]);
    assert_eq!(o.status.code(), Some(1));
    let record: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(record["error"], "io");
    assert!(record["message"]
        .as_str()
        .unwrap()
        .contains("/nonexistent/scenario.toml"));
}

#[test]
fn output_directory_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let from_config = tmp.path().join("from_config");
    let cfg = write_config(
        tmp.path(),
        &format!("{SIDEBAND_SCENARIO}\n[outputs]\ndir = \"{}\"\n", from_config.display()),
    );
    let env_dir = tmp.path().join("from_env");
    let flag_dir = tmp.path().join("from_flag");

    assert!(eitlock(&["error-signal", "--config", &cfg, "--quiet"], &[])
        .status
        .success());
    assert!(from_config.join("error_signal.csv").exists());

    let o = eitlock(
        &["error-signal", "--config", &cfg, "--quiet"],
        &[("EITLOCK_OUT", &env_dir)],
    );
    assert!(o.status.success());
    assert!(env_dir.join("error_signal.csv").exists());

    let o = eitlock(
        &[
            "error-signal",
            "--config",
            &cfg,
            "--out",
            flag_dir.to_str().unwrap(),
            "--quiet",
        ],
        &[("EITLOCK_OUT", &env_dir)],
    );
    assert!(o.status.success());
    assert!(flag_dir.join("error_signal.csv").exists());
}

#[test]
fn error_signal_csv_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = eitlock(&["error-signal", "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("error-signal digest="), "{stdout}");
    let t = read_csv(&out.join("error_signal.csv")).unwrap();
    assert_eq!(t.columns, ["detuning_MHz", "signal_V"]);
    let text = fs::read_to_string(out.join("error_signal.csv")).unwrap();
    assert!(text.ends_with('\n'));
    assert!(fs::read_to_string(out.join("error_signal.toml"))
        .unwrap()
        .contains("theta"));
}

#[test]
fn unknown_subcommand_rejected() {
    let o = eitlock(&["plot"], &[]);
    assert!(!o.status.success());
}
