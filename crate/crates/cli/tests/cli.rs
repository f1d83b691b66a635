//! Binary-level tests: config handling, output files, determinism, and the
//! exit-code contract (0 ok, 2 config, 3 numerical, 4 strict failures).

use std::path::Path;
use std::process::{Command, Output};

fn tglab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tglab"))
        .args(args)
        .current_dir(dir)
        .env_remove("TGLAB_OUT")
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn geometry_emits_the_expected_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = tglab(
        &[
            "geometry",
            "--set",
            "spectrum=1",
            "--set",
            "t_grid=0,0.5",
            "--out",
            "geo",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.path().join("geo/geometry.csv"));
    let clean_row: Vec<&str> = csv
        .lines()
        .find(|l| l.starts_with("5.0000000000000000e-1,clean"))
        .expect("row for t=0.5 clean")
        .split(',')
        .collect();
    assert_eq!(clean_row[2], "5.0000000000000000e-1");
    assert!(dir.path().join("geo/risk_curves.svg").exists());
    assert!(dir.path().join("geo/geometry_report.json").exists());
}

#[test]
fn geometry_rejects_empty_spectrum_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.conf"), "spectrum =\n").unwrap();
    let out = tglab(&["geometry", "--config", "bad.conf"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));
}

#[test]
fn geometry_degenerate_time_exits_3_naming_the_coordinate() {
    let dir = tempfile::tempdir().unwrap();
    let out = tglab(
        &[
            "geometry",
            "--set",
            "spectrum=1,0",
            "--set",
            "t_grid=0.5,1",
            "--out",
            "geo",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("lambda = 0"), "{stderr}");
    assert!(stderr.contains("t = 1"), "{stderr}");
}

#[test]
fn mc_validate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "mc-validate",
            "--set",
            "spectrum=4,1",
            "--set",
            "n=20000",
            "--set",
            "k=256",
            "--set",
            "t_values=0.5",
            "--seed",
            "9",
            "--out",
            out,
        ]
    };
    assert!(tglab(&args("a"), dir.path()).status.success());
    assert!(tglab(&args("b"), dir.path()).status.success());
    let a = std::fs::read(dir.path().join("a/mc_validate.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/mc_validate.csv")).unwrap();
    assert_eq!(a, b);
    assert!(!a.is_empty());
}

#[test]
fn mc_validate_rejects_single_row_batches() {
    let dir = tempfile::tempdir().unwrap();
    let out = tglab(
        &["mc-validate", "--set", "spectrum=1", "--set", "n=1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn strict_mode_reports_failed_bands_with_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    // k comparable to n makes the kNN neighborhood global, so its trace sits
    // near the marginal variance instead of the conditional one and the 10%
    // band fails deterministically for this seed.
    let base = [
        "mc-validate",
        "--set",
        "spectrum=4",
        "--set",
        "n=2000",
        "--set",
        "k=1024",
        "--set",
        "t_values=0.9",
        "--seed",
        "11",
    ];
    let mut lax = base.to_vec();
    lax.extend(["--out", "lax"]);
    let out = tglab(&lax, dir.path());
    assert_eq!(out.status.code(), Some(0), "non-strict runs report but pass");
    let csv = read(&dir.path().join("lax/mc_validate.csv"));
    assert!(csv.contains("FAIL"), "{csv}");

    let mut strict = base.to_vec();
    strict.extend(["--out", "strict", "--strict"]);
    let out = tglab(&strict, dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn probe_rejects_malformed_config_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.conf"), "this is not a key value line\n").unwrap();
    let out = tglab(&["probe", "--config", "broken.conf"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("broken.conf:1"), "{stderr}");
}

#[test]
fn sample_rejects_zero_steps() {
    let dir = tempfile::tempdir().unwrap();
    let out = tglab(
        &["sample", "--set", "spectrum=1", "--set", "steps=0"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config_file_values() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.conf"),
        "spectrum = 1\nt_grid = 0.5\nseed = 1\nout = from_file\n",
    )
    .unwrap();
    let out = tglab(
        &["geometry", "--config", "run.conf", "--seed", "2", "--out", "from_flag"],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(dir.path().join("from_flag/geometry.csv").exists());
    assert!(!dir.path().join("from_file").exists());
    let report = read(&dir.path().join("from_flag/geometry_report.json"));
    assert!(report.contains("\"seed\": 2"));
}

#[test]
fn env_var_sets_the_default_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tglab"))
        .args(["geometry", "--set", "spectrum=1", "--set", "t_grid=0.5"])
        .current_dir(dir.path())
        .env("TGLAB_OUT", "env_out")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("env_out/geometry.csv").exists());
}

#[test]
fn json_format_embeds_tables_without_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = tglab(
        &[
            "geometry",
            "--set",
            "spectrum=4,1",
            "--set",
            "t_grid=0.5",
            "--format",
            "json",
            "--out",
            "j",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(!dir.path().join("j/geometry.csv").exists());
    let report = read(&dir.path().join("j/geometry_report.json"));
    assert!(report.contains("aggregate_risk[var]"));
    assert!(report.contains("\"rows\""));
}

#[test]
fn report_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = tglab(
        &[
            "geometry",
            "--set",
            "spectrum=4,1,0.25",
            "--set",
            "t_grid=0.1,0.5,0.9",
            "--seed",
            "21",
            "--out",
            "first",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("first/geometry_report.json"))).unwrap();
    let config_file = report["config_file"].as_str().unwrap();
    std::fs::write(dir.path().join("echo.conf"), config_file).unwrap();

    let out = tglab(
        &["geometry", "--config", "echo.conf", "--out", "second"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(dir.path().join("first/geometry.csv")).unwrap();
    let b = std::fs::read(dir.path().join("second/geometry.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sample_exports_readable_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = tglab(
        &[
            "sample",
            "--set",
            "spectrum=1,0.5",
            "--set",
            "n=500",
            "--set",
            "steps=10",
            "--set",
            "export_endpoints=true",
            "--out",
            "s",
            "--seed",
            "2",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let file = std::fs::File::open(dir.path().join("s/sample_endpoints.bin")).unwrap();
    let (zs, t, seed) = tglab_core::montecarlo::read_endpoint_matrix(file).unwrap();
    assert_eq!(zs.nrows(), 500);
    assert_eq!(zs.ncols(), 2);
    assert_eq!(t, 1.0);
    assert_eq!(seed, 2);
}

#[test]
fn sample_and_probe_csvs_are_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sample_args = |out: &'static str| {
        vec![
            "sample", "--set", "spectrum=4,0.25", "--set", "n=2000", "--seed", "13", "--out", out,
        ]
    };
    assert!(tglab(&sample_args("sa"), dir.path()).status.success());
    assert!(tglab(&sample_args("sb"), dir.path()).status.success());
    for name in ["sample.csv", "sample_summary.csv", "sample_convergence.csv"] {
        let a = std::fs::read(dir.path().join("sa").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("sb").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }

    let probe_args = |out: &'static str| {
        vec![
            "probe", "--set", "spectrum=1,0.1", "--set", "kind=linear", "--set", "steps=300",
            "--seed", "17", "--out", out,
        ]
    };
    assert!(tglab(&probe_args("pa"), dir.path()).status.success());
    assert!(tglab(&probe_args("pb"), dir.path()).status.success());
    for name in ["probe.csv", "probe_loss.csv", "probe_coefficients.csv"] {
        let a = std::fs::read(dir.path().join("pa").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("pb").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn sample_with_probe_field_reports_both_w2() {
    let dir = tempfile::tempdir().unwrap();
    let out = tglab(
        &[
            "sample",
            "--set",
            "spectrum=1",
            "--set",
            "n=2000",
            "--set",
            "probe=linear",
            "--set",
            "probe_target=clean",
            "--set",
            "probe_steps=2000",
            "--out",
            "sp",
            "--seed",
            "6",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read(&dir.path().join("sp/sample_summary.csv"));
    assert!(summary.contains("w2_analytic"));
    assert!(summary.contains("w2_probe"));
    // Clean probes clamp t_max away from 1.
    assert!(summary.contains("9.9900000000000000e-1"), "{summary}");
}
