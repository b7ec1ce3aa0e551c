use std::path::Path;
use std::process::{Command, Output};

use pseudobell::config::{emit_config, load_config, Experiment, RunConfig};
use pseudobell::engine::Flux;
use pseudobell::experiments::{delay_scan, Backend, DEFAULT_DELAY_GRID};
use pseudobell::run::{curve_csv, parse_curve_csv, run, RunError, RunOptions};

fn pseudobell(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pseudobell"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn mc_delay_scan_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "scan.cfg",
        "experiment = scan-delay\nbackend = mc\nn_trials = 20000\n",
    );
    for out in ["a.csv", "b.csv"] {
        let o = pseudobell(
            dir.path(),
            &[
                "scan-delay",
                "--config",
                "scan.cfg",
                "--seed",
                "42",
                "--out",
                out,
            ],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);

    let o = pseudobell(
        dir.path(),
        &[
            "scan-delay",
            "--config",
            "scan.cfg",
            "--seed",
            "43",
            "--out",
            "c.csv",
        ],
    );
    assert!(o.status.success());
    assert_ne!(a, std::fs::read(dir.path().join("c.csv")).unwrap());
}

#[test]
fn delay_scan_emits_81_rows_with_stable_header() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "scan.cfg", "experiment = scan-delay\n");
    let o = pseudobell(
        dir.path(),
        &["scan-delay", "--config", "scan.cfg", "--backend", "oracle"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("scan-delay.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("x,y,yerr"));
    let rows = parse_curve_csv(&text).unwrap();
    assert_eq!(rows.len(), 81);
    assert!((rows[0][0] + 4e-12).abs() < 1e-27 && (rows[80][0] - 4e-12).abs() < 1e-27);
    assert!(rows.iter().all(|r| r[2] == 0.0));

    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("scan-delay.meta.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["seed"], 20_100_819u64);
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert!(meta["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(meta["config"]["tau_p"], "3.45e-13");
}

#[test]
fn csv_reproduces_the_curve_to_full_precision() {
    let s = pseudobell::InterferometerSettings::default().with_angles(0.3, 1.9);
    let curve = delay_scan(
        &s,
        &DEFAULT_DELAY_GRID.points(),
        Flux::Low,
        &Backend::Oracle,
    )
    .unwrap();
    let rows = parse_curve_csv(&curve_csv(&curve)).unwrap();
    for (p, r) in curve.points().iter().zip(&rows) {
        assert_eq!(p.x.to_bits(), r[0].to_bits());
        assert_eq!(p.y.to_bits(), r[1].to_bits());
        assert_eq!(p.yerr.to_bits(), r[2].to_bits());
    }
}

#[test]
fn json_output_mirrors_csv_points() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "fringe.cfg",
        "experiment = scan-angle\ntheta_a = pi/8\n",
    );
    for format in ["csv", "json"] {
        let o = pseudobell(
            dir.path(),
            &[
                "scan-angle",
                "--config",
                "fringe.cfg",
                "--backend",
                "oracle",
                "--format",
                format,
            ],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = parse_curve_csv(&std::fs::read_to_string(dir.path().join("scan-angle.csv")).unwrap())
        .unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("scan-angle.json")).unwrap())
            .unwrap();
    let points = json["points"].as_array().unwrap();
    assert_eq!(points.len(), csv.len());
    for (row, p) in csv.iter().zip(points) {
        for k in 0..3 {
            assert_eq!(row[k].to_bits(), p[k].as_f64().unwrap().to_bits());
        }
    }
    assert_eq!(json["metadata"]["experiment"], "scan-angle");
}

#[test]
fn chsh_reports_s_and_correlations() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "chsh.cfg",
        "experiment = chsh\nbackend = oracle\n",
    );
    let o = pseudobell(
        dir.path(),
        &["chsh", "--config", "chsh.cfg", "--emit-plot-script"],
    );
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("S = 2.828427"), "{stdout}");
    let rows =
        parse_curve_csv(&std::fs::read_to_string(dir.path().join("chsh.csv")).unwrap()).unwrap();
    assert_eq!(
        rows.iter().map(|r| r[0]).collect::<Vec<_>>(),
        [1.0, 2.0, 3.0, 4.0]
    );
    assert!(dir.path().join("chsh.plot.py").exists());
}

#[test]
fn bad_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "bad.cfg",
        "experiment = scan-delay\neta = 1.5\n",
    );
    let o = pseudobell(dir.path(), &["scan-delay", "--config", "bad.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta must lie in [0,1]"));

    write_config(
        dir.path(),
        "typo.cfg",
        "experiment = scan-delay\nmean_photon = 0.01\n",
    );
    let o = pseudobell(dir.path(), &["scan-delay", "--config", "typo.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn strict_mode_promotes_regime_warnings() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "long.cfg",
        "experiment = scan-delay\ntau_p = 100e-12\n",
    );
    let relaxed = pseudobell(
        dir.path(),
        &["scan-delay", "--config", "long.cfg", "--backend", "oracle"],
    );
    assert!(relaxed.status.success());
    assert!(String::from_utf8_lossy(&relaxed.stderr).contains("warning"));
    let strict = pseudobell(
        dir.path(),
        &[
            "scan-delay",
            "--config",
            "long.cfg",
            "--backend",
            "oracle",
            "--strict",
            "--out",
            "s.csv",
        ],
    );
    assert_eq!(strict.status.code(), Some(5));
    assert!(!dir.path().join("s.csv").exists());
}

#[test]
fn config_round_trips_through_emit() {
    let cfg =
        load_config("experiment = chsh\ntau_p = 345e-15\ntheta_b = 3*pi/8\nseed = 9\n").unwrap();
    assert_eq!(cfg.settings.pulse.tau_p, 345e-15);
    let again = load_config(&emit_config(&cfg)).unwrap();
    assert_eq!(cfg, again);
}

#[test]
fn minimal_config_takes_defaults() {
    let cfg = load_config("experiment = scan-delay").unwrap();
    assert_eq!(cfg.experiment, Experiment::ScanDelay);
    assert_eq!(cfg.settings, pseudobell::InterferometerSettings::default());
    assert_eq!(cfg.grid.points().len(), 81);
    assert_eq!(cfg.n_trials, RunConfig::default_trials(Flux::Low));
    let high = load_config("experiment = scan-delay\nmode = high").unwrap();
    assert_eq!(high.settings.mean_photons, 100.0);
}

#[test]
fn validate_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load_config("experiment = validate\nn_trials = 20000\n").unwrap();
    cfg.output = Some(dir.path().join("checks.csv"));
    let report = run(&cfg, &RunOptions::default());
    // At 2e4 gates the 2%-of-scale floor dominates the band for low flux;
    // the outcome is reported either way.
    let lines = match &report {
        Ok(r) => r.summary.clone(),
        Err(RunError::ValidationFailed(_)) => Vec::new(),
        Err(e) => panic!("{e}"),
    };
    let text = std::fs::read_to_string(dir.path().join("checks.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 8);
    if !lines.is_empty() {
        assert!(lines
            .iter()
            .all(|l| l.starts_with("PASS") || l.starts_with("FAIL")));
    }
}
