use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_frontalize"))
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn run_writes_csv_logs_with_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.toml");
    std::fs::write(&cfg, "duration_s = 5.0\n[uav]\nrange_m = 3.0\nbearing_deg = 20.0\n").unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "4"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for (file, first) in [
        ("trajectory.csv", "time_s,x_m"),
        ("commands.csv", "time_s,mode,vx_mps"),
        ("events.csv", "time_s,kind,source"),
        ("scores.csv", "time_s,error,accuracy"),
        ("similarity.csv", "time_s,similarity"),
        ("modes.csv", "time_s,mode"),
        ("counts.csv", "sensor,invocations"),
    ] {
        assert!(header(&out.join(file)).starts_with(first), "{file}");
    }
}

#[test]
fn seed_flag_changes_noise_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let go = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let s = bin()
            .args(["run", "--format", "json", "--seed", seed, "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(s.success());
        std::fs::read(out.join("run.json")).unwrap()
    };
    assert_eq!(go("a", "1"), go("b", "1"));
    assert_ne!(go("a", "1"), go("c", "2"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "dt_s = 2.0\n[rates]\nodometry_hz = -5.0\n").unwrap();
    let out = bin().arg("run").arg("--config").arg(&bad).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("rates.odometry_hz"), "{msg}");

    let missing = bin().args(["sweep", "--config", "/nonexistent/x.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));

    std::fs::write(&bad, "not toml [").unwrap();
    let out = bin().arg("field").arg("--config").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_field_and_calibrate_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(
        &cfg,
        "[sweep]\nbearings_deg = [0.0, 45.0]\nranges_m = [2.0]\nsamples = 3\n[field]\nranges_m = [1.5, 2.5]\nbearings_deg = [-30.0, 0.0, 30.0]\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    for sub in ["sweep", "field", "calibrate"] {
        let s = bin().arg(sub).arg("--config").arg(&cfg).arg("--out").arg(&out).status().unwrap();
        assert!(s.success(), "{sub}");
    }
    assert_eq!(header(&out.join("sweep.csv")), "range_m,bearing_deg,samples,detections,mean_error,mean_accuracy");
    assert!(header(&out.join("field.csv")).starts_with("range_m,bearing_deg,x_m,y_m,yaw_rad"));
    assert_eq!(header(&out.join("depth_model.csv")), "kind,slope,intercept,min_height_px,max_height_px,r_squared");
    assert_eq!(header(&out.join("calibration.csv")), "height_px,distance_m");
    assert_eq!(std::fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 3);
    assert_eq!(std::fs::read_to_string(out.join("field.csv")).unwrap().lines().count(), 7);

    // Refit from the written samples with an explicit kind.
    let s = bin()
        .arg("calibrate")
        .arg("--samples")
        .arg(out.join("calibration.csv"))
        .args(["--kind", "linear", "--format", "json", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(s.success());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("depth_model.json")).unwrap()).unwrap();
    assert_eq!(json["kind"], "linear");
    assert!(json["slope"].as_f64().unwrap() < 0.0);
}
