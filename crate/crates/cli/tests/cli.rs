use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_specshare"));
    c.env("RUST_LOG", "warn");
    c
}

fn scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/two_providers.toml")
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&scenario(), &a, &[]).status.success());
    let out = bin()
        .env("SPECSHARE_WORKERS", "1")
        .arg("run")
        .arg(scenario())
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert!(out.status.success());
    for file in ["results.csv", "manifest.json"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let csv = fs::read_to_string(a.join("results.csv")).unwrap();
    // 3 points x 3 seeds x 2 strategies
    assert_eq!(csv.lines().count(), 1 + 18);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["complete"], true);
    assert_eq!(manifest["runs_completed"], 18);
    assert_eq!(manifest["seeds"], serde_json::json!([1, 2, 3]));
}

#[test]
fn seed_override_and_verbose_logs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &scenario(),
        dir.path(),
        &["--seed-override", "40", "--verbose"],
    );
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([40, 41, 42]));
    let sessions = fs::read_dir(dir.path().join("sessions")).unwrap().count();
    assert_eq!(sessions, 18);
    let log = fs::read_to_string(
        dir.path()
            .join("sessions/arrival_scale_1_seed40_DYNAMIC_SBAC.csv"),
    )
    .unwrap();
    assert!(log.starts_with("id,home_provider,link,"));
}

#[test]
fn invalid_config_names_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario()).unwrap().replacen(
        "rate_bps = 1.0e5\n",
        "rate_bps = 1.0e5\nrate_min_bps = 3.0e5\nrate_max_bps = 2.0e5\n",
        1,
    );
    let path = dir.path().join("bad.toml");
    fs::write(&path, &text).unwrap();
    let out = bin().arg("validate").arg(&path).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .position(|l| l == "[[topology.links]]")
        .unwrap()
        + 1;
    assert!(
        stderr.contains(&format!("topology.links[0] (line {line})")),
        "{stderr}"
    );

    let out = run(&path, &dir.path().join("o"), &[]);
    assert!(!out.status.success());
    assert!(!dir.path().join("o").exists());
}

#[test]
fn validate_prints_normalized_document() {
    let out = bin().arg("validate").arg(scenario()).output().unwrap();
    assert!(out.status.success());
    let doc = String::from_utf8(out.stdout).unwrap();
    assert!(doc.contains("noise_w = 0.0000000000001"), "{doc}");
    assert!(!doc.contains("noise_dbw"));
    assert!(doc.contains("solver_patience = 50"));
}

#[test]
fn erlang_b_subcommand() {
    let out = bin()
        .args(["erlang-b", "--channels", "10", "--load", "5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let b: f64 = String::from_utf8(out.stdout)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((b - 0.018385).abs() < 1e-6);
    assert!(!bin()
        .args(["erlang-b", "--channels", "10", "--load", "-1"])
        .output()
        .unwrap()
        .status
        .success());
}

#[test]
fn empty_sweep_still_writes_header() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario())
        .unwrap()
        .replace("horizon_s = 500.0", "horizon_s = 0.001");
    let path = dir.path().join("short.toml");
    fs::write(&path, text).unwrap();
    assert!(run(&path, &dir.path().join("o"), &[]).status.success());
    let csv = fs::read_to_string(dir.path().join("o/results.csv")).unwrap();
    assert!(csv.starts_with("sweep_param,sweep_value,seed,strategy,"));
}
