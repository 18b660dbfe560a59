//! End-to-end behaviour of the `sgld-lab` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const FIG1: &str = r#"
seeds = [4, 5]
output_dir = "OUT"

[experiment.fig1]
n = 2000
c0 = 0.5
grid_points = 401
max_sup_gap = 0.1
min_spurious = 5
separation = 0.02
"#;

fn write_config(dir: &Path, name: &str, body: &str, out: &str) -> String {
    let path = dir.join(name);
    let out = dir.join(out);
    fs::write(&path, body.replace("OUT", out.to_str().unwrap())).unwrap();
    path.to_str().unwrap().to_string()
}

fn sgld_lab(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sgld-lab"));
    cmd.args(args);
    match workers {
        Some(w) => cmd.env("SGLD_LAB_WORKERS", w),
        None => cmd.env_remove("SGLD_LAB_WORKERS"),
    };
    cmd.output().unwrap()
}

#[test]
fn lists_every_experiment() {
    let out = sgld_lab(&["list-experiments"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "fig1",
        "escape",
        "stationarity",
        "cheeger_table",
        "conductance",
        "zeroone_learn",
        "smoothing_checks",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let out = sgld_lab(&["validate", path.to_str().unwrap()], None);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}: {}",
            path.display(),
            String::from_utf8_lossy(&out.stderr)
        );
        n += 1;
    }
    assert!(n >= 7);
}

#[test]
fn config_errors_exit_with_two_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = FIG1.replace("separation = 0.02", "separation = 0.02\nbins = 3");
    let path = write_config(tmp.path(), "bad.toml", &bad, "bad_out");
    for cmd in ["validate", "run"] {
        let out = sgld_lab(&[cmd, &path], None);
        assert_eq!(out.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&out.stderr).contains("bins"));
    }
    assert!(!tmp.path().join("bad_out").exists());
    let missing = tmp.path().join("nope.toml");
    assert_eq!(
        sgld_lab(&["run", missing.to_str().unwrap()], None).status.code(),
        Some(2)
    );
    let good = write_config(tmp.path(), "good.toml", FIG1, "good_out");
    assert_eq!(sgld_lab(&["run", &good], Some("zero")).status.code(), Some(2));
    assert_eq!(sgld_lab(&["run", &good], Some("0")).status.code(), Some(2));
}

#[test]
fn failing_check_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let strict = FIG1.replace("max_sup_gap = 0.1", "max_sup_gap = 1e-6");
    let path = write_config(tmp.path(), "strict.toml", &strict, "out");
    let out = sgld_lab(&["run", &path], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL sup_gap"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["passed"], false);
}

#[test]
fn runs_are_byte_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(tmp.path(), "a.toml", FIG1, "a");
    let b = write_config(tmp.path(), "b.toml", FIG1, "b");
    assert_eq!(sgld_lab(&["run", &a], Some("1")).status.code(), Some(0));
    assert_eq!(sgld_lab(&["run", &b], Some("3")).status.code(), Some(0));
    let ma: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("a/manifest.json")).unwrap()).unwrap();
    let mb: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("b/manifest.json")).unwrap()).unwrap();
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["artifacts"], mb["artifacts"]);
    assert_eq!(ma["workers"], 1);
    assert_eq!(mb["workers"], 3);
    let files = ma["artifacts"].as_array().unwrap();
    assert_eq!(files.len(), 2);
    for f in files {
        let name = f["file"].as_str().unwrap();
        let x = fs::read(tmp.path().join("a").join(name)).unwrap();
        let y = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
        // x grid of 401 points, two series, one header line.
        assert_eq!(String::from_utf8(x).unwrap().lines().count(), 2 * 401 + 1);
    }
}
