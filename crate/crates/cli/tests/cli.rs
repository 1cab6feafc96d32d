use std::path::Path;
use std::process::{Command, Output};

fn socsmo(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socsmo"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn export_defaults_feed_back_in() {
    let dir = tempfile::tempdir().unwrap();
    let defaults = dir.path().join("defaults");
    let o = socsmo(&["export-defaults"], &defaults);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["params.toml", "ocp_positive.txt", "ocp_negative.txt"] {
        assert!(defaults.join(f).exists(), "{f}");
    }
    let params = defaults.join("params.toml");
    let o = socsmo(
        &[
            "estimate",
            "--duration",
            "120",
            "--ocp",
            defaults.to_str().unwrap(),
            "--params",
            params.to_str().unwrap(),
        ],
        &dir.path().join("run"),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn estimate_writes_log_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = socsmo(
        &["estimate", "--profile", "dynamic", "--duration", "200", "--sigma-v", "0.005", "--seed", "3", "--init-error", "0.05"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["steps"], 201);
    let csv = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "csv"))
        .expect("per-step log");
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("t_s,current_a,y_meas_v,y_hat_v,e_y_v,bound_v,gate_open,soc_true,soc_est,"));
    assert_eq!(text.lines().count(), 202);
}

#[test]
fn batch_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = String::from("name = \"mini\"\nexecution = \"sequential\"\n");
    for v in ["state-only", "plain-dual", "fixed-dz", "adaptive-dz"] {
        cfg.push_str(&format!(
            "\n[[scenario]]\nname = \"{v}\"\nvariant = \"{v}\"\nduration = 120.0\nprofile = {{ kind = \"constant-current\", c_rate = 1.0 }}\n"
        ));
    }
    let path = dir.path().join("mini.toml");
    std::fs::write(&path, cfg).unwrap();
    let o = socsmo(&["batch", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("mini.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 4);
    assert!(dir.path().join("mini.txt").exists());
}

#[test]
fn simulate_then_fit_recovers_reference() {
    let dir = tempfile::tempdir().unwrap();
    let o = socsmo(&["simulate", "--profile", "dynamic", "--duration", "300", "--seed", "5"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = dir.path().join("simulate.csv");
    let o = socsmo(&["fit", "--profile", csv.to_str().unwrap(), "--fit", "R_ohm,Q_all"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["iterations"], 0);
    assert!(dir.path().join("fitted_params.toml").exists());
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&socsmo(&["estimate", "--no-such-flag"], dir.path())), 1);
    assert_eq!(code(&socsmo(&["estimate", "--variant", "magic", "--duration", "10"], dir.path())), 1);
    assert_eq!(code(&socsmo(&["estimate", "--dt", "-1"], dir.path())), 1);
    assert_eq!(code(&socsmo(&["batch", "--study", "unknown"], dir.path())), 1);
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&socsmo(&["batch", "--config", missing.to_str().unwrap()], dir.path())), 1);
    assert_eq!(code(&socsmo(&["fit", "--profile", "nope.csv"], dir.path())), 1);
}

#[test]
fn help_exits_with_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = socsmo(&["--help"], dir.path());
    assert_eq!(code(&o), 0);
}
