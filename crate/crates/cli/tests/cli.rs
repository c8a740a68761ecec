use std::path::Path;
use std::process::{Command, Output};

fn irqcount(args: &[&str], out: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_irqcount"));
    c.args(args).env_remove("IRQCOUNT_OUT");
    if let Some(o) = out {
        c.arg("--out").arg(o);
    }
    c.output().unwrap()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn lbms_bench_writes_six_rows_and_a_summary_with_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = irqcount(&["lbms-bench", "--seed", "3"], Some(dir.path()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("lbms_bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("delta_instructions,traces_per_run,"));
    let deltas: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(deltas, ["2", "4", "8", "16", "32", "64"]);

    let summary = read_json(&dir.path().join("lbms-bench.summary.json"));
    let manifest = read_json(&dir.path().join("lbms-bench.manifest.json"));
    assert_eq!(summary["manifest"], manifest);
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["subcommand"], "lbms-bench");
    assert_eq!(manifest["profile_name"], "paper-like");
    assert_eq!(manifest["outputs"][0]["rows"], 6);
    assert!(manifest["started_at"].as_str().unwrap().ends_with('Z'));
    // timestamps never reach the CSV
    assert!(!csv.contains(':'), "{csv}");
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_irqcount"))
        .args(["expected-reductions", "--tp", "0.5,0.6"])
        .env("IRQCOUNT_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("expected_reductions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn infeasible_reduction_rates_leave_an_empty_cell() {
    let dir = tempfile::tempdir().unwrap();
    let o = irqcount(&["expected-reductions", "--flagged", "40", "--tp", "0.5,1"], Some(dir.path()));
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("expected_reductions.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("40,0.5,34,"));
    assert_eq!(csv.lines().nth(2), Some("40,1,34,1"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = Some(dir.path());
    assert_eq!(irqcount(&["--profile", "no-such", "calibrate"], d).status.code(), Some(2));
    assert_eq!(irqcount(&["calibrate", "--bogus"], d).status.code(), Some(2));
    assert_eq!(irqcount(&["expected-reductions", "--tp", "1.5"], d).status.code(), Some(2));
    assert_eq!(irqcount(&["ecdsa-trunc", "--every", "5000"], d).status.code(), Some(4));

    // IPI latency beyond the mitigation: the PSS fire delay would be negative
    let shown = irqcount(&["show-profile"], None);
    let text = String::from_utf8(shown.stdout).unwrap();
    let slow = text.replace("mean_offset = 200.0", "mean_offset = 5000.0");
    assert_ne!(slow, text);
    let path = dir.path().join("slow.toml");
    std::fs::write(&path, slow).unwrap();
    let o = irqcount(&["--profile", path.to_str().unwrap(), "calibrate"], d);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let bad = text.replace("[arrival]", "[arrival]\nsurprise = 1");
    std::fs::write(&path, bad).unwrap();
    assert_eq!(irqcount(&["--profile", path.to_str().unwrap(), "calibrate"], d).status.code(), Some(2));
}

#[test]
fn shown_profiles_round_trip_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    for preset in ["paper-like", "noiseless", "fast"] {
        let text = String::from_utf8(irqcount(&["--profile", preset, "show-profile"], None).stdout).unwrap();
        let path = dir.path().join(format!("{preset}.toml"));
        std::fs::write(&path, &text).unwrap();
        let out = dir.path().join(preset);
        assert!(irqcount(&["--profile", path.to_str().unwrap(), "calibrate"], Some(&out)).status.success());
        let viafile = read_json(&out.join("calibrate.manifest.json"));
        let named = dir.path().join(format!("{preset}-named"));
        assert!(irqcount(&["--profile", preset, "calibrate"], Some(&named)).status.success());
        let direct = read_json(&named.join("calibrate.manifest.json"));
        assert_eq!(viafile["profile_hash"], direct["profile_hash"]);
        assert_eq!(
            std::fs::read(out.join("calibration.csv")).unwrap(),
            std::fs::read(named.join("calibration.csv")).unwrap()
        );
    }
}

#[test]
fn a_different_seed_changes_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(irqcount(&["stepping-rate", "--interrupts", "2000", "--seed", "1"], Some(&a)).status.success());
    assert!(irqcount(&["stepping-rate", "--interrupts", "2000", "--seed", "2"], Some(&b)).status.success());
    assert_ne!(
        std::fs::read(a.join("stepping_summary.csv")).unwrap(),
        std::fs::read(b.join("stepping_summary.csv")).unwrap()
    );
}
