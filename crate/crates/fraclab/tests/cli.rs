use std::path::Path;
use std::process::Command;

const FRACLAP: &str = r#"
seed = 5

[grid]
n = 1
L = 8.0
nx = 128
Y = 8.0
ny = 16
periodic = true

[orders]
s1 = 0.5

[trace]
modes = [{ amplitude = 1.0, m = [1] }]

[checks]
s_sweep = [0.5]
"#;

const SOLVE_ONE_STEP: &str = r#"
command = "solve"

[grid]
n = 1
L = 8.0
nx = 32
Y = 8.0
ny = 32
gamma = 2.0
periodic = false

[orders]
s1 = 0.5

[potential]
name = "double_well"

[solver]
max_outer_iters = 1

[initial]
kind = "layer"
axis = 0
"#;

fn fraclab(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fraclab")).args(args).current_dir(dir).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn fraclap_run_writes_report_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", FRACLAP);
    let mut hashes = Vec::new();
    for out in ["a", "b"] {
        let o = fraclab(&["fraclap", "--config", &cfg, "--out", out, "--quiet"], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let r = report(&tmp.path().join(out));
        let text = r["stages"]["fraclap.s0.5"]["ratio"].to_string();
        assert!(text.contains("ratio") && text.contains("dispersion"), "{text}");
        assert_eq!(r["command"], "fraclap");
        assert!(tmp.path().join(out).join("fraclap_ratios.csv").exists());
        hashes.push(r["hash"].as_str().unwrap().to_string());
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn seed_flag_changes_the_recorded_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", FRACLAP);
    let o = fraclab(&["fraclap", "--config", &cfg, "--out", "o", "--seed", "11", "--quiet"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&tmp.path().join("o"))["seed"], 11);
}

#[test]
fn invalid_configuration_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.toml", &FRACLAP.replace("nx = 128", "nx = 1"));
    assert_eq!(fraclab(&["fraclap", "--config", &bad, "--out", "o"], tmp.path()).status.code(), Some(2));
    let broken = write(tmp.path(), "broken.toml", "[grid\nn = ");
    assert_eq!(fraclab(&["fraclap", "--config", &broken, "--out", "o"], tmp.path()).status.code(), Some(2));
    let missing = tmp.path().join("missing.toml");
    assert_eq!(fraclab(&["fraclap", "--config", missing.to_str().unwrap()], tmp.path()).status.code(), Some(2));
}

#[test]
fn subcommand_must_match_configured_command() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", SOLVE_ONE_STEP);
    let o = fraclab(&["fraclap", "--config", &cfg, "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("solve"));
}

#[test]
fn iteration_cap_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", SOLVE_ONE_STEP);
    let o = fraclab(&["solve", "--config", &cfg, "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("last residuals"));
}

#[test]
fn presets_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fraclab(&["presets"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["operator", "kernel", "synthetic", "coupled"] {
        assert!(text.contains(name), "{text}");
    }
}
