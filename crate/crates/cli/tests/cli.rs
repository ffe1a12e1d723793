use std::path::Path;
use std::process::{Command, Output};

fn squidsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_squidsim"))
        .args(args)
        .env("SQUIDSIM_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.ini");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn hash_of(dir: &Path) -> String {
    let echo = std::fs::read_to_string(dir.join("effective_config.ini")).unwrap();
    echo.lines().next().unwrap().trim_start_matches("# config_sha256=").to_string()
}

fn assert_hash_everywhere(dir: &Path) {
    let hash = hash_of(dir);
    assert_eq!(hash.len(), 64);
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "ini") {
            continue;
        }
        let body = std::fs::read_to_string(&path).unwrap();
        assert!(body.contains(&hash), "{} lacks the config hash", path.display());
    }
}

#[test]
fn levels_on_small_capacitance_has_levels_and_one_photon_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "[circuit]\nC = 80e-15\nbeta_L = 1.39\n");
    let o = squidsim(&["levels", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("levels_diagram.csv")).unwrap();
    let levels: std::collections::BTreeSet<&str> = csv.lines().skip(2).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert!(levels.len() >= 4, "{levels:?}");
    let model: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("levels_model.json")).unwrap()).unwrap();
    let hits = model["data"]["resonances"].as_array().unwrap();
    assert!(hits.iter().any(|h| h["n"] == 1), "{hits:?}");
    let svg = std::fs::read_to_string(out.join("levels.svg")).unwrap();
    assert!(svg.contains("n=1"));
    assert_hash_everywhere(&out);
}

#[test]
fn single_undriven_cell_equals_static_ground_for_both_solvers() {
    let tmp = tempfile::tempdir().unwrap();
    for (bias, want) in [("0.499", 0.0), ("0.5", 0.5), ("0.501", 1.0)] {
        for solver in ["rate", "full"] {
            let out = tmp.path().join(format!("{bias}_{solver}"));
            let cfg = write_config(
                tmp.path(),
                &format!(
                    "[circuit]\nC = 80e-15\n[sweep]\nbias_min = {bias}\nbias_max = {bias}\nn_bias = 1\np_min = -inf\np_max = -inf\nn_power = 1\n"
                ),
            );
            let o = squidsim(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--solver", solver]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            let csv = std::fs::read_to_string(out.join("sweep_grid.csv")).unwrap();
            let row = csv.lines().nth(2).unwrap();
            let got: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
            assert_eq!(got, want, "bias {bias} solver {solver}");
            assert_hash_everywhere(&out);
        }
    }
}

#[test]
fn verify_on_defaults_exits_zero() {
    let o = squidsim(&["verify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let table = String::from_utf8_lossy(&o.stdout);
    assert_eq!(table.matches("PASS").count(), 4, "{table}");
}

#[test]
fn errors_have_distinct_codes_and_json() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.ini");
    let o = squidsim(&["levels", "--config", missing.to_str().unwrap(), "--json-errors"]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "parse_error");

    let cfg = write_config(tmp.path(), "[circuit]\nIc = 1e-6\nbeta_L = 1.2\n");
    let o = squidsim(&["levels", "--config", &cfg, "--json-errors"]);
    assert_eq!(o.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "validation_error");

    let cfg = write_config(tmp.path(), "[circuit]\nC 80e-15\n");
    let o = squidsim(&["scan", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn nominal_capacitance_sweep_reports_extraction_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[sweep]\nn_bias = 3\nn_power = 2\n");
    let o = squidsim(&["sweep", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap(), "--json-errors"]);
    assert_eq!(o.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&o.stderr);
    let lines: Vec<serde_json::Value> = stderr.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines[0]["warning"].as_str().unwrap().contains("LC frequency"), "{stderr}");
    assert_eq!(lines.last().unwrap()["error"]["kind"], "sweep_error");
}
