use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpno-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn mpno-lab")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = lab(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn bounds_product_half_has_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["bounds", "--d", "1,2,3", "--m", "4,8,16", "--fn", "product", "--sys", "half", "--omega", "1,2"]);
    assert!(stdout.contains("0 violations"), "{stdout}");
    let (header, rows) = csv_rows(&dir.path().join("bounds.csv"));
    assert_eq!(header.join(","), mpno_core::error_lab::ERROR_REPORT_COLUMNS);
    assert_eq!(rows.len(), 18);
    for w in ["1", "2"] {
        let omega_col = rows.iter().filter(|r| r[3].split(';').all(|x| x == w)).count();
        assert_eq!(omega_col, 9);
    }
    let (_, violations) = csv_rows(&dir.path().join("violations.csv"));
    assert!(violations.is_empty());
    let m = manifest(dir.path());
    assert_eq!(m["command"], "bounds");
    assert_eq!(m["summary"]["violations"], 0);
}

#[test]
fn empty_sweep_lists_give_header_only() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["bounds", "--d", "--m", "4"]);
    let text = std::fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert_eq!(text.trim_end(), mpno_core::error_lab::ERROR_REPORT_COLUMNS);
}

#[test]
fn validation_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["bounds", "--fn", "alias", "--d", "2"][..],
        &["bounds", "--sys", "quarter"],
        &["bounds", "--fn", "nonsense"],
        &["plan", "--equation", "ab,bc->aZ", "--shapes", "2x3,3x4"],
        &["plan", "--equation", "ab,bc->ac"],
        &["train", "--mode", "mixed:exact"],
        &["train", "--mode", "full", "--schedule", "default"],
        &["train", "--stabilizer", "clip:-1"],
        &["spectrum", "--max-freq", "200", "--m", "256"],
        &["modes", "--precisions", "bogus"],
    ] {
        let o = lab(dir.path(), args);
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(!o.stderr.is_empty(), "{args:?} should explain");
    }
}

#[test]
fn plan_suite_reports_library_plans() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["plan", "--format", "json"]);
    let docs: Value = serde_json::from_str(&stdout).unwrap();
    let docs = docs.as_array().unwrap();
    let suite = mpno_core::contract::bundled_suite();
    assert_eq!(docs.len(), suite.len());
    for (d, case) in docs.iter().zip(&suite) {
        let spec = mpno_core::contract::parse(case.equation, &case.shapes).unwrap();
        let greedy = mpno_core::contract::plan_greedy(&spec).unwrap();
        let optimal = mpno_core::contract::plan_flop_optimal(&spec).unwrap();
        assert_eq!(d["name"], case.name);
        assert_eq!(d["greedy"]["peak_elems"].as_u64().unwrap(), greedy.peak_intermediate_elems);
        assert_eq!(d["flop_optimal"]["peak_elems"].as_u64().unwrap(), optimal.peak_intermediate_elems);
        assert_eq!(d["flop_optimal"]["flops"].as_u64().unwrap(), optimal.total_flops);
    }
    assert!(dir.path().join("plan.json").exists());
}

#[test]
fn plan_two_operands_notes_identical_plans() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["plan", "--equation", "ab,bc->ac", "--shapes", "2x3,3x4"]);
    assert!(stdout.contains("plans identical"), "{stdout}");
}

#[test]
fn train_mixed_tanh_completes_with_finite_trace() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["train", "--mode", "mixed:half", "--stabilizer", "tanh", "--steps", "500", "--seed", "1"]);
    let (header, rows) = csv_rows(&dir.path().join("trace.csv"));
    assert_eq!(header, ["step", "phase", "loss", "nonfinite_stage"]);
    assert_eq!(rows.len(), 500);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap().is_finite() && r[3].is_empty()));
    let weights = std::fs::read(dir.path().join("weights.bin")).unwrap();
    assert_eq!(mpno_core::fno::decode_weights(&weights).unwrap().layers.len(), 1);
    assert_eq!(manifest(dir.path())["summary"]["diverged"], false);
}

#[test]
fn schedule_default_splits_phases() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["train", "--schedule", "default", "--steps", "500"]);
    let (_, rows) = csv_rows(&dir.path().join("trace.csv"));
    let phases: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert!(phases[..125].iter().all(|p| *p == "mixed"));
    assert!(phases[125..375].iter().all(|p| *p == "amp"));
    assert!(phases[375..].iter().all(|p| *p == "full"));
}

#[test]
fn scaled_input_without_stabilizer_records_nonfinite_stage() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["train", "--mode", "mixed:half", "--stabilizer", "none", "--input-scale", "1e3"]);
    let (_, rows) = csv_rows(&dir.path().join("trace.csv"));
    let last = rows.last().unwrap();
    assert!(!last[3].is_empty());
    assert!(last[0].parse::<usize>().unwrap() < 100);
    assert_eq!(manifest(dir.path())["summary"]["diverged"], true);
}

#[test]
fn spectrum_trend_over_twenty_seeds() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["spectrum", "--seeds", "20"]);
    let mean = manifest(dir.path())["summary"]["mean_spearman"].as_f64().unwrap();
    assert!(mean > 0.5, "{mean}");
    let (header, rows) = csv_rows(&dir.path().join("spectrum.csv"));
    assert_eq!(header, ["freq", "amplitude", "abs_err", "pct_err"]);
    assert_eq!(rows.len(), 200);
}

#[test]
fn spectrum_zero_amplitude_has_zero_errors() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["spectrum", "--seeds", "2", "--scale", "0"]);
    let (_, rows) = csv_rows(&dir.path().join("spectrum.csv"));
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() == 0.0 && r[3].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn alias_demo_reports_order_m_error() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["spectrum", "--alias", "--M", "1", "--omega", "1", "--m", "8"]);
    let value: f64 = stdout.trim().rsplit('=').next().unwrap().parse().unwrap();
    assert!(value >= 0.25, "{stdout}");
}

#[test]
fn modes_ablation_rows_follow_config_order() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["modes", "--cutoffs", "2,4", "--precisions", "full", "mixed:half", "--steps", "10", "--m", "16"]);
    let (_, rows) = csv_rows(&dir.path().join("modes.csv"));
    let keys: Vec<(String, String)> = rows.iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    let want: Vec<(String, String)> = [("2", "full"), ("2", "mixed:half"), ("4", "full"), ("4", "mixed:half")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    assert_eq!(keys, want);
}

#[test]
fn reruns_are_byte_identical() {
    let runs: &[&[&str]] = &[
        &["bounds", "--d", "1,2", "--m", "4,8", "--fn", "multitone:3,4", "--sys", "half", "geom:0.001,0.01,2000", "--seed", "9"],
        &["train", "--steps", "20", "--m", "16", "--seed", "3"],
        &["spectrum", "--seeds", "3", "--format", "json"],
        &["plan"],
    ];
    for args in runs {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        ok(a.path(), args);
        ok(b.path(), args);
        assert_eq!(manifest(a.path())["outputs"], manifest(b.path())["outputs"], "{args:?}");
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lab.toml");
    std::fs::write(&cfg, "d = [1]\nm = [4, 8]\nomega = [3]\nformat = \"json\"\nseed = 5\n").unwrap();
    let out = dir.path().join("run");
    ok(&out, &["bounds", "--config", cfg.to_str().unwrap(), "--m", "16"]);
    let m = manifest(&out);
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["sweep"]["ms"], serde_json::json!([16]));
    assert_eq!(m["config"]["sweep"]["omegas"], serde_json::json!([3]));
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("bounds.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 1);

    std::fs::write(&cfg, "d = [1]\ncolour = \"blue\"\n").unwrap();
    let o = lab(&out, &["bounds", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}
