//! The `actin` binary end to end.

mod support;

use std::path::Path;

use serde_json::{json, Value};
use support::*;
use tempfile::tempdir;

fn write_config(dir: &Path, name: &str, value: &Value) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    path
}

fn derive_json(extra: &[&str]) -> Value {
    let mut args = vec!["derive-params", "--json"];
    args.extend_from_slice(extra);
    let o = actin(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn derive_params_defaults_land_on_the_reference_values() {
    let si = &derive_json(&[])["si"];
    let expected = [
        ("bjerrum_length_m", 7.1e-10),
        ("c0_farad", 96e-18),
        ("l_henry", 1.7e-12),
        ("r1_ohm", 6.11e6),
        ("r2_ohm", 0.87e6),
    ];
    for (key, want) in expected {
        let got = si[key].as_f64().unwrap();
        assert!((got / want - 1.0).abs() < 0.05, "{key}: {got} vs {want}");
    }
}

#[test]
fn derive_params_table_agrees_with_json() {
    let report = derive_json(&[]);
    let o = actin(&["derive-params"]);
    let table = stdout(&o);
    let row = |name: &str| -> f64 {
        let line = table
            .lines()
            .find(|l| l.split_whitespace().next() == Some(name))
            .unwrap_or_else(|| panic!("no row {name} in\n{table}"));
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    for (name, key) in [
        ("bjerrum_length", "bjerrum_length_m"),
        ("C0", "c0_farad"),
        ("L", "l_henry"),
        ("R1", "r1_ohm"),
        ("R2", "r2_ohm"),
    ] {
        let exact = report["si"][key].as_f64().unwrap();
        assert!((row(name) / exact - 1.0).abs() < 1e-4, "{name}");
    }
}

#[test]
fn halving_the_dielectric_constant_doubles_the_bjerrum_length() {
    let base = derive_json(&[])["si"]["bjerrum_length_m"].as_f64().unwrap();
    let half = derive_json(&["--dielectric-constant", "40"])["si"]["bjerrum_length_m"]
        .as_f64()
        .unwrap();
    assert!((half / base - 2.0).abs() < 1e-12);
}

#[test]
fn derive_params_rejects_unphysical_inputs() {
    let o = actin(&["derive-params", "--temperature-k", "-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("temperature_k"));
}

#[test]
fn zero_stimulus_run_writes_an_all_zero_trace() {
    let dir = tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "zero.json",
        &json!({
            "filament": {"n_cells": 20, "b": 0.1, "derive": {}},
            "run": {"t_end_ns": 1.0}
        }),
    );
    let out = dir.path().join("out");
    simulate(&cfg, &out);
    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 21);
    assert_eq!(header[0], "t_ns");
    assert_eq!(header[20], "V20");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 101);
    for row in rows {
        let fields: Vec<f64> = row.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 21);
        assert!(fields[1..].iter().all(|&v| v == 0.0));
    }
    let pbm = std::fs::read_to_string(out.join("raster.pbm")).unwrap();
    assert!(pbm.starts_with("P1"));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["raster"]["excited_pixels"], 0);
    assert!(summary["speed_m_per_s"].is_null());
    assert!(summary["effective_config"]["run"]["dt_ns"].as_f64() == Some(1e-3));
}

#[test]
fn syntax_errors_exit_one_with_a_position() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("broken.json");
    std::fs::write(&cfg, "{\n  \"run\": {\"t_end_ns\": 1.0,,}\n}\n").unwrap();
    let o = actin(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("column"), "{err}");
}

#[test]
fn unknown_keys_are_named() {
    let dir = tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "typo.json",
        &json!({
            "filament": {"n_cells": 20, "b": 0.1, "derive": {}, "dampening": 2.0},
            "run": {"t_end_ns": 1.0}
        }),
    );
    let o = actin(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dampening"), "{}", stderr(&o));
}

#[test]
fn semantic_errors_carry_the_key_path() {
    let dir = tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad_cell.json",
        &json!({
            "filament": {"n_cells": 20, "b": 0.1, "derive": {}},
            "stimuli": [{"cells": [25], "mode": "clamp", "waveform": {"kind": "tanh_step", "t0_ns": 3.0}}],
            "run": {"t_end_ns": 1.0}
        }),
    );
    let o = actin(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stimuli[0].cells"), "{}", stderr(&o));
}

#[test]
fn numerical_failure_exits_two_and_keeps_the_partial_trace() {
    let dir = tempdir().unwrap();
    let mut cfg: Value = read_json(&shipped("pulses/single_pulse.json"));
    cfg["run"]["method"] = json!("explicit_rk4");
    let path = write_config(dir.path(), "rk4.json", &cfg);
    let out = dir.path().join("out");
    let o = actin(&[
        "simulate",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let partial = std::fs::read_to_string(out.join("trace.csv.partial")).unwrap();
    assert!(partial.starts_with("t_ns,V1,"));
    assert!(partial.lines().count() >= 2);
    assert!(!out.join("summary.json").exists());
}

#[test]
fn and_u_truth_table() {
    let o = actin(&["gate", "AND_u", "--truth-table"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l == "out: 0,0,0,1"), "{text}");
    assert!(text.contains("matches expected: yes"));
}

#[test]
fn half_adder_on_both_inputs() {
    let o = actin(&["gate", "HALFADDER_f", "1", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("carry=1 sum=0"), "{text}");
}

#[test]
fn gate_json_and_rasters() {
    let dir = tempdir().unwrap();
    let o = actin(&[
        "gate",
        "XOR_f",
        "--truth-table",
        "--json",
        "--raster",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let bits: Vec<bool> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["outputs"][0]["bit"].as_bool().unwrap())
        .collect();
    assert_eq!(bits, [false, true, true, false]);
    for combo in ["00", "10", "01", "11"] {
        assert!(
            dir.path().join(format!("XOR_f_{combo}.pbm")).exists(),
            "{combo}"
        );
    }
}

#[test]
fn gate_usage_errors_exit_one() {
    assert_eq!(actin(&["gate", "NAND_x", "1", "1"]).status.code(), Some(1));
    assert_eq!(actin(&["gate", "AND_u", "1"]).status.code(), Some(1));
    assert_eq!(actin(&["gate", "AND_u", "1", "2"]).status.code(), Some(1));
    assert_eq!(
        actin(&["calibrate", "XOR_u_cascade"]).status.code(),
        Some(1)
    );
    assert_eq!(actin(&["no-such-verb"]).status.code(), Some(1));
}

#[test]
fn gate_list_names_every_library_entry() {
    let text = stdout(&actin(&["gate", "--list"]));
    for name in [
        "AND_u",
        "OR_u",
        "NOT_u",
        "XOR_u_cascade",
        "AND_f",
        "XOR_f",
        "HALFADDER_f",
        "XOR_f_lumped",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}

fn parse_csv(text: &str) -> Vec<std::collections::BTreeMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| {
            header
                .iter()
                .cloned()
                .zip(l.split(',').map(String::from))
                .collect()
        })
        .collect()
}

#[test]
fn one_point_sweep_reproduces_simulate() {
    let dir = tempdir().unwrap();
    let cfg = shipped("pulses/single_pulse.json");
    let out = dir.path().join("sim");
    simulate(&cfg, &out);
    let summary = read_json(&out.join("summary.json"));
    let o = actin(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--grid",
        "run.t_end_ns=10.0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = parse_csv(&stdout(&o));
    assert_eq!(rows.len(), 1);
    let speed: f64 = rows[0]["speed_m_per_s"].parse().unwrap();
    let level: f64 = rows[0]["readout_level"].parse().unwrap();
    assert_eq!(speed, summary["speed_m_per_s"].as_f64().unwrap());
    assert_eq!(level, summary["readout"]["level"].as_f64().unwrap());
    assert_eq!(rows[0]["status"], "ok");
}

#[test]
fn resistance_sweep_matches_individual_runs() {
    let dir = tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let o = actin(&[
        "sweep",
        shipped("pulses/single_pulse.json").to_str().unwrap(),
        "--grid",
        "filament.params.R1_ohm=6110000.0,611000.0",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = parse_csv(&std::fs::read_to_string(&csv).unwrap());
    assert_eq!(rows.len(), 2);
    for (row, file) in rows
        .iter()
        .zip(["single_pulse.json", "single_pulse_low_r1.json"])
    {
        let out = dir.path().join(file);
        simulate(&shipped(&format!("pulses/{file}")), &out);
        let speed = read_json(&out.join("summary.json"))["speed_m_per_s"]
            .as_f64()
            .unwrap();
        assert_eq!(
            row["speed_m_per_s"].parse::<f64>().unwrap(),
            speed,
            "{file}"
        );
    }
    let fast: f64 = rows[1]["speed_m_per_s"].parse().unwrap();
    let slow: f64 = rows[0]["speed_m_per_s"].parse().unwrap();
    assert!(fast > slow);
}

#[test]
fn sweep_records_failures_in_row() {
    let o = actin(&[
        "sweep",
        shipped("pulses/single_pulse.json").to_str().unwrap(),
        "--grid",
        "run.method=implicit_trapezoidal,explicit_rk4,bogus",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = parse_csv(&stdout(&o));
    let status: Vec<&str> = rows.iter().map(|r| r["status"].as_str()).collect();
    assert_eq!(status, ["ok", "numerical_error", "config_error"]);
}

#[test]
fn threshold_sweep_peaks_where_calibration_lands() {
    let dir = tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "and_f.json",
        &json!({"gate": {"name": "AND_f"}}),
    );
    let grid: Vec<String> = (5..=35)
        .map(|k| format!("{:.2}", k as f64 / 100.0))
        .collect();
    let o = actin(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--grid",
        &format!("gate.threshold_fraction={}", grid.join(",")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = parse_csv(&stdout(&o));
    let best = rows
        .iter()
        .max_by(|a, b| {
            let m = |r: &std::collections::BTreeMap<String, String>| {
                r["threshold_margin"].parse::<f64>().unwrap()
            };
            m(a).total_cmp(&m(b))
        })
        .unwrap();
    let best_theta: f64 = best["gate.threshold_fraction"].parse().unwrap();

    let cal = actin(&["calibrate", "AND_f", "--free", "threshold", "--json"]);
    assert!(cal.status.success(), "{}", stderr(&cal));
    let report: Value = serde_json::from_slice(&cal.stdout).unwrap();
    let theta = report["thresholds"][0][1].as_f64().unwrap();
    assert!(
        (best_theta - theta).abs() < 1e-12,
        "sweep {best_theta} vs calibrate {theta}"
    );
}

#[test]
fn calibrate_writes_a_spec_that_is_a_fixed_point() {
    let dir = tempdir().unwrap();
    let spec = dir.path().join("and_u.json");
    let o = actin(&["calibrate", "AND_u", "--out", spec.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let again = dir.path().join("again.json");
    let o = actin(&[
        "calibrate",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(&spec).unwrap(),
        std::fs::read(&again).unwrap()
    );
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempdir().unwrap();
    for cfg in ["pulses/collision_same_sign.json", "gates/halfadder_f.json"] {
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        simulate(&shipped(cfg), &a);
        simulate(&shipped(cfg), &b);
        let mut names: Vec<_> = std::fs::read_dir(&a)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert!(names.len() >= 3, "{names:?}");
        for name in names {
            assert_eq!(
                std::fs::read(a.join(&name)).unwrap(),
                std::fs::read(b.join(&name)).unwrap(),
                "{cfg}: {name:?}"
            );
        }
        std::fs::remove_dir_all(&a).unwrap();
        std::fs::remove_dir_all(&b).unwrap();
    }
}

#[test]
fn summaries_validate_against_the_shipped_schema() {
    let schema = summary_schema();
    let dir = tempdir().unwrap();
    for cfg in [
        "pulses/single_pulse.json",
        "pulses/collision_opposite_sign.json",
        "gates/not_u.json",
        "gates/xor_u_cascade.json",
        "gates/halfadder_f.json",
    ] {
        let out = dir.path().join(cfg.replace('/', "_"));
        simulate(&shipped(cfg), &out);
        let summary = read_json(&out.join("summary.json"));
        let errors = schema_errors(&schema, &summary);
        assert!(errors.is_empty(), "{cfg}: {errors:#?}");
        assert_eq!(summary["tool"], "actin");
        assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn schema_checker_catches_violations() {
    let schema = summary_schema();
    let dir = tempdir().unwrap();
    let out = dir.path().join("out");
    simulate(&shipped("gates/and_u.json"), &out);
    let good = read_json(&out.join("summary.json"));
    assert!(schema_errors(&schema, &good).is_empty());

    let mut extra = good.clone();
    extra["surprise"] = json!(1);
    assert!(!schema_errors(&schema, &extra).is_empty());
    let mut bad_hash = good.clone();
    bad_hash["config_hash"] = json!("XYZ");
    assert!(!schema_errors(&schema, &bad_hash).is_empty());
    let mut missing = good;
    missing.as_object_mut().unwrap().remove("trace");
    assert!(!schema_errors(&schema, &missing).is_empty());
}
