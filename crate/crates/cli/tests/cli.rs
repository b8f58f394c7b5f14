use std::fs;
use std::path::Path;
use std::process::Command;

use jcurve::bubble::FamilyManifest;
use jcurve::io::{write_sample, GridDescriptor};
use jcurve::{Grid, MapSample};
use jcurve_cli::{emit_svg, render_svg, PlotSpec, Series};
use serde_json::{json, Value};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_jcurve");

fn jcurve(args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// Runs `cmd` with `params` into a fresh directory and returns the exit code, the
/// directory and the parsed report (if any).
fn run_with(cmd: &str, params: Value, extra: &[&str]) -> (i32, TempDir, Option<Value>) {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, json!({ "params": params }).to_string()).unwrap();
    let out = dir.path().join("out");
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let (code, _) = jcurve(&args);
    let report = fs::read_to_string(out.join("report.json"))
        .ok()
        .map(|s| serde_json::from_str(&s).unwrap());
    (code, dir, report)
}

fn ok(cmd: &str, params: Value) -> (TempDir, Value) {
    let (code, dir, report) = run_with(cmd, params, &["--svg"]);
    assert_eq!(code, 0, "{cmd} failed");
    let report = report.unwrap();
    assert_eq!(report["command"], cmd);
    assert_eq!(report["version"], jcurve::VERSION);
    assert_eq!(report["status"], "ok");
    (dir, report)
}

fn csv(dir: &TempDir, name: &str) -> Vec<Vec<String>> {
    fs::read_to_string(dir.path().join("out").join(name))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn collar_rows_carry_upper_bounds() {
    let (dir, rep) = ok("collar", json!({}));
    let rows = csv(&dir, "collar.csv");
    let pi2 = std::f64::consts::PI.powi(2);
    let want = [(0.25, 4.0 * pi2), (0.5, 2.0 * pi2), (1.0, pi2)];
    assert_eq!(rows.len(), 3);
    for (row, (l, up)) in rows.iter().zip(want) {
        assert_eq!(num(&row[0]), l);
        assert!((num(&row[1]) - up).abs() < 1e-12);
        assert_eq!(row[5], "true");
        assert!(num(&row[6]) <= 1e-4);
    }
    assert_eq!(rep["config"]["params"]["lengths"], json!([0.25, 0.5, 1.0]));
    assert!(dir.path().join("out/collar.svg").exists());
}

#[test]
fn collar_length_beyond_one_has_no_width() {
    let (dir, _) = ok("collar", json!({ "lengths": [2.0], "curvature_h": 0.01 }));
    let rows = csv(&dir, "collar.csv");
    assert_eq!(rows[0][3], "");
    assert_eq!(rows[0][5], "");
}

#[test]
fn plumb_default_family_pinches_first_neck() {
    let (dir, rep) = ok("plumb", json!({}));
    let r = &rep["result"];
    assert_eq!((r["genus"].as_u64(), r["teich_dimension"].as_u64()), (Some(2), Some(3)));
    let trend = r["trend"].as_array().unwrap();
    assert_eq!(trend[0]["degenerating"], true);
    assert_eq!(trend[1]["degenerating"], false);
    assert_eq!(csv(&dir, "plumb.csv").len(), 12);
}

#[test]
fn plumb_rejects_bad_graph() {
    let graph = json!({ "vertices": 1, "edges": [], "tails": [0], "marked_tails": [] });
    let (code, _, _) = run_with("plumb", json!({ "graph": graph }), &[]);
    assert_eq!(code, 1);
}

#[test]
fn cauchy_errors_shrink_under_refinement() {
    let (dir, rep) = ok(
        "cauchy",
        json!({ "resolutions": [65, 129], "cz_exponents": [2.0], "cz_trials": 2, "cz_resolution": 33 }),
    );
    let rows = csv(&dir, "cauchy.csv");
    for r in &rows {
        assert!(num(&r[3]) <= 5.0, "conj error above 5h");
    }
    let ratio = rep["result"]["conj_error_ratios"][0].as_f64().unwrap();
    assert!((1.5..=2.5).contains(&ratio), "{ratio}");
}

#[test]
fn dbar_solve_converges_for_small_shear() {
    let (dir, rep) = ok("dbar-solve", json!({ "resolution": 33 }));
    let solve = &rep["result"]["solve"];
    assert_eq!(solve["converged"], true);
    assert!(solve["residual"].as_f64().unwrap() <= 1e-8);
    assert!((rep["result"]["structure_distance"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(csv(&dir, "dbar_solve.csv").len(), solve["contraction"].as_array().unwrap().len());
}

#[test]
fn dbar_solve_nonconvergence_exits_two_with_report() {
    let (code, _, rep) = run_with("dbar-solve", json!({ "resolution": 33, "delta": 0.95, "max_iter": 5 }), &[]);
    assert_eq!(code, 2);
    let rep = rep.expect("report is written on numerical failure");
    assert!(rep["status"].as_str().unwrap().starts_with("numerical failure"));
    assert_eq!(rep["result"]["solve"]["converged"], false);
}

#[test]
fn decay_single_mode_is_removable() {
    let (dir, rep) = ok("decay", json!({ "random_maps": 10 }));
    let r = &rep["result"];
    assert!((r["ratio"].as_f64().unwrap() - 0.26580).abs() < 0.01 * 0.26580);
    assert_eq!(r["verdict"], "removable");
    assert_eq!(r["random_family"]["holds"], true);
    assert_eq!(csv(&dir, "decay.csv").len(), 10);
    let fitted = r["spectrum"]["fitted"].as_array().unwrap();
    assert_eq!(fitted.len(), 1);
    assert_eq!(fitted[0]["k"], 1);
}

#[test]
fn decay_growing_toward_puncture_is_not_removable() {
    let (_, rep) = ok(
        "decay",
        json!({ "puncture": "end", "modes": [{ "k": 1, "re": 1.0 }], "random_maps": 0 }),
    );
    assert_eq!(rep["result"]["verdict"], "non-removable");
    assert!(rep["result"]["random_family"].is_null());
}

#[test]
fn decay_reads_stored_sample() {
    let dir = TempDir::new().unwrap();
    let g = Grid::cylinder(0.0, 10.0, 8, 32).unwrap();
    let u = MapSample::scalar(&g, |z| (-z).exp()).unwrap();
    let (c, j) = (dir.path().join("u.csv"), dir.path().join("u.json"));
    write_sample(&u, &c, &j).unwrap();
    let params = json!({
        "input": { "csv": c, "grid": j },
        "puncture": "end",
        "random_maps": 0
    });
    let (_, rep) = ok("decay", params);
    assert_eq!(rep["result"]["verdict"], "removable");
    assert_eq!(rep["result"]["removability"]["energies"].as_array().unwrap().len(), 10);
}

#[test]
fn strip_eigen_quarter_turn_row() {
    let (dir, _) = ok("strip-eigen", json!({ "betas": [std::f64::consts::FRAC_PI_2] }));
    let rows = csv(&dir, "strip_eigen.csv");
    assert!((num(&rows[0][1]) - 2.4674).abs() < 1e-3);
    assert!((num(&rows[0][2]) - 0.15883).abs() < 1e-4);
    assert_eq!(rows[0][3], "0");
}

#[test]
fn strip_eigen_equal_subspaces_have_kernel() {
    let (dir, _) = ok("strip-eigen", json!({ "w0_angles": [0.0, 0.0], "betas": [0.0], "cells": 200 }));
    let rows = csv(&dir, "strip_eigen.csv");
    assert_eq!(rows[0][3], "2");
}

#[test]
fn three_strips_has_no_violations() {
    let (_, rep) = ok("three-strips", json!({ "alphas": [0.05, 1.0] }));
    assert_eq!(rep["result"]["violations"], 0);
}

#[test]
fn corner_tables() {
    let (dir, rep) = ok("corner", json!({ "rings": 6, "nodes": 61 }));
    assert_eq!(rep["result"]["p_star"], 4.0);
    assert_eq!(csv(&dir, "corner_rings.csv").len(), 6);
    let exps = csv(&dir, "corner_exponents.csv");
    assert_eq!(exps.len(), 6);
    for r in exps {
        assert!(num(&r[2]) > 2.0);
    }
}

fn small_bubble() -> Value {
    json!({ "synthetic": { "n_min": 2, "n_max": 4, "resolution": 129 } })
}

#[test]
fn bubble_scan_synthetic_family() {
    let (dir, rep) = ok("bubble-scan", small_bubble());
    let pts = rep["result"]["report"]["points"].as_array().unwrap();
    assert_eq!(pts.len(), 1);
    let h = rep["result"]["grid_spacing"].as_f64().unwrap();
    let (x, y) = (pts[0][0].as_f64().unwrap(), pts[0][1].as_f64().unwrap());
    assert!(x.hypot(y) <= h);
    assert!(!csv(&dir, "bubble.csv").is_empty());
}

fn write_family(dir: &Path, members: &[MapSample]) {
    let mut names = Vec::new();
    for (n, u) in members.iter().enumerate() {
        let name = format!("u{n}.csv");
        write_sample(u, &dir.join(&name), &dir.join(format!("u{n}.json"))).unwrap();
        names.push(name);
    }
    let manifest = FamilyManifest {
        grid: GridDescriptor::of(&members[0]),
        members: names,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string(&manifest).unwrap()).unwrap();
}

#[test]
fn bubble_scan_convergent_family_directory() {
    let fam = TempDir::new().unwrap();
    let g = Grid::disk(1.0, 65).unwrap();
    let members: Vec<_> = (1..=4)
        .map(|n| MapSample::scalar(&g, |z| z * (0.1 + 0.01 / n as f64)).unwrap())
        .collect();
    write_family(fam.path(), &members);
    let (_, rep) = ok("bubble-scan", json!({ "family": fam.path() }));
    assert!(rep["result"]["report"]["points"].as_array().unwrap().is_empty());
    assert!(rep["result"]["truth"].is_null());
}

#[test]
fn exit_code_contract() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let bad_json = dir.path().join("bad.json");
    fs::write(&bad_json, "{ not json").unwrap();
    assert_eq!(jcurve(&["collar", "--config", bad_json.to_str().unwrap(), "--out", out]).0, 1);

    let (code, _, _) = run_with("collar", json!({ "lenghts": [1.0] }), &[]);
    assert_eq!(code, 1, "unknown keys are rejected");
    let (code, _, _) = run_with("dbar-solve", json!({ "tol": -1.0 }), &[]);
    assert_eq!(code, 1, "tolerances must be positive");
    let (code, _, _) = run_with("strip-eigen", json!({ "cells": 10 }), &[]);
    assert_eq!(code, 1);

    assert_eq!(jcurve(&["no-such-command"]).0, 1);
    assert_eq!(jcurve(&["collar", "--seed", "-3", "--out", out]).0, 1);
    assert_eq!(jcurve(&["--help"]).0, 0);
    assert_eq!(jcurve(&["--version"]).0, 0);

    let missing = dir.path().join("missing.json");
    assert_eq!(jcurve(&["collar", "--config", missing.to_str().unwrap(), "--out", out]).0, 3);
    let (code, _, _) = run_with("bubble-scan", json!({ "family": dir.path().join("nowhere") }), &[]);
    assert_eq!(code, 3, "input paths are checked before computing");

    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let nested = blocker.join("out");
    assert_eq!(jcurve(&["collar", "--out", nested.to_str().unwrap()]).0, 3);
}

#[test]
fn config_file_supplies_seed_and_svg() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    let out = dir.path().join("o");
    fs::write(&cfg, json!({ "seed": 42, "svg": true, "out": out }).to_string()).unwrap();
    assert_eq!(jcurve(&["three-strips", "--config", cfg.to_str().unwrap()]).0, 0);
    let rep: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(rep["config"]["seed"], 42);
    assert_eq!(rep["config"]["svg"], true);
    assert!(out.join("three_strips.svg").exists());
    // The flag overrides the file.
    assert_eq!(jcurve(&["three-strips", "--config", cfg.to_str().unwrap(), "--seed", "7"]).0, 0);
    let rep: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(rep["config"]["seed"], 7);
}

fn spec() -> PlotSpec {
    PlotSpec {
        title: "t".into(),
        x_label: "x".into(),
        y_label: "y".into(),
        log_y: false,
    }
}

#[test]
fn svg_rejects_empty_series() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("a.svg");
    assert!(emit_svg(&[], &spec(), &p).is_err());
    assert!(emit_svg(&[Series::new("e", vec![])], &spec(), &p).is_err());
    assert!(!p.exists());
}

#[test]
fn svg_single_point_is_a_marker() {
    let s = render_svg(&[Series::new("one", vec![(1.0, 2.0)])], &spec()).unwrap();
    assert!(s.contains("<circle"));
    assert!(!s.contains("<polyline"));
    assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
}

#[test]
fn svg_is_byte_deterministic_and_atomic() {
    let dir = TempDir::new().unwrap();
    let series = [
        Series::new("a", vec![(0.0, 1.0), (1.0, 0.1), (2.0, 0.01)]),
        Series::new("b & c", vec![(0.0, 2.0), (2.0, 0.5)]),
    ];
    let mut sp = spec();
    sp.log_y = true;
    let (p, q) = (dir.path().join("p.svg"), dir.path().join("q.svg"));
    emit_svg(&series, &sp, &p).unwrap();
    emit_svg(&series, &sp, &q).unwrap();
    let (a, b) = (fs::read(&p).unwrap(), fs::read(&q).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.matches("<polyline").count(), 2);
    assert!(text.contains("b &amp; c"));
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn log_plot_drops_nonpositive_values() {
    let mut sp = spec();
    sp.log_y = true;
    assert!(render_svg(&[Series::new("z", vec![(0.0, 0.0), (1.0, -1.0)])], &sp).is_err());
    let s = render_svg(&[Series::new("z", vec![(0.0, 0.0), (1.0, 10.0)])], &sp).unwrap();
    assert!(s.contains("<circle") && !s.contains("<polyline"));
}

#[test]
fn complex_parameters_round_trip_in_report() {
    let params = json!({
        "graph": { "vertices": 1, "edges": [{ "v": [0, 0] }], "marked_tails": [0] },
        "family": [{ "edges": [[0.5, 0.0]] }, { "edges": [[0.05, 0.0]] }]
    });
    let (_, rep) = ok("plumb", params);
    assert_eq!(rep["config"]["params"]["family"][1]["edges"][0], json!([0.05, 0.0]));
}
