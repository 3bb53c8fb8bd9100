use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gtd::vdw::{self, VdwParams};
use serde_json::Value;
use sha2::{Digest, Sha256};

fn gtd(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtd"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn ok(args: &[&str], out: &Path) {
    let o = gtd(args, out);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

/// `(U, V, R)` rows; `R = None` for the `inf` sentinel.
fn curvature_rows(dir: &Path) -> Vec<(f64, f64, Option<f64>)> {
    let text = fs::read_to_string(dir.join("curvature.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("U,V,R"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let r = if f[2] == "inf" {
                None
            } else {
                Some(f[2].parse().unwrap())
            };
            (f[0].parse().unwrap(), f[1].parse().unwrap(), r)
        })
        .collect()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn ideal_gas_curvature_grid_is_flat() {
    let d = tempfile::tempdir().unwrap();
    ok(
        &[
            "curvature",
            "--a",
            "0",
            "--b",
            "0",
            "--u-range",
            "0.5:5:20",
            "--v-range",
            "0.5:5:20",
        ],
        d.path(),
    );
    let rows = curvature_rows(d.path());
    assert_eq!(rows.len(), 400);
    assert!(rows
        .iter()
        .all(|(_, _, r)| r.is_some_and(|r| r.abs() < 1e-9)));
    let s = json(&d.path().join("curvature.json"));
    assert_eq!(s["flagged"], 0);
    assert_eq!(s["cells"], 400);
    assert!(s["max_abs_r"].as_f64().unwrap() < 1e-9);
}

#[test]
fn flagged_cells_trace_the_phase_boundary() {
    let d = tempfile::tempdir().unwrap();
    let (nu, lo, hi) = (40usize, 0.01, 0.4);
    let du = (hi - lo) / (nu - 1) as f64;
    ok(
        &[
            "curvature",
            "--a",
            "1",
            "--b",
            "1",
            "--u-range",
            &format!("{lo}:{hi}:{nu}"),
            "--v-range",
            "2.5:6:8",
        ],
        d.path(),
    );
    let p = VdwParams::new(1.0, 1.0, 1.0).unwrap();
    let rows = curvature_rows(d.path());
    let mut columns: BTreeMap<u64, Vec<(f64, Option<f64>)>> = BTreeMap::new();
    for (u, v, r) in &rows {
        columns.entry(v.to_bits()).or_default().push((*u, *r));
    }
    let dv = 0.5;
    // U range of a curve over the cell's V neighbourhood, widened by one U step
    let band = |curve: &dyn Fn(f64) -> f64, v: f64| {
        let ys = [curve(v - dv), curve(v), curve(v + dv)];
        (
            ys.iter().copied().fold(f64::INFINITY, f64::min) - du,
            ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) + du,
        )
    };
    let boundary = |v: f64| vdw::phase_boundary_energy(v, &p);
    // zero of the second denominator factor, also a curvature singularity
    let second = |v: f64| (v - 3.0) / (5.0 * v * v - 3.0 * v);
    let mut traced = 0;
    for (bits, col) in columns {
        let v = f64::from_bits(bits);
        let u_star = boundary(v);
        let flagged: Vec<f64> = col
            .iter()
            .filter(|(_, r)| r.is_none())
            .map(|(u, _)| *u)
            .collect();
        if u_star > lo + du && u_star < hi - du {
            assert!(
                flagged.iter().any(|u| (u - u_star).abs() <= du),
                "V={v}: U*={u_star}, flagged {flagged:?}"
            );
            traced += 1;
        }
        for u in flagged {
            let (b0, b1) = band(&boundary, v);
            let (s0, s1) = band(&second, v);
            assert!(
                (b0..=b1).contains(&u) || (s0..=s1).contains(&u),
                "V={v}: stray flag at U={u}"
            );
        }
    }
    assert!(traced >= 6);
}

#[test]
fn single_cell_grid() {
    let d = tempfile::tempdir().unwrap();
    ok(
        &[
            "curvature",
            "--a",
            "1",
            "--b",
            "1",
            "--u-range",
            "2:2:1",
            "--v-range",
            "3:3:1",
        ],
        d.path(),
    );
    let rows = curvature_rows(d.path());
    assert_eq!(rows.len(), 1);
    let expected = vdw::vdw_curvature(&VdwParams::new(1.0, 1.0, 1.0).unwrap())
        .unwrap()
        .scalar_at(&[2.0, 3.0])
        .unwrap();
    // shortest round-trip formatting preserves the value bitwise
    assert_eq!(rows[0], (2.0, 3.0, Some(expected)));
}

#[test]
fn grid_outside_the_domain_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = gtd(
        &[
            "curvature",
            "--a",
            "1",
            "--b",
            "1",
            "--u-range",
            "1:2:3",
            "--v-range",
            "0.5:2:3",
        ],
        d.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gtd:"));
}

#[test]
fn reference_sweep_writes_one_file_per_trajectory() {
    let d = tempfile::tempdir().unwrap();
    ok(
        &[
            "geodesics",
            "--format",
            "csv",
            "--format",
            "json",
            "--format",
            "svg",
        ],
        d.path(),
    );
    let records = json(&d.path().join("geodesics.json"));
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 15);
    for (k, r) in records.iter().enumerate() {
        assert_eq!(r["u0"].as_f64().unwrap(), 10.0 * k as f64);
        let csv = fs::read_to_string(d.path().join(format!("geodesic_{k:03}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("tau,U,V,dU,dV"));
        assert_eq!(lines.count(), r["samples"].as_u64().unwrap() as usize);
        assert!(r["report"]["residual"].is_number());
    }
    let svg = fs::read_to_string(d.path().join("geodesics.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert_eq!(svg.matches("<polyline").count(), 15);
}

/// Every trajectory of the reference sweep (`a = 1`, `b = 0.05`,
/// `V(0) = 0.1`, `U(0) ∈ {0, 10, …, 140}`) is expected to be classified as
/// incomplete at the phase boundary.
#[test]
fn reference_sweep_is_incomplete_at_the_phase_boundary() {
    let d = tempfile::tempdir().unwrap();
    ok(&["geodesics", "--format", "json"], d.path());
    let records = json(&d.path().join("geodesics.json"));
    let classes: Vec<&str> = records
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["report"]["classification"].as_str().unwrap())
        .collect();
    assert!(
        classes.iter().all(|c| *c == "incomplete_at_phase_boundary"),
        "{classes:?}"
    );
}

#[test]
fn flat_sweep_is_complete() {
    let d = tempfile::tempdir().unwrap();
    ok(
        &[
            "geodesics",
            "--system",
            "flat",
            "--u0-range",
            "-1:1:5",
            "--v0",
            "0",
            "--tau-max",
            "3",
        ],
        d.path(),
    );
    let records = json(&d.path().join("geodesics.json"));
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 5);
    for r in records {
        assert_eq!(r["report"]["classification"], "complete");
        assert_eq!(r["report"]["tau_end"], 3.0);
    }
}

#[test]
fn empty_sweep() {
    let d = tempfile::tempdir().unwrap();
    ok(&["geodesics", "--u0-range", "0:140:0"], d.path());
    assert_eq!(json(&d.path().join("geodesics.json")), Value::Array(vec![]));
    assert!(!d.path().join("geodesic_000.csv").exists());
}

#[test]
fn failed_items_set_the_exit_code() {
    let d = tempfile::tempdir().unwrap();
    // U(0) = −20 violates U + a/V > 0 at V = 0.1
    let o = gtd(
        &["geodesics", "--u0-range", "-20:10:2", "--tau-max", "1"],
        d.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let records = json(&d.path().join("geodesics.json"));
    assert!(records[0]["error"].is_string());
    assert!(records[1]["error"].is_null() && records[1]["report"].is_object());
    assert_eq!(json(&d.path().join("manifest.json"))["failures"], 1);
}

#[test]
fn locus_examples() {
    let root = |args: &[&str]| {
        let d = tempfile::tempdir().unwrap();
        ok(args, d.path());
        json(&d.path().join("locus.json"))
    };
    let crit = root(&[
        "locus",
        "--a",
        "1",
        "--b",
        "1",
        "--pressure",
        &(1.0f64 / 27.0).to_string(),
    ]);
    let roots = crit["roots"].as_array().unwrap();
    assert_eq!(roots.len(), 1);
    assert!((roots[0]["v"].as_f64().unwrap() - 3.0).abs() < 1e-6);
    assert_eq!(crit["critical"]["volume"], 3.0);

    assert_eq!(
        root(&["locus", "--a", "1", "--b", "1", "--pressure", "0.75"])["roots"],
        Value::Array(vec![])
    );

    let b0 = root(&["locus", "--a", "1", "--b", "0", "--pressure", "1"]);
    let roots = b0["roots"].as_array().unwrap();
    assert_eq!(roots.len(), 1);
    assert!((roots[0]["v"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(b0["critical"].is_null());

    let d = tempfile::tempdir().unwrap();
    assert_eq!(
        gtd(&["locus", "--pressure", "-1"], d.path()).status.code(),
        Some(2)
    );
}

#[test]
fn legendre_verdicts() {
    for (metric, verdict) in [
        ("gtd-first-order", "PASS"),
        ("gtd-second-order", "PASS"),
        ("hessian", "FAIL"),
        ("flat", "FAIL"),
    ] {
        let d = tempfile::tempdir().unwrap();
        ok(&["legendre", "--metric", metric], d.path());
        let v = json(&d.path().join("legendre.json"));
        assert_eq!(v["verdict"], verdict, "{metric}: {v}");
        assert_eq!(v["trials"], 100);
        if verdict == "FAIL" {
            assert!(v["max_deviation"].as_f64().unwrap() > 1e-3);
        }
    }
}

#[test]
fn outputs_are_reproducible_and_checksummed() {
    let runs: [&[&str]; 3] = [
        &[
            "curvature",
            "--a",
            "1",
            "--b",
            "1",
            "--u-range",
            "0.05:1:10",
            "--v-range",
            "1.5:5:6",
        ],
        &[
            "geodesics",
            "--u0-range",
            "0:140:4",
            "--format",
            "csv",
            "--format",
            "json",
            "--format",
            "svg",
        ],
        &["legendre", "--metric", "hessian", "--seed", "9"],
    ];
    for args in runs {
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        ok(args, d1.path());
        ok(args, d2.path());
        let (mut f1, mut f2) = (files(d1.path()), files(d2.path()));
        let manifest: Value = serde_json::from_slice(&f1.remove("manifest.json").unwrap()).unwrap();
        f2.remove("manifest.json");
        assert_eq!(f1, f2, "{args:?}");
        let outputs = manifest["outputs"].as_array().unwrap();
        assert_eq!(outputs.len(), f1.len());
        for o in outputs {
            let bytes = &f1[o["file"].as_str().unwrap()];
            assert_eq!(o["bytes"].as_u64().unwrap() as usize, bytes.len());
            assert_eq!(
                o["sha256"].as_str().unwrap(),
                format!("{:x}", Sha256::digest(bytes))
            );
        }
        assert_eq!(manifest["tool"], "gtd");
        assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn flags_override_the_config_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"a": 1, "b": 1, "formats": ["json"], "locus": {"pressure": 0.75}}"#,
    )
    .unwrap();
    let out = d.path().join("out");
    ok(&["locus", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(json(&out.join("locus.json"))["roots"], Value::Array(vec![]));
    assert!(!out.join("curvature.csv").exists());

    ok(
        &[
            "locus",
            "--config",
            cfg.to_str().unwrap(),
            "--pressure",
            "0.01",
            "--b",
            "0.5",
        ],
        &out,
    );
    let v = json(&out.join("locus.json"));
    assert_eq!(v["pressure"], 0.01);
    assert_eq!(v["params"]["a"], 1.0);
    assert_eq!(v["params"]["b"], 0.5);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["config"]["formats"], serde_json::json!(["json"]));

    fs::write(&cfg, r#"{"a": 1, "colour": "red"}"#).unwrap();
    assert_eq!(
        gtd(&["locus", "--config", cfg.to_str().unwrap()], &out)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        gtd(&["locus", "--config", "/nonexistent/run.json"], &out)
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn invalid_parameters_exit_with_an_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(
        gtd(&["curvature", "--a", "-1"], d.path()).status.code(),
        Some(2)
    );
    assert_eq!(
        gtd(&["geodesics", "--rtol", "0"], d.path()).status.code(),
        Some(2)
    );
    assert_ne!(gtd(&["bogus"], d.path()).status.code(), Some(0));
}
