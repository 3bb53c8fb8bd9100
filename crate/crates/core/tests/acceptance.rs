//! Acceptance criteria. Prints one `PASS`/`FAIL` line per criterion and
//! exits non-zero if any criterion fails. Each criterion also carries a
//! wall-clock budget.

mod common;

use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use gtd::contact::{
    flat_phase_metric, gtd_metric, hessian_generating_metric, legendre_invariance_check,
    GtdMetricSpec,
};
use gtd::geodesic::*;
use gtd::geometry::{christoffel, riemann, MetricField};
use gtd::symexpr::parse;
use gtd::vdw::{self, StatePoint, VdwParams};

type Check = Result<String, String>;

/// Name, symbolic metric, numeric oracle and sample points.
type OracleCase = (
    &'static str,
    MetricField,
    Box<MetricFn<'static>>,
    Vec<Vec<f64>>,
);

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ideal_gas_flatness() -> Check {
    let c = vdw::vdw_curvature(&VdwParams::ideal(1.0).unwrap()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in 0..20 {
        for j in 0..20 {
            let u = 0.5 + 4.5 * f64::from(i) / 19.0;
            let v = 0.5 + 4.5 * f64::from(j) / 19.0;
            worst = worst.max(c.scalar_at(&[u, v]).map_err(|e| e.to_string())?.abs());
        }
    }
    ensure(worst < 1e-9, format!("max |R| = {worst:e} (limit 1e-9)"))
}

fn pipeline_vs_transcription() -> Check {
    let p = VdwParams::new(1.0, 1.0, 1.0).unwrap();
    let induced = vdw::vdw_induced_metric(&p).map_err(|e| e.to_string())?;
    let hand = vdw_metric_numeric(1.0, 1.0, 1.0);
    let mut r = rng(100);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (u, v) = vdw_point(&mut r, 1.0, 1.0);
        let got = induced.components_at(&[u, v]).map_err(|e| e.to_string())?;
        let want = hand(&[u, v]);
        let scale = want.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs() / scale);
        }
    }
    ensure(
        worst < 1e-10,
        format!("max relative deviation {worst:e} (limit 1e-10)"),
    )
}

fn denominator_identities() -> Check {
    let mut r = rng(101);
    let mut worst = 0.0f64;
    let values = [0.0, 0.05, 1.0];
    for k in 0..1000 {
        let (a, b) = (values[k % 3], values[(k / 3) % 3]);
        let p = VdwParams::new(a, b, 1.0).unwrap();
        let (u, v) = vdw_point(&mut r, a, b);
        let c =
            vdw::denominator_factor_check(&p, StatePoint { u, v }).map_err(|e| e.to_string())?;
        let s1 = (v.powi(3) * u).abs() + 2.0 * v * v * a + 6.0 * v * b * a + 3.0 * b * b * a;
        let s2 = (5.0 * u * v * v).abs() + (3.0 * u * v * b).abs() + a * v + 3.0 * a * b;
        worst = worst
            .max((c.lhs1 - c.rhs1).abs() / s1)
            .max((c.lhs2 - c.rhs2).abs() / s2);
    }
    ensure(
        worst < 1e-12,
        format!("max relative deviation {worst:e} over 1000 points (limit 1e-12)"),
    )
}

fn critical_point_root() -> Check {
    let p = VdwParams::new(1.0, 1.0, 1.0).unwrap();
    let crit = vdw::singular_locus(1.0 / 27.0, &p).map_err(|e| e.to_string())?;
    let none = vdw::singular_locus(0.75, &p).map_err(|e| e.to_string())?;
    let detail = format!(
        "P_c roots {:?}, P=0.75 roots {}",
        crit.roots
            .iter()
            .map(|r| (r.v, r.residual))
            .collect::<Vec<_>>(),
        none.roots.len()
    );
    let ok = crit.roots.len() == 1
        && crit.roots[0].double
        && (crit.roots[0].v - 3.0).abs() < 1e-6
        && crit.roots[0].residual < 1e-10
        && none.roots.is_empty();
    ensure(ok, detail)
}

fn curvature_divergence() -> Check {
    let p = VdwParams::new(1.0, 1.0, 1.0).unwrap();
    let c = vdw::vdw_curvature(&p).map_err(|e| e.to_string())?;
    let u_star = vdw::phase_boundary_energy(3.0, &p);
    // distances 1, 10^-1/2, …, 10^-7 from the endpoint
    let mut samples = Vec::new();
    for k in 0..=14 {
        let d = 10f64.powf(-f64::from(k) / 2.0);
        match c.scalar_at(&[u_star + d, 3.0]) {
            Ok(r) => samples.push(r.abs()),
            Err(_) => break,
        }
    }
    if samples.len() < 10 {
        return Err(format!("only {} regular samples", samples.len()));
    }
    let tail = &samples[samples.len() - 10..];
    let monotone = tail.windows(2).all(|w| w[1] > w[0]);
    let peak = samples.iter().copied().fold(0.0, f64::max);
    ensure(
        monotone && peak > 1e6,
        format!("max |R| = {peak:e}, last 10 increasing: {monotone}"),
    )
}

fn fd_oracle() -> Check {
    let vdw_p = VdwParams::new(1.0, 1.0, 1.0).unwrap();
    let ideal = vdw::ideal_gas_metric(1.0);
    let cases: Vec<OracleCase> = {
        let mut r = rng(102);
        let mut pts = |f: &mut dyn FnMut(&mut rand_chacha::ChaCha8Rng) -> Vec<f64>| {
            (0..50).map(|_| f(&mut r)).collect::<Vec<_>>()
        };
        let flat_pts = pts(&mut |r| vec![uniform(r, -5.0, 5.0), uniform(r, -5.0, 5.0)]);
        let sphere_pts = pts(&mut |r| vec![uniform(r, -0.9, 0.9), uniform(r, -3.0, 3.0)]);
        let ideal_pts = pts(&mut |r| vec![uniform(r, 0.5, 5.0), uniform(r, 0.5, 5.0)]);
        let vdw_pts = pts(&mut |r| {
            let (u, v) = vdw_regular_point(r, 1.0, 1.0);
            vec![u, v]
        });
        let f = flat();
        let s = sphere();
        vec![
            (
                "flat",
                f.clone(),
                Box::new(move |x: &[f64]| f.components_at(x).unwrap()),
                flat_pts,
            ),
            (
                "2-sphere",
                s.clone(),
                Box::new(move |x: &[f64]| s.components_at(x).unwrap()),
                sphere_pts,
            ),
            (
                "ideal gas",
                ideal,
                Box::new(|x: &[f64]| vec![-3.75 / (x[0] * x[0]), 0.0, 0.0, -2.5 / (x[1] * x[1])]),
                ideal_pts,
            ),
            (
                "vdW",
                vdw::vdw_metric_closed(&vdw_p),
                Box::new(vdw_metric_numeric(1.0, 1.0, 1.0)),
                vdw_pts,
            ),
        ]
    };
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, g, oracle, points) in cases {
        let gamma = christoffel(&g).map_err(|e| e.to_string())?;
        let curv = riemann(&g).map_err(|e| e.to_string())?;
        let (mut worst_g, mut worst_r) = (0.0f64, 0.0f64);
        for p in &points {
            let exact = gamma.eval(p).map_err(|e| e.to_string())?;
            let approx = fd_christoffel(&*oracle, p, 1e-5);
            let scale = exact.iter().fold(1e-12f64, |m, x| m.max(x.abs()));
            for (e, a) in exact.iter().zip(&approx) {
                worst_g = worst_g.max((e - a).abs() / scale);
            }
            let r = curv.eval(p).map_err(|e| e.to_string())?.scalar;
            let fd = fd_scalar_richardson(&*oracle, p, 1e-3);
            worst_r = worst_r.max((r - fd).abs() / r.abs().max(fd.abs()).max(1e-6));
        }
        ok &= worst_g < 1e-4 && worst_r < 1e-4;
        parts.push(format!("{name}: Γ {worst_g:.1e}, R {worst_r:.1e}"));
    }
    ensure(ok, parts.join("; "))
}

fn legendre_verdicts() -> Check {
    let gtd = legendre_invariance_check(
        &gtd_metric(&GtdMetricSpec::first_order(1.0).unwrap(), 2),
        100,
        0,
    )
    .map_err(|e| e.to_string())?;
    let hess = legendre_invariance_check(&hessian_generating_metric(2), 100, 0)
        .map_err(|e| e.to_string())?;
    let flat =
        legendre_invariance_check(&flat_phase_metric(2), 100, 0).map_err(|e| e.to_string())?;
    let ok = gtd.max_deviation < 1e-9 && hess.max_deviation > 1e-3 && flat.max_deviation > 1e-3;
    ensure(
        ok,
        format!(
            "GTD {:.1e}, Hessian {:.1e}, flat {:.1e}",
            gtd.max_deviation, hess.max_deviation, flat.max_deviation
        ),
    )
}

fn vdw_reference_sweep() -> (Arc<GeodesicSystem>, Vec<BatchItem>) {
    let p = VdwParams::new(1.0, 0.05, 1.0).unwrap();
    let sys = Arc::new(GeodesicSystem::vdw(&p).unwrap());
    let u0: Vec<f64> = (0..15).map(|k| 10.0 * f64::from(k)).collect();
    let items = shoot_batch(
        &sys,
        &[0.0, 0.1],
        &[0.0, 1.0],
        &u0,
        GeodesicOptions::default(),
        Some(&p),
        ENDPOINT_RTOL,
    );
    (sys, items)
}

fn geodesic_incompleteness() -> Check {
    let (_, items) = vdw_reference_sweep();
    let mut stops = 0;
    let mut other = Vec::new();
    for (k, item) in items.iter().enumerate() {
        match item {
            Ok((_, r))
                if matches!(r.termination, Termination::SingularBoundary { .. })
                    && r.residual.is_some_and(|x| x < 1e-2) =>
            {
                stops += 1
            }
            Ok((t, _)) => other.push(format!("U(0)={}: {:?}", 10 * k, t.termination)),
            Err(e) => other.push(format!("U(0)={}: {e}", 10 * k)),
        }
    }
    let first = other.first().cloned().unwrap_or_default();
    ensure(
        stops == 15,
        format!("{stops}/15 singular-boundary stops on the phase boundary; first other: {first}"),
    )
}

fn integrator_sanity() -> Check {
    let flat_sys = Arc::new(GeodesicSystem::unguarded(flat()).unwrap());
    let sphere_sys =
        Arc::new(GeodesicSystem::new(sphere(), None, vec![parse("1 - x^2").unwrap()]).unwrap());
    let integrate_ = |sys: &Arc<GeodesicSystem>, x0: &[f64], v0: &[f64], tau_max: f64| {
        let options = GeodesicOptions {
            tau_max,
            ..Default::default()
        };
        integrate(&GeodesicProblem {
            system: Arc::clone(sys),
            x0: x0.to_vec(),
            v0: v0.to_vec(),
            options,
        })
        .map_err(|e| e.to_string())
    };
    let line = integrate_(&flat_sys, &[0.0, 0.0], &[1.0, 2.0], 1.0)?;
    let end = line.last();
    let line_err = (end.x[0] - 1.0).abs().max((end.x[1] - 2.0).abs());

    let two_pi = std::f64::consts::TAU;
    let eq = integrate_(&sphere_sys, &[0.0, 0.0], &[0.0, 1.0], two_pi)?;
    let end = eq.last();
    let eq_err = end.x[0].abs().max((end.x[1] - two_pi).abs());

    let mut drift = affine_norm_drift(&flat_sys, &line)
        .unwrap()
        .max(affine_norm_drift(&sphere_sys, &eq).unwrap());
    let tilted = integrate_(&sphere_sys, &[0.2, 0.0], &[0.5, 0.3], 20.0)?;
    drift = drift.max(affine_norm_drift(&sphere_sys, &tilted).unwrap());
    let (sys, items) = vdw_reference_sweep();
    for (t, _) in items.iter().flatten() {
        drift = drift.max(affine_norm_drift(&sys, t).unwrap());
    }
    let unit = Arc::new(GeodesicSystem::vdw(&VdwParams::new(1.0, 1.0, 1.0).unwrap()).unwrap());
    drift = drift.max(
        affine_norm_drift(&unit, &integrate_(&unit, &[2.0, 3.0], &[0.0, 1.0], 10.0)?).unwrap(),
    );

    ensure(
        line_err < 1e-9 && drift < 1e-6 && eq_err < 1e-5,
        format!(
            "line endpoint {line_err:.1e}, max drift {drift:.1e}, equator closure {eq_err:.1e}"
        ),
    )
}

fn cli_reproducibility() -> Check {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut times = Vec::new();
    for d in &dirs {
        let t = Instant::now();
        let o = Command::new(env!("CARGO_BIN_EXE_gtd"))
            .args(["geodesics", "--format", "csv", "--format", "json", "--out"])
            .arg(d.path())
            .output()
            .map_err(|e| e.to_string())?;
        times.push(t.elapsed());
        if !o.status.success() {
            return Err(format!(
                "exit {:?}: {}",
                o.status.code(),
                String::from_utf8_lossy(&o.stderr)
            ));
        }
    }
    let mut compared = 0;
    for e in std::fs::read_dir(dirs[0].path()).unwrap() {
        let name = e.unwrap().file_name();
        let s = name.to_string_lossy();
        if s == "manifest.json" || !(s.ends_with(".csv") || s.ends_with(".json")) {
            continue;
        }
        let a = std::fs::read(dirs[0].path().join(&name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&name)).map_err(|e| format!("{s}: {e}"))?;
        if a != b {
            return Err(format!("{s} differs"));
        }
        compared += 1;
    }
    ensure(
        compared == 16 && times[1] < 2 * times[0],
        format!(
            "{compared} files byte-identical; runs {:.2?} / {:.2?}",
            times[0], times[1]
        ),
    )
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "ideal-gas flatness",
            budget: Duration::from_secs(10),
            run: ideal_gas_flatness,
        },
        Criterion {
            name: "pipeline vs transcription",
            budget: Duration::from_secs(30),
            run: pipeline_vs_transcription,
        },
        Criterion {
            name: "denominator identities",
            budget: Duration::from_secs(30),
            run: denominator_identities,
        },
        Criterion {
            name: "critical-point root",
            budget: Duration::from_secs(1),
            run: critical_point_root,
        },
        Criterion {
            name: "curvature divergence at the phase boundary",
            budget: Duration::from_secs(10),
            run: curvature_divergence,
        },
        Criterion {
            name: "finite-difference oracle",
            budget: Duration::from_secs(60),
            run: fd_oracle,
        },
        Criterion {
            name: "Legendre invariance verdicts",
            budget: Duration::from_secs(10),
            run: legendre_verdicts,
        },
        Criterion {
            name: "geodesic incompleteness",
            budget: Duration::from_secs(300),
            run: geodesic_incompleteness,
        },
        Criterion {
            name: "integrator sanity",
            budget: Duration::from_secs(30),
            run: integrator_sanity,
        },
        Criterion {
            name: "CLI reproducibility",
            budget: Duration::from_secs(120),
            run: cli_reproducibility,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget")),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {} ({:.2?} of {:.0?}): {}",
            if pass { "PASS" } else { "FAIL" },
            c.name,
            elapsed,
            c.budget,
            detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
