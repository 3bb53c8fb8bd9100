//! Independent numeric oracles shared by the integration tests: central
//! differences of numerically evaluated metrics, and closed-form textbook
//! metrics.

#![allow(dead_code)]

use gtd::geometry::MetricField;
use gtd::symexpr::{parse, Bindings, Chart, Expr};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// `|a − b| ≤ tol · max(|a|, |b|, floor)`.
pub fn rel_close(a: f64, b: f64, tol: f64, floor: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(floor)
}

pub fn chart(names: &[&str]) -> Chart {
    Chart::new(names).unwrap()
}

pub fn flat() -> MetricField {
    MetricField::diagonal(
        chart(&["x", "y"]),
        vec![Expr::one(), Expr::one()],
        Bindings::new(),
    )
    .unwrap()
}

/// Unit 2-sphere in the chart `x = cos θ`, `φ`: `dx²/(1 − x²) + (1 − x²) dφ²`.
pub fn sphere() -> MetricField {
    MetricField::diagonal(
        chart(&["x", "p"]),
        vec![parse("1/(1 - x^2)").unwrap(), parse("1 - x^2").unwrap()],
        Bindings::new(),
    )
    .unwrap()
}

/// Numeric metric as a function of the coordinates.
pub type MetricFn<'a> = dyn Fn(&[f64]) -> Vec<f64> + 'a;

pub fn numeric(g: &MetricField) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
    move |x: &[f64]| g.components_at(x).unwrap()
}

fn step(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

/// `∂_c g_ab` by central differences, index `(a*n + b)*n + c`.
pub fn fd_metric_derivative(g: &MetricFn, x: &[f64], rel: f64) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n * n];
    for c in 0..n {
        let h = step(x[c], rel);
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[c] += h;
        xm[c] -= h;
        let (gp, gm) = (g(&xp), g(&xm));
        for ab in 0..n * n {
            d[ab * n + c] = (gp[ab] - gm[ab]) / (2.0 * h);
        }
    }
    d
}

/// `Γ^a_bc = ½ g^{ad}(∂_b g_dc + ∂_c g_bd − ∂_d g_bc)` from numeric metric
/// values only; index `(a*n + b)*n + c`.
pub fn fd_christoffel(g: &MetricFn, x: &[f64], rel: f64) -> Vec<f64> {
    let n = x.len();
    let gv = DMatrix::from_row_slice(n, n, &g(x));
    let inv = gv.try_inverse().expect("regular point");
    let dg = fd_metric_derivative(g, x, rel);
    let dgi = |a: usize, b: usize, c: usize| dg[(a * n + b) * n + c];
    let mut gamma = vec![0.0; n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut s = 0.0;
                for d in 0..n {
                    s += inv[(a, d)] * (dgi(d, c, b) + dgi(b, d, c) - dgi(b, c, d));
                }
                gamma[(a * n + b) * n + c] = 0.5 * s;
            }
        }
    }
    gamma
}

/// Scalar curvature from nested central differences of the metric, with
/// the convention `R^a_bcd = ∂_c Γ^a_db − ∂_d Γ^a_cb + Γ^a_ce Γ^e_db − Γ^a_de Γ^e_cb`,
/// `R_bd = R^a_bad`, `R = g^{bd} R_bd`.
pub fn fd_scalar(g: &MetricFn, x: &[f64], rel: f64) -> f64 {
    let n = x.len();
    let gamma = fd_christoffel(g, x, rel);
    let gi = |a: usize, b: usize, c: usize| gamma[(a * n + b) * n + c];
    // ∂_e Γ^a_bc at index ((a*n+b)*n+c)*n+e
    let mut dgamma = vec![0.0; n * n * n * n];
    for e in 0..n {
        let h = step(x[e], rel);
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[e] += h;
        xm[e] -= h;
        let (gp, gm) = (fd_christoffel(g, &xp, rel), fd_christoffel(g, &xm, rel));
        for k in 0..n * n * n {
            dgamma[k * n + e] = (gp[k] - gm[k]) / (2.0 * h);
        }
    }
    let dgi = |a: usize, b: usize, c: usize, e: usize| dgamma[((a * n + b) * n + c) * n + e];
    let riem = |a: usize, b: usize, c: usize, d: usize| {
        let mut r = dgi(a, d, b, c) - dgi(a, c, b, d);
        for e in 0..n {
            r += gi(a, c, e) * gi(e, d, b) - gi(a, d, e) * gi(e, c, b);
        }
        r
    };
    let gv = DMatrix::from_row_slice(n, n, &g(x));
    let inv = gv.try_inverse().expect("regular point");
    let mut scalar = 0.0;
    for b in 0..n {
        for d in 0..n {
            let mut ricci = 0.0;
            for a in 0..n {
                ricci += riem(a, b, a, d);
            }
            scalar += inv[(b, d)] * ricci;
        }
    }
    scalar
}

/// Richardson-extrapolated [`fd_scalar`] (steps `rel` and `rel/2`).
pub fn fd_scalar_richardson(g: &MetricFn, x: &[f64], rel: f64) -> f64 {
    let (r1, r2) = (fd_scalar(g, x, rel), fd_scalar(g, x, rel / 2.0));
    (4.0 * r2 - r1) / 3.0
}

/// Random point of the van der Waals domain: `V ∈ (b + 0.1, b + 5)`,
/// `U + a/V ∈ (0.1, 5)`.
pub fn vdw_point(rng: &mut ChaCha8Rng, a: f64, b: f64) -> (f64, f64) {
    let v = uniform(rng, b + 0.1, b + 5.0);
    let u = uniform(rng, 0.1, 5.0) - a / v;
    (u, v)
}

/// Hand transcription of the closed-form van der Waals metric, row-major.
pub fn vdw_metric_numeric(a: f64, b: f64, lambda: f64) -> impl Fn(&[f64]) -> Vec<f64> {
    move |x: &[f64]| {
        let (u, v) = (x[0], x[1]);
        let pre = lambda / 2.0 * (5.0 * u * v * v - 3.0 * u * v * b - a * v + 3.0 * a * b)
            / ((u * v + a).powi(3) * (v - b));
        let w = 2.0 * v.powi(4) * u * u - 2.0 * v.powi(3) * u * a - a * a * v * v
            + 12.0 * a * v * v * b * u
            + 6.0 * v * b * a * a
            - 6.0 * a * b * b * u * v
            - 3.0 * b * b * a * a;
        let guu = pre * (-1.5 * v * v);
        let guv = pre * (1.5 * a);
        let gvv = pre * (-w / (2.0 * v * v * (v - b) * (v - b)));
        vec![guu, guv, guv, gvv]
    }
}

/// Random van der Waals point kept away from both denominator factors.
pub fn vdw_regular_point(rng: &mut ChaCha8Rng, a: f64, b: f64) -> (f64, f64) {
    loop {
        let (u, v) = vdw_point(rng, a, b);
        let v3u = v * v * v * u;
        let d1 = v3u - 2.0 * v * v * a + 6.0 * v * b * a - 3.0 * b * b * a;
        let d2 = 5.0 * u * v * v - 3.0 * u * v * b - a * v + 3.0 * a * b;
        if d1.abs() > 0.1 * v3u.abs().max(1.0)
            && d2.abs() > 0.1 * (5.0 * u * v * v).abs().max(1.0)
            && (u * v + a).abs() > 0.1
        {
            return (u, v);
        }
    }
}
