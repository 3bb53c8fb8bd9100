//! The van der Waals gas: fundamental equation, equations of state,
//! closed-form equilibrium metric, and the phase-transition cubic.

use serde::Serialize;
use thiserror::Error;

use crate::contact::{induce_metric, ContactError, FundamentalSystem, GtdMetricSpec};
use crate::geometry::{riemann, CurvatureField, GeometryError, MetricField};
use crate::symexpr::{parse, Bindings, Chart, Expr};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VdwError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("state (U={u}, V={v}) is outside the domain: {reason}")]
    Domain {
        u: f64,
        v: f64,
        reason: &'static str,
    },
    #[error("pressure must be positive and finite, got {0}")]
    Pressure(f64),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Interaction constant `a`, covolume `b` and metric constant `Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VdwParams {
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
}

impl VdwParams {
    pub fn new(a: f64, b: f64, lambda: f64) -> Result<VdwParams, VdwError> {
        if !(a.is_finite() && a >= 0.0) {
            return Err(VdwError::InvalidParams(format!(
                "a must be finite and non-negative, got {a}"
            )));
        }
        if !(b.is_finite() && b >= 0.0) {
            return Err(VdwError::InvalidParams(format!(
                "b must be finite and non-negative, got {b}"
            )));
        }
        if !lambda.is_finite() || lambda == 0.0 {
            return Err(VdwError::InvalidParams(format!(
                "lambda must be finite and nonzero, got {lambda}"
            )));
        }
        Ok(VdwParams { a, b, lambda })
    }

    pub fn ideal(lambda: f64) -> Result<VdwParams, VdwError> {
        VdwParams::new(0.0, 0.0, lambda)
    }

    pub fn is_ideal(&self) -> bool {
        self.a == 0.0 && self.b == 0.0
    }

    /// Checks `V > b` and `U + a/V > 0`.
    pub fn check(&self, u: f64, v: f64) -> Result<StatePoint, VdwError> {
        if !(v > self.b) {
            return Err(VdwError::Domain {
                u,
                v,
                reason: "V must exceed b",
            });
        }
        if !(u + self.a / v > 0.0) {
            return Err(VdwError::Domain {
                u,
                v,
                reason: "U + a/V must be positive",
            });
        }
        Ok(StatePoint { u, v })
    }

    fn constants(&self) -> std::collections::HashMap<String, Expr> {
        [("a", self.a), ("b", self.b), ("L", self.lambda)]
            .iter()
            .map(|(k, v)| (k.to_string(), Expr::decimal(*v)))
            .collect()
    }

    fn expr(&self, text: &str) -> Expr {
        parse(text)
            .expect("internal formula parses")
            .substitute(&self.constants())
    }
}

/// Equilibrium state `(U, V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatePoint {
    pub u: f64,
    pub v: f64,
}

pub const ENTROPY: &str = "3/2*ln(U + a/V) + ln(V - b)";
/// `V³U − 2V²a + 6Vba − 3b²a`.
pub const BOUNDARY_POLY: &str = "V^3*U - 2*V^2*a + 6*V*b*a - 3*b^2*a";
/// `5UV² − 3UVb − aV + 3ab`.
pub const SECOND_POLY: &str = "5*U*V^2 - 3*U*V*b - a*V + 3*a*b";

fn chart() -> Chart {
    Chart::new(&["U", "V"]).expect("valid chart")
}

/// Entropy-representation fundamental equation with `a`, `b` inlined as
/// exact constants.
pub fn vdw_system(params: &VdwParams) -> FundamentalSystem {
    FundamentalSystem::new(chart(), "S", params.expr(ENTROPY), Bindings::new())
        .expect("entropy is closed over (U, V)")
}

/// `T = (2/3)(U + a/V)`, `P = (2UV² − aV + 3ab)/(3V²(V − b))`.
pub fn temperature_pressure(params: &VdwParams, p: StatePoint) -> Result<(f64, f64), VdwError> {
    let StatePoint { u, v } = params.check(p.u, p.v)?;
    let (a, b) = (params.a, params.b);
    let t = 2.0 / 3.0 * (u + a / v);
    let pr = (2.0 * u * v * v - a * v + 3.0 * a * b) / (3.0 * v * v * (v - b));
    Ok((t, pr))
}

/// Closed-form equilibrium metric
/// `g = (Λ/2)·N/((UV+a)³(V−b)) · [−(3/2)V²dU² + 3a dU dV − W/(2V²(V−b)²) dV²]`.
pub fn vdw_metric_closed(params: &VdwParams) -> MetricField {
    let pre = format!("L/2*({SECOND_POLY})/((U*V + a)^3*(V - b))");
    let w = "2*V^4*U^2 - 2*V^3*U*a - a^2*V^2 + 12*a*V^2*b*U + 6*V*b*a^2 - 6*a*b^2*U*V - 3*b^2*a^2";
    let guu = params.expr(&format!("{pre}*(-3/2*V^2)"));
    // 3a dU dV splits into two symmetric halves
    let guv = params.expr(&format!("{pre}*(3/2*a)"));
    let gvv = params.expr(&format!("{pre}*(-({w})/(2*V^2*(V - b)^2))"));
    MetricField::new(
        chart(),
        vec![vec![guu, guv.clone()], vec![guv, gvv]],
        Bindings::new(),
    )
    .expect("symmetric closed metric")
}

/// `−(5Λ/2)((3/2)dU²/U² + dV²/V²)`.
pub fn ideal_gas_metric(lambda: f64) -> MetricField {
    let l = Expr::decimal(lambda);
    let k = |s: &str| l.mul(&parse(s).expect("formula"));
    MetricField::diagonal(
        chart(),
        vec![k("-15/4/U^2"), k("-5/2/V^2")],
        Bindings::new(),
    )
    .expect("diagonal")
}

/// Induced GTD metric (first-order variant) from the fundamental equation.
pub fn vdw_induced_metric(params: &VdwParams) -> Result<MetricField, VdwError> {
    Ok(induce_metric(
        &vdw_system(params),
        &GtdMetricSpec::first_order(params.lambda)?,
    )?)
}

/// Factors `(V³U − 2V²a + 6Vba − 3b²a)²·(5UV² − 3UVb − aV + 3ab)³` whose
/// zeros carry the curvature singularities.
pub fn denominator_factors(params: &VdwParams) -> Vec<(Expr, u32)> {
    vec![
        (params.expr(BOUNDARY_POLY), 2),
        (params.expr(SECOND_POLY), 3),
    ]
}

/// A regular point used as scale for the singular-proximity guard:
/// `(U, V) = (3a + 1, 3b + 1)`.
pub fn reference_point(params: &VdwParams) -> StatePoint {
    StatePoint {
        u: 3.0 * params.a + 1.0,
        v: 3.0 * params.b + 1.0,
    }
}

/// Curvature of the closed-form metric with the factored denominator and
/// the reference point of [`reference_point`].
pub fn vdw_curvature(params: &VdwParams) -> Result<CurvatureField, VdwError> {
    let r = riemann(&vdw_metric_closed(params))?;
    let StatePoint { u, v } = reference_point(params);
    Ok(r.with_denominator(denominator_factors(params))?
        .with_reference(&[u, v])?)
}

/// Both sides of the two factorization identities at `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FactorCheck {
    pub lhs1: f64,
    pub rhs1: f64,
    pub lhs2: f64,
    pub rhs2: f64,
}

/// `V³U − 2V²a + 6Vba − 3b²a` against `(3/2)(V−b)(PV³−aV+2ab)`, and
/// `5UV² − 3UVb − aV + 3ab` against `3V(V−b)(U+PV)`.
pub fn denominator_factor_check(
    params: &VdwParams,
    p: StatePoint,
) -> Result<FactorCheck, VdwError> {
    let (_, pr) = temperature_pressure(params, p)?;
    let (a, b, u, v) = (params.a, params.b, p.u, p.v);
    Ok(FactorCheck {
        lhs1: v * v * v * u - 2.0 * v * v * a + 6.0 * v * b * a - 3.0 * b * b * a,
        rhs1: 1.5 * (v - b) * (pr * v * v * v - a * v + 2.0 * a * b),
        lhs2: 5.0 * u * v * v - 3.0 * u * v * b - a * v + 3.0 * a * b,
        rhs2: 3.0 * v * (v - b) * (u + pr * v),
    })
}

/// Energy on the phase boundary at volume `v`:
/// `U = (2V²a − 6Vba + 3b²a)/V³`.
pub fn phase_boundary_energy(v: f64, params: &VdwParams) -> f64 {
    let (a, b) = (params.a, params.b);
    (2.0 * v * v * a - 6.0 * v * b * a + 3.0 * b * b * a) / (v * v * v)
}

/// `|V³U − 2V²a + 6Vba − 3b²a| / max(1, |V³U|)`.
pub fn boundary_residual(u: f64, v: f64, params: &VdwParams) -> f64 {
    let (a, b) = (params.a, params.b);
    let v3u = v * v * v * u;
    (v3u - 2.0 * v * v * a + 6.0 * v * b * a - 3.0 * b * b * a).abs() / v3u.abs().max(1.0)
}

/// A root of `PV³ − aV + 2ab` with `V > b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocusRoot {
    pub v: f64,
    pub bracket: (f64, f64),
    pub residual: f64,
    /// Tangential (double) root at the minimum of the cubic.
    pub double: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub pressure: f64,
    pub volume: f64,
}

/// Real roots of the phase-transition cubic at fixed pressure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularLocusReport {
    pub pressure: f64,
    pub params: VdwParams,
    pub roots: Vec<LocusRoot>,
    /// `P_c = a/(27b²)`, `V_c = 3b`; present when `b > 0`.
    pub critical: Option<CriticalPoint>,
}

const ROOT_ABS_TOL: f64 = 1e-13;

/// Roots of `PV³ − aV + 2ab` with `V > b`, by sign-change bracketing on
/// either side of the cubic's minimum `V* = √(a/(3P))` and bisection.
/// An empty list is a valid outcome.
pub fn singular_locus(pressure: f64, params: &VdwParams) -> Result<SingularLocusReport, VdwError> {
    if !(pressure > 0.0 && pressure.is_finite()) {
        return Err(VdwError::Pressure(pressure));
    }
    let (a, b, p) = (params.a, params.b, pressure);
    let f = |v: f64| p * v * v * v - a * v + 2.0 * a * b;
    let tol = |v: f64| 1e-12 * (p * v * v * v).max(1.0);
    let critical = (b > 0.0).then(|| CriticalPoint {
        pressure: a / (27.0 * b * b),
        volume: 3.0 * b,
    });
    let mut roots = Vec::new();
    if a > 0.0 {
        let v_star = (a / (3.0 * p)).sqrt();
        let v_hi = 10.0 * (3.0 * b).max(2.0 * v_star);
        let mut intervals = Vec::new();
        if v_star > b {
            let fs = f(v_star);
            if fs.abs() <= tol(v_star) {
                roots.push(LocusRoot {
                    v: v_star,
                    bracket: (v_star, v_star),
                    residual: fs.abs(),
                    double: true,
                });
            } else {
                intervals.push((b, v_star));
                intervals.push((v_star, v_hi));
            }
        } else {
            intervals.push((b, v_hi));
        }
        for (lo, hi) in intervals {
            let (flo, fhi) = (f(lo), f(hi));
            // f(b) = 0 only when b = 0, and V = b is excluded
            if flo == 0.0 || flo.signum() == fhi.signum() {
                continue;
            }
            let v = bisect(&f, lo, hi);
            roots.push(LocusRoot {
                v,
                bracket: (lo, hi),
                residual: f(v).abs(),
                double: false,
            });
        }
    }
    roots.sort_by(|x, y| x.v.total_cmp(&y.v));
    Ok(SingularLocusReport {
        pressure,
        params: *params,
        roots,
        critical,
    })
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let neg_at_lo = f(lo) < 0.0;
    while hi - lo > ROOT_ABS_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == neg_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}
