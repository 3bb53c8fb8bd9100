//! Geodesics of an equilibrium metric: adaptive Dormand–Prince 4(5)
//! integration of `Ë^a + Γ^a_bc Ė^b Ė^c = 0` with singularity-aware
//! termination, and phase-boundary classification of the endpoints.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{christoffel, ChristoffelField, GeometryError, MetricField};
use crate::symexpr::{EvalError, Expr, Program};
use crate::vdw::{self, VdwParams, BOUNDARY_POLY};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeodesicError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid options: {0}")]
    Options(String),
    #[error("invalid initial state: {0}")]
    InitialState(String),
}

/// Integration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeodesicOptions {
    pub rtol: f64,
    pub atol: f64,
    pub tau_max: f64,
    pub max_steps: usize,
    /// Smallest admissible step; below it the integration stops.
    pub min_step: f64,
    /// Guard trips when `|D| < guard_rtol * |D(τ=0)|` or `D` changes sign.
    pub guard_rtol: f64,
    /// Absolute accuracy of the refined stopping `τ`.
    pub event_tol: f64,
    /// Integration stops once any coordinate exceeds this magnitude.
    pub escape_radius: f64,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        GeodesicOptions {
            rtol: 1e-8,
            atol: 1e-10,
            tau_max: 10.0,
            max_steps: 1_000_000,
            min_step: 1e-12,
            guard_rtol: 1e-6,
            event_tol: 1e-10,
            escape_radius: 1e8,
        }
    }
}

impl GeodesicOptions {
    pub fn validate(&self) -> Result<(), GeodesicError> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.rtol) || !positive(self.atol) {
            return Err(GeodesicError::Options("tolerances must be positive".into()));
        }
        if !positive(self.tau_max) {
            return Err(GeodesicError::Options("tau_max must be positive".into()));
        }
        if self.max_steps == 0
            || !positive(self.min_step)
            || !positive(self.guard_rtol)
            || !positive(self.event_tol)
            || !(self.escape_radius > 0.0)
        {
            return Err(GeodesicError::Options(
                "step limits and thresholds must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Immutable data shared by all integrations on one metric: the compiled
/// connection, a singular-proximity guard, and domain constraints that must
/// stay strictly positive.
#[derive(Debug)]
pub struct GeodesicSystem {
    metric: MetricField,
    christoffel: ChristoffelField,
    guard: Option<Program>,
    constraints: Option<Program>,
    params: Vec<f64>,
}

impl GeodesicSystem {
    pub fn new(
        metric: MetricField,
        guard: Option<Expr>,
        constraints: Vec<Expr>,
    ) -> Result<GeodesicSystem, GeodesicError> {
        let christoffel = christoffel(&metric)?;
        let names: Vec<String> = metric
            .chart()
            .names()
            .iter()
            .chain(metric.params().keys())
            .cloned()
            .collect();
        let guard = guard.map(|g| Program::compile(&[g], &names)).transpose()?;
        let constraints = if constraints.is_empty() {
            None
        } else {
            Some(Program::compile(&constraints, &names)?)
        };
        let params = metric.params().values().copied().collect();
        Ok(GeodesicSystem {
            metric,
            christoffel,
            guard,
            constraints,
            params,
        })
    }

    /// No guard and no constraints.
    pub fn unguarded(metric: MetricField) -> Result<GeodesicSystem, GeodesicError> {
        GeodesicSystem::new(metric, None, Vec::new())
    }

    /// Closed-form van der Waals metric, guarded by the phase-boundary
    /// polynomial and constrained to `V > b`, `U + a/V > 0`.
    pub fn vdw(params: &VdwParams) -> Result<GeodesicSystem, GeodesicError> {
        let consts = [("a", params.a), ("b", params.b)]
            .iter()
            .map(|(k, v)| (k.to_string(), Expr::decimal(*v)))
            .collect();
        let e = |s: &str| {
            crate::symexpr::parse(s)
                .expect("formula")
                .substitute(&consts)
        };
        GeodesicSystem::new(
            vdw::vdw_metric_closed(params),
            Some(e(BOUNDARY_POLY)),
            vec![e("V - b"), e("U + a/V")],
        )
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn christoffel(&self) -> &ChristoffelField {
        &self.christoffel
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    fn inputs(&self, x: &[f64], buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend_from_slice(x);
        buf.extend_from_slice(&self.params);
    }

    pub fn guard_at(&self, x: &[f64]) -> Result<Option<f64>, EvalError> {
        match &self.guard {
            None => Ok(None),
            Some(p) => {
                let mut inp = Vec::new();
                self.inputs(x, &mut inp);
                Ok(Some(p.eval(&inp)?[0]))
            }
        }
    }

    /// Index and value of the first violated constraint.
    pub fn violated_constraint(&self, x: &[f64]) -> Result<Option<(usize, f64)>, EvalError> {
        match &self.constraints {
            None => Ok(None),
            Some(p) => {
                let mut inp = Vec::new();
                self.inputs(x, &mut inp);
                let v = p.eval(&inp)?;
                Ok(v.iter().position(|c| !(*c > 0.0)).map(|i| (i, v[i])))
            }
        }
    }

    /// `g_ab Ė^a Ė^b` at `(x, v)`.
    pub fn affine_norm(&self, x: &[f64], v: &[f64]) -> Result<f64, GeodesicError> {
        let n = self.dim();
        let g = self.metric.components_at(x)?;
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += g[a * n + b] * v[a] * v[b];
            }
        }
        Ok(s)
    }
}

/// Workspace for repeated right-hand-side evaluations.
struct Rhs<'a> {
    sys: &'a GeodesicSystem,
    inputs: Vec<f64>,
    scratch: Vec<f64>,
    gamma: Vec<f64>,
}

impl<'a> Rhs<'a> {
    fn new(sys: &'a GeodesicSystem) -> Self {
        let n = sys.dim();
        Rhs {
            sys,
            inputs: Vec::new(),
            scratch: Vec::new(),
            gamma: vec![0.0; n * n * n],
        }
    }

    /// `d(E, Ė)/dτ = (Ė, −Γ^a_bc Ė^b Ė^c)`.
    fn eval(&mut self, y: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let n = self.sys.dim();
        let (x, v) = y.split_at(n);
        self.sys.inputs(x, &mut self.inputs);
        self.sys
            .christoffel
            .eval_into(&self.inputs, &mut self.scratch, &mut self.gamma)?;
        out[..n].copy_from_slice(v);
        for a in 0..n {
            let mut acc = 0.0;
            for b in 0..n {
                for c in 0..n {
                    acc += self.gamma[(a * n + b) * n + c] * v[b] * v[c];
                }
            }
            out[n + a] = -acc;
        }
        if out.iter().all(|z| z.is_finite()) {
            Ok(())
        } else {
            Err(EvalError::DivisionByZero {
                expr: "connection at a non-regular point".into(),
            })
        }
    }
}

/// Right-hand side of the first-order geodesic system at `y = (E, Ė)`.
pub fn geodesic_rhs(sys: &GeodesicSystem, y: &[f64]) -> Result<Vec<f64>, GeodesicError> {
    let mut out = vec![0.0; y.len()];
    Rhs::new(sys).eval(y, &mut out)?;
    Ok(out)
}

/// One accepted integration step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub tau: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

/// Why the integration stopped.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    MaxTau,
    SingularBoundary {
        denominator: f64,
    },
    DomainExit {
        constraint: usize,
        value: f64,
    },
    StepUnderflow {
        step: f64,
    },
    /// A coordinate left the ball of radius `escape_radius`.
    Escape {
        coordinate: usize,
        value: f64,
    },
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeodesicTrajectory {
    pub samples: Vec<Sample>,
    pub termination: Termination,
    pub tau_end: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl GeodesicTrajectory {
    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("trajectory holds the initial sample")
    }
}

/// Initial state and controls for one geodesic.
#[derive(Debug, Clone)]
pub struct GeodesicProblem {
    pub system: Arc<GeodesicSystem>,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub options: GeodesicOptions,
}

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Step {
    y: Vec<f64>,
    k_last: Vec<f64>,
    err: f64,
}

struct Stepper<'a> {
    rhs: Rhs<'a>,
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
    opts: GeodesicOptions,
}

impl<'a> Stepper<'a> {
    fn new(sys: &'a GeodesicSystem, opts: GeodesicOptions) -> Self {
        let m = 2 * sys.dim();
        Stepper {
            rhs: Rhs::new(sys),
            k: vec![vec![0.0; m]; 7],
            tmp: vec![0.0; m],
            opts,
        }
    }

    /// A trial step of size `h` from `y` with `k1 = f(y)`.
    fn step(&mut self, y: &[f64], k1: &[f64], h: f64) -> Result<Step, EvalError> {
        let m = y.len();
        self.k[0].copy_from_slice(k1);
        for s in 1..7 {
            for i in 0..m {
                let mut acc = 0.0;
                for (j, kj) in self.k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                self.tmp[i] = y[i] + h * acc;
            }
            self.rhs.eval(&self.tmp, &mut self.k[s])?;
        }
        // stage 7 was evaluated at the 5th-order solution (FSAL)
        let mut y_new = vec![0.0; m];
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..6 {
                acc += A[6][j] * self.k[j][i];
            }
            y_new[i] = y[i] + h * acc;
        }
        let mut sum = 0.0;
        for i in 0..m {
            let mut e = 0.0;
            for j in 0..7 {
                e += E[j] * self.k[j][i];
            }
            let sc = self.opts.atol + self.opts.rtol * y[i].abs().max(y_new[i].abs());
            let r = h * e / sc;
            sum += r * r;
        }
        let err = (sum / m as f64).sqrt();
        Ok(Step {
            y: y_new,
            k_last: self.k[6].clone(),
            err,
        })
    }

    /// Starting step size (Hairer, Nørsett & Wanner, II.4).
    fn initial_step(&mut self, y: &[f64], f0: &[f64]) -> f64 {
        let sc: Vec<f64> = y
            .iter()
            .map(|v| self.opts.atol + self.opts.rtol * v.abs())
            .collect();
        let norm = |v: &[f64]| {
            (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
        };
        let (d0, d1) = (norm(y), norm(f0));
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let h0 = h0.min(self.opts.tau_max);
        let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
        let mut f1 = vec![0.0; y.len()];
        if self.rhs.eval(&y1, &mut f1).is_err() {
            return h0 * 1e-3;
        }
        let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = norm(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.opts.tau_max)
    }
}

enum Event {
    Guard(f64),
    Domain(usize, f64),
}

fn check_event(
    sys: &GeodesicSystem,
    y: &[f64],
    guard0: Option<f64>,
    opts: &GeodesicOptions,
) -> Result<Option<Event>, EvalError> {
    let x = &y[..sys.dim()];
    if let Some((i, v)) = sys.violated_constraint(x)? {
        return Ok(Some(Event::Domain(i, v)));
    }
    if let (Some(d0), Some(d)) = (guard0, sys.guard_at(x)?) {
        if !(d.abs() >= opts.guard_rtol * d0.abs()) || d.signum() != d0.signum() {
            return Ok(Some(Event::Guard(d)));
        }
    }
    Ok(None)
}

fn sample(tau: f64, y: &[f64], n: usize) -> Sample {
    Sample {
        tau,
        x: y[..n].to_vec(),
        v: y[n..].to_vec(),
    }
}

/// Integrates one geodesic until `tau_max`, a guard or domain event, step
/// underflow, or the step limit.
pub fn integrate(problem: &GeodesicProblem) -> Result<GeodesicTrajectory, GeodesicError> {
    let opts = problem.options;
    opts.validate()?;
    let sys = &*problem.system;
    let n = sys.dim();
    if problem.x0.len() != n || problem.v0.len() != n {
        return Err(GeodesicError::InitialState(format!(
            "expected {n} coordinates and {n} velocities"
        )));
    }
    if let Some((i, v)) = sys.violated_constraint(&problem.x0)? {
        return Err(GeodesicError::InitialState(format!(
            "domain constraint {i} violated ({v})"
        )));
    }
    let mv = sys.metric.eval(&problem.x0)?;
    if mv.singular {
        return Err(GeodesicError::InitialState(format!(
            "metric is singular at the start (det {:e})",
            mv.det
        )));
    }
    let guard0 = sys.guard_at(&problem.x0)?;
    if guard0 == Some(0.0) {
        return Err(GeodesicError::InitialState(
            "start lies on the singular locus".into(),
        ));
    }

    let mut stepper = Stepper::new(sys, opts);
    let mut y: Vec<f64> = problem.x0.iter().chain(&problem.v0).copied().collect();
    let mut k1 = vec![0.0; 2 * n];
    stepper
        .rhs
        .eval(&y, &mut k1)
        .map_err(|e| GeodesicError::InitialState(e.to_string()))?;
    let mut tau = 0.0;
    let mut samples = vec![sample(tau, &y, n)];
    let mut h = stepper.initial_step(&y, &k1);
    let mut err_prev: f64 = 1e-4;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut last_rejected = false;

    let termination = loop {
        if tau >= opts.tau_max {
            break Termination::MaxTau;
        }
        if accepted + rejected >= opts.max_steps {
            break Termination::MaxSteps;
        }
        let remaining = opts.tau_max - tau;
        let last = h >= remaining;
        let h_try = if last { remaining } else { h };
        if h_try < opts.min_step && !last {
            break Termination::StepUnderflow { step: h_try };
        }
        let trial = stepper.step(&y, &k1, h_try);
        let ok = matches!(&trial, Ok(s) if s.err <= 1.0);
        if !ok {
            rejected += 1;
            let fac = match &trial {
                Ok(s) if s.err.is_finite() => (0.9 * s.err.powf(-0.2)).clamp(0.2, 1.0),
                _ => 0.25,
            };
            h = h_try * fac;
            last_rejected = true;
            continue;
        }
        let step = trial.expect("checked");
        let event = check_event(sys, &step.y, guard0, &opts)
            .unwrap_or(Some(Event::Domain(usize::MAX, f64::NAN)));
        if let Some(ev) = event {
            // bisect the step length from the last accepted state
            let (mut lo, mut hi) = (0.0, h_try);
            let mut hi_state = (step.y.clone(), ev);
            while hi - lo > opts.event_tol {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                match stepper.step(&y, &k1, mid) {
                    Ok(s) => match check_event(sys, &s.y, guard0, &opts) {
                        Ok(None) => lo = mid,
                        Ok(Some(e)) => {
                            hi = mid;
                            hi_state = (s.y, e);
                        }
                        Err(_) => hi = mid,
                    },
                    Err(_) => hi = mid,
                }
            }
            let (y_hi, ev) = hi_state;
            match ev {
                Event::Guard(d) => {
                    samples.push(sample(tau + hi, &y_hi, n));
                    tau += hi;
                    accepted += 1;
                    break Termination::SingularBoundary { denominator: d };
                }
                Event::Domain(i, v) => {
                    if lo > 0.0 {
                        let s = stepper
                            .step(&y, &k1, lo)
                            .expect("evaluated during bisection");
                        samples.push(sample(tau + lo, &s.y, n));
                        tau += lo;
                        accepted += 1;
                    }
                    break Termination::DomainExit {
                        constraint: i,
                        value: v,
                    };
                }
            }
        }
        // PI step-size control
        let err = step.err.max(1e-10);
        let mut fac = 0.9 * err.powf(-0.17) * err_prev.powf(0.04);
        fac = fac.clamp(0.2, if last_rejected { 1.0 } else { 10.0 });
        err_prev = err;
        last_rejected = false;
        tau = if last { opts.tau_max } else { tau + h_try };
        y = step.y;
        k1 = step.k_last;
        accepted += 1;
        samples.push(sample(tau, &y, n));
        if let Some(i) = y[..n].iter().position(|c| c.abs() > opts.escape_radius) {
            break Termination::Escape {
                coordinate: i,
                value: y[i],
            };
        }
        if !last {
            h = h_try * fac;
        }
    };
    Ok(GeodesicTrajectory {
        tau_end: tau,
        samples,
        termination,
        steps_accepted: accepted,
        steps_rejected: rejected,
    })
}

/// Largest relative change of `g(Ė, Ė)` along the trajectory (absolute for
/// null geodesics).
pub fn affine_norm_drift(
    sys: &GeodesicSystem,
    traj: &GeodesicTrajectory,
) -> Result<f64, GeodesicError> {
    let first = &traj.samples[0];
    let n0 = sys.affine_norm(&first.x, &first.v)?;
    let scale = if n0 != 0.0 { n0.abs() } else { 1.0 };
    let mut worst: f64 = 0.0;
    for s in &traj.samples[1..] {
        let d = (sys.affine_norm(&s.x, &s.v)? - n0).abs() / scale;
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Endpoint classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    IncompleteAtPhaseBoundary,
    Complete,
    OtherTermination,
}

/// Default relative tolerance for the endpoint relation.
pub const ENDPOINT_RTOL: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncompletenessReport {
    pub endpoint: Vec<f64>,
    pub tau_end: f64,
    pub termination: Termination,
    /// `|V³U − 2V²a + 6Vba − 3b²a| / max(1, |V³U|)` at the endpoint, for
    /// van der Waals trajectories.
    pub residual: Option<f64>,
    pub classification: Classification,
}

/// Classifies a trajectory: reaching `tau_max` is complete; a singular
/// boundary stop whose endpoint satisfies the phase-boundary relation within
/// `tol` is incomplete at the phase boundary; anything else is other.
pub fn incompleteness_report(
    traj: &GeodesicTrajectory,
    params: Option<&VdwParams>,
    tol: f64,
) -> IncompletenessReport {
    let end = traj.last();
    let residual = params
        .and_then(|p| (end.x.len() == 2).then(|| vdw::boundary_residual(end.x[0], end.x[1], p)));
    let classification = match (&traj.termination, residual) {
        (Termination::MaxTau, _) => Classification::Complete,
        (Termination::SingularBoundary { .. }, Some(r)) if r < tol => {
            Classification::IncompleteAtPhaseBoundary
        }
        _ => Classification::OtherTermination,
    };
    IncompletenessReport {
        endpoint: end.x.clone(),
        tau_end: traj.tau_end,
        termination: traj.termination.clone(),
        residual,
        classification,
    }
}

/// One batch item: trajectory and report, or the error that prevented it.
pub type BatchItem = Result<(GeodesicTrajectory, IncompletenessReport), GeodesicError>;

/// Integrates one geodesic per value of the first initial coordinate,
/// concurrently. Results are in input order.
pub fn shoot_batch(
    system: &Arc<GeodesicSystem>,
    base_x0: &[f64],
    v0: &[f64],
    first_coordinate: &[f64],
    options: GeodesicOptions,
    params: Option<&VdwParams>,
    tol: f64,
) -> Vec<BatchItem> {
    first_coordinate
        .par_iter()
        .map(|&u0| {
            let mut x0 = base_x0.to_vec();
            x0[0] = u0;
            let problem = GeodesicProblem {
                system: Arc::clone(system),
                x0,
                v0: v0.to_vec(),
                options,
            };
            let traj = integrate(&problem)?;
            let report = incompleteness_report(&traj, params, tol);
            Ok((traj, report))
        })
        .collect()
}
