//! Phase-space layer: contact form, Legendre transformations, the GTD
//! metric family on the phase manifold, and pullback to the equilibrium
//! manifold.
//!
//! Phase coordinates are ordered `(Φ, E^1..E^n, I^1..I^n)` and named
//! `Phi, E1.., I1..` in generated charts.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{GeometryError, MetricField};
use crate::symexpr::{
    derivative_raw, differentiate, is_identically_zero, simplify, Bindings, Chart, ChartError,
    EvalError, Expr, Program,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContactError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("potential depends on `{0}`, which is neither a coordinate nor a parameter")]
    UnboundSymbol(String),
    #[error("parameter `{0}` collides with a coordinate name")]
    ParameterShadowsCoordinate(String),
    #[error("the metric constant must be finite and nonzero")]
    ZeroLambda,
    #[error("Legendre index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("expected dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("induced metric is degenerate (determinant identically zero)")]
    Degenerate,
    #[error("pullback disagrees with the closed form in component ({0},{1})")]
    ClosedFormMismatch(usize, usize),
}

/// A point `(Φ, E^a, I^a)` of the phase manifold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    pub phi: f64,
    pub e: Vec<f64>,
    pub i: Vec<f64>,
}

impl PhasePoint {
    pub fn new(phi: f64, e: Vec<f64>, i: Vec<f64>) -> Result<PhasePoint, ContactError> {
        if e.len() != i.len() {
            return Err(ContactError::Dimension {
                expected: e.len(),
                got: i.len(),
            });
        }
        Ok(PhasePoint { phi, e, i })
    }

    pub fn dim(&self) -> usize {
        self.e.len()
    }

    /// Flat coordinate vector `(Φ, E.., I..)`.
    pub fn coords(&self) -> Vec<f64> {
        std::iter::once(self.phi)
            .chain(self.e.iter().copied())
            .chain(self.i.iter().copied())
            .collect()
    }

    pub fn from_coords(z: &[f64]) -> PhasePoint {
        let n = (z.len() - 1) / 2;
        PhasePoint {
            phi: z[0],
            e: z[1..=n].to_vec(),
            i: z[n + 1..].to_vec(),
        }
    }
}

/// A fundamental equation `Φ(E^a)` with numeric parameter values.
#[derive(Debug, Clone)]
pub struct FundamentalSystem {
    chart: Chart,
    potential: String,
    phi: Expr,
    params: Bindings,
    intensive: Vec<Expr>,
    program: Program,
}

impl FundamentalSystem {
    pub fn new(
        chart: Chart,
        potential: &str,
        phi: Expr,
        params: Bindings,
    ) -> Result<FundamentalSystem, ContactError> {
        if let Some(p) = params.keys().find(|p| chart.index_of(p).is_some()) {
            return Err(ContactError::ParameterShadowsCoordinate(p.clone()));
        }
        if let Some(v) = phi
            .variables()
            .into_iter()
            .find(|v| chart.index_of(v).is_none() && !params.contains_key(v))
        {
            return Err(ContactError::UnboundSymbol(v));
        }
        let intensive: Vec<Expr> = chart
            .names()
            .iter()
            .map(|x| differentiate(&phi, x))
            .collect();
        let mut outputs = vec![phi.clone()];
        outputs.extend(intensive.iter().cloned());
        let names: Vec<String> = chart
            .names()
            .iter()
            .cloned()
            .chain(params.keys().cloned())
            .collect();
        let program = Program::compile(&outputs, &names)?;
        Ok(FundamentalSystem {
            chart,
            potential: potential.to_string(),
            phi,
            params,
            intensive,
            program,
        })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn potential_name(&self) -> &str {
        &self.potential
    }

    pub fn potential(&self) -> &Expr {
        &self.phi
    }

    pub fn params(&self) -> &Bindings {
        &self.params
    }

    /// `I_a = ∂Φ/∂E^a`, symbolic.
    pub fn intensive(&self) -> &[Expr] {
        &self.intensive
    }

    fn values(&self, p: &[f64]) -> Result<Vec<f64>, ContactError> {
        if p.len() != self.dim() {
            return Err(ContactError::Dimension {
                expected: self.dim(),
                got: p.len(),
            });
        }
        let inputs: Vec<f64> = p
            .iter()
            .copied()
            .chain(self.params.values().copied())
            .collect();
        Ok(self.program.eval(&inputs)?)
    }
}

/// `I_a = ∂Φ/∂E^a` at `p`.
pub fn intensive_of(sys: &FundamentalSystem, p: &[f64]) -> Result<Vec<f64>, ContactError> {
    Ok(sys.values(p)?[1..].to_vec())
}

/// The embedding `E ↦ (Φ(E), E, I(E))`.
pub fn embed(sys: &FundamentalSystem, p: &[f64]) -> Result<PhasePoint, ContactError> {
    let v = sys.values(p)?;
    Ok(PhasePoint {
        phi: v[0],
        e: p.to_vec(),
        i: v[1..].to_vec(),
    })
}

/// `Θ = dΦ − I_a dE^a` at `z` on the tangent vector with components
/// `dphi`, `de` (the `dI` components do not enter).
pub fn contact_form(z: &PhasePoint, dphi: f64, de: &[f64]) -> f64 {
    dphi - z.i.iter().zip(de).map(|(i, d)| i * d).sum::<f64>()
}

/// Pullback of `Θ` along the embedding, applied to `v ∈ T_pℰ`. Vanishes on
/// every system; this is the first law.
pub fn theta_residual(sys: &FundamentalSystem, p: &[f64], v: &[f64]) -> Result<f64, ContactError> {
    if v.len() != sys.dim() {
        return Err(ContactError::Dimension {
            expected: sys.dim(),
            got: v.len(),
        });
    }
    let values = sys.values(p)?;
    let z = PhasePoint {
        phi: values[0],
        e: p.to_vec(),
        i: values[1..].to_vec(),
    };
    // dΦ(v) = ∂_aΦ v^a along the embedding
    let dphi: f64 = values[1..].iter().zip(v).map(|(d, x)| d * x).sum();
    Ok(contact_form(&z, dphi, v))
}

/// A multivector of a fixed degree: coefficient per sorted index set (bitmask).
type Form = BTreeMap<u64, f64>;

fn wedge(a: &Form, b: &Form) -> Form {
    let mut out = Form::new();
    for (&ma, &ca) in a {
        for (&mb, &cb) in b {
            if ma & mb != 0 {
                continue;
            }
            // sign of merging two ascending index lists
            let mut swaps = 0u32;
            let mut rest = mb;
            while rest != 0 {
                let j = rest.trailing_zeros();
                swaps += (ma >> (j + 1)).count_ones();
                rest &= rest - 1;
            }
            let s = if swaps.is_multiple_of(2) { 1.0 } else { -1.0 };
            *out.entry(ma | mb).or_insert(0.0) += s * ca * cb;
        }
    }
    out.retain(|_, c| *c != 0.0);
    out
}

/// Coefficient `c` in `Θ ∧ (dΘ)^n = c · n! · dΦ∧dI¹∧…∧dIⁿ∧dE¹∧…∧dEⁿ`.
/// It is the same nonzero constant at every point.
pub fn contact_nondegeneracy(z: &PhasePoint) -> f64 {
    let n = z.dim();
    assert!(2 * n < 64, "dimension too large");
    let e_bit = |a: usize| 1u64 << (1 + a);
    let i_bit = |a: usize| 1u64 << (1 + n + a);
    let mut theta = Form::new();
    theta.insert(1, 1.0);
    for a in 0..n {
        theta.insert(e_bit(a), -z.i[a]);
    }
    // dΘ = −dI_a∧dE^a = dE^a∧dI_a
    let mut dtheta = Form::new();
    for a in 0..n {
        dtheta.insert(e_bit(a) | i_bit(a), 1.0);
    }
    let mut acc = theta;
    for _ in 0..n {
        acc = wedge(&acc, &dtheta);
    }
    let full = (1u64 << (2 * n + 1)) - 1;
    let coeff = acc.get(&full).copied().unwrap_or(0.0);
    // reorder ascending (Φ, E.., I..) into (Φ, I.., E..): n² transpositions
    let sign = if (n * n).is_multiple_of(2) { 1.0 } else { -1.0 };
    let factorial: f64 = (1..=n).map(|k| k as f64).product();
    sign * coeff / factorial
}

/// Total Legendre map `Ẽ = I`, `Ĩ = −E`, `Φ̃ = Φ − I·E`.
pub fn total_legendre(z: &PhasePoint) -> PhasePoint {
    let all: Vec<usize> = (0..z.dim()).collect();
    partial_legendre(z, &all).expect("indices in range")
}

/// Legendre map on the index subset `idx` (0-based); the others are fixed.
pub fn partial_legendre(z: &PhasePoint, idx: &[usize]) -> Result<PhasePoint, ContactError> {
    let n = z.dim();
    let set: BTreeSet<usize> = idx.iter().copied().collect();
    if let Some(&bad) = set.iter().find(|&&k| k >= n) {
        return Err(ContactError::IndexOutOfRange { index: bad, n });
    }
    let mut out = z.clone();
    for &k in &set {
        out.phi -= z.i[k] * z.e[k];
        out.e[k] = z.i[k];
        out.i[k] = -z.e[k];
    }
    Ok(out)
}

/// Pushforward of a phase tangent vector `(dΦ, dE.., dI..)` by the total
/// Legendre map at `z`.
pub fn total_legendre_pushforward(z: &PhasePoint, w: &[f64]) -> Vec<f64> {
    let n = z.dim();
    let (de, di) = (&w[1..=n], &w[n + 1..]);
    let dphi = w[0] - (0..n).map(|a| z.i[a] * de[a] + z.e[a] * di[a]).sum::<f64>();
    std::iter::once(dphi)
        .chain(di.iter().copied())
        .chain(de.iter().map(|x| -x))
        .collect()
}

/// Signature choice for `χ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Chi {
    /// `δ = diag(1, …, 1)`: first-order transitions.
    Delta,
    /// `η = diag(−1, 1, …, 1)`.
    Eta,
}

impl Chi {
    fn entry(self, a: usize) -> i64 {
        match (self, a) {
            (Chi::Eta, 0) => -1,
            _ => 1,
        }
    }
}

/// Parameters of `G = Θ² + Λ(ξ_ab E^a I^b)(χ_cd dE^c dI^d)` with `ξ = δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GtdMetricSpec {
    lambda: f64,
    chi: Chi,
}

impl GtdMetricSpec {
    pub fn new(lambda: f64, chi: Chi) -> Result<GtdMetricSpec, ContactError> {
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(ContactError::ZeroLambda);
        }
        Ok(GtdMetricSpec { lambda, chi })
    }

    pub fn first_order(lambda: f64) -> Result<GtdMetricSpec, ContactError> {
        GtdMetricSpec::new(lambda, Chi::Delta)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn chi(&self) -> Chi {
        self.chi
    }
}

impl Default for GtdMetricSpec {
    fn default() -> Self {
        GtdMetricSpec {
            lambda: 1.0,
            chi: Chi::Delta,
        }
    }
}

/// Chart `(Phi, E1.., I1..)` of the phase manifold.
pub fn phase_chart(n: usize) -> Chart {
    let mut names = vec!["Phi".to_string()];
    names.extend((1..=n).map(|a| format!("E{a}")));
    names.extend((1..=n).map(|a| format!("I{a}")));
    Chart::new(&names).expect("generated names are valid")
}

/// `Θ² + extra`, where `extra(a)` is the coefficient of the symmetrized
/// `dE^a dI^a` cross term.
fn theta_squared_plus(n: usize, extra: impl Fn(usize) -> Expr) -> MetricField {
    let chart = phase_chart(n);
    let vars = chart.vars();
    let i = |a: usize| vars[1 + n + a].clone();
    let half = Expr::rational(1, 2);
    MetricField::from_upper(
        chart,
        |r, c| match (r, c) {
            (0, 0) => Expr::one(),
            (0, c) if c <= n => i(c - 1).neg(),
            (r, c) if r >= 1 && c <= n => i(r - 1).mul(&i(c - 1)),
            (r, c) if r >= 1 && r <= n && c == r + n => half.mul(&extra(r - 1)),
            _ => Expr::zero(),
        },
        Bindings::new(),
    )
    .expect("phase metric is symmetric and closed")
}

/// The GTD metric on the `2n+1`-dimensional phase manifold.
pub fn gtd_metric(spec: &GtdMetricSpec, n: usize) -> MetricField {
    let chart = phase_chart(n);
    let vars = chart.vars();
    let ei = (0..n).fold(Expr::zero(), |acc, a| {
        acc.add(&vars[1 + a].mul(&vars[1 + n + a]))
    });
    let pre = Expr::decimal(spec.lambda).mul(&ei);
    theta_squared_plus(n, |a| pre.mul(&Expr::int(spec.chi.entry(a))))
}

/// `Θ² + δ_ab dE^a dI^b`, whose pullback is the Hessian of `Φ`.
pub fn hessian_generating_metric(n: usize) -> MetricField {
    theta_squared_plus(n, |_| Expr::one())
}

/// Euclidean `δ_AB dZ^A dZ^B`.
pub fn flat_phase_metric(n: usize) -> MetricField {
    let chart = phase_chart(n);
    let dim = chart.dim();
    MetricField::diagonal(chart, vec![Expr::one(); dim], Bindings::new()).expect("diagonal metric")
}

/// Pullback `g_ab = (∂Z^A/∂E^a)(∂Z^B/∂E^b) G_AB` of a phase metric along
/// the embedding of `sys`.
pub fn pullback(sys: &FundamentalSystem, big: &MetricField) -> Result<MetricField, ContactError> {
    let n = sys.dim();
    if big.dim() != 2 * n + 1 {
        return Err(ContactError::Dimension {
            expected: 2 * n + 1,
            got: big.dim(),
        });
    }
    let names = sys.chart.names();
    // Z^A(E) and its Jacobian
    let mut z: Vec<Expr> = vec![sys.phi.clone()];
    z.extend(sys.chart.vars());
    z.extend(sys.intensive.iter().cloned());
    let jac: Vec<Vec<Expr>> = z
        .iter()
        .map(|za| names.iter().map(|x| derivative_raw(za, x)).collect())
        .collect();
    let subst: HashMap<String, Expr> = big
        .chart()
        .names()
        .iter()
        .cloned()
        .zip(z.iter().cloned())
        .collect();
    let dim = 2 * n + 1;
    let gz: Vec<Vec<Expr>> = (0..dim)
        .map(|r| {
            (0..dim)
                .map(|c| big.component(r, c).substitute(&subst))
                .collect()
        })
        .collect();
    let mut params = sys.params.clone();
    params.extend(big.params().iter().map(|(k, v)| (k.clone(), *v)));
    let g = MetricField::from_upper(
        sys.chart.clone(),
        |a, b| {
            let mut acc = Expr::zero();
            for (r, gr) in gz.iter().enumerate() {
                if jac[r][a].is_zero() {
                    continue;
                }
                for (c, grc) in gr.iter().enumerate() {
                    if grc.is_zero() || jac[c][b].is_zero() {
                        continue;
                    }
                    acc = acc.add(&jac[r][a].mul(&jac[c][b]).mul(grc));
                }
            }
            simplify(&acc)
        },
        params,
    )?;
    Ok(g)
}

fn hessian(sys: &FundamentalSystem) -> Vec<Vec<Expr>> {
    let names = sys.chart.names();
    sys.intensive
        .iter()
        .map(|ia| names.iter().map(|x| differentiate(ia, x)).collect())
        .collect()
}

fn reject_degenerate(g: &MetricField) -> Result<(), ContactError> {
    if g.dim() <= 3 && is_identically_zero(&g.determinant()?) {
        return Err(ContactError::Degenerate);
    }
    Ok(())
}

/// Closed form of the induced GTD metric:
/// `g_ab = Λ (E^c ∂_cΦ) · ½(χ_a + χ_b) ∂_a∂_bΦ`.
pub fn induced_metric_closed(
    sys: &FundamentalSystem,
    spec: &GtdMetricSpec,
) -> Result<MetricField, ContactError> {
    let h = hessian(sys);
    let vars = sys.chart.vars();
    let ei = vars
        .iter()
        .zip(&sys.intensive)
        .fold(Expr::zero(), |acc, (e, i)| acc.add(&e.mul(i)));
    let pre = Expr::decimal(spec.lambda).mul(&ei);
    let chi = |a: usize| spec.chi.entry(a);
    Ok(MetricField::from_upper(
        sys.chart.clone(),
        |a, b| simplify(&pre.mul(&Expr::rational(chi(a) + chi(b), 2)).mul(&h[a][b])),
        sys.params.clone(),
    )?)
}

/// Metric induced on the equilibrium manifold by the GTD metric. Computed
/// as a pullback and checked symbolically against the closed form.
pub fn induce_metric(
    sys: &FundamentalSystem,
    spec: &GtdMetricSpec,
) -> Result<MetricField, ContactError> {
    let g = pullback(sys, &gtd_metric(spec, sys.dim()))?;
    let closed = induced_metric_closed(sys, spec)?;
    for a in 0..g.dim() {
        for b in a..g.dim() {
            if !is_identically_zero(&g.component(a, b).sub(closed.component(a, b))) {
                return Err(ContactError::ClosedFormMismatch(a, b));
            }
        }
    }
    reject_degenerate(&g)?;
    Ok(g)
}

/// `g^H_ab = ∂_a∂_bΦ`.
pub fn hessian_metric(sys: &FundamentalSystem) -> Result<MetricField, ContactError> {
    let h = hessian(sys);
    let g = MetricField::from_upper(
        sys.chart.clone(),
        |a, b| h[a][b].clone(),
        sys.params.clone(),
    )?;
    reject_degenerate(&g)?;
    Ok(g)
}

/// Result of a randomized Legendre-invariance check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub trials: usize,
    pub redraws: usize,
    pub max_deviation: f64,
    pub pass: bool,
}

/// Relative deviation threshold for a passing invariance verdict.
pub const INVARIANCE_RTOL: f64 = 1e-9;
const MAX_REDRAWS: usize = 10;

/// Compares `G(z)(w,w)` with `G(F z)(F_* w, F_* w)` for the total Legendre
/// map `F` at random `z`, `w`. Draws: `E, I ∈ [0.5, 2]`, `Φ ∈ [−1, 1]`,
/// `w ∈ [−1, 1]^{2n+1}`. Draws with `|G(w,w)| < 1e-8` are repeated, at most
/// ten times per trial.
pub fn legendre_invariance_check(
    metric: &MetricField,
    trials: usize,
    seed: u64,
) -> Result<InvarianceReport, ContactError> {
    let dim = metric.dim();
    if dim.is_multiple_of(2) {
        return Err(ContactError::Dimension {
            expected: dim + 1,
            got: dim,
        });
    }
    let n = (dim - 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quad = |z: &[f64], w: &[f64]| -> Result<f64, ContactError> {
        let g = metric.components_at(z)?;
        let mut s = 0.0;
        for r in 0..dim {
            for c in 0..dim {
                s += g[r * dim + c] * w[r] * w[c];
            }
        }
        Ok(s)
    };
    let mut max_deviation = 0.0f64;
    let mut redraws = 0;
    for _ in 0..trials.max(1) {
        let mut attempt = 0;
        loop {
            let z = PhasePoint {
                phi: rng.gen_range(-1.0..=1.0),
                e: (0..n).map(|_| rng.gen_range(0.5..=2.0)).collect(),
                i: (0..n).map(|_| rng.gen_range(0.5..=2.0)).collect(),
            };
            let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let before = quad(&z.coords(), &w)?;
            if before.abs() < 1e-8 && attempt < MAX_REDRAWS {
                attempt += 1;
                redraws += 1;
                continue;
            }
            let fz = total_legendre(&z);
            let after = quad(&fz.coords(), &total_legendre_pushforward(&z, &w))?;
            let dev = (after - before).abs() / before.abs().max(f64::MIN_POSITIVE);
            max_deviation = max_deviation.max(dev);
            break;
        }
    }
    Ok(InvarianceReport {
        trials: trials.max(1),
        redraws,
        max_deviation,
        pass: max_deviation < INVARIANCE_RTOL,
    })
}
