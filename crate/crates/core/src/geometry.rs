//! Riemannian machinery over a chart: metric inversion, Christoffel symbols,
//! Riemann/Ricci/scalar curvature, all symbolic, plus compiled numeric
//! evaluation.
//!
//! Conventions: `Γ^a_bc = ½ g^ad (∂_b g_dc + ∂_c g_bd − ∂_d g_bc)`,
//! `R^a_bcd = ∂_c Γ^a_db − ∂_d Γ^a_cb + Γ^a_ce Γ^e_db − Γ^a_de Γ^e_cb`,
//! `R_bd = R^a_bad`, `R = g^bd R_bd`.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::symexpr::{differentiate, simplify, Bindings, Chart, EvalError, Expr, Node, Program};

/// Relative determinant threshold below which a metric value is flagged singular.
pub const SINGULAR_DET_RTOL: f64 = 1e-13;
/// Relative threshold on the curvature denominator for singular proximity.
pub const SINGULAR_PROXIMITY_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("metric needs a {n}x{n} component array")]
    Shape { n: usize },
    #[error("metric components ({i},{j}) and ({j},{i}) differ")]
    NotSymmetric { i: usize, j: usize },
    #[error("metric determinant is identically zero")]
    NonInvertible,
    #[error("symbolic inversion supports dimension at most 3, got {0}")]
    DimensionTooLarge(usize),
    #[error("expected {expected} coordinates, got {got}")]
    Arity { expected: usize, got: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("point is too close to a curvature singularity (denominator {denominator:e})")]
    SingularProximity { denominator: f64 },
}

fn input_names(chart: &Chart, params: &Bindings) -> Vec<String> {
    chart
        .names()
        .iter()
        .cloned()
        .chain(params.keys().cloned())
        .collect()
}

fn inputs_for(chart: &Chart, params: &Bindings, coords: &[f64]) -> Result<Vec<f64>, GeometryError> {
    if coords.len() != chart.dim() {
        return Err(GeometryError::Arity {
            expected: chart.dim(),
            got: coords.len(),
        });
    }
    Ok(coords
        .iter()
        .copied()
        .chain(params.values().copied())
        .collect())
}

/// Symmetric metric `g_ab` over a chart. Free symbols other than the chart
/// coordinates must be bound in `params`.
#[derive(Debug, Clone)]
pub struct MetricField {
    chart: Chart,
    components: Vec<Expr>,
    params: Bindings,
    program: Program,
}

/// Numeric metric at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricValue {
    pub matrix: DMatrix<f64>,
    pub det: f64,
    /// Counts of positive and negative eigenvalues.
    pub signature: (usize, usize),
    /// `|det| < 1e-13 * scale` with `scale = max|g_ab|^n`.
    pub singular: bool,
}

impl MetricField {
    pub fn new(
        chart: Chart,
        components: Vec<Vec<Expr>>,
        params: Bindings,
    ) -> Result<MetricField, GeometryError> {
        let n = chart.dim();
        if components.len() != n || components.iter().any(|r| r.len() != n) {
            return Err(GeometryError::Shape { n });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if components[i][j] != components[j][i] {
                    return Err(GeometryError::NotSymmetric { i, j });
                }
            }
        }
        let flat: Vec<Expr> = components.into_iter().flatten().collect();
        let program = Program::compile(&flat, &input_names(&chart, &params))?;
        Ok(MetricField {
            chart,
            components: flat,
            params,
            program,
        })
    }

    /// Builds from the upper triangle; the lower triangle is mirrored.
    pub fn from_upper(
        chart: Chart,
        upper: impl Fn(usize, usize) -> Expr,
        params: Bindings,
    ) -> Result<MetricField, GeometryError> {
        let n = chart.dim();
        let mut rows = vec![vec![Expr::zero(); n]; n];
        for i in 0..n {
            for j in i..n {
                let e = upper(i, j);
                rows[j][i] = e.clone();
                rows[i][j] = e;
            }
        }
        MetricField::new(chart, rows, params)
    }

    pub fn diagonal(
        chart: Chart,
        diag: Vec<Expr>,
        params: Bindings,
    ) -> Result<MetricField, GeometryError> {
        let n = chart.dim();
        if diag.len() != n {
            return Err(GeometryError::Shape { n });
        }
        MetricField::from_upper(
            chart,
            |i, j| {
                if i == j {
                    diag[i].clone()
                } else {
                    Expr::zero()
                }
            },
            params,
        )
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn component(&self, i: usize, j: usize) -> &Expr {
        &self.components[i * self.dim() + j]
    }

    pub fn params(&self) -> &Bindings {
        &self.params
    }

    /// Every parameter replaced by its exact shortest-decimal constant.
    pub fn with_params_substituted(&self) -> MetricField {
        let map = self
            .params
            .iter()
            .map(|(k, &v)| (k.clone(), Expr::decimal(v)))
            .collect();
        let n = self.dim();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| self.component(i, j).substitute(&map))
                    .collect()
            })
            .collect();
        MetricField::new(self.chart.clone(), rows, Bindings::new())
            .expect("substitution preserves shape and symmetry")
    }

    /// `k * g` for a constant expression `k`.
    pub fn scaled(&self, k: &Expr) -> Result<MetricField, GeometryError> {
        let n = self.dim();
        let rows = (0..n)
            .map(|i| (0..n).map(|j| k.mul(self.component(i, j))).collect())
            .collect();
        MetricField::new(self.chart.clone(), rows, self.params.clone())
    }

    /// Chart coordinates together with parameter values.
    pub fn bindings(&self, coords: &[f64]) -> Bindings {
        let mut b = self.params.clone();
        for (name, &x) in self.chart.names().iter().zip(coords) {
            b.insert(name.clone(), x);
        }
        b
    }

    pub(crate) fn inputs(&self, coords: &[f64]) -> Result<Vec<f64>, GeometryError> {
        inputs_for(&self.chart, &self.params, coords)
    }

    /// Components at `coords`, row-major.
    pub fn components_at(&self, coords: &[f64]) -> Result<Vec<f64>, GeometryError> {
        Ok(self.program.eval(&self.inputs(coords)?)?)
    }

    /// Numeric matrix, determinant, signature and singular flag.
    pub fn eval(&self, coords: &[f64]) -> Result<MetricValue, GeometryError> {
        let n = self.dim();
        let values = self.components_at(coords)?;
        let matrix = DMatrix::from_row_slice(n, n, &values);
        let det = matrix.determinant();
        let scale = values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .powi(n as i32);
        let eig = SymmetricEigen::new(matrix.clone()).eigenvalues;
        let positive = eig.iter().filter(|&&l| l > 0.0).count();
        let negative = eig.iter().filter(|&&l| l < 0.0).count();
        let singular = !(det.abs() >= SINGULAR_DET_RTOL * scale) || scale == 0.0;
        Ok(MetricValue {
            matrix,
            det,
            signature: (positive, negative),
            singular,
        })
    }

    /// Symbolic determinant (unsimplified).
    pub fn determinant(&self) -> Result<Expr, GeometryError> {
        let n = self.dim();
        let m = |i: usize, j: usize| self.component(i, j).clone();
        Ok(match n {
            1 => m(0, 0),
            2 => m(0, 0).mul(&m(1, 1)).sub(&m(0, 1).mul(&m(1, 0))),
            3 => {
                let minor = |j: usize| {
                    let (c1, c2) = match j {
                        0 => (1, 2),
                        1 => (0, 2),
                        _ => (0, 1),
                    };
                    m(1, c1).mul(&m(2, c2)).sub(&m(1, c2).mul(&m(2, c1)))
                };
                m(0, 0)
                    .mul(&minor(0))
                    .sub(&m(0, 1).mul(&minor(1)))
                    .add(&m(0, 2).mul(&minor(2)))
            }
            _ => return Err(GeometryError::DimensionTooLarge(n)),
        })
    }

    /// Symbolic inverse `g^ab` by adjugate over determinant, row-major,
    /// together with the simplified determinant.
    pub fn inverse(&self) -> Result<(Vec<Expr>, Expr), GeometryError> {
        let n = self.dim();
        let det = simplify(&self.determinant()?);
        if det.is_zero() {
            return Err(GeometryError::NonInvertible);
        }
        let m = |i: usize, j: usize| self.component(i, j).clone();
        let cofactor = |i: usize, j: usize| -> Expr {
            match n {
                1 => Expr::one(),
                2 => {
                    let e = m(1 - i, 1 - j);
                    if (i + j).is_multiple_of(2) {
                        e
                    } else {
                        e.neg()
                    }
                }
                _ => {
                    let rows: Vec<usize> = (0..3).filter(|&r| r != i).collect();
                    let cols: Vec<usize> = (0..3).filter(|&c| c != j).collect();
                    let d = m(rows[0], cols[0])
                        .mul(&m(rows[1], cols[1]))
                        .sub(&m(rows[0], cols[1]).mul(&m(rows[1], cols[0])));
                    if (i + j).is_multiple_of(2) {
                        d
                    } else {
                        d.neg()
                    }
                }
            }
        };
        let mut inv = vec![Expr::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                // adj(g)_ij = C_ji; g is symmetric so C_ji = C_ij
                let e = simplify(&cofactor(j, i).div(&det));
                inv[j * n + i] = e.clone();
                inv[i * n + j] = e;
            }
        }
        Ok((inv, det))
    }
}

/// Shorthand for [`MetricField::eval`].
pub fn metric_eval(g: &MetricField, coords: &[f64]) -> Result<MetricValue, GeometryError> {
    g.eval(coords)
}

/// Christoffel symbols of the second kind, `Γ^a_bc` stored at `(a*n + b)*n + c`.
#[derive(Debug, Clone)]
pub struct ChristoffelField {
    chart: Chart,
    params: Bindings,
    symbols: Vec<Expr>,
    inverse: Vec<Expr>,
    det: Expr,
    program: Program,
}

impl ChristoffelField {
    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn symbol(&self, a: usize, b: usize, c: usize) -> &Expr {
        let n = self.dim();
        &self.symbols[(a * n + b) * n + c]
    }

    /// `g^ab`, symbolic.
    pub fn inverse_metric(&self, a: usize, b: usize) -> &Expr {
        &self.inverse[a * self.dim() + b]
    }

    /// Simplified `det g`.
    pub fn determinant(&self) -> &Expr {
        &self.det
    }

    pub fn params(&self) -> &Bindings {
        &self.params
    }

    /// All `n³` symbols at `coords`.
    pub fn eval(&self, coords: &[f64]) -> Result<Vec<f64>, GeometryError> {
        Ok(self
            .program
            .eval(&inputs_for(&self.chart, &self.params, coords)?)?)
    }

    /// Allocation-free evaluation for inner loops; `inputs` are the chart
    /// coordinates followed by the parameter values in name order.
    pub fn eval_into(
        &self,
        inputs: &[f64],
        scratch: &mut Vec<f64>,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        self.program.eval_into(inputs, scratch, out)
    }
}

/// Symbolic Christoffel symbols of `g`.
pub fn christoffel(g: &MetricField) -> Result<ChristoffelField, GeometryError> {
    let n = g.dim();
    let (inv, det) = g.inverse()?;
    let names = g.chart().names();
    // dg[(d*n + i)*n + j] = ∂_d g_ij
    let mut dg = vec![Expr::zero(); n * n * n];
    for d in 0..n {
        for i in 0..n {
            for j in i..n {
                let e = differentiate(g.component(i, j), &names[d]);
                dg[(d * n + j) * n + i] = e.clone();
                dg[(d * n + i) * n + j] = e;
            }
        }
    }
    let dgi = |d: usize, i: usize, j: usize| &dg[(d * n + i) * n + j];
    let half = Expr::rational(1, 2);
    let mut symbols = vec![Expr::zero(); n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in b..n {
                let mut acc = Expr::zero();
                for d in 0..n {
                    let bracket = dgi(b, d, c).add(dgi(c, b, d)).sub(dgi(d, b, c));
                    acc = acc.add(&inv[a * n + d].mul(&bracket));
                }
                let e = simplify(&half.mul(&acc));
                symbols[(a * n + c) * n + b] = e.clone();
                symbols[(a * n + b) * n + c] = e;
            }
        }
    }
    let program = Program::compile(&symbols, &input_names(g.chart(), g.params()))?;
    Ok(ChristoffelField {
        chart: g.chart().clone(),
        params: g.params().clone(),
        symbols,
        inverse: inv,
        det,
        program,
    })
}

/// Product of factors whose zeros are the candidate curvature singularities.
#[derive(Debug, Clone)]
pub struct SingularDenominator {
    pub factors: Vec<(Expr, u32)>,
}

impl SingularDenominator {
    pub fn expr(&self) -> Expr {
        self.factors
            .iter()
            .fold(Expr::one(), |acc, (f, k)| acc.mul(&f.powi(*k as i64)))
    }
}

/// Numeric curvature at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureValue {
    /// `R^a_bcd` at `((a*n + b)*n + c)*n + d`.
    pub riemann: Vec<f64>,
    /// `R_bd` at `b*n + d`.
    pub ricci: Vec<f64>,
    pub scalar: f64,
}

/// Riemann, Ricci and scalar curvature of a metric.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    christoffel: ChristoffelField,
    riemann: Vec<Expr>,
    ricci: Vec<Expr>,
    scalar: Expr,
    denominator: SingularDenominator,
    /// `|factor|` values at the reference point.
    reference: Option<Vec<f64>>,
    all: Program,
    guard: Program,
}

impl CurvatureField {
    pub fn chart(&self) -> &Chart {
        self.christoffel.chart()
    }

    pub fn dim(&self) -> usize {
        self.christoffel.dim()
    }

    pub fn christoffel(&self) -> &ChristoffelField {
        &self.christoffel
    }

    pub fn riemann(&self, a: usize, b: usize, c: usize, d: usize) -> &Expr {
        let n = self.dim();
        &self.riemann[((a * n + b) * n + c) * n + d]
    }

    pub fn ricci(&self, b: usize, d: usize) -> &Expr {
        &self.ricci[b * self.dim() + d]
    }

    pub fn scalar(&self) -> &Expr {
        &self.scalar
    }

    pub fn denominator(&self) -> &SingularDenominator {
        &self.denominator
    }

    /// Denominator value at the reference point, if one was set.
    pub fn reference_denominator(&self) -> Option<f64> {
        let r = self.reference.as_ref()?;
        Some(
            r.iter()
                .zip(&self.denominator.factors)
                .map(|(v, (_, k))| v.powi(*k as i32))
                .product(),
        )
    }

    fn inputs(&self, coords: &[f64]) -> Result<Vec<f64>, GeometryError> {
        inputs_for(self.chart(), self.christoffel.params(), coords)
    }

    /// Replaces the singular denominator, e.g. with a known factorization.
    pub fn with_denominator(
        mut self,
        factors: Vec<(Expr, u32)>,
    ) -> Result<CurvatureField, GeometryError> {
        let exprs: Vec<Expr> = factors.iter().map(|(f, _)| f.clone()).collect();
        self.guard = Program::compile(
            &exprs,
            &input_names(self.chart(), self.christoffel.params()),
        )?;
        self.denominator = SingularDenominator { factors };
        self.reference = None;
        Ok(self)
    }

    /// Records the denominator at a regular point; later proximity checks
    /// are relative to it.
    pub fn with_reference(mut self, coords: &[f64]) -> Result<CurvatureField, GeometryError> {
        let f = self.factors_at(coords)?;
        self.reference = Some(f.iter().map(|v| v.abs()).collect());
        Ok(self)
    }

    /// Values of the individual denominator factors at `coords`.
    pub fn factors_at(&self, coords: &[f64]) -> Result<Vec<f64>, GeometryError> {
        Ok(self.guard.eval(&self.inputs(coords)?)?)
    }

    /// Value of the singular denominator at `coords`.
    pub fn denominator_at(&self, coords: &[f64]) -> Result<f64, GeometryError> {
        let values = self.factors_at(coords)?;
        Ok(values
            .iter()
            .zip(&self.denominator.factors)
            .map(|(v, (_, k))| v.powi(*k as i32))
            .product())
    }

    /// Full curvature at `coords`, without proximity checks.
    pub fn eval(&self, coords: &[f64]) -> Result<CurvatureValue, GeometryError> {
        let n = self.dim();
        let v = self.all.eval(&self.inputs(coords)?)?;
        let (n4, n2) = (n * n * n * n, n * n);
        Ok(CurvatureValue {
            riemann: v[..n4].to_vec(),
            ricci: v[n4..n4 + n2].to_vec(),
            scalar: v[n4 + n2],
        })
    }

    /// Scalar curvature at a regular point.
    ///
    /// Fails with [`GeometryError::SingularProximity`] when some denominator
    /// factor falls below `1e-10` times its reference value (or is zero, or
    /// the result is not finite).
    pub fn scalar_at(&self, coords: &[f64]) -> Result<f64, GeometryError> {
        let factors = self.factors_at(coords)?;
        let denominator: f64 = factors
            .iter()
            .zip(&self.denominator.factors)
            .map(|(v, (_, k))| v.powi(*k as i32))
            .product();
        let near = match &self.reference {
            Some(r) => factors
                .iter()
                .zip(r)
                .any(|(f, r)| f.abs() < SINGULAR_PROXIMITY_RTOL * r),
            None => factors.contains(&0.0),
        };
        if near || !denominator.is_finite() {
            return Err(GeometryError::SingularProximity { denominator });
        }
        let r = match self.eval(coords) {
            Ok(v) => v.scalar,
            Err(GeometryError::Eval(EvalError::DivisionByZero { .. })) => {
                return Err(GeometryError::SingularProximity { denominator })
            }
            Err(e) => return Err(e),
        };
        if !r.is_finite() {
            return Err(GeometryError::SingularProximity { denominator });
        }
        Ok(r)
    }
}

/// Shorthand for [`CurvatureField::scalar_at`].
pub fn scalar_curvature_at(
    curvature: &CurvatureField,
    coords: &[f64],
) -> Result<f64, GeometryError> {
    curvature.scalar_at(coords)
}

fn numerator_of(e: &Expr) -> Expr {
    match e.node() {
        Node::Div(num, _) => num.clone(),
        _ => e.clone(),
    }
}

/// Symbolic curvature of `g`. The default singular denominator is the
/// numerator of the simplified `det g`.
pub fn riemann(g: &MetricField) -> Result<CurvatureField, GeometryError> {
    let gamma = christoffel(g)?;
    let n = g.dim();
    let names = g.chart().names();
    // dgamma[((e*n + a)*n + b)*n + c] = ∂_e Γ^a_bc
    let mut dgamma = vec![Expr::zero(); n * n * n * n];
    for e in 0..n {
        for a in 0..n {
            for b in 0..n {
                for c in b..n {
                    let d = differentiate(gamma.symbol(a, b, c), &names[e]);
                    dgamma[((e * n + a) * n + c) * n + b] = d.clone();
                    dgamma[((e * n + a) * n + b) * n + c] = d;
                }
            }
        }
    }
    let dg = |e: usize, a: usize, b: usize, c: usize| &dgamma[((e * n + a) * n + b) * n + c];
    let mut riem = vec![Expr::zero(); n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in (c + 1)..n {
                    let mut acc = dg(c, a, d, b).sub(dg(d, a, c, b));
                    for e in 0..n {
                        let t = gamma.symbol(a, c, e).mul(gamma.symbol(e, d, b));
                        let u = gamma.symbol(a, d, e).mul(gamma.symbol(e, c, b));
                        acc = acc.add(&t.sub(&u));
                    }
                    let r = simplify(&acc);
                    riem[((a * n + b) * n + d) * n + c] = r.neg();
                    riem[((a * n + b) * n + c) * n + d] = r;
                }
            }
        }
    }
    let mut ricci = vec![Expr::zero(); n * n];
    for b in 0..n {
        for d in 0..n {
            let mut acc = Expr::zero();
            for a in 0..n {
                acc = acc.add(&riem[((a * n + b) * n + a) * n + d]);
            }
            ricci[b * n + d] = simplify(&acc);
        }
    }
    let mut scalar = Expr::zero();
    for b in 0..n {
        for d in 0..n {
            scalar = scalar.add(&gamma.inverse_metric(b, d).mul(&ricci[b * n + d]));
        }
    }
    let scalar = simplify(&scalar);
    let denominator = SingularDenominator {
        factors: vec![(numerator_of(gamma.determinant()), 1)],
    };

    let inputs = input_names(g.chart(), g.params());
    let mut outputs = riem.clone();
    outputs.extend(ricci.iter().cloned());
    outputs.push(scalar.clone());
    let all = Program::compile(&outputs, &inputs)?;
    let guard = Program::compile(&[denominator.factors[0].0.clone()], &inputs)?;
    Ok(CurvatureField {
        christoffel: gamma,
        riemann: riem,
        ricci,
        scalar,
        denominator,
        reference: None,
        all,
        guard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::parse;

    fn chart(names: &[&str]) -> Chart {
        Chart::new(names).unwrap()
    }

    fn euclid() -> MetricField {
        MetricField::diagonal(
            chart(&["x", "y"]),
            vec![Expr::one(), Expr::one()],
            Bindings::new(),
        )
        .unwrap()
    }

    /// Unit 2-sphere in the chart (x = cos θ, φ).
    fn sphere() -> MetricField {
        let g = |s: &str| parse(s).unwrap();
        MetricField::diagonal(
            chart(&["x", "p"]),
            vec![g("1/(1 - x^2)"), g("1 - x^2")],
            Bindings::new(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        let c = chart(&["x", "y"]);
        let e = MetricField::new(c.clone(), vec![vec![Expr::one()]], Bindings::new());
        assert_eq!(e.unwrap_err(), GeometryError::Shape { n: 2 });
        let rows = vec![
            vec![Expr::one(), Expr::var("x")],
            vec![Expr::zero(), Expr::one()],
        ];
        assert_eq!(
            MetricField::new(c, rows, Bindings::new()).unwrap_err(),
            GeometryError::NotSymmetric { i: 0, j: 1 }
        );
    }

    #[test]
    fn unbound_symbol_is_reported() {
        let e = MetricField::diagonal(chart(&["x"]), vec![Expr::var("k")], Bindings::new())
            .unwrap_err();
        assert_eq!(e, GeometryError::Eval(EvalError::Unbound("k".into())));
    }

    #[test]
    fn flat_space() {
        let g = euclid();
        let v = g.eval(&[0.3, -2.0]).unwrap();
        assert_eq!(v.det, 1.0);
        assert_eq!(v.signature, (2, 0));
        assert!(!v.singular);
        let gamma = christoffel(&g).unwrap();
        assert!(gamma.symbols.iter().all(Expr::is_zero));
        let r = riemann(&g).unwrap();
        assert!(r.riemann.iter().all(Expr::is_zero));
        assert!(r.scalar().is_zero());
        assert_eq!(r.scalar_at(&[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_metric_is_rejected() {
        let c = chart(&["x", "y"]);
        let x = Expr::var("x");
        let g = MetricField::from_upper(c, |_, _| x.clone(), Bindings::new()).unwrap();
        assert_eq!(christoffel(&g).unwrap_err(), GeometryError::NonInvertible);
        assert!(g.eval(&[1.0, 0.0]).unwrap().singular);
    }

    #[test]
    fn sphere_christoffels_and_curvature() {
        let g = sphere();
        let gamma = christoffel(&g).unwrap();
        for x in [-0.7, 0.0, 0.2, 0.9] {
            let v = gamma.eval(&[x, 0.4]).unwrap();
            let at = |a: usize, b: usize, c: usize| v[(a * 2 + b) * 2 + c];
            let w = 1.0 - x * x;
            assert!((at(0, 0, 0) - x / w).abs() < 1e-14);
            assert!((at(0, 1, 1) - x * w).abs() < 1e-14);
            assert!((at(1, 0, 1) + x / w).abs() < 1e-14);
            assert_eq!(at(1, 0, 1), at(1, 1, 0));
            assert_eq!(at(0, 0, 1), 0.0);
            assert_eq!(at(1, 1, 1), 0.0);
        }
        let r = riemann(&g).unwrap();
        assert_eq!(*r.scalar(), Expr::int(2));
    }

    #[test]
    fn signature_and_singular_flag() {
        let g = MetricField::diagonal(
            chart(&["x", "y"]),
            vec![parse("-x").unwrap(), parse("y").unwrap()],
            Bindings::new(),
        )
        .unwrap();
        let v = g.eval(&[2.0, 3.0]).unwrap();
        assert_eq!(v.signature, (1, 1));
        assert_eq!(v.det, -6.0);
        assert!(g.eval(&[1e-15, 1.0]).unwrap().singular);
    }

    #[test]
    fn three_dimensional_inverse() {
        let c = chart(&["x", "y", "z"]);
        let m = [["2", "x", "0"], ["x", "3", "y"], ["0", "y", "z + 4"]];
        let rows = m
            .iter()
            .map(|r| r.iter().map(|s| parse(s).unwrap()).collect())
            .collect();
        let g = MetricField::new(c, rows, Bindings::new()).unwrap();
        let (inv, _) = g.inverse().unwrap();
        let p = [0.3, -0.2, 0.5];
        let gv = g.eval(&p).unwrap().matrix;
        let prog = Program::compile(&inv, &["x", "y", "z"]).unwrap();
        let iv = DMatrix::from_row_slice(3, 3, &prog.eval(&p).unwrap());
        let id = gv * iv;
        assert!((id - DMatrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn parameters_are_bound_at_evaluation() {
        let mut params = Bindings::new();
        params.insert("k".into(), 0.05);
        let g = MetricField::diagonal(chart(&["x"]), vec![parse("k*x").unwrap()], params).unwrap();
        assert_eq!(g.components_at(&[2.0]).unwrap(), vec![0.1]);
        let s = g.with_params_substituted();
        assert!(s.params().is_empty());
        assert_eq!(s.component(0, 0).to_string(), "1/20*x");
        assert_eq!(
            g.eval(&[1.0, 2.0]).unwrap_err(),
            GeometryError::Arity {
                expected: 1,
                got: 2
            }
        );
    }

    #[test]
    fn proximity_guard_uses_reference() {
        // g = diag(1, y^2 (1 + x^2)): curved, det vanishes on y = 0
        let g = MetricField::diagonal(
            chart(&["x", "y"]),
            vec![Expr::one(), parse("y^2*(1 + x^2)").unwrap()],
            Bindings::new(),
        )
        .unwrap();
        let r = riemann(&g).unwrap().with_reference(&[0.5, 1.0]).unwrap();
        assert!(r.scalar_at(&[0.5, 0.8]).is_ok());
        match r.scalar_at(&[0.5, 1e-6]) {
            Err(GeometryError::SingularProximity { denominator }) => {
                assert!(denominator.abs() < 1e-10)
            }
            other => panic!("{other:?}"),
        }
    }
}
