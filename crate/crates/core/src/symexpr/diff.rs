use std::collections::HashMap;

use num_traits::One;

use super::expr::{Expr, Node, Number, Rational};
use super::simplify::simplify;

/// Memoizing partial-derivative builder for one variable.
///
/// Derivatives of shared subtrees are computed once, so differentiating a
/// DAG stays linear in its number of distinct nodes. Only the local
/// rewrites of the smart constructors are applied.
pub struct Differentiator {
    var: String,
    memo: HashMap<usize, (Expr, Expr)>,
}

impl Differentiator {
    pub fn new(var: &str) -> Self {
        Differentiator {
            var: var.to_string(),
            memo: HashMap::new(),
        }
    }

    pub fn var(&self) -> &str {
        &self.var
    }

    pub fn derive(&mut self, e: &Expr) -> Expr {
        if let Some((_, d)) = self.memo.get(&e.id()) {
            return d.clone();
        }
        let d = match e.node() {
            Node::Const(_) => Expr::zero(),
            Node::Var(v) => {
                if **v == *self.var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Neg(a) => self.derive(a).neg(),
            Node::Add(a, b) => self.derive(a).add(&self.derive(b)),
            Node::Sub(a, b) => self.derive(a).sub(&self.derive(b)),
            Node::Mul(a, b) => {
                let da = self.derive(a);
                let db = self.derive(b);
                da.mul(b).add(&a.mul(&db))
            }
            Node::Div(a, b) => {
                let da = self.derive(a);
                let db = self.derive(b);
                if db.is_zero() {
                    da.div(b)
                } else {
                    // a'/b - a b'/b^2
                    da.div(b).sub(&a.mul(&db).div(&b.powi(2)))
                }
            }
            Node::Pow(a, r) => {
                let da = self.derive(a);
                if da.is_zero() {
                    Expr::zero()
                } else {
                    let r1 = r - Rational::one();
                    let coeff = Expr::num(Number::Rational(r.clone()));
                    let base = if r1.is_one() { a.clone() } else { a.pow(r1) };
                    coeff.mul(&base).mul(&da)
                }
            }
            Node::Ln(a) => self.derive(a).div(a),
        };
        // keep `e` alive so its address cannot be reused while memoized
        self.memo.insert(e.id(), (e.clone(), d.clone()));
        d
    }
}

/// Partial derivative with local rewrites only; used on large derived
/// objects where full simplification would not pay off.
pub fn derivative_raw(e: &Expr, var: &str) -> Expr {
    Differentiator::new(var).derive(e)
}

/// Exact partial derivative of `e` with respect to `var`, simplified.
///
/// Differentiating with respect to a variable that does not occur yields
/// the zero constant.
pub fn differentiate(e: &Expr, var: &str) -> Expr {
    simplify(&derivative_raw(e, var))
}

#[cfg(test)]
mod tests {
    use super::super::eval::evaluate;
    use super::super::parse::parse;
    use super::*;
    use std::collections::BTreeMap;

    fn at(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn central(e: &Expr, var: &str, point: &BTreeMap<String, f64>) -> f64 {
        let x = point[var];
        let h = 1e-6 * x.abs().max(1.0);
        let mut p = point.clone();
        p.insert(var.into(), x + h);
        let fp = evaluate(e, &p).unwrap();
        p.insert(var.into(), x - h);
        let fm = evaluate(e, &p).unwrap();
        (fp - fm) / (2.0 * h)
    }

    #[test]
    fn entropy_derivative_is_inverse_temperature() {
        let s = parse("3/2*ln(U + a/V) + ln(V - b)").unwrap();
        let d = differentiate(&s, "U");
        assert!(d
            .variables()
            .iter()
            .all(|v| ["U", "V", "a"].contains(&v.as_str())));
        for (u, v, a) in [(1.0, 2.0, 1.0), (2.5, 3.0, 0.3), (0.7, 1.4, 2.0)] {
            let p = at(&[("U", u), ("V", v), ("a", a), ("b", 0.1)]);
            let t = 2.0 / 3.0 * (u + a / v);
            let got = evaluate(&d, &p).unwrap();
            assert!((got - 1.0 / t).abs() < 1e-14 * got.abs());
        }
    }

    #[test]
    fn absent_variable_gives_zero() {
        assert!(differentiate(&Expr::var("V"), "U").is_zero());
        assert!(differentiate(&parse("ln(V - b)*V^3").unwrap(), "U").is_zero());
    }

    #[test]
    fn log_of_shifted_volume_matches_central_difference() {
        let e = parse("ln(V - b)").unwrap();
        let d = differentiate(&e, "V");
        let p = at(&[("V", 2.0), ("b", 1.0)]);
        let fd = central(&e, "V", &p);
        let got = evaluate(&d, &p).unwrap();
        assert!((got - 1.0).abs() < 1e-14);
        assert!((got - fd).abs() / got.abs() < 1e-8);
        assert_eq!(d, simplify(&parse("1/(V - b)").unwrap()));
    }

    #[test]
    fn fractional_powers() {
        let e = parse("x^(3/2)").unwrap();
        let d = differentiate(&e, "x");
        let p = at(&[("x", 2.0)]);
        assert!((evaluate(&d, &p).unwrap() - 1.5 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn shared_subtrees_are_derived_once() {
        let mut e = parse("x + 1").unwrap();
        for _ in 0..60 {
            e = e.mul(&e);
        }
        let mut d = Differentiator::new("x");
        let de = d.derive(&e);
        assert!(de.dag_size() < 1000);
        assert!(d.memo.len() <= e.dag_size());
    }
}
