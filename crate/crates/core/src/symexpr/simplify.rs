//! Best-effort rational normalization.
//!
//! The expression is rewritten as a quotient of polynomials over "atoms"
//! (variables, logarithms, fractional powers, float literals). Sums are
//! collected over a common denominator whose factors are kept separate, and
//! factors that divide the numerator exactly are cancelled. The result is
//! algebraically equal to the input wherever the input is defined; it is not
//! a canonical form.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::expr::{Expr, Node, Number, Rational};
use super::poly::{Budget, Mono, OverBudget, Poly};

/// Limits for [`simplify_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimplifyOptions {
    /// Largest number of terms any intermediate polynomial may reach.
    pub max_terms: usize,
    /// Cap on the total number of term products performed.
    pub max_work: u64,
}

impl Default for SimplifyOptions {
    fn default() -> Self {
        SimplifyOptions {
            max_terms: 20_000,
            max_work: 20_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SimplifyError {
    #[error("simplification budget exceeded")]
    OverBudget,
    #[error("division by an expression that is identically zero")]
    ZeroDivisor,
}

impl From<OverBudget> for SimplifyError {
    fn from(_: OverBudget) -> Self {
        SimplifyError::OverBudget
    }
}

/// Quotient `coef * num / prod(factor^k)`; factors are primitive,
/// positive-leading and pairwise distinct.
#[derive(Debug, Clone)]
struct Ratio {
    coef: Rational,
    num: Poly,
    den: BTreeMap<Poly, u32>,
}

impl Ratio {
    fn poly(p: Poly) -> Self {
        Ratio {
            coef: Rational::one(),
            num: p,
            den: BTreeMap::new(),
        }
    }

    fn constant(c: Rational) -> Self {
        if c.is_zero() {
            return Ratio::poly(Poly::zero());
        }
        Ratio {
            coef: c,
            num: Poly::one(),
            den: BTreeMap::new(),
        }
    }

    fn den_lcm(a: &BTreeMap<Poly, u32>, b: &BTreeMap<Poly, u32>) -> BTreeMap<Poly, u32> {
        let mut out = a.clone();
        for (f, &k) in b {
            let e = out.entry(f.clone()).or_insert(0);
            *e = (*e).max(k);
        }
        out
    }

    fn lift(&self, target: &BTreeMap<Poly, u32>, budget: &mut Budget) -> Result<Poly, OverBudget> {
        let mut num = self.num.clone();
        for (f, &k) in target {
            let have = self.den.get(f).copied().unwrap_or(0);
            if k > have {
                num = num.mul(&f.pow(k - have, budget)?, budget)?;
            }
        }
        Ok(num)
    }

    fn add(&self, other: &Ratio, budget: &mut Budget) -> Result<Ratio, OverBudget> {
        if self.num.is_zero() {
            return Ok(other.clone());
        }
        if other.num.is_zero() {
            return Ok(self.clone());
        }
        let den = Ratio::den_lcm(&self.den, &other.den);
        let l = self.coef.denom().lcm(other.coef.denom());
        let ka = self.coef.numer() * (&l / self.coef.denom());
        let kb = other.coef.numer() * (&l / other.coef.denom());
        let a = self.lift(&den, budget)?.scale(&ka);
        let b = other.lift(&den, budget)?.scale(&kb);
        let num = a.add(&b, budget)?;
        Ok(Ratio {
            coef: Rational::new(BigInt::one(), l),
            num,
            den,
        })
    }

    fn neg(&self) -> Ratio {
        Ratio {
            coef: -&self.coef,
            num: self.num.clone(),
            den: self.den.clone(),
        }
    }

    fn mul(&self, other: &Ratio, budget: &mut Budget) -> Result<Ratio, OverBudget> {
        let num = self.num.mul(&other.num, budget)?;
        if num.is_zero() {
            return Ok(Ratio::poly(num));
        }
        let mut den = self.den.clone();
        for (f, &k) in &other.den {
            *den.entry(f.clone()).or_insert(0) += k;
        }
        Ok(Ratio {
            coef: &self.coef * &other.coef,
            num,
            den,
        })
    }

    fn inv(&self, budget: &mut Budget) -> Result<Ratio, SimplifyError> {
        if self.num.is_zero() {
            return Err(SimplifyError::ZeroDivisor);
        }
        let (content, mono, prim) = self.num.factor_content();
        let coef = Rational::one() / (&self.coef * Rational::from_integer(content));
        let mut num = Poly::one();
        for (f, &k) in &self.den {
            num = num.mul(&f.pow(k, budget)?, budget)?;
        }
        let mut den = BTreeMap::new();
        for (i, &e) in mono.iter().enumerate() {
            if e > 0 {
                den.insert(Poly::atom(i), e);
            }
        }
        if prim.as_constant().is_none() {
            den.insert(prim, 1);
        }
        Ok(Ratio { coef, num, den })
    }

    fn powi(&self, k: i64, budget: &mut Budget) -> Result<Ratio, SimplifyError> {
        let base = if k < 0 {
            self.inv(budget)?
        } else {
            self.clone()
        };
        let k = u32::try_from(k.unsigned_abs()).map_err(|_| SimplifyError::OverBudget)?;
        let mut den = base.den.clone();
        for v in den.values_mut() {
            *v = v.checked_mul(k).ok_or(SimplifyError::OverBudget)?;
        }
        let coef = num_traits::pow(base.coef.clone(), k as usize);
        Ok(Ratio {
            coef,
            num: base.num.pow(k, budget)?,
            den,
        })
    }

    /// Cancels denominator factors that divide the numerator exactly and
    /// moves the numerator's integer content into the coefficient.
    fn reduce(mut self, budget: &mut Budget) -> Result<Ratio, OverBudget> {
        if self.num.is_zero() {
            return Ok(Ratio::poly(Poly::zero()));
        }
        let factors: Vec<Poly> = self.den.keys().cloned().collect();
        for f in factors {
            while let Some(k) = self.den.get(&f).copied() {
                match self.num.div_exact(&f, budget)? {
                    Some(q) => {
                        self.num = q;
                        if k == 1 {
                            self.den.remove(&f);
                        } else {
                            self.den.insert(f.clone(), k - 1);
                        }
                    }
                    None => break,
                }
            }
        }
        let c = self.num.content();
        if !c.is_one() {
            self.num = self.num.div_scalar(&c);
            self.coef *= Rational::from_integer(c);
        }
        Ok(self)
    }
}

struct Converter {
    budget: Budget,
    atoms: Vec<Expr>,
    atom_index: HashMap<Expr, usize>,
    atom_memo: HashMap<usize, Option<(Expr, i64)>>,
    memo: HashMap<usize, Ratio>,
    keep_alive: Vec<Expr>,
    opts: SimplifyOptions,
}

impl Converter {
    /// First pass: the canonical atom (if any) a node stands for, with the
    /// integer power of it the node equals. `x^(p/q)` maps to `(x^(1/q))^p`.
    fn atom_of(&mut self, e: &Expr) -> Result<Option<(Expr, i64)>, SimplifyError> {
        if let Some(a) = self.atom_memo.get(&e.id()) {
            return Ok(a.clone());
        }
        let atom = match e.node() {
            Node::Var(_) => Some((e.clone(), 1)),
            Node::Const(Number::Float(_)) => Some((e.clone(), 1)),
            Node::Ln(a) => Some((simplify_with(a, &self.opts)?.ln(), 1)),
            Node::Pow(a, r) if !r.is_integer() => {
                let base = simplify_with(a, &self.opts)?;
                let p = r.numer().to_i64().ok_or(SimplifyError::OverBudget)?;
                let q = Rational::new(1.into(), r.denom().clone());
                Some((Expr::from_node(Node::Pow(base, q)), p))
            }
            _ => None,
        };
        self.keep_alive.push(e.clone());
        self.atom_memo.insert(e.id(), atom.clone());
        Ok(atom)
    }

    fn collect(
        &mut self,
        e: &Expr,
        seen: &mut std::collections::HashSet<usize>,
    ) -> Result<(), SimplifyError> {
        if !seen.insert(e.id()) {
            return Ok(());
        }
        if let Some((a, _)) = self.atom_of(e)? {
            if !self.atom_index.contains_key(&a) {
                self.atom_index.insert(a.clone(), self.atoms.len());
                self.atoms.push(a);
            }
            return Ok(());
        }
        let mut children = Vec::new();
        e.for_each_child(|c| children.push(c.clone()));
        for c in children {
            self.collect(&c, seen)?;
        }
        Ok(())
    }

    /// Orders atoms by their printed form so results do not depend on
    /// traversal order.
    fn canonicalize_atoms(&mut self) {
        let mut keyed: Vec<(String, Expr)> = self
            .atoms
            .iter()
            .map(|a| (a.to_string(), a.clone()))
            .collect();
        keyed.sort_by(|x, y| x.0.cmp(&y.0));
        self.atoms = keyed.into_iter().map(|(_, a)| a).collect();
        self.atom_index = self
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
    }

    fn convert(&mut self, e: &Expr) -> Result<Ratio, SimplifyError> {
        if let Some(r) = self.memo.get(&e.id()) {
            return Ok(r.clone());
        }
        let r = if let Some(Some((a, p))) = self.atom_memo.get(&e.id()).cloned() {
            Ratio::poly(Poly::atom(self.atom_index[&a])).powi(p, &mut self.budget)?
        } else {
            match e.node() {
                Node::Const(Number::Rational(c)) => Ratio::constant(c.clone()),
                Node::Const(Number::Float(_)) | Node::Var(_) | Node::Ln(_) => {
                    unreachable!("atoms are resolved in the first pass")
                }
                Node::Neg(a) => self.convert(a)?.neg(),
                Node::Add(a, b) => {
                    let (x, y) = (self.convert(a)?, self.convert(b)?);
                    x.add(&y, &mut self.budget)?
                }
                Node::Sub(a, b) => {
                    let (x, y) = (self.convert(a)?, self.convert(b)?);
                    x.add(&y.neg(), &mut self.budget)?
                }
                Node::Mul(a, b) => {
                    let (x, y) = (self.convert(a)?, self.convert(b)?);
                    x.mul(&y, &mut self.budget)?
                }
                Node::Div(a, b) => {
                    let (x, y) = (self.convert(a)?, self.convert(b)?);
                    let yi = y.reduce(&mut self.budget)?.inv(&mut self.budget)?;
                    x.mul(&yi, &mut self.budget)?
                }
                Node::Pow(a, r) => {
                    let k = r.to_integer().to_i64().ok_or(SimplifyError::OverBudget)?;
                    self.convert(a)?
                        .reduce(&mut self.budget)?
                        .powi(k, &mut self.budget)?
                }
            }
        };
        self.keep_alive.push(e.clone());
        self.memo.insert(e.id(), r.clone());
        Ok(r)
    }

    /// `start * x_i^k_i ...`, left-associated so it prints without
    /// parentheses.
    fn mono_expr(&self, start: Option<Expr>, m: &Mono) -> Option<Expr> {
        let mut acc = start;
        for (i, &k) in m.iter().enumerate() {
            if k == 0 {
                continue;
            }
            let f = self.atoms[i].powi(k as i64);
            acc = Some(match acc {
                None => f,
                Some(a) => Expr::from_node(Node::Mul(a, f)),
            });
        }
        acc
    }

    fn term_expr(&self, m: &Mono, c: &Rational) -> Expr {
        let coeff = Expr::num(Number::Rational(c.clone()));
        if c.is_one() {
            self.mono_expr(None, m).unwrap_or(coeff)
        } else {
            self.mono_expr(Some(coeff), m).expect("coefficient present")
        }
    }

    fn poly_expr(&self, p: &Poly, scale: &Rational) -> Expr {
        let mut acc: Option<Expr> = None;
        for (m, c) in p.terms().rev() {
            let c = scale * Rational::from_integer(c.clone());
            let neg = c.is_negative();
            let t = self.term_expr(m, &c.abs());
            acc = Some(match (acc, neg) {
                (None, false) => t,
                (None, true) => match t.node() {
                    Node::Const(n) => Expr::num(n.neg()),
                    _ => Expr::from_node(Node::Neg(t)),
                },
                (Some(a), false) => Expr::from_node(Node::Add(a, t)),
                (Some(a), true) => Expr::from_node(Node::Sub(a, t)),
            });
        }
        acc.unwrap_or_else(Expr::zero)
    }

    fn ratio_expr(&self, r: &Ratio) -> Expr {
        let num = self.poly_expr(&r.num, &r.coef);
        if r.den.is_empty() || r.num.is_zero() {
            return num;
        }
        let mut mono: Mono = Vec::new();
        let mut den: Option<Expr> = None;
        let push = |den: &mut Option<Expr>, fe: Expr| {
            *den = Some(match den.take() {
                None => fe,
                Some(d) => Expr::from_node(Node::Mul(d, fe)),
            });
        };
        for (f, &k) in &r.den {
            if let Some(i) = single_atom(f) {
                if mono.len() <= i {
                    mono.resize(i + 1, 0);
                }
                mono[i] += k;
            }
        }
        if let Some(me) = self.mono_expr(None, &mono) {
            push(&mut den, me);
        }
        for (f, &k) in &r.den {
            if single_atom(f).is_some() {
                continue;
            }
            let fe = self.poly_expr(f, &Rational::one());
            let fe = if k == 1 {
                fe
            } else {
                Expr::from_node(Node::Pow(fe, Rational::from_integer(k.into())))
            };
            push(&mut den, fe);
        }
        Expr::from_node(Node::Div(num, den.unwrap()))
    }
}

fn single_atom(p: &Poly) -> Option<usize> {
    let mut terms = p.terms();
    match (terms.next(), terms.next()) {
        (Some((m, c)), None) if c.is_one() && m.iter().sum::<u32>() == 1 => {
            m.iter().position(|&e| e == 1)
        }
        _ => None,
    }
}

/// Rational normalization under explicit limits.
pub fn simplify_with(e: &Expr, opts: &SimplifyOptions) -> Result<Expr, SimplifyError> {
    let mut c = Converter {
        budget: Budget::new(opts.max_terms, opts.max_work),
        atoms: Vec::new(),
        atom_index: HashMap::new(),
        atom_memo: HashMap::new(),
        memo: HashMap::new(),
        keep_alive: Vec::new(),
        opts: *opts,
    };
    c.collect(e, &mut std::collections::HashSet::new())?;
    c.canonicalize_atoms();
    let r = c.convert(e)?;
    let r = r.reduce(&mut c.budget)?;
    Ok(c.ratio_expr(&r))
}

/// Rebuilds `e` through the smart constructors: constant folding and the
/// 0/1 identities, nothing more.
pub fn fold_constants(e: &Expr) -> Expr {
    e.substitute(&HashMap::new())
}

/// Best-effort simplification with the default budget. Falls back to
/// constant folding when the budget is exhausted.
pub fn simplify(e: &Expr) -> Expr {
    simplify_with(e, &SimplifyOptions::default()).unwrap_or_else(|_| fold_constants(e))
}

/// True when `e` simplifies to the constant zero.
pub fn is_identically_zero(e: &Expr) -> bool {
    simplify(e).is_zero()
}

#[cfg(test)]
mod tests {
    use super::super::eval::{evaluate, Bindings};
    use super::super::parse::parse;
    use super::*;

    fn s(text: &str) -> Expr {
        simplify(&parse(text).unwrap())
    }

    #[test]
    fn identity_elements() {
        assert_eq!(s("U + 0"), Expr::var("U"));
        assert_eq!(s("1*U"), Expr::var("U"));
        assert_eq!(s("U^1"), Expr::var("U"));
        assert!(s("0*ln(U)").is_zero());
    }

    #[test]
    fn inverse_cancellation() {
        // valid wherever V != b
        assert!(s("(V - b) * 1/(V - b)").is_one());
        assert!(s("(x^2 - y^2)/(x - y) - x - y").is_zero());
    }

    #[test]
    fn constant_folding() {
        assert_eq!(s("3/2*2"), Expr::int(3));
        assert_eq!(s("2^(-2) + 3/4"), Expr::int(1));
        assert_eq!(s("-(-(3))"), Expr::int(3));
    }

    #[test]
    fn common_denominator() {
        let e = s("1/x + 1/y");
        assert_eq!(e.to_string(), "(x + y)/(x*y)");
        let e = s("a/(V - b) - a/(V - b)");
        assert!(e.is_zero());
    }

    #[test]
    fn logs_and_fractional_powers_are_atoms() {
        let e = s("ln(U*1 + 0) - ln(U)");
        assert!(e.is_zero());
        let e = s("x^(3/2) - x^(1/2)*x^(1/2)*x^(1/2)");
        assert!(e.is_zero());
        let e = s("x^(-1/2)*x^(1/2) - 1");
        assert!(e.is_zero());
    }

    #[test]
    fn canonical_in_traversal_order() {
        assert_eq!(s("b + a*V + U"), s("U + V*a + b"));
        assert_eq!(s("1/(U + V) + 1/(V + U)"), s("2/(V + U)"));
    }

    #[test]
    fn identically_zero_divisor_is_rejected() {
        let e = parse("1/(x - x)").unwrap();
        assert_eq!(
            simplify_with(&e, &SimplifyOptions::default()),
            Err(SimplifyError::ZeroDivisor)
        );
    }

    #[test]
    fn budget_fallback_keeps_value() {
        let e = parse("(x + y + z + w)^40").unwrap();
        let tight = SimplifyOptions {
            max_terms: 100,
            max_work: 10_000,
        };
        assert_eq!(simplify_with(&e, &tight), Err(SimplifyError::OverBudget));
        let b: Bindings = [("x", 0.1), ("y", 0.2), ("z", 0.3), ("w", 0.4)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        let fallback = simplify_with(&e, &tight).unwrap_or_else(|_| fold_constants(&e));
        assert_eq!(evaluate(&fallback, &b).unwrap(), evaluate(&e, &b).unwrap());
    }
}
