//! Sparse multivariate polynomials with integer coefficients, used by the
//! simplifier. Monomials are dense exponent vectors with trailing zeros
//! trimmed, so the derived `Ord` on them is the lexicographic monomial order.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

pub(crate) type Mono = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub(crate) struct Poly {
    terms: BTreeMap<Mono, BigInt>,
}

/// Raised when an operation would exceed the simplification budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct OverBudget;

/// Bounds the size of intermediate polynomials and the total number of
/// term products.
#[derive(Debug)]
pub(crate) struct Budget {
    pub max_terms: usize,
    pub max_work: u64,
    pub work: u64,
}

impl Budget {
    pub fn new(max_terms: usize, max_work: u64) -> Self {
        Budget {
            max_terms,
            max_work,
            work: 0,
        }
    }

    fn charge(&mut self, w: u64) -> Result<(), OverBudget> {
        self.work = self.work.saturating_add(w);
        if self.work > self.max_work {
            Err(OverBudget)
        } else {
            Ok(())
        }
    }

    fn check(&self, p: &Poly) -> Result<(), OverBudget> {
        if p.terms.len() > self.max_terms {
            Err(OverBudget)
        } else {
            Ok(())
        }
    }
}

fn trim(mut m: Mono) -> Mono {
    while m.last() == Some(&0) {
        m.pop();
    }
    m
}

fn mono_mul(a: &Mono, b: &Mono) -> Mono {
    let n = a.len().max(b.len());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(a.get(i).copied().unwrap_or(0) + b.get(i).copied().unwrap_or(0));
    }
    out
}

fn mono_div(a: &Mono, b: &Mono) -> Option<Mono> {
    if b.len() > a.len() && b[a.len()..].iter().any(|&e| e > 0) {
        return None;
    }
    let mut out = a.clone();
    for (i, &e) in b.iter().enumerate() {
        if i >= out.len() {
            break;
        }
        if out[i] < e {
            return None;
        }
        out[i] -= e;
    }
    Some(trim(out))
}

/// Euclid's algorithm; much faster than binary gcd when the operands differ
/// greatly in size, which is the common case for polynomial contents.
pub(crate) fn gcd(a: &BigInt, b: &BigInt) -> BigInt {
    let (mut a, mut b) = (a.abs(), b.abs());
    while !b.is_zero() {
        let r = &a % &b;
        a = b;
        b = r;
    }
    a
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: BigInt) -> Self {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(Vec::new(), c);
        }
        p
    }

    pub fn one() -> Self {
        Poly::constant(BigInt::one())
    }

    pub fn atom(index: usize) -> Self {
        let mut m = vec![0; index + 1];
        m[index] = 1;
        let mut p = Poly::zero();
        p.terms.insert(m, BigInt::one());
        p
    }

    #[cfg(test)]
    pub fn monomial(m: Mono, c: BigInt) -> Self {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(trim(m), c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<BigInt> {
        match self.terms.len() {
            0 => Some(BigInt::zero()),
            1 => self.terms.get(&Vec::new()).cloned(),
            _ => None,
        }
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Mono, &BigInt)> {
        self.terms.iter()
    }

    fn leading(&self) -> Option<(&Mono, &BigInt)> {
        self.terms.iter().next_back()
    }

    pub fn leading_coeff_negative(&self) -> bool {
        self.leading().is_some_and(|(_, c)| c.is_negative())
    }

    fn add_term(&mut self, m: Mono, c: BigInt) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let v = o.get_mut();
                *v += c;
                if v.is_zero() {
                    o.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn add(&self, other: &Poly, budget: &mut Budget) -> Result<Poly, OverBudget> {
        budget.charge(other.terms.len() as u64)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        budget.check(&out)?;
        Ok(out)
    }

    pub fn scale(&self, k: &BigInt) -> Poly {
        if k.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly, budget: &mut Budget) -> Result<Poly, OverBudget> {
        budget.charge((self.terms.len() as u64) * (other.terms.len() as u64))?;
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(mono_mul(ma, mb), ca * cb);
            }
        }
        budget.check(&out)?;
        Ok(out)
    }

    pub fn pow(&self, k: u32, budget: &mut Budget) -> Result<Poly, OverBudget> {
        let mut result = Poly::one();
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base, budget)?;
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base, budget)?;
            }
        }
        Ok(result)
    }

    /// Exact quotient `self / d`, or `None` when `d` does not divide `self`.
    /// For primitive `d` divisibility over the rationals and over the
    /// integers coincide, so a non-integral step means no division.
    pub fn div_exact(&self, d: &Poly, budget: &mut Budget) -> Result<Option<Poly>, OverBudget> {
        let Some((dm, dc)) = d.leading() else {
            return Ok(None);
        };
        let (dm, dc) = (dm.clone(), dc.clone());
        let mut rem = self.clone();
        let mut q = Poly::zero();
        while let Some((rm, rc)) = rem.leading() {
            let Some(tm) = mono_div(rm, &dm) else {
                return Ok(None);
            };
            let (tc, r) = rc.div_rem(&dc);
            if !r.is_zero() {
                return Ok(None);
            }
            budget.charge(d.terms.len() as u64)?;
            for (m, c) in &d.terms {
                rem.add_term(mono_mul(m, &tm), -(c * &tc));
            }
            q.add_term(tm, tc);
            budget.check(&q)?;
            budget.check(&rem)?;
        }
        Ok(Some(q))
    }

    /// Integer content, signed like the leading coefficient.
    pub fn content(&self) -> BigInt {
        let mut g = BigInt::zero();
        for c in self.terms.values() {
            g = gcd(&g, c);
            if g.is_one() {
                break;
            }
        }
        if self.leading_coeff_negative() {
            -g
        } else {
            g
        }
    }

    /// Divides every coefficient by `k`, which must divide all of them.
    pub fn div_scalar(&self, k: &BigInt) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c / k)).collect(),
        }
    }

    /// Splits into `content * monomial * primitive`, where the primitive part
    /// has coefficients with gcd 1, a positive leading coefficient, and no
    /// monomial factor.
    pub fn factor_content(&self) -> (BigInt, Mono, Poly) {
        if self.is_zero() {
            return (BigInt::zero(), Vec::new(), Poly::zero());
        }
        let mut min_mono: Option<Mono> = None;
        for m in self.terms.keys() {
            min_mono = Some(match min_mono {
                None => m.clone(),
                Some(prev) => {
                    let n = prev.len().min(m.len());
                    trim((0..n).map(|i| prev[i].min(m[i])).collect())
                }
            });
        }
        let content = self.content();
        let mono = min_mono.unwrap_or_default();
        let prim = Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (mono_div(m, &mono).unwrap(), c / &content))
                .collect(),
        };
        (content, mono, prim)
    }
}
