use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational used for constants and exponents.
pub type Rational = BigRational;

pub(crate) fn rational(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub(crate) fn rational_to_f64(r: &Rational) -> f64 {
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => r.to_f64().unwrap_or(f64::NAN),
    }
}

/// The rational with the shortest decimal expansion that rounds to `x`
/// (so `0.05` becomes exactly 1/20). `None` for non-finite input.
pub fn decimal_rational(x: f64) -> Option<Rational> {
    if !x.is_finite() {
        return None;
    }
    let text = format!("{x:e}");
    let (mantissa, exp) = text.split_once('e')?;
    let exp: i32 = exp.parse().ok()?;
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits: BigInt = format!("{int_part}{frac_part}").parse().ok()?;
    let shift = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut r = if shift >= 0 {
        Rational::from_integer(digits * num_traits::pow(ten, shift as usize))
    } else {
        Rational::new(digits, num_traits::pow(ten, (-shift) as usize))
    };
    if neg {
        r = -r;
    }
    Some(r)
}

/// A numeric literal: exact rational, or a float that entered through the API.
#[derive(Clone, Debug)]
pub enum Number {
    Rational(Rational),
    Float(f64),
}

impl Number {
    pub fn int(n: i64) -> Self {
        Number::Rational(Rational::from_integer(BigInt::from(n)))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Number::Rational(r) => rational_to_f64(r),
            Number::Float(f) => *f,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Number::Rational(r) => r.is_zero(),
            Number::Float(f) => *f == 0.0,
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            Number::Rational(r) => r.is_one(),
            Number::Float(f) => *f == 1.0,
        }
    }

    pub fn is_minus_one(&self) -> bool {
        match self {
            Number::Rational(r) => (-r).is_one(),
            Number::Float(f) => *f == -1.0,
        }
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Number::Rational(r) => r.is_negative(),
            Number::Float(f) => *f < 0.0,
        }
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        match self {
            Number::Rational(r) => Some(r),
            Number::Float(_) => None,
        }
    }

    fn binary(
        &self,
        other: &Number,
        exact: impl Fn(&Rational, &Rational) -> Option<Rational>,
        float: impl Fn(f64, f64) -> f64,
    ) -> Option<Number> {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => exact(a, b).map(Number::Rational),
            _ => Some(Number::Float(float(self.to_f64(), other.to_f64()))),
        }
    }

    pub fn add(&self, other: &Number) -> Number {
        self.binary(other, |a, b| Some(a + b), |a, b| a + b)
            .unwrap()
    }

    pub fn sub(&self, other: &Number) -> Number {
        self.binary(other, |a, b| Some(a - b), |a, b| a - b)
            .unwrap()
    }

    pub fn mul(&self, other: &Number) -> Number {
        self.binary(other, |a, b| Some(a * b), |a, b| a * b)
            .unwrap()
    }

    /// `None` for exact division by zero.
    pub fn div(&self, other: &Number) -> Option<Number> {
        self.binary(
            other,
            |a, b| if b.is_zero() { None } else { Some(a / b) },
            |a, b| a / b,
        )
    }

    pub fn neg(&self) -> Number {
        match self {
            Number::Rational(r) => Number::Rational(-r),
            Number::Float(f) => Number::Float(-f),
        }
    }

    /// Exact power when the base is rational and the exponent an integer of
    /// moderate size; `None` otherwise.
    pub fn pow_exact(&self, exponent: &Rational) -> Option<Number> {
        let base = self.as_rational()?;
        if !exponent.is_integer() {
            return None;
        }
        let k = exponent.to_integer().to_i32()?;
        if k.unsigned_abs() > 64 {
            return None;
        }
        if base.is_zero() && k < 0 {
            return None;
        }
        Some(Number::Rational(num_traits::pow::Pow::pow(base, k)))
    }
}

impl PartialEq for Number {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => a == b,
            (Number::Float(a), Number::Float(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Eq for Number {}

impl Hash for Number {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Number::Rational(r) => {
                0u8.hash(state);
                r.hash(state);
            }
            Number::Float(f) => {
                1u8.hash(state);
                f.to_bits().hash(state);
            }
        }
    }
}

/// One node of an expression tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Const(Number),
    Var(Arc<str>),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    /// Power with a constant rational exponent.
    Pow(Expr, Rational),
    /// Natural logarithm.
    Ln(Expr),
}

#[derive(Debug)]
struct Inner {
    node: Node,
    hash: u64,
}

/// Immutable, cheaply clonable symbolic expression.
///
/// Subtrees are shared through reference counting, so derived expressions
/// (derivatives, curvature components) form DAGs rather than copies.
#[derive(Clone)]
pub struct Expr(Arc<Inner>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.hash == other.0.hash && self.0.node == other.0.node)
    }
}

impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl Expr {
    /// Wraps a node without any rewriting. The parser builds trees this way.
    pub fn from_node(node: Node) -> Self {
        let mut h = DefaultHasher::new();
        node.hash(&mut h);
        Expr(Arc::new(Inner {
            node,
            hash: h.finish(),
        }))
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    pub(crate) fn id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn num(n: Number) -> Self {
        Expr::from_node(Node::Const(n))
    }

    pub fn int(n: i64) -> Self {
        Expr::num(Number::int(n))
    }

    pub fn zero() -> Self {
        Expr::int(0)
    }

    pub fn one() -> Self {
        Expr::int(1)
    }

    pub fn rational(n: i64, d: i64) -> Self {
        Expr::num(Number::Rational(rational(n, d)))
    }

    pub fn float(x: f64) -> Self {
        Expr::num(Number::Float(x))
    }

    /// Exact constant from a float via its shortest decimal form; see
    /// [`decimal_rational`].
    pub fn decimal(x: f64) -> Self {
        match decimal_rational(x) {
            Some(r) => Expr::num(Number::Rational(r)),
            None => Expr::float(x),
        }
    }

    pub fn var(name: &str) -> Self {
        Expr::from_node(Node::Var(Arc::from(name)))
    }

    pub fn as_const(&self) -> Option<&Number> {
        match self.node() {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const().is_some_and(Number::is_zero)
    }

    pub fn is_one(&self) -> bool {
        self.as_const().is_some_and(Number::is_one)
    }

    pub fn as_var(&self) -> Option<&str> {
        match self.node() {
            Node::Var(v) => Some(v),
            _ => None,
        }
    }

    // Smart constructors: constant folding and 0/1 identities only.

    pub fn neg(&self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::num(c.neg()),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::from_node(Node::Neg(self.clone())),
        }
    }

    pub fn add(&self, rhs: &Expr) -> Expr {
        match (self.node(), rhs.node()) {
            (Node::Const(a), Node::Const(b)) => Expr::num(a.add(b)),
            (Node::Const(a), _) if a.is_zero() => rhs.clone(),
            (_, Node::Const(b)) if b.is_zero() => self.clone(),
            (_, Node::Const(b)) if b.is_negative() => {
                Expr::from_node(Node::Sub(self.clone(), Expr::num(b.neg())))
            }
            (_, Node::Neg(b)) => self.sub(b),
            _ => Expr::from_node(Node::Add(self.clone(), rhs.clone())),
        }
    }

    pub fn sub(&self, rhs: &Expr) -> Expr {
        match (self.node(), rhs.node()) {
            (Node::Const(a), Node::Const(b)) => Expr::num(a.sub(b)),
            (Node::Const(a), _) if a.is_zero() => rhs.neg(),
            (_, Node::Const(b)) if b.is_zero() => self.clone(),
            (_, Node::Neg(b)) => self.add(b),
            _ if self == rhs => Expr::zero(),
            _ => Expr::from_node(Node::Sub(self.clone(), rhs.clone())),
        }
    }

    pub fn mul(&self, rhs: &Expr) -> Expr {
        match (self.node(), rhs.node()) {
            (Node::Const(a), Node::Const(b)) => Expr::num(a.mul(b)),
            (Node::Const(a), _) if a.is_zero() => Expr::zero(),
            (_, Node::Const(b)) if b.is_zero() => Expr::zero(),
            (Node::Const(a), _) if a.is_one() => rhs.clone(),
            (_, Node::Const(b)) if b.is_one() => self.clone(),
            (Node::Const(a), _) if a.is_minus_one() => rhs.neg(),
            (_, Node::Const(b)) if b.is_minus_one() => self.neg(),
            (Node::Neg(a), Node::Neg(b)) => a.mul(b),
            (Node::Neg(a), _) => a.mul(rhs).neg(),
            (_, Node::Neg(b)) => self.mul(b).neg(),
            _ => Expr::from_node(Node::Mul(self.clone(), rhs.clone())),
        }
    }

    pub fn div(&self, rhs: &Expr) -> Expr {
        match (self.node(), rhs.node()) {
            (Node::Const(a), Node::Const(b)) => match a.div(b) {
                Some(q) => Expr::num(q),
                None => Expr::from_node(Node::Div(self.clone(), rhs.clone())),
            },
            (Node::Const(a), _) if a.is_zero() => Expr::zero(),
            (_, Node::Const(b)) if b.is_one() => self.clone(),
            (_, Node::Const(b)) if b.is_minus_one() => self.neg(),
            (Node::Neg(a), _) => a.div(rhs).neg(),
            (_, Node::Neg(b)) => self.div(b).neg(),
            _ if self == rhs => Expr::one(),
            _ => Expr::from_node(Node::Div(self.clone(), rhs.clone())),
        }
    }

    pub fn pow(&self, exponent: Rational) -> Expr {
        if exponent.is_zero() {
            return Expr::one();
        }
        if exponent.is_one() {
            return self.clone();
        }
        match self.node() {
            Node::Const(c) => {
                if let Some(v) = c.pow_exact(&exponent) {
                    return Expr::num(v);
                }
            }
            Node::Pow(base, inner) if exponent.is_integer() => {
                return base.pow(inner * &exponent);
            }
            _ => {}
        }
        Expr::from_node(Node::Pow(self.clone(), exponent))
    }

    pub fn powi(&self, k: i64) -> Expr {
        self.pow(rational(k, 1))
    }

    pub fn ln(&self) -> Expr {
        if self.is_one() {
            return Expr::zero();
        }
        Expr::from_node(Node::Ln(self.clone()))
    }

    /// Names of all variables occurring in the expression.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.id()) {
                continue;
            }
            match e.node() {
                Node::Const(_) => {}
                Node::Var(v) => {
                    out.insert(v.to_string());
                }
                Node::Neg(a) | Node::Pow(a, _) | Node::Ln(a) => stack.push(a.clone()),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
            }
        }
        out
    }

    pub fn depends_on(&self, name: &str) -> bool {
        self.variables().contains(name)
    }

    /// Number of distinct shared nodes.
    pub fn dag_size(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.id()) {
                continue;
            }
            e.for_each_child(|c| stack.push(c.clone()));
        }
        seen.len()
    }

    /// Tree size counting shared subtrees once per occurrence, saturating.
    pub fn tree_size(&self) -> usize {
        fn go(e: &Expr, memo: &mut HashMap<usize, usize>) -> usize {
            if let Some(&n) = memo.get(&e.id()) {
                return n;
            }
            let mut n = 1usize;
            e.for_each_child(|c| n = n.saturating_add(go(c, memo)));
            memo.insert(e.id(), n);
            n
        }
        go(self, &mut HashMap::new())
    }

    pub(crate) fn for_each_child(&self, mut f: impl FnMut(&Expr)) {
        match self.node() {
            Node::Const(_) | Node::Var(_) => {}
            Node::Neg(a) | Node::Pow(a, _) | Node::Ln(a) => f(a),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                f(a);
                f(b);
            }
        }
    }

    /// Replaces variables by expressions, rebuilding through the smart
    /// constructors.
    pub fn substitute(&self, map: &HashMap<String, Expr>) -> Expr {
        fn go(e: &Expr, map: &HashMap<String, Expr>, memo: &mut HashMap<usize, Expr>) -> Expr {
            if let Some(r) = memo.get(&e.id()) {
                return r.clone();
            }
            let r = match e.node() {
                Node::Const(_) => e.clone(),
                Node::Var(v) => map.get(&**v).cloned().unwrap_or_else(|| e.clone()),
                Node::Neg(a) => go(a, map, memo).neg(),
                Node::Add(a, b) => go(a, map, memo).add(&go(b, map, memo)),
                Node::Sub(a, b) => go(a, map, memo).sub(&go(b, map, memo)),
                Node::Mul(a, b) => go(a, map, memo).mul(&go(b, map, memo)),
                Node::Div(a, b) => go(a, map, memo).div(&go(b, map, memo)),
                Node::Pow(a, r) => go(a, map, memo).pow(r.clone()),
                Node::Ln(a) => go(a, map, memo).ln(),
            };
            memo.insert(e.id(), r.clone());
            r
        }
        go(self, map, &mut HashMap::new())
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Self {
        Expr::int(n)
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $ctor:ident) => {
        impl ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::$ctor(self, rhs)
            }
        }
        impl ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$ctor(&self, &rhs)
            }
        }
        impl ops::$tr<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::$ctor(&self, rhs)
            }
        }
        impl ops::$tr<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$ctor(self, &rhs)
            }
        }
    };
}

binop!(Add, add, add);
binop!(Sub, sub, sub);
binop!(Mul, mul, mul);
binop!(Div, div, div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(&self)
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}
