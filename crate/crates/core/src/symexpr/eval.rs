use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use num_traits::ToPrimitive;
use thiserror::Error;

use super::expr::{rational_to_f64, Expr, Node};

/// Variable bindings for evaluation.
pub type Bindings = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("logarithm of non-positive value {value} in `{expr}`")]
    LogDomain { expr: String, value: f64 },
    #[error("division by zero in `{expr}`")]
    DivisionByZero { expr: String },
    #[error("fractional power of negative value {value} in `{expr}`")]
    PowerDomain { expr: String, value: f64 },
}

/// Renders at most `limit` bytes of an expression; large derived DAGs can
/// print to astronomically long strings.
pub fn abbreviate(e: &Expr, limit: usize) -> String {
    struct Bounded {
        buf: String,
        limit: usize,
    }
    impl Write for Bounded {
        fn write_str(&mut self, s: &str) -> std::fmt::Result {
            if self.buf.len() + s.len() > self.limit {
                let room = self.limit.saturating_sub(self.buf.len());
                let cut = (0..=room)
                    .rev()
                    .find(|&i| s.is_char_boundary(i))
                    .unwrap_or(0);
                self.buf.push_str(&s[..cut]);
                return Err(std::fmt::Error);
            }
            self.buf.push_str(s);
            Ok(())
        }
    }
    let mut w = Bounded {
        buf: String::new(),
        limit,
    };
    if write!(w, "{e}").is_err() {
        w.buf.push('…');
    }
    w.buf
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Input(usize),
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    PowInt(u32, i32),
    /// Fractional power `p/q` stored as numerator, denominator and value.
    PowFrac(u32, i64, i64),
    Ln(u32),
}

#[derive(Hash, PartialEq, Eq)]
enum OpKey {
    Const(u64),
    Input(usize),
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    PowInt(u32, i32),
    PowFrac(u32, i64, i64),
    Ln(u32),
}

impl Op {
    fn key(&self) -> OpKey {
        match *self {
            Op::Const(c) => OpKey::Const(c.to_bits()),
            Op::Input(i) => OpKey::Input(i),
            Op::Neg(a) => OpKey::Neg(a),
            // commutative operands are ordered so a+b and b+a share a slot
            Op::Add(a, b) => OpKey::Add(a.min(b), a.max(b)),
            Op::Mul(a, b) => OpKey::Mul(a.min(b), a.max(b)),
            Op::Sub(a, b) => OpKey::Sub(a, b),
            Op::Div(a, b) => OpKey::Div(a, b),
            Op::PowInt(a, k) => OpKey::PowInt(a, k),
            Op::PowFrac(a, p, q) => OpKey::PowFrac(a, p, q),
            Op::Ln(a) => OpKey::Ln(a),
        }
    }
}

/// A set of expressions lowered to a straight-line program with common
/// subexpressions merged. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct Program {
    inputs: Vec<String>,
    ops: Vec<Op>,
    sources: Vec<Expr>,
    outputs: Vec<u32>,
}

struct Builder<'a> {
    index: &'a HashMap<&'a str, usize>,
    ops: Vec<Op>,
    sources: Vec<Expr>,
    slots: HashMap<OpKey, u32>,
    memo: HashMap<usize, (Expr, u32)>,
}

impl Builder<'_> {
    fn push(&mut self, op: Op, src: &Expr) -> u32 {
        let key = op.key();
        if let Some(&s) = self.slots.get(&key) {
            return s;
        }
        let s = self.ops.len() as u32;
        self.ops.push(op);
        self.sources.push(src.clone());
        self.slots.insert(key, s);
        s
    }

    fn lower(&mut self, e: &Expr) -> Result<u32, EvalError> {
        if let Some((_, s)) = self.memo.get(&e.id()) {
            return Ok(*s);
        }
        let op = match e.node() {
            Node::Const(c) => Op::Const(c.to_f64()),
            Node::Var(v) => match self.index.get(&**v) {
                Some(&i) => Op::Input(i),
                None => return Err(EvalError::Unbound(v.to_string())),
            },
            Node::Neg(a) => Op::Neg(self.lower(a)?),
            Node::Add(a, b) => Op::Add(self.lower(a)?, self.lower(b)?),
            Node::Sub(a, b) => Op::Sub(self.lower(a)?, self.lower(b)?),
            Node::Mul(a, b) => Op::Mul(self.lower(a)?, self.lower(b)?),
            Node::Div(a, b) => Op::Div(self.lower(a)?, self.lower(b)?),
            Node::Pow(a, r) => {
                let s = self.lower(a)?;
                let int = if r.is_integer() {
                    r.to_integer().to_i32()
                } else {
                    None
                };
                match int {
                    Some(k) => Op::PowInt(s, k),
                    None => match (r.numer().to_i64(), r.denom().to_i64()) {
                        (Some(p), Some(q)) => Op::PowFrac(s, p, q),
                        // absurd exponents: evaluate through floats
                        _ => Op::PowFrac(s, (rational_to_f64(r) * 1e9) as i64, 1_000_000_000),
                    },
                }
            }
            Node::Ln(a) => Op::Ln(self.lower(a)?),
        };
        let s = self.push(op, e);
        self.memo.insert(e.id(), (e.clone(), s));
        Ok(s)
    }
}

impl Program {
    /// Lowers `outputs` over the ordered input names. Fails with
    /// [`EvalError::Unbound`] if an expression mentions any other variable.
    pub fn compile<S: AsRef<str>>(outputs: &[Expr], inputs: &[S]) -> Result<Program, EvalError> {
        let names: Vec<String> = inputs.iter().map(|s| s.as_ref().to_string()).collect();
        let index: HashMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut b = Builder {
            index: &index,
            ops: Vec::new(),
            sources: Vec::new(),
            slots: HashMap::new(),
            memo: HashMap::new(),
        };
        let mut outs = Vec::with_capacity(outputs.len());
        for e in outputs {
            outs.push(b.lower(e)?);
        }
        let (ops, sources) = (b.ops, b.sources);
        Ok(Program {
            inputs: names,
            ops,
            sources,
            outputs: outs,
        })
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Number of instructions after merging.
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn domain_error(&self, slot: usize, kind: u8, value: f64) -> EvalError {
        let expr = abbreviate(&self.sources[slot], 240);
        match kind {
            0 => EvalError::LogDomain { expr, value },
            1 => EvalError::DivisionByZero { expr },
            _ => EvalError::PowerDomain { expr, value },
        }
    }

    /// Evaluates all outputs; `scratch` is reused between calls.
    pub fn eval_into(
        &self,
        inputs: &[f64],
        scratch: &mut Vec<f64>,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        assert_eq!(inputs.len(), self.inputs.len(), "input arity");
        assert_eq!(out.len(), self.outputs.len(), "output arity");
        scratch.clear();
        scratch.reserve(self.ops.len());
        for (i, op) in self.ops.iter().enumerate() {
            let v = match *op {
                Op::Const(c) => c,
                Op::Input(k) => inputs[k],
                Op::Neg(a) => -scratch[a as usize],
                Op::Add(a, b) => scratch[a as usize] + scratch[b as usize],
                Op::Sub(a, b) => scratch[a as usize] - scratch[b as usize],
                Op::Mul(a, b) => scratch[a as usize] * scratch[b as usize],
                Op::Div(a, b) => {
                    let d = scratch[b as usize];
                    if d == 0.0 {
                        return Err(self.domain_error(i, 1, d));
                    }
                    scratch[a as usize] / d
                }
                Op::PowInt(a, k) => {
                    let x = scratch[a as usize];
                    if x == 0.0 && k < 0 {
                        return Err(self.domain_error(i, 1, x));
                    }
                    x.powi(k)
                }
                Op::PowFrac(a, p, q) => {
                    let x = scratch[a as usize];
                    let e = p as f64 / q as f64;
                    if x < 0.0 {
                        if q % 2 == 0 {
                            return Err(self.domain_error(i, 2, x));
                        }
                        let m = (-x).powf(e);
                        if p % 2 == 0 {
                            m
                        } else {
                            -m
                        }
                    } else if x == 0.0 && p < 0 {
                        return Err(self.domain_error(i, 1, x));
                    } else {
                        x.powf(e)
                    }
                }
                Op::Ln(a) => {
                    let x = scratch[a as usize];
                    if !(x > 0.0) {
                        return Err(self.domain_error(i, 0, x));
                    }
                    x.ln()
                }
            };
            scratch.push(v);
        }
        for (o, &s) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[s as usize];
        }
        Ok(())
    }

    pub fn eval(&self, inputs: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.outputs.len()];
        self.eval_into(inputs, &mut Vec::new(), &mut out)?;
        Ok(out)
    }

    /// Evaluates with named bindings; extra bindings are ignored.
    pub fn eval_bindings(&self, bindings: &Bindings) -> Result<Vec<f64>, EvalError> {
        let xs = self
            .inputs
            .iter()
            .map(|n| {
                bindings
                    .get(n)
                    .copied()
                    .ok_or_else(|| EvalError::Unbound(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.eval(&xs)
    }
}

/// Evaluates `e` in double precision. Every variable must be bound.
pub fn evaluate(e: &Expr, bindings: &Bindings) -> Result<f64, EvalError> {
    let vars: Vec<String> = e.variables().into_iter().collect();
    if let Some(missing) = vars.iter().find(|v| !bindings.contains_key(*v)) {
        return Err(EvalError::Unbound(missing.clone()));
    }
    let p = Program::compile(std::slice::from_ref(e), &vars)?;
    Ok(p.eval_bindings(bindings)?[0])
}
