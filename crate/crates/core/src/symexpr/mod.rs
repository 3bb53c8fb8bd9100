//! Expression DSL: parsing, printing, exact differentiation, rational
//! simplification and compiled numeric evaluation.

mod diff;
mod eval;
mod expr;
mod parse;
mod poly;
mod print;
mod simplify;

use thiserror::Error;

pub use diff::{derivative_raw, differentiate, Differentiator};
pub use eval::{abbreviate, evaluate, Bindings, EvalError, Program};
pub use expr::{decimal_rational, Expr, Node, Number, Rational};
pub use parse::{parse, ParseError};
pub use simplify::{
    fold_constants, is_identically_zero, simplify, simplify_with, SimplifyError, SimplifyOptions,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChartError {
    #[error("a chart needs at least one coordinate")]
    Empty,
    #[error("invalid coordinate name `{0}`")]
    InvalidName(String),
    #[error("duplicate coordinate `{0}`")]
    Duplicate(String),
}

/// Ordered coordinate names of a chart.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chart {
    names: Vec<String>,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && s != "ln"
}

impl Chart {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Chart, ChartError> {
        if names.is_empty() {
            return Err(ChartError::Empty);
        }
        let mut out: Vec<String> = Vec::with_capacity(names.len());
        for n in names {
            let n = n.as_ref();
            if !is_identifier(n) {
                return Err(ChartError::InvalidName(n.to_string()));
            }
            if out.iter().any(|m| m == n) {
                return Err(ChartError::Duplicate(n.to_string()));
            }
            out.push(n.to_string());
        }
        Ok(Chart { names: out })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn vars(&self) -> Vec<Expr> {
        self.names.iter().map(|n| Expr::var(n)).collect()
    }
}
