//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := "-" factor | power
//! power  := atom ("^" factor)?
//! atom   := number | identifier | "ln" "(" expr ")" | "(" expr ")"
//! ```
//!
//! The tree is returned as written: no folding happens except for
//! exponents, which must reduce to a constant rational.

use num_bigint::BigInt;
use num_traits::Zero;
use thiserror::Error;

use super::expr::{Expr, Node, Number, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown function `{name}` at byte {offset} (only `ln` is supported)")]
    UnknownFunction { name: String, offset: usize },
    #[error("exponent at byte {offset} is not a constant rational")]
    NonConstantExponent { offset: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Rational),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(_) => "number".into(),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((Tok::Plus, start)),
            b'-' => out.push((Tok::Minus, start)),
            b'*' => out.push((Tok::Star, start)),
            b'/' => out.push((Tok::Slash, start)),
            b'^' => out.push((Tok::Caret, start)),
            b'(' => out.push((Tok::LParen, start)),
            b')' => out.push((Tok::RParen, start)),
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let int_part = &text[i..j];
                let mut frac_part = "";
                if j < bytes.len() && bytes[j] == b'.' {
                    let k = j + 1;
                    let mut m = k;
                    while m < bytes.len() && bytes[m].is_ascii_digit() {
                        m += 1;
                    }
                    frac_part = &text[k..m];
                    j = m;
                }
                if int_part.is_empty() && frac_part.is_empty() {
                    return Err(ParseError::Syntax {
                        offset: start,
                        expected: vec!["digit".into()],
                        found: "`.`".into(),
                    });
                }
                out.push((Tok::Num(decimal(int_part, frac_part)), start));
                i = j;
                continue;
            }
            c if c.is_ascii_alphabetic() => {
                let mut j = i + 1;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((Tok::Ident(text[i..j].to_string()), start));
                i = j;
                continue;
            }
            _ => {
                // U+2212 MINUS SIGN is accepted as `-`.
                if text[i..].starts_with('\u{2212}') {
                    out.push((Tok::Minus, start));
                    i += '\u{2212}'.len_utf8();
                    continue;
                }
                let ch = text[i..].chars().next().unwrap();
                return Err(ParseError::Syntax {
                    offset: start,
                    expected: vec!["expression".into()],
                    found: format!("character `{ch}`"),
                });
            }
        }
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

fn decimal(int_part: &str, frac_part: &str) -> Rational {
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().unwrap()
    };
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    Rational::new(numer, denom)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        ParseError::Syntax {
            offset: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[what]))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::from_node(Node::Add(lhs, rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::from_node(Node::Sub(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::from_node(Node::Mul(lhs, rhs));
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::from_node(Node::Div(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.factor()?;
            return Ok(Expr::from_node(Node::Neg(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let at = self.offset();
        let exponent = self.factor()?;
        let r = fold_rational(&exponent).ok_or(ParseError::NonConstantExponent { offset: at })?;
        Ok(Expr::from_node(Node::Pow(base, r)))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.peek().clone() {
            Tok::Num(r) => {
                self.bump();
                Ok(Expr::num(Number::Rational(r)))
            }
            Tok::Ident(name) => {
                self.bump();
                if name == "ln" {
                    self.expect(Tok::LParen, "`(`")?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(Expr::from_node(Node::Ln(arg)))
                } else if *self.peek() == Tok::LParen {
                    Err(ParseError::UnknownFunction { name, offset: at })
                } else {
                    Ok(Expr::var(&name))
                }
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            _ => Err(self.error(&["number", "identifier", "`ln`", "`(`", "`-`"])),
        }
    }
}

/// Exact value of a constant subtree, if it has one.
pub(crate) fn fold_rational(e: &Expr) -> Option<Rational> {
    match e.node() {
        Node::Const(Number::Rational(r)) => Some(r.clone()),
        Node::Const(Number::Float(_)) | Node::Var(_) | Node::Ln(_) => None,
        Node::Neg(a) => fold_rational(a).map(|r| -r),
        Node::Add(a, b) => Some(fold_rational(a)? + fold_rational(b)?),
        Node::Sub(a, b) => Some(fold_rational(a)? - fold_rational(b)?),
        Node::Mul(a, b) => Some(fold_rational(a)? * fold_rational(b)?),
        Node::Div(a, b) => {
            let d = fold_rational(b)?;
            if d.is_zero() {
                None
            } else {
                Some(fold_rational(a)? / d)
            }
        }
        Node::Pow(a, r) => match Number::Rational(fold_rational(a)?).pow_exact(r)? {
            Number::Rational(v) => Some(v),
            Number::Float(_) => None,
        },
    }
}

/// Parses `text` into an expression tree.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error(&["operator", "end of input"]));
    }
    Ok(e)
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::super::expr::rational;
    use super::*;

    fn v(n: &str) -> Expr {
        Expr::var(n)
    }

    #[test]
    fn atomic_variable() {
        assert_eq!(parse("U").unwrap(), v("U"));
    }

    #[test]
    fn negated_power_shape() {
        let e = parse("-(V^2)").unwrap();
        match e.node() {
            Node::Neg(inner) => match inner.node() {
                Node::Pow(b, r) => {
                    assert_eq!(*b, v("V"));
                    assert_eq!(*r, rational(2, 1));
                }
                other => panic!("expected power, got {other:?}"),
            },
            other => panic!("expected negation, got {other:?}"),
        }
        // unary minus binds looser than ^
        assert_eq!(parse("-V^2").unwrap(), e);
    }

    #[test]
    fn van_der_waals_entropy_shape() {
        let e = parse("3/2*ln(U + a/V) + ln(V - b)").unwrap();
        let three_halves = Expr::from_node(Node::Div(Expr::int(3), Expr::int(2)));
        let inner = Expr::from_node(Node::Add(
            v("U"),
            Expr::from_node(Node::Div(v("a"), v("V"))),
        ));
        let lhs = Expr::from_node(Node::Mul(three_halves, Expr::from_node(Node::Ln(inner))));
        let rhs = Expr::from_node(Node::Ln(Expr::from_node(Node::Sub(v("V"), v("b")))));
        assert_eq!(e, Expr::from_node(Node::Add(lhs, rhs)));
    }

    #[test]
    fn power_is_right_associative() {
        let e = parse("x^2^3").unwrap();
        assert_eq!(e, Expr::from_node(Node::Pow(v("x"), rational(8, 1))));
        let n = parse("x^-1/2").unwrap();
        // ^ binds tighter than /, so this is (x^-1)/2
        assert!(matches!(n.node(), Node::Div(..)));
        let h = parse("x^(1/2)").unwrap();
        assert_eq!(h, Expr::from_node(Node::Pow(v("x"), rational(1, 2))));
    }

    #[test]
    fn decimals_are_exact() {
        assert_eq!(parse("0.05").unwrap(), Expr::rational(1, 20));
        assert_eq!(parse("12.5").unwrap(), Expr::rational(25, 2));
        assert_eq!(parse(".5").unwrap(), Expr::rational(1, 2));
    }

    #[test]
    fn unicode_minus_accepted() {
        assert_eq!(parse("V \u{2212} b").unwrap(), parse("V - b").unwrap());
    }

    #[test]
    fn syntax_errors_carry_offset_and_expectation() {
        match parse("U + * V").unwrap_err() {
            ParseError::Syntax {
                offset, expected, ..
            } => {
                assert_eq!(offset, 4);
                assert!(expected.iter().any(|e| e == "identifier"));
            }
            e => panic!("{e:?}"),
        }
        match parse("ln(U").unwrap_err() {
            ParseError::Syntax {
                offset,
                expected,
                found,
            } => {
                assert_eq!(offset, 4);
                assert_eq!(expected, vec!["`)`".to_string()]);
                assert_eq!(found, "end of input");
            }
            e => panic!("{e:?}"),
        }
        assert!(matches!(
            parse("(U V)"),
            Err(ParseError::Syntax { offset: 3, .. })
        ));
        assert!(matches!(
            parse("U $ V"),
            Err(ParseError::Syntax { offset: 2, .. })
        ));
    }

    #[test]
    fn unknown_function_is_named() {
        assert_eq!(
            parse("2*sin(x)").unwrap_err(),
            ParseError::UnknownFunction {
                name: "sin".into(),
                offset: 2
            }
        );
    }

    #[test]
    fn exponent_must_be_constant() {
        assert_eq!(
            parse("x^y").unwrap_err(),
            ParseError::NonConstantExponent { offset: 2 }
        );
    }
}
