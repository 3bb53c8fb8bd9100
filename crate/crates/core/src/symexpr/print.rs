use std::fmt;

use num_traits::Signed;

use super::expr::{Expr, Node, Number, Rational};

const SUM: u8 = 1;
const PROD: u8 = 2;
const NEG: u8 = 3;
const POW: u8 = 4;
const ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e.node() {
        Node::Const(Number::Rational(r)) => {
            if !r.is_integer() {
                PROD
            } else if r.is_negative() {
                NEG
            } else {
                ATOM
            }
        }
        Node::Const(Number::Float(f)) => {
            if f.is_sign_negative() {
                NEG
            } else {
                ATOM
            }
        }
        Node::Var(_) | Node::Ln(_) => ATOM,
        Node::Pow(..) => POW,
        Node::Neg(_) => NEG,
        Node::Mul(..) | Node::Div(..) => PROD,
        Node::Add(..) | Node::Sub(..) => SUM,
    }
}

fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if precedence(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_rational(f: &mut fmt::Formatter<'_>, r: &Rational) -> fmt::Result {
    if r.is_integer() {
        write!(f, "{}", r.numer())
    } else {
        write!(f, "{}/{}", r.numer(), r.denom())
    }
}

/// Prints in the same grammar the parser accepts; parenthesization follows
/// the parser's precedence and associativity so that re-parsing rebuilds
/// the same tree shape.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(Number::Rational(r)) => write_rational(f, r),
            Node::Const(Number::Float(x)) => write!(f, "{x}"),
            Node::Var(v) => f.write_str(v),
            Node::Ln(a) => write!(f, "ln({a})"),
            Node::Neg(a) => {
                f.write_str("-")?;
                child(f, a, POW)
            }
            Node::Add(a, b) => {
                child(f, a, SUM)?;
                f.write_str(" + ")?;
                child(f, b, PROD)
            }
            Node::Sub(a, b) => {
                child(f, a, SUM)?;
                f.write_str(" - ")?;
                child(f, b, PROD)
            }
            Node::Mul(a, b) => {
                child(f, a, PROD)?;
                f.write_str("*")?;
                child(f, b, POW)
            }
            Node::Div(a, b) => {
                child(f, a, PROD)?;
                f.write_str("/")?;
                child(f, b, POW)
            }
            Node::Pow(a, r) => {
                child(f, a, ATOM)?;
                f.write_str("^")?;
                if r.is_integer() && !r.is_negative() {
                    write_rational(f, r)
                } else {
                    f.write_str("(")?;
                    write_rational(f, r)?;
                    f.write_str(")")
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::expr::rational;
    use super::*;

    #[test]
    fn minimal_parentheses() {
        let u = Expr::var("U");
        let v = Expr::var("V");
        let e = Expr::from_node(Node::Sub(
            u.clone(),
            Expr::from_node(Node::Add(u.clone(), v.clone())),
        ));
        assert_eq!(e.to_string(), "U - (U + V)");
        let p = Expr::from_node(Node::Pow(
            Expr::from_node(Node::Neg(v.clone())),
            rational(3, 2),
        ));
        assert_eq!(p.to_string(), "(-V)^(3/2)");
        let n = Expr::from_node(Node::Neg(Expr::from_node(Node::Pow(
            v.clone(),
            rational(2, 1),
        ))));
        assert_eq!(n.to_string(), "-V^2");
        let m = Expr::from_node(Node::Mul(Expr::rational(3, 2), u.ln()));
        assert_eq!(m.to_string(), "3/2*ln(U)");
        let d = Expr::from_node(Node::Div(u.clone(), Expr::from_node(Node::Mul(u, v))));
        assert_eq!(d.to_string(), "U/(U*V)");
    }
}
