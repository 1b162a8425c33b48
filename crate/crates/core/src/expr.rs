//! Rational expressions over parameter names.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' '-'? integer)?
//! atom   := integer | name | '(' expr ')'
//! ```
//!
//! Names are model parameter names such as `a21` or `a03`.

use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

use crate::field::{fp_from_signed, Fp};
use crate::poly::MPoly;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("SyntaxError: {msg} at offset {pos}")]
    Syntax { pos: usize, msg: String },
    #[error("UnknownParameter: '{0}' is not a parameter of this model")]
    UnknownParameter(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(BigInt),
    Param(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
}

/// Value and gradient at a field point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dual {
    pub val: Fp,
    pub grad: Vec<Fp>,
}

/// Returned when a denominator evaluates to zero at the requested point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vanishes;

impl Dual {
    fn constant(v: Fp, n: usize) -> Self {
        Dual {
            val: v,
            grad: vec![Fp::ZERO; n],
        }
    }

    fn zip(&self, other: &Dual, f: impl Fn(Fp, Fp) -> Fp) -> Vec<Fp> {
        self.grad.iter().zip(&other.grad).map(|(&a, &b)| f(a, b)).collect()
    }

    fn mul(&self, o: &Dual) -> Dual {
        Dual {
            val: self.val * o.val,
            grad: self.zip(o, |a, b| a * o.val + self.val * b),
        }
    }

    fn recip(&self) -> Result<Dual, Vanishes> {
        let inv = self.val.inv().ok_or(Vanishes)?;
        let k = -(inv * inv);
        Ok(Dual {
            val: inv,
            grad: self.grad.iter().map(|&g| g * k).collect(),
        })
    }
}

impl Expr {
    pub fn parse(src: &str, names: &[String]) -> Result<Expr, ExprError> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
            names,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Product of parameters with the given exponents.
    pub fn monomial(exps: &[(usize, i32)]) -> Expr {
        exps.iter()
            .map(|&(v, e)| {
                if e == 1 {
                    Expr::Param(v)
                } else {
                    Expr::Pow(Box::new(Expr::Param(v)), e)
                }
            })
            .reduce(|a, b| Expr::Mul(Box::new(a), Box::new(b)))
            .unwrap_or(Expr::Int(BigInt::from(1)))
    }

    pub fn from_poly(p: &MPoly) -> Expr {
        let mut acc: Option<Expr> = None;
        for (m, c) in p.terms() {
            let exps: Vec<(usize, i32)> = m
                .exponents()
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(v, &e)| (v, e as i32))
                .collect();
            let t = Expr::Mul(Box::new(Expr::Int(c.clone())), Box::new(Expr::monomial(&exps)));
            acc = Some(match acc {
                None => t,
                Some(a) => Expr::Add(Box::new(a), Box::new(t)),
            });
        }
        acc.unwrap_or(Expr::Int(BigInt::from(0)))
    }

    pub fn eval_dual(&self, point: &[Fp]) -> Result<Dual, Vanishes> {
        let n = point.len();
        Ok(match self {
            Expr::Int(c) => Dual::constant(fp_from_signed(c), n),
            Expr::Param(v) => {
                let mut d = Dual::constant(point[*v], n);
                d.grad[*v] = Fp::ONE;
                d
            }
            Expr::Neg(a) => {
                let a = a.eval_dual(point)?;
                Dual {
                    val: -a.val,
                    grad: a.grad.iter().map(|&g| -g).collect(),
                }
            }
            Expr::Add(a, b) => {
                let (a, b) = (a.eval_dual(point)?, b.eval_dual(point)?);
                Dual {
                    val: a.val + b.val,
                    grad: a.zip(&b, |x, y| x + y),
                }
            }
            Expr::Sub(a, b) => {
                let (a, b) = (a.eval_dual(point)?, b.eval_dual(point)?);
                Dual {
                    val: a.val - b.val,
                    grad: a.zip(&b, |x, y| x - y),
                }
            }
            Expr::Mul(a, b) => a.eval_dual(point)?.mul(&b.eval_dual(point)?),
            Expr::Div(a, b) => a.eval_dual(point)?.mul(&b.eval_dual(point)?.recip()?),
            Expr::Pow(a, e) => {
                let base = a.eval_dual(point)?;
                let base = if *e < 0 { base.recip()? } else { base };
                let k = e.unsigned_abs();
                let mut acc = Dual::constant(Fp::ONE, n);
                for _ in 0..k {
                    acc = acc.mul(&base);
                }
                acc
            }
        })
    }

    pub fn display_with<'a>(&'a self, names: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, names }
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    names: &'a [String],
}

impl<'a> fmt::Display for ExprDisplay<'a> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.names;
        let sub = |e: &'a Expr| ExprDisplay { expr: e, names };
        match self.expr {
            Expr::Int(c) => write!(f, "{c}"),
            Expr::Param(v) => write!(f, "{}", self.names[*v]),
            Expr::Neg(a) => write!(f, "-({})", sub(a)),
            Expr::Add(a, b) => write!(f, "{} + {}", sub(a), sub(b)),
            Expr::Sub(a, b) => write!(f, "{} - ({})", sub(a), sub(b)),
            Expr::Mul(a, b) => match (&**a, &**b) {
                (Expr::Int(c), rest) if *c == BigInt::from(1) => write!(f, "{}", sub(rest)),
                _ => write!(f, "({})*({})", sub(a), sub(b)),
            },
            Expr::Div(a, b) => write!(f, "({})/({})", sub(a), sub(b)),
            Expr::Pow(a, e) => match &**a {
                Expr::Param(_) => write!(f, "{}^{e}", sub(a)),
                _ => write!(f, "({})^{e}", sub(a)),
            },
        }
    }
}

struct Parser<'s> {
    src: &'s [u8],
    pos: usize,
    names: &'s [String],
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == b'+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == b'*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() != Some(b'^') {
            return Ok(base);
        }
        self.pos += 1;
        let neg = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        self.skip_ws();
        let digits = self.take_while(|c| c.is_ascii_digit());
        if digits.is_empty() {
            return Err(self.err("expected integer exponent"));
        }
        let e: i32 = digits
            .parse()
            .map_err(|_| self.err("exponent out of range"))?;
        Ok(Expr::Pow(Box::new(base), if neg { -e } else { e }))
    }

    fn take_while(&mut self, f: impl Fn(u8) -> bool) -> String {
        let start = self.pos;
        while self.pos < self.src.len() && f(self.src[self.pos]) {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => {
                let d = self.take_while(|c| c.is_ascii_digit());
                Ok(Expr::Int(d.parse().expect("digits")))
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let name = self.take_while(|c| c.is_ascii_alphanumeric() || c == b'_');
                self.names
                    .iter()
                    .position(|n| *n == name)
                    .map(Expr::Param)
                    .ok_or(ExprError::UnknownParameter(name))
            }
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        ["a01", "a02", "a03"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("a02 + a03", &names()).unwrap();
        let pt = [Fp::new(5), Fp::new(7), Fp::new(11)];
        let d = e.eval_dual(&pt).unwrap();
        assert_eq!(d.val, Fp::new(18));
        assert_eq!(d.grad, vec![Fp::ZERO, Fp::ONE, Fp::ONE]);
    }

    #[test]
    fn quotient_rule() {
        // f = a01 / a02, df/da02 = -a01 / a02^2
        let e = Expr::parse("a01/a02", &names()).unwrap();
        let pt = [Fp::new(3), Fp::new(4), Fp::new(1)];
        let d = e.eval_dual(&pt).unwrap();
        let inv4 = Fp::new(4).inv().unwrap();
        assert_eq!(d.val, Fp::new(3) * inv4);
        assert_eq!(d.grad[1], -(Fp::new(3) * inv4 * inv4));
        let e = Expr::parse("a02^-2", &names()).unwrap();
        assert_eq!(e.eval_dual(&pt).unwrap().val, inv4 * inv4);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = Expr::parse("-a01^2 + 2*a02 - (a03 - 1)", &names()).unwrap();
        let pt = [Fp::new(3), Fp::new(4), Fp::new(10)];
        assert_eq!(e.eval_dual(&pt).unwrap().val, Fp::from_i64(-9 + 8 - 9));
    }

    #[test]
    fn vanishing_denominator_reported() {
        let e = Expr::parse("1/(a01 - a02)", &names()).unwrap();
        assert_eq!(e.eval_dual(&[Fp::new(2), Fp::new(2), Fp::ONE]), Err(Vanishes));
    }

    #[test]
    fn errors() {
        assert_eq!(
            Expr::parse("a09", &names()),
            Err(ExprError::UnknownParameter("a09".into()))
        );
        assert!(matches!(Expr::parse("a01 +", &names()), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("(a01", &names()), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("a01 a02", &names()), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn polynomial_roundtrip_through_display() {
        let nm = names();
        let p = MPoly::from_terms(3, [(vec![2, 0, 1], 3), (vec![0, 1, 0], -1)]);
        let printed = p.display_with(&nm).to_string();
        let back = Expr::parse(&printed, &nm).unwrap();
        let pt = [Fp::new(9), Fp::new(13), Fp::new(17)];
        assert_eq!(back.eval_dual(&pt).unwrap().val, p.eval_mod(&pt));
        assert_eq!(Expr::from_poly(&p).eval_dual(&pt).unwrap().val, p.eval_mod(&pt));
    }
}
