//! A small arithmetic language for generators and terminals.
//!
//! ```text
//! expr   := term (('+' | '-' | '−') term)*
//! term   := unary (('*' | '×' | '/' | '÷') unary)*
//! unary  := ('-' | '−' | '+') unary | atom
//! atom   := number | var | func '(' expr (',' expr)* ')' | '(' expr ')'
//! var    := 't' | 'y' | 'z' | 'x1' | 'x2' | …
//! func   := exp | log | abs | min | max | pow
//! ```
//!
//! `min` and `max` accept two or more arguments, `pow` exactly two.

use std::fmt;

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    /// 1-based increment index.
    X(usize),
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Abs,
    Min,
    Max,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { src, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval<T: Real>(&self, t: T, x: &[T], y: T, z: T) -> T {
        match self {
            Expr::Num(v) => T::lit(*v),
            Expr::Var(Var::T) => t,
            Expr::Var(Var::Y) => y,
            Expr::Var(Var::Z) => z,
            Expr::Var(Var::X(i)) => x.get(i - 1).copied().unwrap_or_else(T::zero),
            Expr::Neg(a) => -a.eval(t, x, y, z),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(t, x, y, z), b.eval(t, x, y, z));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Call(f, args) => {
                let mut vals = args.iter().map(|a| a.eval(t, x, y, z));
                match f {
                    Func::Exp => vals.next().unwrap_or_else(T::nan).exp(),
                    Func::Log => vals.next().unwrap_or_else(T::nan).ln(),
                    Func::Abs => vals.next().unwrap_or_else(T::nan).abs(),
                    Func::Min => vals.fold(T::infinity(), T::min),
                    Func::Max => vals.fold(T::neg_infinity(), T::max),
                    Func::Pow => {
                        let a = vals.next().unwrap_or_else(T::nan);
                        let b = vals.next().unwrap_or_else(T::nan);
                        a.powf(b)
                    }
                }
            }
        }
    }

    /// Largest `k` such that `xk` appears, 0 if none.
    pub fn max_x_index(&self) -> usize {
        let mut m = 0;
        self.visit(&mut |v| {
            if let Var::X(i) = v {
                m = m.max(i);
            }
        });
        m
    }

    /// Whether any of `t`, `y`, `z` appears.
    pub fn uses_tyz(&self) -> bool {
        let mut used = false;
        self.visit(&mut |v| used |= !matches!(v, Var::X(_)));
        used
    }

    fn visit(&self, f: &mut impl FnMut(Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Neg(a) => a.visit(f),
            Expr::Bin(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit(f)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Var(Var::Z) => f.write_str("z"),
            Expr::Var(Var::X(i)) => write!(f, "x{i}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {s} {b})")
            }
            Expr::Call(func, args) => {
                let name = match func {
                    Func::Exp => "exp",
                    Func::Log => "log",
                    Func::Abs => "abs",
                    Func::Min => "min",
                    Func::Max => "max",
                    Func::Pow => "pow",
                };
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> Error {
        Error::Parse { offset: self.pos, message: message.to_string() }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some('+') => BinOp::Add,
                Some('-' | '−') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some('*' | '×') => BinOp::Mul,
                Some('/' | '÷') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        self.skip_ws();
        match self.peek() {
            Some('-' | '−') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.bump();
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                    self.bump();
                }
                let word = &self.src[start..self.pos];
                self.word(word, start)
            }
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn word(&mut self, word: &str, start: usize) -> Result<Expr> {
        let func = match word {
            "t" => return Ok(Expr::Var(Var::T)),
            "y" => return Ok(Expr::Var(Var::Y)),
            "z" => return Ok(Expr::Var(Var::Z)),
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "pow" => Func::Pow,
            w if w.starts_with('x') => {
                return match w[1..].parse::<usize>() {
                    Ok(i) if i >= 1 && !w[1..].starts_with('0') => Ok(Expr::Var(Var::X(i))),
                    _ => Err(Error::Parse { offset: start, message: format!("bad variable `{w}`") }),
                };
            }
            w => return Err(Error::Parse { offset: start, message: format!("unknown name `{w}`") }),
        };
        self.expect('(')?;
        let mut args = vec![self.expr()?];
        loop {
            self.skip_ws();
            if self.peek() == Some(',') {
                self.bump();
                args.push(self.expr()?);
            } else {
                break;
            }
        }
        self.expect(')')?;
        let ok = match func {
            Func::Exp | Func::Log | Func::Abs => args.len() == 1,
            Func::Pow => args.len() == 2,
            Func::Min | Func::Max => args.len() >= 2,
        };
        if !ok {
            return Err(Error::Parse { offset: start, message: format!("wrong number of arguments to `{word}`") });
        }
        Ok(Expr::Call(func, args))
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
            self.bump();
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.bump();
            if matches!(self.peek(), Some('+' | '-')) {
                self.bump();
            }
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.bump();
                }
            } else {
                self.pos = save;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| Error::Parse { offset: start, message: "malformed number".into() })
    }

    fn expect(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(&format!("expected `{c}`")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(src: &str, t: f64, x: &[f64], y: f64, z: f64) -> f64 {
        Expr::parse(src).unwrap().eval(t, x, y, z)
    }

    #[test]
    fn precedence_and_unicode_operators() {
        assert_eq!(ev("1 + 2 * 3", 0.0, &[], 0.0, 0.0), 7.0);
        assert_eq!(ev("(1 + 2) × 3", 0.0, &[], 0.0, 0.0), 9.0);
        assert_eq!(ev("8 ÷ 2 − 1", 0.0, &[], 0.0, 0.0), 3.0);
        assert_eq!(ev("-2 * -3", 0.0, &[], 0.0, 0.0), 6.0);
        assert_eq!(ev("1 - 2 - 3", 0.0, &[], 0.0, 0.0), -4.0);
        assert_eq!(ev("2.5e-1 * 4", 0.0, &[], 0.0, 0.0), 1.0);
    }

    #[test]
    fn variables_and_functions() {
        let v = ev("x1 * x2 + max(y, z, 0) - pow(t, 2) + abs(-1) + log(exp(2))", 3.0, &[2.0, 5.0], -1.0, 0.5, );
        assert!((v - (10.0 + 0.5 - 9.0 + 1.0 + 2.0)).abs() < 1e-12);
        assert_eq!(ev("min(x1, 1)", 0.0, &[3.0], 0.0, 0.0), 1.0);
        let e = Expr::parse("x3 + x12 * y").unwrap();
        assert_eq!(e.max_x_index(), 12);
        assert!(e.uses_tyz());
        assert!(!Expr::parse("x1 * x1").unwrap().uses_tyz());
    }

    #[test]
    fn parse_errors_report_offsets() {
        for (src, off) in [("1 +", 3), ("foo(1)", 0), ("x0", 0), ("(1", 2), ("1 $ 2", 2), ("pow(1)", 0), ("exp(1, 2)", 0)] {
            match Expr::parse(src) {
                Err(Error::Parse { offset, .. }) => assert_eq!(offset, off, "{src}"),
                other => panic!("{src}: {other:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn display_round_trips(a in -10.0f64..10.0, b in 0.1f64..10.0, x in -3.0f64..3.0) {
            let src = format!("max({a}, x1) * {b} - exp(min(x1, 1)) / ({b} + abs(y))");
            let e = Expr::parse(&src).unwrap();
            let again = Expr::parse(&e.to_string()).unwrap();
            prop_assert_eq!(e.eval(0.0, &[x], 0.3, 0.0), again.eval(0.0, &[x], 0.3, 0.0));
        }
    }
}
