//! Closed-form periodic coefficient expressions.
//!
//! Supported syntax: numeric literals, the coordinates `x`, `y`, `z`, the
//! constant `pi`, `+ - * /`, integer powers `^k`, parentheses and the
//! functions `sin`, `cos`, `exp`. Coefficients on the unit torus are expected
//! to be built from `sin(2*pi*k*x)`/`cos(...)` terms, sums, products and `exp`;
//! [`Expr::is_periodic`] checks this numerically.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Coordinate index: 0 = x, 1 = y, 2 = z.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser { src, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => p.get(*i).copied().unwrap_or(0.0),
            Expr::Neg(a) => -a.eval(p),
            Expr::Add(a, b) => a.eval(p) + b.eval(p),
            Expr::Sub(a, b) => a.eval(p) - b.eval(p),
            Expr::Mul(a, b) => a.eval(p) * b.eval(p),
            Expr::Div(a, b) => a.eval(p) / b.eval(p),
            Expr::Pow(a, k) => a.eval(p).powi(*k),
            Expr::Sin(a) => a.eval(p).sin(),
            Expr::Cos(a) => a.eval(p).cos(),
            Expr::Exp(a) => a.eval(p).exp(),
        }
    }

    /// Highest coordinate index referenced, plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => {
                a.arity()
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.arity().max(b.arity())
            }
        }
    }

    /// Symbolic partial derivative with respect to coordinate `var`.
    pub fn derivative(&self, var: usize) -> Expr {
        use Expr::*;
        let d = |e: &Expr| e.derivative(var);
        match self {
            Const(_) => Const(0.0),
            Var(i) => Const(if *i == var { 1.0 } else { 0.0 }),
            Neg(a) => neg(d(a)),
            Add(a, b) => add(d(a), d(b)),
            Sub(a, b) => sub(d(a), d(b)),
            Mul(a, b) => add(mul(d(a), (**b).clone()), mul((**a).clone(), d(b))),
            Div(a, b) => div(
                sub(mul(d(a), (**b).clone()), mul((**a).clone(), d(b))),
                Pow(b.clone(), 2),
            ),
            Pow(a, k) => mul(mul(Const(*k as f64), pow((**a).clone(), k - 1)), d(a)),
            Sin(a) => mul(Cos(a.clone()), d(a)),
            Cos(a) => neg(mul(Sin(a.clone()), d(a))),
            Exp(a) => mul(Exp(a.clone()), d(a)),
        }
    }

    /// Numerical check that the expression is 1-periodic in each of the
    /// first `dim` coordinates.
    pub fn is_periodic(&self, dim: usize) -> bool {
        let probes = [0.137, 0.411, 0.774, 0.958];
        for k in 0..dim {
            for &a in &probes {
                for &b in &probes {
                    let mut p = [a, b, 0.5 * (a + b)];
                    let f0 = self.eval(&p);
                    p[k] += 1.0;
                    let f1 = self.eval(&p);
                    if !f0.is_finite() || (f0 - f1).abs() > 1e-9 * (1.0 + f0.abs()) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 1.0)
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (is_zero(&a), is_zero(&b)) {
        (true, _) => b,
        (_, true) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (is_zero(&a), is_zero(&b)) {
        (_, true) => a,
        (true, _) => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_zero(&b) {
        return Expr::Const(0.0);
    }
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ if is_one(&a) => b,
        _ if is_one(&b) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        return Expr::Const(0.0);
    }
    Expr::Div(Box::new(a), Box::new(b))
}

fn pow(a: Expr, k: i32) -> Expr {
    match k {
        0 => Expr::Const(1.0),
        1 => a,
        _ => Expr::Pow(Box::new(a), k),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "{}", ["x", "y", "z"][*i]),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => write!(f, "({a}^{k})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse {
            line: 1,
            column: self.pos + 1,
            message: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        let base = self.atom()?;
        if self.eat('^') {
            self.skip_ws();
            let start = self.pos;
            if self.peek() == Some('-') {
                self.pos += 1;
            }
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            let k: i32 = self.src[start..self.pos]
                .parse()
                .map_err(|_| self.error("expected integer exponent"))?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        let c = self.peek().ok_or_else(|| self.error("unexpected end of expression"))?;
        if c == '(' {
            self.pos += 1;
            let e = self.expr()?;
            if !self.eat(')') {
                return Err(self.error("expected ')'"));
            }
            return Ok(e);
        }
        if c.is_ascii_digit() || c == '.' {
            let start = self.pos;
            while self
                .peek()
                .is_some_and(|c| c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E')
            {
                let was_exp = matches!(self.peek(), Some('e' | 'E'));
                self.pos += 1;
                if was_exp && matches!(self.peek(), Some('+' | '-')) {
                    self.pos += 1;
                }
            }
            let v: f64 = self.src[start..self.pos]
                .parse()
                .map_err(|_| self.error("malformed number"))?;
            return Ok(Expr::Const(v));
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                self.pos += 1;
            }
            let name = &self.src[start..self.pos];
            let func = |p: &mut Self, ctor: fn(Box<Expr>) -> Expr| -> Result<Expr> {
                if !p.eat('(') {
                    return Err(p.error("expected '(' after function name"));
                }
                let arg = p.expr()?;
                if !p.eat(')') {
                    return Err(p.error("expected ')'"));
                }
                Ok(ctor(Box::new(arg)))
            };
            return match name {
                "x" => Ok(Expr::Var(0)),
                "y" => Ok(Expr::Var(1)),
                "z" => Ok(Expr::Var(2)),
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                "sin" => func(self, Expr::Sin),
                "cos" => func(self, Expr::Cos),
                "exp" => func(self, Expr::Exp),
                _ => {
                    self.pos = start;
                    Err(self.error(&format!("unknown identifier '{name}'")))
                }
            };
        }
        Err(self.error(&format!("unexpected character '{c}'")))
    }
}
