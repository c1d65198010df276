//! Closed-form scalar expressions over the differentiable primitive set,
//! used for analytic Hamiltonians and state-dependent structure matrices.
//!
//! Grammar (usual precedence, `^` binds tightest and takes an integer
//! literal exponent):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' '-'? integer)?
//! atom  := number | name | func '(' expr ')' | '(' expr ')'
//! func  := sin | cos | tanh | exp | ln | sqrt
//! ```

use std::fmt;

use thiserror::Error;

use crate::autodiff::{AdError, Real, ScalarProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tanh,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply<S: Real>(self, x: &S) -> S {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tanh => x.tanh(),
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("unexpected character '{ch}' at offset {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unknown identifier '{0}'")]
    UnknownIdent(String),
    #[error("unsupported primitive '{0}'")]
    Unsupported(String),
    #[error("exponent must be an integer literal at offset {0}")]
    BadExponent(usize),
    #[error("trailing input at offset {0}")]
    Trailing(usize),
}

impl Expr {
    /// Parses `src` with variables named by `vars` (index = position).
    pub fn parse(src: &str, vars: &[&str]) -> Result<Self, ParseError> {
        let mut p = Parser { src: src.as_bytes(), pos: 0, vars };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(ParseError::Trailing(p.pos));
        }
        Ok(e)
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.max_var().max(b.max_var())
            }
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Evaluates with a finiteness check after every node so that domain
    /// errors name the primitive that produced them.
    pub fn eval<S: Real>(&self, z: &[S]) -> Result<S, AdError> {
        let (out, name) = match self {
            Expr::Const(c) => (z[0].constant(*c), "constant"),
            Expr::Var(i) => {
                let v = z.get(*i).ok_or_else(|| AdError::Structural(format!("variable index {i} out of range")))?;
                (v.clone(), "variable")
            }
            Expr::Neg(a) => (a.eval(z)?.neg(), "neg"),
            Expr::Add(a, b) => (a.eval(z)?.add(&b.eval(z)?), "+"),
            Expr::Sub(a, b) => (a.eval(z)?.sub(&b.eval(z)?), "-"),
            Expr::Mul(a, b) => (a.eval(z)?.mul(&b.eval(z)?), "*"),
            Expr::Div(a, b) => (a.eval(z)?.div(&b.eval(z)?), "/"),
            Expr::Pow(a, k) => (a.eval(z)?.powi(*k), "^"),
            Expr::Call(f, a) => (f.apply(&a.eval(z)?), f.name()),
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(AdError::domain(name))
        }
    }

    pub fn eval_f64(&self, z: &[f64]) -> Result<f64, AdError> {
        self.eval(z)
    }
}

impl ScalarProgram for Expr {
    fn eval<S: Real>(&self, z: &[S]) -> Result<S, AdError> {
        Expr::eval(self, z)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => write!(f, "({a}^{k})"),
            Expr::Call(g, a) => write!(f, "{}({a})", g.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        match self.peek() {
            Some(x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            Some(x) => Err(ParseError::UnexpectedChar { ch: x as char, pos: self.pos }),
            None => Err(ParseError::UnexpectedEnd),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek() != Some(b'^') {
            return Ok(base);
        }
        self.pos += 1;
        let start = self.pos;
        let neg = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        let Some(Expr::Const(c)) = self.number()? else {
            return Err(ParseError::BadExponent(start));
        };
        if c.fract() != 0.0 || c.abs() > i32::MAX as f64 {
            return Err(ParseError::BadExponent(start));
        }
        let k = c as i32;
        Ok(Expr::Pow(Box::new(base), if neg { -k } else { k }))
    }

    fn number(&mut self) -> Result<Option<Expr>, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i == start {
            return Ok(None);
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&s[start..i]).unwrap();
        let v: f64 = text.parse().map_err(|_| ParseError::UnexpectedChar { ch: s[start] as char, pos: start })?;
        self.pos = i;
        Ok(Some(Expr::Const(v)))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(ParseError::UnexpectedEnd),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(self.number()?.unwrap()),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Expr::Var(i));
                }
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                if self.peek() == Some(b'(') {
                    let f = Func::from_name(name).ok_or_else(|| ParseError::Unsupported(name.to_string()))?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(b')')?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                Err(ParseError::UnknownIdent(name.to_string()))
            }
            Some(c) => Err(ParseError::UnexpectedChar { ch: c as char, pos: self.pos }),
        }
    }
}
