//! Minimal arithmetic expression grammar for coefficient functions in
//! config files: `+ - * /`, unary minus, parentheses, the functions
//! `exp, log, abs, min, max, indicator`, float literals, and the
//! environment coordinates `x0, x1, ...` (`x` aliases `x0`).
//!
//! `indicator(e)` is 1 when e > 0 and 0 otherwise, which together with
//! min/max is enough to express threshold-style coefficient maps.

use std::sync::Arc;

use crate::environment::EnvPoint;
use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Abs(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Indicator(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, coords: &[f64]) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Var(i) => coords.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Neg(e) => -e.eval(coords),
            Expr::Add(a, b) => a.eval(coords) + b.eval(coords),
            Expr::Sub(a, b) => a.eval(coords) - b.eval(coords),
            Expr::Mul(a, b) => a.eval(coords) * b.eval(coords),
            Expr::Div(a, b) => a.eval(coords) / b.eval(coords),
            Expr::Exp(e) => e.eval(coords).exp(),
            Expr::Log(e) => e.eval(coords).ln(),
            Expr::Abs(e) => e.eval(coords).abs(),
            Expr::Min(a, b) => a.eval(coords).min(b.eval(coords)),
            Expr::Max(a, b) => a.eval(coords).max(b.eval(coords)),
            Expr::Indicator(e) => {
                if e.eval(coords) > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Largest coordinate index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) | Expr::Exp(e) | Expr::Log(e) | Expr::Abs(e) | Expr::Indicator(e) => {
                e.max_var()
            }
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => match (a.max_var(), b.max_var()) {
                (None, v) | (v, None) => v,
                (Some(x), Some(y)) => Some(x.max(y)),
            },
        }
    }

    /// Package into an environment coefficient function.
    pub fn into_env_fn(self) -> Arc<dyn Fn(&EnvPoint) -> f64 + Send + Sync> {
        Arc::new(move |x: &EnvPoint| self.eval(x.coords()))
    }
}

pub fn parse(src: &str) -> Result<Expr> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: &str) -> CoreError {
        CoreError::Config(format!(
            "expression parse error at byte {}: {msg} (in {:?})",
            self.pos,
            String::from_utf8_lossy(self.src)
        ))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            self.skip_ws();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                self.skip_ws();
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            _ => Err(self.error("expected a number, variable, function or '('")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self
            .peek()
            .map(|c| c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E')
            .unwrap_or(false)
        {
            // Exponent sign.
            if matches!(self.src[self.pos], b'e' | b'E')
                && matches!(self.src.get(self.pos + 1), Some(b'+') | Some(b'-'))
            {
                self.pos += 1;
            }
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let v: f64 = text
            .parse()
            .map_err(|_| self.error(&format!("bad number literal {text:?}")))?;
        self.skip_ws();
        Ok(Expr::Num(v))
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self
            .peek()
            .map(|c| c.is_ascii_alphanumeric() || c == b'_')
            .unwrap_or(false)
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        self.skip_ws();
        if name == "x" {
            return Ok(Expr::Var(0));
        }
        if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            return Ok(Expr::Var(idx));
        }
        // Function call.
        if !self.eat(b'(') {
            return Err(self.error(&format!("unknown identifier {name:?}")));
        }
        let first = self.expr()?;
        let expr = match name.as_str() {
            "exp" => Expr::Exp(Box::new(first)),
            "log" => Expr::Log(Box::new(first)),
            "abs" => Expr::Abs(Box::new(first)),
            "indicator" => Expr::Indicator(Box::new(first)),
            "min" | "max" => {
                if !self.eat(b',') {
                    return Err(self.error(&format!("{name} takes two arguments")));
                }
                let second = self.expr()?;
                if name == "min" {
                    Expr::Min(Box::new(first), Box::new(second))
                } else {
                    Expr::Max(Box::new(first), Box::new(second))
                }
            }
            _ => return Err(self.error(&format!("unknown function {name:?}"))),
        };
        if !self.eat(b')') {
            return Err(self.error("expected ')'"));
        }
        Ok(expr)
    }
}
