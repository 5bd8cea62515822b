//! A small closed-form expression language for coefficient functions.
//!
//! Grammar (whitespace is ignored):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! var    := 't' | 'x' | 'u'
//! func   := 'sin' | 'cos' | 'exp' | 'tanh' | 'abs' | 'sqrt'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-u^2`
//! is `-(u^2)`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("expression error at position {position}: {message}")]
pub struct ExprError {
    /// 1-based character column in the source string.
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X,
    U,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::U => "u",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Abs,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let mut p = Parser { chars: src.chars().collect(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.error(format!("unexpected '{}'", p.chars[p.pos])));
        }
        Ok(e)
    }

    /// Parses and rejects variables outside `allowed`.
    pub fn parse_with(src: &str, allowed: &[Var]) -> Result<Expr, ExprError> {
        let e = Expr::parse(src)?;
        if let Some(v) = e.variables().into_iter().find(|v| !allowed.contains(v)) {
            let position = src.find(v.name()).map_or(1, |i| src[..i].chars().count() + 1);
            return Err(ExprError { position, message: format!("variable '{}' not allowed here", v.name()) });
        }
        Ok(e)
    }

    pub fn eval(&self, t: f64, x: f64, u: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::U) => u,
            Expr::Neg(a) => -a.eval(t, x, u),
            Expr::Add(a, b) => a.eval(t, x, u) + b.eval(t, x, u),
            Expr::Sub(a, b) => a.eval(t, x, u) - b.eval(t, x, u),
            Expr::Mul(a, b) => a.eval(t, x, u) * b.eval(t, x, u),
            Expr::Div(a, b) => a.eval(t, x, u) / b.eval(t, x, u),
            Expr::Pow(a, b) => {
                let base = a.eval(t, x, u);
                match **b {
                    Expr::Num(n) if n.fract() == 0.0 && n.abs() < 64.0 => base.powi(n as i32),
                    _ => base.powf(b.eval(t, x, u)),
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(t, x, u);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Tanh => v.tanh(),
                    Func::Abs => v.abs(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }

    /// Returns the constant value if the expression has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        if self.variables().is_empty() {
            Some(self.eval(0.0, 0.0, 0.0))
        } else {
            None
        }
    }

    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(*v)
                }
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => {
                let name = match func {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Exp => "exp",
                    Func::Tanh => "tanh",
                    Func::Abs => "abs",
                    Func::Sqrt => "sqrt",
                };
                write!(f, "{name}({a})")
            }
        }
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn error(&self, message: String) -> ExprError {
        ExprError { position: self.pos + 1, message }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == '+' { Expr::Add(lhs.into(), rhs.into()) } else { Expr::Sub(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' { Expr::Mul(lhs.into(), rhs.into()) } else { Expr::Div(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some('-') {
            self.pos += 1;
            return Ok(Expr::Neg(self.unary()?.into()));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(base.into(), exp.into()));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression".into())),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().collect();
                let func = match name.as_str() {
                    "t" => return Ok(Expr::Var(Var::T)),
                    "x" => return Ok(Expr::Var(Var::X)),
                    "u" => return Ok(Expr::Var(Var::U)),
                    "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "tanh" => Func::Tanh,
                    "abs" => Func::Abs,
                    "sqrt" => Func::Sqrt,
                    _ => {
                        self.pos = start;
                        return Err(self.error(format!("unknown identifier '{name}'")));
                    }
                };
                self.expect('(')?;
                let arg = self.expr()?;
                self.expect(')')?;
                Ok(Expr::Call(func, arg.into()))
            }
            Some(c) => Err(self.error(format!("expected operand, found '{c}'"))),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let n = self.chars.len();
        while self.pos < n && (self.chars[self.pos].is_ascii_digit() || self.chars[self.pos] == '.') {
            self.pos += 1;
        }
        if self.pos < n && matches!(self.chars[self.pos], 'e' | 'E') {
            let mut look = self.pos + 1;
            if look < n && matches!(self.chars[look], '+' | '-') {
                look += 1;
            }
            if look < n && self.chars[look].is_ascii_digit() {
                self.pos = look;
                while self.pos < n && self.chars[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>().map(Expr::Num).map_err(|_| ExprError {
            position: start + 1,
            message: format!("malformed number '{text}'"),
        })
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        match self.peek() {
            Some(found) if found == c => {
                self.pos += 1;
                Ok(())
            }
            Some(found) => Err(self.error(format!("expected '{c}', found '{found}'"))),
            None => Err(self.error(format!("expected '{c}', found end of expression"))),
        }
    }
}
