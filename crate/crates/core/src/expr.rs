//! Analytic scalar fields in `x1`, `x2` (and `y` for integrands and coefficients).
//!
//! Grammar:
//!
//! ```text
//! expr   := term (("+"|"-") term)*
//! term   := factor (("*"|"/") factor)*
//! factor := ("-")? power
//! power  := atom ("^" factor)?
//! atom   := NUMBER | IDENT | IDENT "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! Identifiers: `x1 x2 y pi sin cos exp sqrt abs sign min max`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::real::{sign0, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X1,
    X2,
    Y,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::X1 => "x1",
            Var::X2 => "x2",
            Var::Y => "y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Sign,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

/// Expression tree. Immutable once built; evaluation borrows it.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}", expected.join(" | "))]
    Syntax { offset: usize, expected: Vec<&'static str> },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdent { offset: usize, name: String },
    #[error("function `{name}` takes {expected} argument(s), got {got} (byte {offset})")]
    Arity {
        offset: usize,
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("empty expression")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative number")]
    SqrtNegative,
    #[error("non-finite result")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("cannot differentiate a power with a variable exponent: {0}")]
    VariableExponent(String),
}

/// Point of evaluation: the two space coordinates and the state value `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vars<T> {
    pub x1: T,
    pub x2: T,
    pub y: T,
}

impl<T: Real> Vars<T> {
    pub fn at(x1: T, x2: T) -> Self {
        Vars { x1, x2, y: T::zero() }
    }

    pub fn with_y(x1: T, x2: T, y: T) -> Self {
        Vars { x1, x2, y }
    }

    fn get(&self, v: Var) -> T {
        match v {
            Var::X1 => self.x1,
            Var::X2 => self.x2,
            Var::Y => self.y,
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer / parser

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Returns the next token and its starting byte offset.
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let single = |t: Tok, me: &mut Self| {
            me.pos += 1;
            Ok((t, start))
        };
        match c {
            b'+' => single(Tok::Plus, self),
            b'-' => single(Tok::Minus, self),
            b'*' => single(Tok::Star, self),
            b'/' => single(Tok::Slash, self),
            b'^' => single(Tok::Caret, self),
            b'(' => single(Tok::LParen, self),
            b')' => single(Tok::RParen, self),
            b',' => single(Tok::Comma, self),
            b'0'..=b'9' | b'.' => self.number(start),
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos])
                    .expect("ascii")
                    .to_string();
                Ok((Tok::Ident(name), start))
            }
            _ => Err(ParseError::Syntax {
                offset: start,
                expected: vec!["number", "identifier", "(", "-"],
            }),
        }
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ParseError> {
        let digits = |me: &mut Self| {
            let s = me.pos;
            while me.pos < me.src.len() && me.src[me.pos].is_ascii_digit() {
                me.pos += 1;
            }
            me.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(ParseError::Syntax {
                offset: start,
                expected: vec!["digit"],
            });
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                // `2e` followed by something else: not an exponent.
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
            offset: start,
            expected: vec!["number"],
        })?;
        Ok((Tok::Num(v), start))
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    at: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Result<Self, ParseError> {
        let mut lex = Lexer {
            src: text.as_bytes(),
            pos: 0,
        };
        let (tok, at) = lex.next()?;
        Ok(Parser { lex, tok, at })
    }

    fn bump(&mut self) -> Result<(), ParseError> {
        let (tok, at) = self.lex.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn expect(&mut self, t: Tok, name: &'static str) -> Result<(), ParseError> {
        if self.tok == t {
            self.bump()
        } else {
            Err(ParseError::Syntax {
                offset: self.at,
                expected: vec![name],
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.tok == Tok::Minus {
            self.bump()?;
            let inner = self.power()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.tok == Tok::Caret {
            self.bump()?;
            let exp = self.factor()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump()?;
                let e = self.expr()?;
                self.expect(Tok::RParen, ")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let offset = self.at;
                self.bump()?;
                match name.as_str() {
                    "x1" => return Ok(Expr::Var(Var::X1)),
                    "x2" => return Ok(Expr::Var(Var::X2)),
                    "y" => return Ok(Expr::Var(Var::Y)),
                    "pi" => return Ok(Expr::Pi),
                    _ => {}
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(ParseError::UnknownIdent { offset, name });
                };
                self.expect(Tok::LParen, "(")?;
                let mut args = vec![self.expr()?];
                while self.tok == Tok::Comma {
                    self.bump()?;
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen, ")")?;
                if args.len() != func.arity() {
                    return Err(ParseError::Arity {
                        offset,
                        name: func.name(),
                        expected: func.arity(),
                        got: args.len(),
                    });
                }
                Ok(Expr::Call(func, args))
            }
            _ => Err(ParseError::Syntax {
                offset: self.at,
                expected: vec!["number", "identifier", "("],
            }),
        }
    }
}

/// Parses `text` into an expression tree.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return Err(ParseError::Syntax {
            offset: p.at,
            expected: vec!["operator", "end of input"],
        });
    }
    Ok(e)
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

// ---------------------------------------------------------------------------
// Printing

// Binding levels: 1 sum, 2 product, 3 unary minus, 4 power, 5 atom.
fn level(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Bin(BinOp::Pow, ..) => 4,
        _ => 5,
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, e: &Expr, min_level: u8) -> fmt::Result {
    if level(e) < min_level {
        write!(f, "(")?;
        write!(f, "{e}")?;
        write!(f, ")")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 {
                    // Never produced by the parser; keep it printable anyway.
                    write!(f, "(0 - {:?})", -v)
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Pi => write!(f, "pi"),
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Neg(x) => {
                write!(f, "-")?;
                write_at(f, x, 4)
            }
            Expr::Bin(op, l, r) => {
                let (ll, rl) = match op {
                    BinOp::Add | BinOp::Sub => (1, 2),
                    BinOp::Mul | BinOp::Div => (2, 3),
                    BinOp::Pow => (5, 3),
                };
                write_at(f, l, ll)?;
                if matches!(op, BinOp::Pow) {
                    write!(f, "^")?;
                } else {
                    write!(f, " {} ", op.symbol())?;
                }
                write_at(f, r, rl)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_expr(&text).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Construction helpers with light simplification (value-preserving wherever
// the unsimplified tree is finite).

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(x) if *x == v)
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        if v < 0.0 {
            Expr::Neg(Box::new(Expr::Num(-v)))
        } else {
            Expr::Num(v)
        }
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        if is_num(&a, 0.0) {
            return b;
        }
        if is_num(&b, 0.0) {
            return a;
        }
        Expr::Bin(BinOp::Add, Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        if is_num(&b, 0.0) {
            return a;
        }
        if is_num(&a, 0.0) {
            return Expr::neg(b);
        }
        Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        if is_num(&a, 0.0) || is_num(&b, 0.0) {
            return Expr::Num(0.0);
        }
        if is_num(&a, 1.0) {
            return b;
        }
        if is_num(&b, 1.0) {
            return a;
        }
        Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        if is_num(&b, 1.0) {
            return a;
        }
        Expr::Bin(BinOp::Div, Box::new(a), Box::new(b))
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        if is_num(&b, 1.0) {
            return a;
        }
        Expr::Bin(BinOp::Pow, Box::new(a), Box::new(b))
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Num(0.0) => Expr::Num(0.0),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn call(f: Func, args: Vec<Expr>) -> Expr {
        Expr::Call(f, args)
    }

    /// True when the tree mentions `v`.
    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(x) => x.depends_on(v),
            Expr::Bin(_, l, r) => l.depends_on(v) || r.depends_on(v),
            Expr::Call(_, args) => args.iter().any(|a| a.depends_on(v)),
        }
    }

    pub fn is_constant(&self) -> bool {
        !(self.depends_on(Var::X1) || self.depends_on(Var::X2) || self.depends_on(Var::Y))
    }

    /// Replaces every occurrence of `v` by `with`.
    pub fn substitute(&self, v: Var, with: &Expr) -> Expr {
        match self {
            Expr::Var(w) if *w == v => with.clone(),
            Expr::Num(_) | Expr::Pi | Expr::Var(_) => self.clone(),
            Expr::Neg(x) => Expr::Neg(Box::new(x.substitute(v, with))),
            Expr::Bin(op, l, r) => Expr::Bin(*op, Box::new(l.substitute(v, with)), Box::new(r.substitute(v, with))),
            Expr::Call(f, args) => Expr::Call(*f, args.iter().map(|a| a.substitute(v, with)).collect()),
        }
    }

    /// Evaluates the tree at `vars`.
    pub fn eval<T: Real>(&self, vars: &Vars<T>) -> Result<T, EvalError> {
        let v = self.eval_raw(vars)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    fn eval_raw<T: Real>(&self, vars: &Vars<T>) -> Result<T, EvalError> {
        Ok(match self {
            Expr::Num(v) => T::lit(*v),
            Expr::Pi => T::lit(std::f64::consts::PI),
            Expr::Var(v) => vars.get(*v),
            Expr::Neg(x) => -x.eval_raw(vars)?,
            Expr::Bin(op, l, r) => {
                let a = l.eval_raw(vars)?;
                let b = r.eval_raw(vars)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == T::zero() {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let bi = b.round();
                        if bi == b && bi.abs() <= T::lit(64.0) {
                            let n = bi.to_i32().expect("small integer exponent");
                            if n < 0 && a == T::zero() {
                                return Err(EvalError::DivisionByZero);
                            }
                            a.powi(n)
                        } else {
                            a.powf(b)
                        }
                    }
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval_raw(vars)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Sqrt => {
                        if a < T::zero() {
                            return Err(EvalError::SqrtNegative);
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Sign => sign0(a),
                    Func::Min => a.min(args[1].eval_raw(vars)?),
                    Func::Max => a.max(args[1].eval_raw(vars)?),
                }
            }
        })
    }

    /// Evaluates a field expression at a point of the plane (`y` = 0).
    pub fn eval_point<T: Real>(&self, p: [T; 2]) -> Result<T, EvalError> {
        self.eval(&Vars::at(p[0], p[1]))
    }

    /// Symbolic partial derivative with respect to `v`.
    ///
    /// Kinks follow d|g| = sign(g) g' with sign(0) = 0.
    pub fn differentiate(&self, v: Var) -> Result<Expr, DiffError> {
        Ok(match self {
            Expr::Num(_) | Expr::Pi => Expr::Num(0.0),
            Expr::Var(w) => Expr::Num(if *w == v { 1.0 } else { 0.0 }),
            Expr::Neg(x) => Expr::neg(x.differentiate(v)?),
            Expr::Bin(op, l, r) => {
                let (l, r) = (l.as_ref(), r.as_ref());
                match op {
                    BinOp::Add => Expr::add(l.differentiate(v)?, r.differentiate(v)?),
                    BinOp::Sub => Expr::sub(l.differentiate(v)?, r.differentiate(v)?),
                    BinOp::Mul => Expr::add(
                        Expr::mul(l.differentiate(v)?, r.clone()),
                        Expr::mul(l.clone(), r.differentiate(v)?),
                    ),
                    BinOp::Div => {
                        // (l/r)' = l'/r - l r' / r^2
                        let dl = l.differentiate(v)?;
                        let dr = r.differentiate(v)?;
                        Expr::sub(
                            Expr::div(dl, r.clone()),
                            Expr::div(Expr::mul(l.clone(), dr), Expr::pow(r.clone(), Expr::Num(2.0))),
                        )
                    }
                    BinOp::Pow => {
                        if r.depends_on(v) {
                            return Err(DiffError::VariableExponent(self.to_string()));
                        }
                        let dl = l.differentiate(v)?;
                        let exponent = match r {
                            Expr::Num(k) => Expr::num(k - 1.0),
                            other => Expr::sub(other.clone(), Expr::Num(1.0)),
                        };
                        Expr::mul(Expr::mul(r.clone(), Expr::pow(l.clone(), exponent)), dl)
                    }
                }
            }
            Expr::Call(f, args) => {
                let g = &args[0];
                let dg = g.differentiate(v)?;
                match f {
                    Func::Sin => Expr::mul(Expr::call(Func::Cos, vec![g.clone()]), dg),
                    Func::Cos => Expr::neg(Expr::mul(Expr::call(Func::Sin, vec![g.clone()]), dg)),
                    Func::Exp => Expr::mul(self.clone(), dg),
                    Func::Sqrt => Expr::div(dg, Expr::mul(Expr::Num(2.0), self.clone())),
                    Func::Abs => Expr::mul(Expr::call(Func::Sign, vec![g.clone()]), dg),
                    Func::Sign => Expr::Num(0.0),
                    Func::Min | Func::Max => {
                        // min(f,g) = (f+g)/2 - |f-g|/2, max(f,g) = (f+g)/2 + |f-g|/2
                        let h = &args[1];
                        let dh = h.differentiate(v)?;
                        let mean = Expr::mul(Expr::Num(0.5), Expr::add(dg.clone(), dh.clone()));
                        let jump = Expr::mul(
                            Expr::mul(
                                Expr::Num(0.5),
                                Expr::call(Func::Sign, vec![Expr::sub(g.clone(), h.clone())]),
                            ),
                            Expr::sub(dg, dh),
                        );
                        if *f == Func::Min {
                            Expr::sub(mean, jump)
                        } else {
                            Expr::add(mean, jump)
                        }
                    }
                }
            }
        })
    }

    /// d²/dx1² + d²/dx2².
    pub fn laplacian(&self) -> Result<Expr, DiffError> {
        let dxx = self.differentiate(Var::X1)?.differentiate(Var::X1)?;
        let dyy = self.differentiate(Var::X2)?.differentiate(Var::X2)?;
        Ok(Expr::add(dxx, dyy))
    }
}

/// Free-function forms of the three core operations.
pub fn differentiate(e: &Expr, v: Var) -> Result<Expr, DiffError> {
    e.differentiate(v)
}

pub fn eval_field<T: Real>(e: &Expr, p: [T; 2]) -> Result<T, EvalError> {
    e.eval_point(p)
}

/// An expression bundled with its symbolic gradient and Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffExpr {
    pub expr: Expr,
    pub dx1: Expr,
    pub dx2: Expr,
    pub laplacian: Expr,
}

impl DiffExpr {
    pub fn new(expr: Expr) -> Result<Self, DiffError> {
        let dx1 = expr.differentiate(Var::X1)?;
        let dx2 = expr.differentiate(Var::X2)?;
        let laplacian = Expr::add(dx1.differentiate(Var::X1)?, dx2.differentiate(Var::X2)?);
        Ok(DiffExpr {
            expr,
            dx1,
            dx2,
            laplacian,
        })
    }

    pub fn parse(text: &str) -> Result<Self, crate::Error> {
        let e = parse_expr(text)?;
        Ok(DiffExpr::new(e)?)
    }

    pub fn value<T: Real>(&self, p: [T; 2]) -> Result<T, EvalError> {
        self.expr.eval_point(p)
    }

    pub fn gradient<T: Real>(&self, p: [T; 2]) -> Result<[T; 2], EvalError> {
        Ok([self.dx1.eval_point(p)?, self.dx2.eval_point(p)?])
    }

    pub fn lap<T: Real>(&self, p: [T; 2]) -> Result<T, EvalError> {
        self.laplacian.eval_point(p)
    }
}

/// A function of the state value `y` with its first two derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFn {
    pub f: Expr,
    pub df: Expr,
    pub d2f: Expr,
}

impl ScalarFn {
    pub fn new(f: Expr) -> Result<Self, DiffError> {
        let df = f.differentiate(Var::Y)?;
        let d2f = df.differentiate(Var::Y)?;
        Ok(ScalarFn { f, df, d2f })
    }

    pub fn parse(text: &str) -> Result<Self, crate::Error> {
        Ok(ScalarFn::new(parse_expr(text)?)?)
    }

    fn at<T: Real>(e: &Expr, t: T) -> Result<T, EvalError> {
        e.eval(&Vars::with_y(T::zero(), T::zero(), t))
    }

    pub fn value<T: Real>(&self, t: T) -> Result<T, EvalError> {
        Self::at(&self.f, t)
    }

    pub fn deriv<T: Real>(&self, t: T) -> Result<T, EvalError> {
        Self::at(&self.df, t)
    }

    pub fn second<T: Real>(&self, t: T) -> Result<T, EvalError> {
        Self::at(&self.d2f, t)
    }
}
