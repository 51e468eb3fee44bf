//! Scalar expressions over state, control and time variables.
//!
//! The grammar is the usual infix one with integer-only exponents:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?        exponent must fold to an integer
//! primary := number | name | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! Names are `x1..xn`, `u1..um`, `t` and the constant `pi`.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

/// A free variable of an expression. Indices are zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    State(usize),
    Control(usize),
    Time,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
    Sign,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Sign => "sign",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    /// `abs` and `sign` are the only non-smooth functions.
    pub fn is_kink(self) -> bool {
        matches!(self, Func::Abs | Func::Sign)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParseErrorKind {
    Empty,
    UnexpectedChar(char),
    UnexpectedToken { found: String, expected: &'static str },
    UnknownIdentifier(String),
    IndexOutOfRange { name: String, dim: usize },
    NonIntegerExponent,
    InvalidNumber(String),
}

/// Syntax error at a byte offset of the source.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub pos: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at offset {}: ", self.pos)?;
        match &self.kind {
            ParseErrorKind::Empty => write!(f, "empty expression"),
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            ParseErrorKind::UnexpectedToken { found, expected } => {
                write!(f, "expected {expected}, found {found}")
            }
            ParseErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier '{s}'"),
            ParseErrorKind::IndexOutOfRange { name, dim } => {
                write!(f, "variable '{name}' out of range (dimension {dim})")
            }
            ParseErrorKind::NonIntegerExponent => write!(f, "exponent must be an integer literal"),
            ParseErrorKind::InvalidNumber(s) => write!(f, "invalid number '{s}'"),
        }
    }
}

impl core::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq)]
pub enum EvalError {
    DivisionByZero,
    LogDomain(f64),
    SqrtDomain(f64),
    NonFinite,
    MissingVariable(Var),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::DivisionByZero => write!(f, "division by zero"),
            EvalError::LogDomain(v) => write!(f, "log of non-positive value {v}"),
            EvalError::SqrtDomain(v) => write!(f, "sqrt of negative value {v}"),
            EvalError::NonFinite => write!(f, "non-finite result"),
            EvalError::MissingVariable(v) => write!(f, "no value supplied for {v:?}"),
        }
    }
}

impl core::error::Error for EvalError {}

/// Result of symbolic differentiation.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivative {
    pub expr: Expr,
    /// The derivative passed through `abs` or `sign`; it is only valid
    /// away from the zero set of their arguments.
    pub through_kink: bool,
}

// ---------------------------------------------------------------- lexer

#[derive(Clone, Debug, PartialEq)]
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
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => v.to_string(),
            Tok::Ident(s) => s.clone(),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ParseError {
                    pos: start,
                    kind: ParseErrorKind::InvalidNumber(text.to_string()),
                })?;
                out.push((start, Tok::Num(v)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ParseError { pos: i, kind: ParseErrorKind::UnexpectedChar(ch) });
            }
        };
        out.push((start, tok));
        i += 1;
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

// ---------------------------------------------------------------- parser

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    n: usize,
    m: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &'static str) -> ParseError {
        ParseError {
            pos: self.offset(),
            kind: ParseErrorKind::UnexpectedToken { found: self.peek().describe(), expected },
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let at = self.offset();
        let exponent = self.unary()?;
        let k = fold_integer(&exponent)
            .ok_or(ParseError { pos: at, kind: ParseErrorKind::NonIntegerExponent })?;
        Ok(Expr::Pow(Box::new(base), k))
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected("')'"));
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(self.unexpected("'(' after function name"));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return Err(self.unexpected("')'"));
                    }
                    self.bump();
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                self.variable(&name, at)
            }
            Tok::End => {
                self.pos = self.toks.len() - 1;
                Err(ParseError {
                    pos: at,
                    kind: ParseErrorKind::UnexpectedToken {
                        found: Tok::End.describe(),
                        expected: "an operand",
                    },
                })
            }
            other => Err(ParseError {
                pos: at,
                kind: ParseErrorKind::UnexpectedToken { found: other.describe(), expected: "an operand" },
            }),
        }
    }

    fn variable(&self, name: &str, at: usize) -> Result<Expr, ParseError> {
        if name == "pi" {
            return Ok(Expr::Num(core::f64::consts::PI));
        }
        if name == "t" {
            return Ok(Expr::Var(Var::Time));
        }
        let unknown = || ParseError { pos: at, kind: ParseErrorKind::UnknownIdentifier(name.to_string()) };
        let (head, digits) = name.split_at(1);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(unknown());
        }
        let idx: usize = digits.parse().map_err(|_| unknown())?;
        let (dim, make): (usize, fn(usize) -> Var) = match head {
            "x" => (self.n, Var::State),
            "u" => (self.m, Var::Control),
            _ => return Err(unknown()),
        };
        if idx == 0 || idx > dim {
            return Err(ParseError {
                pos: at,
                kind: ParseErrorKind::IndexOutOfRange { name: name.to_string(), dim },
            });
        }
        Ok(Expr::Var(make(idx - 1)))
    }
}

/// Folds a variable-free expression to an integer, if it is one.
fn fold_integer(e: &Expr) -> Option<i32> {
    if e.depends_on_any() {
        return None;
    }
    let v = e.eval(&[], &[], 0.0).ok()?;
    if libm::trunc(v) != v || v.abs() > i32::MAX as f64 {
        return None;
    }
    Some(v as i32)
}

/// Parses `source` with `n` state and `m` control variables in scope.
pub fn parse(source: &str, n: usize, m: usize) -> Result<Expr, ParseError> {
    if source.trim().is_empty() {
        return Err(ParseError { pos: 0, kind: ParseErrorKind::Empty });
    }
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0, n, m };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("operator or end of input"));
    }
    Ok(e)
}

// ---------------------------------------------------------------- printing

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        Expr::Num(v) if v.is_sign_negative() => 3,
        _ => 5,
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::State(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::Control(j)) => write!(f, "u{}", j + 1),
            Expr::Var(Var::Time) => write!(f, "t"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                write_wrapped(f, a, precedence(a) < 3)
            }
            Expr::Binary(op, a, b) => {
                let p = precedence(self);
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write_wrapped(f, a, precedence(a) < p)?;
                write!(f, "{sym}")?;
                write_wrapped(f, b, precedence(b) <= p)
            }
            Expr::Pow(a, k) => {
                write_wrapped(f, a, precedence(a) < 5)?;
                write!(f, "^{k}")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

// ---------------------------------------------------------------- evaluation

fn powi(x: f64, k: i32) -> f64 {
    let mut base = if k < 0 { 1.0 / x } else { x };
    let mut e = k.unsigned_abs();
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Where `abs`/`sign` take their sign from during evaluation.
enum KinkMode<'a> {
    Natural,
    Record(&'a mut Vec<i8>),
    Forced(&'a [i8], usize),
}

struct Env<'a> {
    x: &'a [f64],
    u: &'a [f64],
    t: f64,
}

impl Expr {
    /// Evaluates the expression. `sign(0)` is 0.
    pub fn eval(&self, x: &[f64], u: &[f64], t: f64) -> Result<f64, EvalError> {
        let v = self.eval_in(&Env { x, u, t }, &mut KinkMode::Natural)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Evaluates while recording, in post-order, the sign of every
    /// `abs`/`sign` argument.
    pub fn eval_recording(&self, x: &[f64], u: &[f64], t: f64, pattern: &mut Vec<i8>) -> Result<f64, EvalError> {
        let v = self.eval_in(&Env { x, u, t }, &mut KinkMode::Record(pattern))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Evaluates with the signs of `abs`/`sign` arguments taken from `pattern`
    /// (post-order, as produced by [`Expr::eval_recording`]). This is the smooth
    /// extension of one piece of a piecewise expression.
    pub fn eval_with_pattern(&self, x: &[f64], u: &[f64], t: f64, pattern: &[i8]) -> Result<f64, EvalError> {
        let mut mode = KinkMode::Forced(pattern, 0);
        let v = self.eval_in(&Env { x, u, t }, &mut mode)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    fn eval_in(&self, env: &Env<'_>, mode: &mut KinkMode<'_>) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(var) => {
                let slot = match var {
                    Var::State(i) => env.x.get(*i),
                    Var::Control(j) => env.u.get(*j),
                    Var::Time => Some(&env.t),
                };
                *slot.ok_or(EvalError::MissingVariable(*var))?
            }
            Expr::Neg(a) => -a.eval_in(env, mode)?,
            Expr::Binary(op, a, b) => {
                let l = a.eval_in(env, mode)?;
                let r = b.eval_in(env, mode)?;
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        l / r
                    }
                }
            }
            Expr::Pow(a, k) => {
                let b = a.eval_in(env, mode)?;
                if *k < 0 && b == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                powi(b, *k)
            }
            Expr::Call(func, a) => {
                let v = a.eval_in(env, mode)?;
                match func {
                    Func::Sin => libm::sin(v),
                    Func::Cos => libm::cos(v),
                    Func::Tan => libm::tan(v),
                    Func::Exp => libm::exp(v),
                    Func::Log => {
                        if v <= 0.0 {
                            return Err(EvalError::LogDomain(v));
                        }
                        libm::log(v)
                    }
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(EvalError::SqrtDomain(v));
                        }
                        libm::sqrt(v)
                    }
                    Func::Tanh => libm::tanh(v),
                    Func::Abs | Func::Sign => {
                        let s = match mode {
                            KinkMode::Natural => sign(v),
                            KinkMode::Record(p) => {
                                let s = sign(v);
                                p.push(s as i8);
                                s
                            }
                            KinkMode::Forced(p, cursor) => {
                                let s = p.get(*cursor).copied().unwrap_or(sign(v) as i8);
                                *cursor += 1;
                                f64::from(s)
                            }
                        };
                        if *func == Func::Abs {
                            s * v
                        } else {
                            s
                        }
                    }
                }
            }
        })
    }

    /// Number of `abs`/`sign` nodes.
    pub fn kink_count(&self) -> usize {
        let mut kinds = Vec::new();
        self.kink_kinds(&mut kinds);
        kinds.len()
    }

    /// The function of every `abs`/`sign` node in post-order.
    pub fn kink_kinds(&self, out: &mut Vec<Func>) {
        match self {
            Expr::Num(_) | Expr::Var(_) => {}
            Expr::Neg(a) | Expr::Pow(a, _) => a.kink_kinds(out),
            Expr::Binary(_, a, b) => {
                a.kink_kinds(out);
                b.kink_kinds(out);
            }
            Expr::Call(func, a) => {
                a.kink_kinds(out);
                if func.is_kink() {
                    out.push(*func);
                }
            }
        }
    }

    /// The argument of every `abs`/`sign` node in post-order.
    pub fn kink_arguments(&self) -> Vec<&Expr> {
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            match e {
                Expr::Num(_) | Expr::Var(_) => {}
                Expr::Neg(a) | Expr::Pow(a, _) => walk(a, out),
                Expr::Binary(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Expr::Call(func, a) => {
                    walk(a, out);
                    if func.is_kink() {
                        out.push(a);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    /// True if some `abs`/`sign` argument is within `tol` of zero at the point.
    pub fn near_kink(&self, x: &[f64], u: &[f64], t: f64, tol: f64) -> bool {
        self.kink_arguments()
            .iter()
            .any(|a| a.eval(x, u, t).map(|v| v.abs() <= tol).unwrap_or(false))
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Binary(_, a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    fn depends_on_any(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(_) => true,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.depends_on_any(),
            Expr::Binary(_, a, b) => a.depends_on_any() || b.depends_on_any(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    /// Symbolic partial derivative with light simplification.
    pub fn diff(&self, var: Var) -> Derivative {
        let mut kink = false;
        let expr = self.diff_in(var, &mut kink);
        Derivative { expr, through_kink: kink }
    }

    fn diff_in(&self, var: Var, kink: &mut bool) -> Expr {
        match self {
            Expr::Num(_) => num(0.0),
            Expr::Var(v) => num(if *v == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff_in(var, kink)),
            Expr::Binary(op, a, b) => {
                let da = a.diff_in(var, kink);
                let db = b.diff_in(var, kink);
                let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, b), mul(a, db)),
                    BinOp::Div => div(sub(mul(da, b.clone()), mul(a, db)), pow(b, 2)),
                }
            }
            Expr::Pow(a, k) => {
                let da = a.diff_in(var, kink);
                if *k == 0 {
                    return num(0.0);
                }
                mul(mul(num(f64::from(*k)), pow(a.as_ref().clone(), k - 1)), da)
            }
            Expr::Call(func, a) => {
                let da = a.diff_in(var, kink);
                if da.is_zero() {
                    return num(0.0);
                }
                let a = a.as_ref().clone();
                match func {
                    Func::Sin => mul(call(Func::Cos, a), da),
                    Func::Cos => neg(mul(call(Func::Sin, a), da)),
                    Func::Tan => div(da, pow(call(Func::Cos, a), 2)),
                    Func::Exp => mul(call(Func::Exp, a), da),
                    Func::Log => div(da, a),
                    Func::Sqrt => div(da, mul(num(2.0), call(Func::Sqrt, a))),
                    Func::Tanh => mul(sub(num(1.0), pow(call(Func::Tanh, a), 2)), da),
                    Func::Abs => {
                        *kink = true;
                        mul(call(Func::Sign, a), da)
                    }
                    Func::Sign => {
                        *kink = true;
                        num(0.0)
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------- smart constructors

fn num(v: f64) -> Expr {
    Expr::Num(v)
}

fn as_num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(v) => Some(*v),
        _ => None,
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => num(-v),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => num(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Binary(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => num(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Binary(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => return num(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => return num(0.0),
        (Some(x), _) if x == 1.0 => return b,
        (_, Some(y)) if y == 1.0 => return a,
        (Some(x), _) if x == -1.0 => return neg(b),
        (_, Some(y)) if y == -1.0 => return neg(a),
        _ => {}
    }
    // c1*(c2*e) -> (c1*c2)*e
    if let (Some(x), Expr::Binary(BinOp::Mul, l, r)) = (as_num(&a), &b) {
        if let Some(y) = as_num(l) {
            return mul(num(x * y), r.as_ref().clone());
        }
    }
    Expr::Binary(BinOp::Mul, Box::new(a), Box::new(b))
}

fn div(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), _) if x == 0.0 => num(0.0),
        (Some(x), Some(y)) if y != 0.0 => num(x / y),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Binary(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, k: i32) -> Expr {
    match (k, as_num(&a)) {
        (0, _) => num(1.0),
        (1, _) => a,
        (_, Some(v)) if !(k < 0 && v == 0.0) => num(powi(v, k)),
        _ => Expr::Pow(Box::new(a), k),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}
