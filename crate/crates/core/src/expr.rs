//! A small arithmetic-expression language for potentials, fields and
//! deformation families.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 'pi' | 'x1' .. 'xN' | 'r' | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | ln | sqrt
//! ```
//!
//! `x1` is the first torus coordinate; `r` is the deformation parameter.
//! Expressions differentiate symbolically, so fields and potentials built
//! from them carry exact gradients and Jacobians.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flow::VectorField;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Param,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

use Expr::*;

fn c(v: f64) -> Expr {
    Const(v)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => c(x + y),
        (Const(z), _) if *z == 0.0 => b,
        (_, Const(z)) if *z == 0.0 => a,
        _ => Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => c(x - y),
        (_, Const(z)) if *z == 0.0 => a,
        (Const(z), _) if *z == 0.0 => neg(b),
        _ => Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => c(x * y),
        (Const(z), _) | (_, Const(z)) if *z == 0.0 => c(0.0),
        (Const(o), _) if *o == 1.0 => b,
        (_, Const(o)) if *o == 1.0 => a,
        _ => Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(z), _) if *z == 0.0 => c(0.0),
        (_, Const(o)) if *o == 1.0 => a,
        _ => Div(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Const(x) => c(-x),
        Neg(inner) => *inner,
        other => Neg(Box::new(other)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    match a {
        Const(x) => c(f.apply(x)),
        other => Call(f, Box::new(other)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => c(x.powf(*y)),
        (_, Const(o)) if *o == 1.0 => a,
        (_, Const(z)) if *z == 0.0 => c(1.0),
        _ => Pow(Box::new(a), Box::new(b)),
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected trailing input at token {} in {src:?}",
                p.pos
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64], r: f64) -> f64 {
        match self {
            Const(v) => *v,
            Var(i) => x[*i],
            Param => r,
            Add(a, b) => a.eval(x, r) + b.eval(x, r),
            Sub(a, b) => a.eval(x, r) - b.eval(x, r),
            Mul(a, b) => a.eval(x, r) * b.eval(x, r),
            Div(a, b) => a.eval(x, r) / b.eval(x, r),
            Pow(a, b) => {
                let base = a.eval(x, r);
                match **b {
                    Const(e) if e.fract() == 0.0 && e.abs() < 64.0 => base.powi(e as i32),
                    _ => base.powf(b.eval(x, r)),
                }
            }
            Neg(a) => -a.eval(x, r),
            Call(f, a) => f.apply(a.eval(x, r)),
        }
    }

    /// Largest coordinate index referenced plus one.
    pub fn arity(&self) -> usize {
        match self {
            Const(_) | Param => 0,
            Var(i) => i + 1,
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => a.arity().max(b.arity()),
            Neg(a) | Call(_, a) => a.arity(),
        }
    }

    pub fn uses_param(&self) -> bool {
        match self {
            Param => true,
            Const(_) | Var(_) => false,
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                a.uses_param() || b.uses_param()
            }
            Neg(a) | Call(_, a) => a.uses_param(),
        }
    }

    /// Symbolic partial derivative with respect to coordinate `k`.
    pub fn derivative(&self, k: usize) -> Expr {
        match self {
            Const(_) | Param => c(0.0),
            Var(i) => c(if *i == k { 1.0 } else { 0.0 }),
            Add(a, b) => add(a.derivative(k), b.derivative(k)),
            Sub(a, b) => sub(a.derivative(k), b.derivative(k)),
            Mul(a, b) => add(
                mul(a.derivative(k), (**b).clone()),
                mul((**a).clone(), b.derivative(k)),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.derivative(k), (**b).clone()),
                    mul((**a).clone(), b.derivative(k)),
                ),
                pow((**b).clone(), c(2.0)),
            ),
            Pow(a, b) => {
                let da = a.derivative(k);
                match **b {
                    Const(e) => mul(mul(c(e), pow((**a).clone(), c(e - 1.0))), da),
                    _ => {
                        // d(a^b) = a^b (b' ln a + b a'/a)
                        let db = b.derivative(k);
                        mul(
                            self.clone(),
                            add(
                                mul(db, call(Func::Ln, (**a).clone())),
                                div(mul((**b).clone(), da), (**a).clone()),
                            ),
                        )
                    }
                }
            }
            Neg(a) => neg(a.derivative(k)),
            Call(f, a) => {
                let da = a.derivative(k);
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Exp => call(Func::Exp, inner),
                    Func::Ln => div(c(1.0), inner),
                    Func::Sqrt => div(c(0.5), call(Func::Sqrt, inner)),
                };
                mul(outer, da)
            }
        }
    }

    pub fn gradient(&self, dims: usize) -> Vec<Expr> {
        (0..dims).map(|k| self.derivative(k)).collect()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(v) => write!(f, "{v}"),
            Var(i) => write!(f, "x{}", i + 1),
            Param => write!(f, "r"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "{a}*{b}"),
            Div(a, b) => write!(f, "{a}/{b}"),
            Pow(a, b) => write!(f, "{a}^{b}"),
            Neg(a) => write!(f, "-{a}"),
            Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::Expr(format!("bad number {s:?}")))?;
            out.push(Tok::Num(v));
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(ch) {
            out.push(Tok::Op(ch));
            i += 1;
        } else if ch == '\u{2212}' {
            // unicode minus
            out.push(Tok::Op('-'));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character {ch:?}")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: char) -> Result<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(Error::Expr(format!("expected {op:?} at token {}", self.pos)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_op('+') {
                lhs = Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat_op('-') {
                lhs = Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat_op('/') {
                lhs = Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op('-') {
            return Ok(Neg(Box::new(self.unary()?)));
        }
        if self.eat_op('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat_op('^') {
            let exp = self.unary()?;
            return Ok(Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Const(v))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "ln" => Some(Func::Ln),
                    "sqrt" => Some(Func::Sqrt),
                    _ => None,
                };
                if let Some(f) = func {
                    self.expect_op('(')?;
                    let arg = self.expr()?;
                    self.expect_op(')')?;
                    return Ok(Call(f, Box::new(arg)));
                }
                match name.as_str() {
                    "pi" => Ok(Const(std::f64::consts::PI)),
                    "r" => Ok(Param),
                    _ => {
                        let idx = name
                            .strip_prefix('x')
                            .and_then(|d| d.parse::<usize>().ok())
                            .filter(|&k| k >= 1)
                            .ok_or_else(|| Error::Expr(format!("unknown identifier {name:?}")))?;
                        Ok(Var(idx - 1))
                    }
                }
            }
            Some(t) => Err(Error::Expr(format!("unexpected token {t:?}"))),
            None => Err(Error::Expr("unexpected end of expression".into())),
        }
    }
}

/// A scalar function on the torus with its exact gradient.
#[derive(Debug, Clone)]
pub struct Potential {
    value: Expr,
    gradient: Vec<Expr>,
}

impl Potential {
    pub fn new(value: Expr, dims: usize) -> Result<Self> {
        if value.arity() > dims {
            return Err(Error::Expr(format!(
                "expression {value} uses x{} on a {dims}-torus",
                value.arity()
            )));
        }
        let gradient = value.gradient(dims);
        Ok(Self { value, gradient })
    }

    pub fn parse(src: &str, dims: usize) -> Result<Self> {
        Self::new(Expr::parse(src)?, dims)
    }

    pub fn value(&self, x: &[f64], r: f64) -> f64 {
        self.value.eval(x, r)
    }

    pub fn gradient_into(&self, x: &[f64], r: f64, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.gradient) {
            *o = g.eval(x, r);
        }
    }

    pub fn expr(&self) -> &Expr {
        &self.value
    }

    pub fn dims(&self) -> usize {
        self.gradient.len()
    }
}

/// Vector field whose components are expressions, with a symbolic Jacobian.
#[derive(Debug, Clone)]
pub struct ExprField {
    components: Vec<Expr>,
    jacobian: Vec<Expr>,
}

impl ExprField {
    pub fn parse(sources: &[&str]) -> Result<Self> {
        let components = sources
            .iter()
            .map(|s| Expr::parse(s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(components)
    }

    pub fn new(components: Vec<Expr>) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(Error::Expr("vector field needs at least one component".into()));
        }
        if let Some(e) = components.iter().find(|e| e.arity() > n) {
            return Err(Error::Expr(format!("component {e} refers beyond x{n}")));
        }
        let jacobian = components
            .iter()
            .flat_map(|e| (0..n).map(move |k| e.derivative(k)))
            .collect();
        Ok(Self {
            components,
            jacobian,
        })
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn into_arc(self) -> Arc<dyn VectorField> {
        Arc::new(self)
    }
}

impl VectorField for ExprField {
    fn dim(&self) -> usize {
        self.components.len()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.components) {
            *o = e.eval(x, 0.0);
        }
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) -> bool {
        for (o, e) in out.iter_mut().zip(&self.jacobian) {
            *o = e.eval(x, 0.0);
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_potential_from_cli_example() {
        let e = Expr::parse("-2*cos(x1)").unwrap();
        assert!((e.eval(&[0.3, 0.0], 0.0) + 2.0 * 0.3f64.cos()).abs() < 1e-15);
        let d = e.derivative(0);
        assert!((d.eval(&[0.3, 0.0], 0.0) - 2.0 * 0.3f64.sin()).abs() < 1e-15);
        assert_eq!(e.derivative(1), Const(0.0));
    }

    #[test]
    fn precedence_and_associativity() {
        let e = Expr::parse("2 + 3*4^2 - 8/2/2").unwrap();
        assert_eq!(e.eval(&[], 0.0), 2.0 + 48.0 - 2.0);
        let e = Expr::parse("-2^2").unwrap();
        assert_eq!(e.eval(&[], 0.0), -4.0);
        let e = Expr::parse("2^3^2").unwrap();
        assert_eq!(e.eval(&[], 0.0), 512.0);
        let e = Expr::parse("1e-3*r").unwrap();
        assert_eq!(e.eval(&[], 2.0), 2e-3);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("sin(x1").is_err());
        assert!(Expr::parse("y1 + 1").is_err());
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("3 $ 4").is_err());
        assert!(Potential::parse("x3", 2).is_err());
    }

    #[test]
    fn field_jacobian_is_symbolic() {
        let f = ExprField::parse(&["-(1 - cos(2*x1))", "-1"]).unwrap();
        let mut j = [0.0; 4];
        assert!(f.jacobian(&[0.4, 0.1], &mut j));
        assert!((j[0] + 2.0 * (0.8f64).sin()).abs() < 1e-14);
        assert_eq!(&j[1..], &[0.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn derivative_matches_central_difference(x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let e = Expr::parse("sin(x1)^2*cos(2*x2) + exp(0.3*x1)/(2 + cos(x2)) + sqrt(2 + sin(x1*x2)) + (1.5 + sin(x1))^(1 + 0.1*x2)").unwrap();
            let h = 1e-5;
            for k in 0..2 {
                let mut p = [x, y];
                let mut m = [x, y];
                p[k] += h;
                m[k] -= h;
                let fd = (e.eval(&p, 0.0) - e.eval(&m, 0.0)) / (2.0 * h);
                let an = e.derivative(k).eval(&[x, y], 0.0);
                prop_assert!((fd - an).abs() < 1e-7, "k={} fd={} an={}", k, fd, an);
            }
        }
    }
}
