//! Scalar expressions: parsing, printing and evaluation over any [`Scalar`].
//!
//! Grammar (whitespace is ignored between tokens):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = primary [ "^" unary ] ;
//! primary = number | ident "(" expr ")" | ident | "(" expr ")" ;
//! number  = digit { digit } [ "." { digit } ] [ ("e" | "E") [ "+" | "-" ] digit { digit } ] ;
//! ident   = letter { letter | digit | "_" } ;
//! ```
//!
//! Function names are `sin cos tan cot exp ln sqrt abs`. There is no implicit
//! multiplication: `2x` is rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::autodiff::Scalar;
use crate::error::{DomainError, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Cot,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 8] =
        [Func::Sin, Func::Cos, Func::Tan, Func::Cot, Func::Exp, Func::Ln, Func::Sqrt, Func::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Cot => "cot",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Expression tree. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Number(f64),
    Var(String),
    Neg(Box<Expression>),
    Add(Box<Expression>, Box<Expression>),
    Sub(Box<Expression>, Box<Expression>),
    Mul(Box<Expression>, Box<Expression>),
    Div(Box<Expression>, Box<Expression>),
    Pow(Box<Expression>, Box<Expression>),
    Apply(Func, Box<Expression>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("syntax error at offset {offset}: expected {expected}")]
pub struct ParseError {
    /// Byte offset into the source.
    pub offset: usize,
    pub expected: String,
}

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
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn tokenize(src: &str) -> std::result::Result<Vec<(usize, Tok)>, ParseError> {
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
                let value = text.parse::<f64>().map_err(|_| ParseError {
                    offset: start,
                    expected: format!("a valid number, found `{text}`"),
                })?;
                out.push((start, Tok::Num(value)));
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
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: start,
                    expected: format!("an operator, operand or parenthesis, found `{ch}`"),
                });
            }
        };
        out.push((start, tok));
        i += 1;
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
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

    fn fail<T>(&self, expected: &str) -> std::result::Result<T, ParseError> {
        Err(ParseError {
            offset: self.offset(),
            expected: format!("{expected}, found {}", self.peek().describe()),
        })
    }

    fn expr(&mut self) -> std::result::Result<Expression, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expression::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expression::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> std::result::Result<Expression, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expression::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expression::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> std::result::Result<Expression, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expression::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> std::result::Result<Expression, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            // right-associative: the exponent is itself a full unary/power chain
            let exponent = self.unary()?;
            return Ok(Expression::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> std::result::Result<Expression, ParseError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expression::Number(v))
            }
            Tok::Ident(name) => {
                let at = self.offset();
                self.bump();
                if *self.peek() == Tok::LParen {
                    let func = Func::from_name(&name).ok_or_else(|| ParseError {
                        offset: at,
                        expected: format!(
                            "one of the functions sin, cos, tan, cot, exp, ln, sqrt, abs, found `{name}`"
                        ),
                    })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.close()?;
                    Ok(Expression::Apply(func, Box::new(arg)))
                } else {
                    Ok(Expression::Var(name))
                }
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.close()?;
                Ok(inner)
            }
            _ => self.fail("a number, identifier, `-` or `(`"),
        }
    }

    fn close(&mut self) -> std::result::Result<(), ParseError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            self.fail("`)`")
        }
    }
}

/// Parses expression text into a tree.
pub fn parse(source: &str) -> std::result::Result<Expression, ParseError> {
    let toks = tokenize(source)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail("an operator or end of input");
    }
    Ok(e)
}

impl FromStr for Expression {
    type Err = ParseError;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        parse(s)
    }
}

// Fully parenthesized so that re-parsing reproduces the same tree.
impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::Number(v) => write!(f, "{v}"),
            Expression::Var(name) => f.write_str(name),
            Expression::Neg(e) => write!(f, "(-{e})"),
            Expression::Add(a, b) => write!(f, "({a} + {b})"),
            Expression::Sub(a, b) => write!(f, "({a} - {b})"),
            Expression::Mul(a, b) => write!(f, "({a} * {b})"),
            Expression::Div(a, b) => write!(f, "({a} / {b})"),
            Expression::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expression::Apply(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

/// Identifier → scalar map used by [`Expression::evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Bindings<S> {
    values: BTreeMap<String, S>,
}

impl<S> Default for Bindings<S> {
    fn default() -> Self {
        Self { values: BTreeMap::new() }
    }
}

impl<S: Scalar> Bindings<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: S) -> Self {
        self.insert(name, value);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, value: S) -> Option<S> {
        self.values.insert(name.into(), value)
    }

    pub fn get(&self, name: &str) -> Option<&S> {
        self.values.get(name)
    }

    fn context(&self) -> Vec<(String, f64)> {
        self.values.iter().map(|(k, v)| (k.clone(), v.value())).collect()
    }
}

impl<S: Scalar> FromIterator<(String, S)> for Bindings<S> {
    fn from_iter<I: IntoIterator<Item = (String, S)>>(iter: I) -> Self {
        Self { values: iter.into_iter().collect() }
    }
}

impl Expression {
    /// Exactly the identifiers referenced by the expression.
    pub fn free_variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expression::Number(_) => {}
            Expression::Var(name) => {
                out.insert(name.clone());
            }
            Expression::Neg(e) | Expression::Apply(_, e) => e.collect_vars(out),
            Expression::Add(a, b)
            | Expression::Sub(a, b)
            | Expression::Mul(a, b)
            | Expression::Div(a, b)
            | Expression::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn evaluate<S: Scalar>(&self, bindings: &Bindings<S>) -> Result<S> {
        let out = self
            .eval_with(&|name: &str| bindings.get(name).cloned().ok_or_else(|| Error::Unbound(name.to_string())))
            .map_err(|e| attach(e, || bindings.context()))?;
        check_finite(out).map_err(|e| attach(e, || bindings.context()))
    }

    fn eval_with<S: Scalar>(&self, lookup: &dyn Fn(&str) -> Result<S>) -> Result<S> {
        match self {
            Expression::Number(v) => Ok(S::from_f64(*v)),
            Expression::Var(name) => lookup(name),
            Expression::Neg(e) => Ok(-e.eval_with(lookup)?),
            Expression::Add(a, b) => finite(a.eval_with(lookup)? + b.eval_with(lookup)?),
            Expression::Sub(a, b) => finite(a.eval_with(lookup)? - b.eval_with(lookup)?),
            Expression::Mul(a, b) => finite(a.eval_with(lookup)? * b.eval_with(lookup)?),
            Expression::Div(a, b) => divide(a.eval_with(lookup)?, b.eval_with(lookup)?),
            Expression::Pow(a, b) => power(a.eval_with(lookup)?, b.eval_with(lookup)?),
            Expression::Apply(func, e) => apply(*func, e.eval_with(lookup)?),
        }
    }

    /// Resolves variables against a fixed slot layout, folding in constants.
    ///
    /// `slots` names the positional arguments of [`Compiled::eval`];
    /// `constants` supplies every other identifier.
    pub fn compile(&self, slots: &[String], constants: &BTreeMap<String, f64>) -> Result<Compiled> {
        let node = self.lower(slots, constants)?;
        Ok(Compiled { node, slots: slots.iter().cloned().collect() })
    }

    fn lower(&self, slots: &[String], constants: &BTreeMap<String, f64>) -> Result<Node> {
        let two = |a: &Expression, b: &Expression| -> Result<(Box<Node>, Box<Node>)> {
            Ok((Box::new(a.lower(slots, constants)?), Box::new(b.lower(slots, constants)?)))
        };
        Ok(match self {
            Expression::Number(v) => Node::Const(*v),
            Expression::Var(name) => {
                if let Some(i) = slots.iter().position(|s| s == name) {
                    Node::Slot(i)
                } else if let Some(v) = constants.get(name) {
                    Node::Const(*v)
                } else {
                    return Err(Error::Unbound(name.clone()));
                }
            }
            Expression::Neg(e) => Node::Neg(Box::new(e.lower(slots, constants)?)),
            Expression::Add(a, b) => {
                let (a, b) = two(a, b)?;
                Node::Add(a, b)
            }
            Expression::Sub(a, b) => {
                let (a, b) = two(a, b)?;
                Node::Sub(a, b)
            }
            Expression::Mul(a, b) => {
                let (a, b) = two(a, b)?;
                Node::Mul(a, b)
            }
            Expression::Div(a, b) => {
                let (a, b) = two(a, b)?;
                Node::Div(a, b)
            }
            Expression::Pow(a, b) => {
                let (a, b) = two(a, b)?;
                Node::Pow(a, b)
            }
            Expression::Apply(f, e) => Node::Apply(*f, Box::new(e.lower(slots, constants)?)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Slot(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Apply(Func, Box<Node>),
}

/// An expression with variables resolved to argument positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Compiled {
    node: Node,
    slots: Arc<[String]>,
}

impl Compiled {
    /// Evaluates with `args[i]` bound to the `i`-th slot name.
    ///
    /// Panics if `args` is shorter than the slot layout.
    pub fn eval<S: Scalar>(&self, args: &[S]) -> Result<S> {
        assert!(args.len() >= self.slots.len(), "compiled expression needs {} arguments", self.slots.len());
        let context = || self.slots.iter().cloned().zip(args.iter().map(Scalar::value)).collect();
        let out = eval_node(&self.node, args).map_err(|e| attach(e, context))?;
        check_finite(out).map_err(|e| attach(e, context))
    }
}

fn eval_node<S: Scalar>(node: &Node, args: &[S]) -> Result<S> {
    match node {
        Node::Const(v) => Ok(S::from_f64(*v)),
        Node::Slot(i) => Ok(args[*i].clone()),
        Node::Neg(e) => Ok(-eval_node(e, args)?),
        Node::Add(a, b) => finite(eval_node(a, args)? + eval_node(b, args)?),
        Node::Sub(a, b) => finite(eval_node(a, args)? - eval_node(b, args)?),
        Node::Mul(a, b) => finite(eval_node(a, args)? * eval_node(b, args)?),
        Node::Div(a, b) => divide(eval_node(a, args)?, eval_node(b, args)?),
        Node::Pow(a, b) => power(eval_node(a, args)?, eval_node(b, args)?),
        Node::Apply(f, e) => apply(*f, eval_node(e, args)?),
    }
}

fn attach(err: Error, context: impl FnOnce() -> Vec<(String, f64)>) -> Error {
    match err {
        Error::Domain(d) => Error::Domain(d.with_context(context())),
        other => other,
    }
}

fn domain<T>(message: String) -> Result<T> {
    Err(Error::Domain(DomainError::new(message)))
}

fn finite<S: Scalar>(v: S) -> Result<S> {
    if v.value().is_finite() {
        Ok(v)
    } else {
        domain(format!("non-finite intermediate value {}", v.value()))
    }
}

fn check_finite<S: Scalar>(v: S) -> Result<S> {
    if v.all_finite() {
        Ok(v)
    } else {
        domain(format!("non-finite value or derivative (value {})", v.value()))
    }
}

fn divide<S: Scalar>(a: S, b: S) -> Result<S> {
    if b.value() == 0.0 {
        return domain("division by zero".into());
    }
    finite(a / b)
}

const MAX_INTEGER_EXPONENT: f64 = 64.0;

fn power<S: Scalar>(base: S, exponent: S) -> Result<S> {
    let e = exponent.value();
    if !exponent.has_tangent() && e.fract() == 0.0 && e.abs() <= MAX_INTEGER_EXPONENT {
        if e < 0.0 && base.value() == 0.0 {
            return domain("zero raised to a negative power".into());
        }
        return finite(base.powi(e as i32));
    }
    if base.value() <= 0.0 {
        return domain(format!(
            "non-integer or varying exponent needs a positive base, got {}",
            base.value()
        ));
    }
    finite((exponent * base.ln()).exp())
}

fn apply<S: Scalar>(func: Func, x: S) -> Result<S> {
    let v = x.value();
    let out = match func {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Tan => {
            if v.cos() == 0.0 {
                return domain(format!("tan undefined where cos = 0 (argument {v})"));
            }
            x.tan()
        }
        Func::Cot => {
            let s = x.sin();
            if s.value() == 0.0 {
                return domain(format!("cot undefined where sin = 0 (argument {v})"));
            }
            x.cos() / s
        }
        Func::Exp => x.exp(),
        Func::Ln => {
            if v <= 0.0 {
                return domain(format!("ln of nonpositive argument {v}"));
            }
            x.ln()
        }
        Func::Sqrt => {
            if v < 0.0 {
                return domain(format!("sqrt of negative argument {v}"));
            }
            if v == 0.0 && x.has_tangent() {
                return domain("sqrt is not differentiable at 0".into());
            }
            x.sqrt()
        }
        Func::Abs => {
            if v == 0.0 && x.has_tangent() {
                return domain("abs is not differentiable at 0".into());
            }
            x.abs()
        }
    };
    finite(out)
}
