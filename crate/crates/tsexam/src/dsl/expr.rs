//! Expression language used by feature definitions, answer rules, and
//! selection filters.
//!
//! The language is total and pure: numbers, strings, booleans, series values,
//! `meta.<column>` accessors, calls into the fixed function library, and the
//! usual arithmetic/comparison/boolean operators. There is no recursion, no
//! iteration, and no I/O.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::error::{DslError, DslErrorCode};
use super::functions;

/// Runtime value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Number(f64),
    Series(Vec<f64>),
    Text(String),
    Bool(bool),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Number(_) => "number",
            Value::Series(_) => "series",
            Value::Text(_) => "text",
            Value::Bool(_) => "bool",
        }
    }

    pub fn as_number(&self) -> Result<f64, EvalError> {
        match self {
            Value::Number(n) => Ok(*n),
            other => Err(EvalError(format!("expected number, got {}", other.type_name()))),
        }
    }

    pub fn as_series(&self) -> Result<&[f64], EvalError> {
        match self {
            Value::Series(s) => Ok(s),
            other => Err(EvalError(format!("expected series, got {}", other.type_name()))),
        }
    }

    pub fn as_bool(&self) -> Result<bool, EvalError> {
        match self {
            Value::Bool(b) => Ok(*b),
            other => Err(EvalError(format!("expected bool, got {}", other.type_name()))),
        }
    }
}

/// Runtime evaluation failure; makes the current sample unusable but is not a
/// program error.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalError(pub String);

impl std::fmt::Display for EvalError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Number(f64),
    Text(String),
    Bool(bool),
    /// Feature, hyperparameter, or window binding.
    Ident(String),
    /// `meta.<column>` accessor.
    Meta(String),
    Call(String, Vec<Expr>),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// All bare identifiers referenced by this expression.
    pub fn identifiers(&self, out: &mut Vec<String>) {
        match self {
            Expr::Ident(name) => out.push(name.clone()),
            Expr::Call(_, args) => args.iter().for_each(|a| a.identifiers(out)),
            Expr::Neg(e) | Expr::Not(e) => e.identifiers(out),
            Expr::Binary(_, l, r) => {
                l.identifiers(out);
                r.identifiers(out);
            }
            _ => {}
        }
    }

    /// All `meta.<column>` columns referenced by this expression.
    pub fn meta_columns(&self, out: &mut Vec<String>) {
        match self {
            Expr::Meta(name) => out.push(name.clone()),
            Expr::Call(_, args) => args.iter().for_each(|a| a.meta_columns(out)),
            Expr::Neg(e) | Expr::Not(e) => e.meta_columns(out),
            Expr::Binary(_, l, r) => {
                l.meta_columns(out);
                r.meta_columns(out);
            }
            _ => {}
        }
    }

    /// Evaluate against bound names. `bindings` covers features,
    /// hyperparameters, and window values; `meta` covers `meta.*`.
    pub fn eval(
        &self,
        bindings: &BTreeMap<String, Value>,
        meta: &BTreeMap<String, Value>,
    ) -> Result<Value, EvalError> {
        match self {
            Expr::Number(n) => Ok(Value::Number(*n)),
            Expr::Text(s) => Ok(Value::Text(s.clone())),
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::Ident(name) => bindings
                .get(name)
                .cloned()
                .ok_or_else(|| EvalError(format!("unbound identifier `{name}`"))),
            Expr::Meta(col) => meta
                .get(col)
                .cloned()
                .ok_or_else(|| EvalError(format!("sample has no metadata column `{col}`"))),
            Expr::Call(name, args) => {
                let values = args
                    .iter()
                    .map(|a| a.eval(bindings, meta))
                    .collect::<Result<Vec<_>, _>>()?;
                functions::call(name, &values)
            }
            Expr::Neg(e) => Ok(Value::Number(-e.eval(bindings, meta)?.as_number()?)),
            Expr::Not(e) => Ok(Value::Bool(!e.eval(bindings, meta)?.as_bool()?)),
            Expr::Binary(op, l, r) => {
                // Short-circuit boolean operators first.
                match op {
                    BinOp::And => {
                        return Ok(Value::Bool(
                            l.eval(bindings, meta)?.as_bool()?
                                && r.eval(bindings, meta)?.as_bool()?,
                        ))
                    }
                    BinOp::Or => {
                        return Ok(Value::Bool(
                            l.eval(bindings, meta)?.as_bool()?
                                || r.eval(bindings, meta)?.as_bool()?,
                        ))
                    }
                    _ => {}
                }
                let lv = l.eval(bindings, meta)?;
                let rv = r.eval(bindings, meta)?;
                match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => {
                        let (a, b) = (lv.as_number()?, rv.as_number()?);
                        let v = match op {
                            BinOp::Add => a + b,
                            BinOp::Sub => a - b,
                            BinOp::Mul => a * b,
                            BinOp::Div => {
                                if b == 0.0 {
                                    return Err(EvalError("division by zero".into()));
                                }
                                a / b
                            }
                            _ => unreachable!(),
                        };
                        if !v.is_finite() {
                            return Err(EvalError("arithmetic produced a non-finite value".into()));
                        }
                        Ok(Value::Number(v))
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        let (a, b) = (lv.as_number()?, rv.as_number()?);
                        Ok(Value::Bool(match op {
                            BinOp::Lt => a < b,
                            BinOp::Le => a <= b,
                            BinOp::Gt => a > b,
                            BinOp::Ge => a >= b,
                            _ => unreachable!(),
                        }))
                    }
                    BinOp::Eq | BinOp::Ne => {
                        let eq = match (&lv, &rv) {
                            (Value::Number(a), Value::Number(b)) => a == b,
                            (Value::Text(a), Value::Text(b)) => a == b,
                            (Value::Bool(a), Value::Bool(b)) => a == b,
                            _ => {
                                return Err(EvalError(format!(
                                    "cannot compare {} with {}",
                                    lv.type_name(),
                                    rv.type_name()
                                )))
                            }
                        };
                        Ok(Value::Bool(if *op == BinOp::Eq { eq } else { !eq }))
                    }
                    BinOp::And | BinOp::Or => unreachable!(),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Number(f64),
    Text(String),
    Ident(String),
    Symbol(&'static str),
}

fn tokenize(input: &str, location: &str) -> Result<Vec<Token>, DslError> {
    let err = |msg: String| DslError::new(DslErrorCode::Syntax, location, msg);
    let mut tokens = Vec::new();
    let chars: Vec<char> = input.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && i > start
                            && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let n: f64 = text
                    .parse()
                    .map_err(|_| err(format!("bad number literal `{text}`")))?;
                tokens.push(Token::Number(n));
            }
            '\'' | '"' => {
                let quote = c;
                let start = i + 1;
                i += 1;
                while i < chars.len() && chars[i] != quote {
                    i += 1;
                }
                if i >= chars.len() {
                    return Err(err("unterminated string literal".into()));
                }
                tokens.push(Token::Text(chars[start..i].iter().collect()));
                i += 1;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.')
                {
                    i += 1;
                }
                tokens.push(Token::Ident(chars[start..i].iter().collect()));
            }
            '&' | '|' => {
                if i + 1 < chars.len() && chars[i + 1] == c {
                    tokens.push(Token::Symbol(if c == '&' { "&&" } else { "||" }));
                    i += 2;
                } else {
                    return Err(err(format!("expected `{c}{c}`")));
                }
            }
            '<' | '>' | '=' | '!' => {
                if i + 1 < chars.len() && chars[i + 1] == '=' {
                    tokens.push(Token::Symbol(match c {
                        '<' => "<=",
                        '>' => ">=",
                        '=' => "==",
                        _ => "!=",
                    }));
                    i += 2;
                } else {
                    match c {
                        '<' => tokens.push(Token::Symbol("<")),
                        '>' => tokens.push(Token::Symbol(">")),
                        '!' => tokens.push(Token::Symbol("!")),
                        '=' => return Err(err("use `==` for equality".into())),
                        _ => unreachable!(),
                    }
                    i += 1;
                }
            }
            '+' => {
                tokens.push(Token::Symbol("+"));
                i += 1;
            }
            '-' => {
                tokens.push(Token::Symbol("-"));
                i += 1;
            }
            '*' => {
                tokens.push(Token::Symbol("*"));
                i += 1;
            }
            '/' => {
                tokens.push(Token::Symbol("/"));
                i += 1;
            }
            '(' => {
                tokens.push(Token::Symbol("("));
                i += 1;
            }
            ')' => {
                tokens.push(Token::Symbol(")"));
                i += 1;
            }
            ',' => {
                tokens.push(Token::Symbol(","));
                i += 1;
            }
            other => return Err(err(format!("unexpected character `{other}`"))),
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    location: &'a str,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> DslError {
        DslError::new(DslErrorCode::Syntax, self.location, msg)
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat_symbol(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Token::Symbol(t)) if *t == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_or(&mut self) -> Result<Expr, DslError> {
        let mut left = self.parse_and()?;
        while self.eat_symbol("||") {
            let right = self.parse_and()?;
            left = Expr::Binary(BinOp::Or, Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn parse_and(&mut self) -> Result<Expr, DslError> {
        let mut left = self.parse_not()?;
        while self.eat_symbol("&&") {
            let right = self.parse_not()?;
            left = Expr::Binary(BinOp::And, Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn parse_not(&mut self) -> Result<Expr, DslError> {
        if self.eat_symbol("!") {
            Ok(Expr::Not(Box::new(self.parse_not()?)))
        } else {
            self.parse_cmp()
        }
    }

    fn parse_cmp(&mut self) -> Result<Expr, DslError> {
        let left = self.parse_add()?;
        for (sym, op) in [
            ("<=", BinOp::Le),
            (">=", BinOp::Ge),
            ("==", BinOp::Eq),
            ("!=", BinOp::Ne),
            ("<", BinOp::Lt),
            (">", BinOp::Gt),
        ] {
            if self.eat_symbol(sym) {
                let right = self.parse_add()?;
                return Ok(Expr::Binary(op, Box::new(left), Box::new(right)));
            }
        }
        Ok(left)
    }

    fn parse_add(&mut self) -> Result<Expr, DslError> {
        let mut left = self.parse_mul()?;
        loop {
            if self.eat_symbol("+") {
                let right = self.parse_mul()?;
                left = Expr::Binary(BinOp::Add, Box::new(left), Box::new(right));
            } else if self.eat_symbol("-") {
                let right = self.parse_mul()?;
                left = Expr::Binary(BinOp::Sub, Box::new(left), Box::new(right));
            } else {
                return Ok(left);
            }
        }
    }

    fn parse_mul(&mut self) -> Result<Expr, DslError> {
        let mut left = self.parse_unary()?;
        loop {
            if self.eat_symbol("*") {
                let right = self.parse_unary()?;
                left = Expr::Binary(BinOp::Mul, Box::new(left), Box::new(right));
            } else if self.eat_symbol("/") {
                let right = self.parse_unary()?;
                left = Expr::Binary(BinOp::Div, Box::new(left), Box::new(right));
            } else {
                return Ok(left);
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr, DslError> {
        if self.eat_symbol("-") {
            Ok(Expr::Neg(Box::new(self.parse_unary()?)))
        } else {
            self.parse_atom()
        }
    }

    fn parse_atom(&mut self) -> Result<Expr, DslError> {
        match self.peek().cloned() {
            Some(Token::Number(n)) => {
                self.pos += 1;
                Ok(Expr::Number(n))
            }
            Some(Token::Text(s)) => {
                self.pos += 1;
                Ok(Expr::Text(s))
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                if name == "true" {
                    return Ok(Expr::Bool(true));
                }
                if name == "false" {
                    return Ok(Expr::Bool(false));
                }
                if let Some(col) = name.strip_prefix("meta.") {
                    if col.is_empty() || col.contains('.') {
                        return Err(self.err(format!("bad metadata accessor `{name}`")));
                    }
                    return Ok(Expr::Meta(col.to_string()));
                }
                if name.contains('.') {
                    return Err(self.err(format!(
                        "`{name}`: dotted names are only valid as `meta.<column>`"
                    )));
                }
                if self.eat_symbol("(") {
                    let mut args = Vec::new();
                    if !self.eat_symbol(")") {
                        loop {
                            args.push(self.parse_or()?);
                            if self.eat_symbol(")") {
                                break;
                            }
                            if !self.eat_symbol(",") {
                                return Err(self.err("expected `,` or `)` in argument list"));
                            }
                        }
                    }
                    Ok(Expr::Call(name, args))
                } else {
                    Ok(Expr::Ident(name))
                }
            }
            Some(Token::Symbol("(")) => {
                self.pos += 1;
                let inner = self.parse_or()?;
                if !self.eat_symbol(")") {
                    return Err(self.err("missing closing `)`"));
                }
                Ok(inner)
            }
            Some(Token::Symbol(s)) => Err(self.err(format!("unexpected `{s}`"))),
            None => Err(self.err("unexpected end of expression")),
        }
    }
}

/// Parse one expression. `location` labels diagnostics (e.g. `features.slope`).
pub fn parse_expr(input: &str, location: &str) -> Result<Expr, DslError> {
    let tokens = tokenize(input, location)?;
    if tokens.is_empty() {
        return Err(DslError::new(
            DslErrorCode::Syntax,
            location,
            "empty expression",
        ));
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        location,
    };
    let expr = parser.parse_or()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.err("trailing input after expression"));
    }
    Ok(expr)
}
