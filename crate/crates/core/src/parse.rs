// Copyright 2026 The SD Toolkit Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Text formats: the `.sd` model DSL and the `.cld` causal edge list.
//!
//! Both are line oriented UTF-8 with `//` comments. Parsing is deterministic
//! and insensitive to line-ending style. Errors never panic; they come back
//! as diagnostics with source spans.
//!
//! Model grammar, one declaration per line:
//!
//! ```text
//! model <name>
//! param <name> = <number> [units <unitexpr>]
//! aux <name> = <expr> [units <unitexpr>]
//! flow <name> (<stock-or-cloud> -> <stock-or-cloud>) = <expr> [units <unitexpr>]
//! stock <name> = <expr> [units <unitexpr>] [nonneg]
//! ```
//!
//! Expression precedence: `^` (right-assoc) over unary `-` over `*` `/`
//! over `+` `-`. Conditionals: `if <expr> <cmp> <expr> then <expr> else
//! <expr>` with `<`, `<=`, `>`, `>=`.
//!
//! CLD lines: `<From> -> <To> <+|-> [delay]`.

use std::fmt;

use crate::expr::{BinaryOp, Comparator, Expr, Func};
use crate::loops::{CausalGraph, Polarity};
use crate::model::{
    AuxiliaryDef, Endpoint, FlowDef, ModelDefinition, ParameterDef, StockDef, VarDef,
};
use crate::units::UnitExpr;

/// A half-open region of the source text, 1-based. `length` is in characters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub length: u32,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => write!(f, "error"),
            Severity::Warning => write!(f, "warning"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParseDiagnostic {
    pub severity: Severity,
    pub message: String,
    pub span: SourceSpan,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}: {}: {}",
            self.span.file, self.span.line, self.span.column, self.severity, self.message
        )
    }
}

/// Result of a parse: a value when no error diagnostics were produced,
/// plus all diagnostics (warnings survive success).
#[derive(Clone, Debug)]
pub struct Parsed<T> {
    pub value: Option<T>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl<T> Parsed<T> {
    pub fn is_success(&self) -> bool {
        self.value.is_some()
    }

    pub fn into_result(self) -> Result<T, Vec<ParseDiagnostic>> {
        match self.value {
            Some(v) => Ok(v),
            None => Err(self.diagnostics),
        }
    }
}

const RESERVED: &[&str] = &[
    "model", "param", "aux", "flow", "stock", "units", "nonneg", "cloud", "if", "then", "else",
    "delay", "t", "exp", "min", "max", "abs",
];

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Eq,
    Comma,
    Arrow,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    col: u32,
    len: u32,
}

struct LineCursor<'a> {
    file: &'a str,
    line_no: u32,
    line_len: u32,
    tokens: Vec<Token>,
    pos: usize,
}

impl<'a> LineCursor<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn span_at(&self, pos: usize) -> SourceSpan {
        match self.tokens.get(pos) {
            Some(t) => SourceSpan {
                file: self.file.to_string(),
                line: self.line_no,
                column: t.col,
                length: t.len,
            },
            // end of line: zero-width span just past the last token
            None => SourceSpan {
                file: self.file.to_string(),
                line: self.line_no,
                column: self.line_len + 1,
                length: 0,
            },
        }
    }

    fn span_here(&self) -> SourceSpan {
        self.span_at(self.pos)
    }

    fn span_prev(&self) -> SourceSpan {
        self.span_at(self.pos.saturating_sub(1))
    }

    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }
}

/// Marker for "diagnostic already emitted, abandon this line".
struct LineFailed;

type LineResult<T> = Result<T, LineFailed>;

fn lex_line<'a>(
    file: &'a str,
    line_no: u32,
    raw: &str,
    diags: &mut Vec<ParseDiagnostic>,
) -> Option<LineCursor<'a>> {
    // comments run to end of line
    let content = match raw.find("//") {
        Some(i) => &raw[..i],
        None => raw,
    };
    let mut tokens = Vec::new();
    let chars: Vec<char> = content.chars().collect();
    let mut i = 0usize;
    let mut ok = true;
    while i < chars.len() {
        let c = chars[i];
        let col = (i + 1) as u32;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            tokens.push(Token {
                tok: Tok::Ident(text),
                col,
                len: (i - start) as u32,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            match text.parse::<f64>() {
                Ok(v) => tokens.push(Token {
                    tok: Tok::Number(v),
                    col,
                    len: (i - start) as u32,
                }),
                Err(_) => {
                    diags.push(ParseDiagnostic {
                        severity: Severity::Error,
                        message: format!("malformed number `{text}`"),
                        span: SourceSpan {
                            file: file.to_string(),
                            line: line_no,
                            column: col,
                            length: (i - start) as u32,
                        },
                    });
                    ok = false;
                }
            }
            continue;
        }
        let (tok, len) = match c {
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            '+' => (Tok::Plus, 1),
            '-' => {
                if chars.get(i + 1) == Some(&'>') {
                    (Tok::Arrow, 2)
                } else {
                    (Tok::Minus, 1)
                }
            }
            '*' => (Tok::Star, 1),
            '/' => (Tok::Slash, 1),
            '^' => (Tok::Caret, 1),
            '=' => (Tok::Eq, 1),
            ',' => (Tok::Comma, 1),
            '<' => {
                if chars.get(i + 1) == Some(&'=') {
                    (Tok::Le, 2)
                } else {
                    (Tok::Lt, 1)
                }
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    (Tok::Ge, 2)
                } else {
                    (Tok::Gt, 1)
                }
            }
            _ => {
                diags.push(ParseDiagnostic {
                    severity: Severity::Error,
                    message: format!("unexpected character `{c}`"),
                    span: SourceSpan {
                        file: file.to_string(),
                        line: line_no,
                        column: col,
                        length: 1,
                    },
                });
                ok = false;
                i += 1;
                continue;
            }
        };
        tokens.push(Token { tok, col, len });
        i += len as usize;
    }
    if !ok {
        return None;
    }
    Some(LineCursor {
        file,
        line_no,
        line_len: chars.len() as u32,
        tokens,
        pos: 0,
    })
}

struct LineParser<'a, 'd> {
    cur: LineCursor<'a>,
    diags: &'d mut Vec<ParseDiagnostic>,
}

impl<'a, 'd> LineParser<'a, 'd> {
    fn error(&mut self, span: SourceSpan, message: impl Into<String>) -> LineFailed {
        self.diags.push(ParseDiagnostic {
            severity: Severity::Error,
            message: message.into(),
            span,
        });
        LineFailed
    }

    fn expect(&mut self, want: &Tok, what: &str) -> LineResult<Token> {
        match self.cur.next() {
            Some(t) if t.tok == *want => Ok(t),
            Some(t) => {
                let span = self.cur.span_prev();
                Err(self.error(span, format!("expected {what}, found {}", t.tok.describe())))
            }
            None => {
                let span = self.cur.span_here();
                Err(self.error(span, format!("expected {what}, found end of line")))
            }
        }
    }

    fn expect_ident(&mut self, what: &str) -> LineResult<(String, SourceSpan)> {
        match self.cur.next() {
            Some(Token {
                tok: Tok::Ident(name),
                ..
            }) => Ok((name, self.cur.span_prev())),
            Some(t) => {
                let span = self.cur.span_prev();
                Err(self.error(span, format!("expected {what}, found {}", t.tok.describe())))
            }
            None => {
                let span = self.cur.span_here();
                Err(self.error(span, format!("expected {what}, found end of line")))
            }
        }
    }

    fn expect_end(&mut self) -> LineResult<()> {
        if self.cur.at_end() {
            Ok(())
        } else {
            let span = self.cur.span_here();
            let desc = self.cur.peek().unwrap().describe();
            Err(self.error(span, format!("unexpected {desc} after declaration")))
        }
    }

    fn declared_name(&mut self, what: &str) -> LineResult<(String, SourceSpan)> {
        let (name, span) = self.expect_ident(what)?;
        if RESERVED.contains(&name.as_str()) {
            return Err(self.error(span, format!("`{name}` is a reserved word")));
        }
        Ok((name, span))
    }

    // --- expressions -----------------------------------------------------

    fn parse_expr(&mut self) -> LineResult<Expr> {
        if matches!(self.cur.peek(), Some(Tok::Ident(k)) if k == "if") {
            return self.parse_if();
        }
        self.parse_additive()
    }

    fn parse_if(&mut self) -> LineResult<Expr> {
        self.cur.next(); // `if`
        let lhs = self.parse_additive()?;
        let cmp = match self.cur.next().map(|t| t.tok) {
            Some(Tok::Lt) => Comparator::Lt,
            Some(Tok::Le) => Comparator::Le,
            Some(Tok::Gt) => Comparator::Gt,
            Some(Tok::Ge) => Comparator::Ge,
            other => {
                let span = self.cur.span_prev();
                let found = other
                    .map(|t| t.describe())
                    .unwrap_or_else(|| "end of line".into());
                return Err(self.error(
                    span,
                    format!("expected comparator (`<`, `<=`, `>`, `>=`), found {found}"),
                ));
            }
        };
        let rhs = self.parse_additive()?;
        self.expect_keyword("then")?;
        let then = self.parse_expr()?;
        self.expect_keyword("else")?;
        let otherwise = self.parse_expr()?;
        Ok(Expr::If {
            cmp,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
            then: Box::new(then),
            otherwise: Box::new(otherwise),
        })
    }

    fn expect_keyword(&mut self, kw: &str) -> LineResult<()> {
        match self.cur.next() {
            Some(Token {
                tok: Tok::Ident(name),
                ..
            }) if name == kw => Ok(()),
            Some(t) => {
                let span = self.cur.span_prev();
                Err(self.error(span, format!("expected `{kw}`, found {}", t.tok.describe())))
            }
            None => {
                let span = self.cur.span_here();
                Err(self.error(span, format!("expected `{kw}`, found end of line")))
            }
        }
    }

    fn parse_additive(&mut self) -> LineResult<Expr> {
        let mut lhs = self.parse_multiplicative()?;
        loop {
            let op = match self.cur.peek() {
                Some(Tok::Plus) => BinaryOp::Add,
                Some(Tok::Minus) => BinaryOp::Sub,
                _ => break,
            };
            self.cur.next();
            let rhs = self.parse_multiplicative()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_multiplicative(&mut self) -> LineResult<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.cur.peek() {
                Some(Tok::Star) => BinaryOp::Mul,
                Some(Tok::Slash) => BinaryOp::Div,
                _ => break,
            };
            self.cur.next();
            let rhs = self.parse_unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> LineResult<Expr> {
        if matches!(self.cur.peek(), Some(Tok::Minus)) {
            self.cur.next();
            let inner = self.parse_unary()?;
            // fold a negated literal so `-5` round-trips as one node
            if let Expr::Num(v) = inner {
                return Ok(Expr::Num(-v));
            }
            return Ok(Expr::neg(inner));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> LineResult<Expr> {
        let base = self.parse_atom()?;
        if matches!(self.cur.peek(), Some(Tok::Caret)) {
            self.cur.next();
            // right-associative; the exponent may carry its own unary minus
            let exponent = self.parse_unary()?;
            return Ok(Expr::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> LineResult<Expr> {
        match self.cur.next() {
            Some(Token {
                tok: Tok::Number(v),
                ..
            }) => Ok(Expr::Num(v)),
            Some(Token {
                tok: Tok::LParen, ..
            }) => {
                let inner = self.parse_expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Token {
                tok: Tok::Ident(name),
                ..
            }) => {
                if name == "t" {
                    return Ok(Expr::Time);
                }
                if matches!(self.cur.peek(), Some(Tok::LParen)) {
                    let name_span = self.cur.span_prev();
                    let Some(func) = Func::from_name(&name) else {
                        return Err(self.error(name_span, format!("unknown function `{name}`")));
                    };
                    self.cur.next(); // `(`
                    let mut args = vec![self.parse_expr()?];
                    while matches!(self.cur.peek(), Some(Tok::Comma)) {
                        self.cur.next();
                        args.push(self.parse_expr()?);
                    }
                    self.expect(&Tok::RParen, "`)`")?;
                    if args.len() != func.arity() {
                        return Err(self.error(
                            name_span,
                            format!(
                                "`{name}` expects {} argument(s), got {}",
                                func.arity(),
                                args.len()
                            ),
                        ));
                    }
                    return Ok(Expr::Call(func, args));
                }
                if RESERVED.contains(&name.as_str()) {
                    let span = self.cur.span_prev();
                    return Err(self.error(span, format!("`{name}` is a reserved word")));
                }
                Ok(Expr::Var(name))
            }
            Some(t) => {
                let span = self.cur.span_prev();
                Err(self.error(span, format!("expected expression, found {}", t.tok.describe())))
            }
            None => {
                let span = self.cur.span_here();
                Err(self.error(span, "expected expression, found end of line"))
            }
        }
    }

    // --- units ------------------------------------------------------------

    fn parse_unit_expr(&mut self) -> LineResult<UnitExpr> {
        let mut unit = self.parse_unit_term()?;
        loop {
            match self.cur.peek() {
                Some(Tok::Star) => {
                    self.cur.next();
                    unit = unit.multiply(&self.parse_unit_term()?);
                }
                Some(Tok::Slash) => {
                    self.cur.next();
                    unit = unit.divide(&self.parse_unit_term()?);
                }
                _ => break,
            }
        }
        Ok(unit)
    }

    fn parse_unit_term(&mut self) -> LineResult<UnitExpr> {
        let (atom, span) = self.expect_ident("unit name")?;
        if atom == "nonneg" {
            return Err(self.error(span, "`nonneg` is not a unit name"));
        }
        let mut unit = UnitExpr::atom(&atom);
        if matches!(self.cur.peek(), Some(Tok::Caret)) {
            self.cur.next();
            let negative = if matches!(self.cur.peek(), Some(Tok::Minus)) {
                self.cur.next();
                true
            } else {
                false
            };
            match self.cur.next() {
                Some(Token {
                    tok: Tok::Number(v),
                    ..
                }) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                    let mut k = v as i32;
                    if negative {
                        k = -k;
                    }
                    unit = unit.pow(k);
                }
                _ => {
                    let span = self.cur.span_prev();
                    return Err(self.error(span, "expected integer exponent after `^`"));
                }
            }
        }
        Ok(unit)
    }

    /// `[units <unitexpr>]`, at the tail of a declaration.
    fn parse_optional_units(&mut self) -> LineResult<Option<UnitExpr>> {
        if matches!(self.cur.peek(), Some(Tok::Ident(k)) if k == "units") {
            self.cur.next();
            return Ok(Some(self.parse_unit_expr()?));
        }
        Ok(None)
    }

    fn parse_endpoint(&mut self) -> LineResult<(Endpoint, SourceSpan)> {
        let (name, span) = self.expect_ident("stock name or `cloud`")?;
        if name == "cloud" {
            Ok((Endpoint::Cloud, span))
        } else if RESERVED.contains(&name.as_str()) {
            Err(self.error(span, format!("`{name}` is a reserved word")))
        } else {
            Ok((Endpoint::Stock(name), span))
        }
    }
}

struct PendingEndpoint {
    flow: String,
    stock: String,
    span: SourceSpan,
}

/// Parse `.sd` model text. `file` labels diagnostics, typically the path the
/// text came from.
pub fn parse_model(source: &str, file: &str) -> Parsed<ModelDefinition> {
    let mut diags: Vec<ParseDiagnostic> = Vec::new();
    let mut vars: Vec<VarDef> = Vec::new();
    let mut model_name: Option<String> = None;
    let mut names: Vec<(String, SourceSpan)> = Vec::new();
    let mut endpoints: Vec<PendingEndpoint> = Vec::new();
    let mut first_line_span: Option<SourceSpan> = None;

    for (idx, raw) in source.lines().enumerate() {
        let line_no = (idx + 1) as u32;
        let Some(cur) = lex_line(file, line_no, raw, &mut diags) else {
            continue;
        };
        if cur.at_end() {
            continue;
        }
        if first_line_span.is_none() {
            first_line_span = Some(cur.span_at(0));
        }
        let mut p = LineParser {
            cur,
            diags: &mut diags,
        };
        let keyword = match p.cur.next() {
            Some(Token {
                tok: Tok::Ident(k), ..
            }) => k,
            Some(_) => {
                let span = p.cur.span_prev();
                p.error(span, "expected a declaration keyword");
                continue;
            }
            None => continue,
        };
        let result: LineResult<()> = (|| {
            match keyword.as_str() {
                "model" => {
                    let (name, span) = p.declared_name("model name")?;
                    p.expect_end()?;
                    if model_name.is_some() {
                        return Err(p.error(span, "duplicate `model` declaration"));
                    }
                    model_name = Some(name);
                }
                "param" => {
                    let (name, span) = p.declared_name("parameter name")?;
                    p.expect(&Tok::Eq, "`=`")?;
                    let expr = p.parse_expr()?;
                    if !expr.is_constant() {
                        return Err(p.error(span, "parameter value must be a constant"));
                    }
                    let value = match crate::expr::evaluate_expr(
                        &expr,
                        &std::collections::HashMap::new(),
                        0.0,
                    ) {
                        Ok(v) => v,
                        Err(e) => return Err(p.error(span, format!("bad parameter value: {e}"))),
                    };
                    let units = p.parse_optional_units()?;
                    p.expect_end()?;
                    names.push((name.clone(), span));
                    vars.push(VarDef::Parameter(ParameterDef { name, value, units }));
                }
                "aux" => {
                    let (name, span) = p.declared_name("auxiliary name")?;
                    p.expect(&Tok::Eq, "`=`")?;
                    let expr = p.parse_expr()?;
                    let units = p.parse_optional_units()?;
                    p.expect_end()?;
                    names.push((name.clone(), span));
                    vars.push(VarDef::Auxiliary(AuxiliaryDef { name, expr, units }));
                }
                "flow" => {
                    let (name, span) = p.declared_name("flow name")?;
                    p.expect(&Tok::LParen, "`(`")?;
                    let (source_ep, source_span) = p.parse_endpoint()?;
                    p.expect(&Tok::Arrow, "`->`")?;
                    let (target_ep, target_span) = p.parse_endpoint()?;
                    p.expect(&Tok::RParen, "`)`")?;
                    p.expect(&Tok::Eq, "`=`")?;
                    let rate = p.parse_expr()?;
                    let units = p.parse_optional_units()?;
                    p.expect_end()?;
                    if let Endpoint::Stock(s) = &source_ep {
                        endpoints.push(PendingEndpoint {
                            flow: name.clone(),
                            stock: s.clone(),
                            span: source_span,
                        });
                    }
                    if let Endpoint::Stock(s) = &target_ep {
                        endpoints.push(PendingEndpoint {
                            flow: name.clone(),
                            stock: s.clone(),
                            span: target_span,
                        });
                    }
                    names.push((name.clone(), span));
                    vars.push(VarDef::Flow(FlowDef {
                        name,
                        source: source_ep,
                        target: target_ep,
                        rate,
                        units,
                    }));
                }
                "stock" => {
                    let (name, span) = p.declared_name("stock name")?;
                    p.expect(&Tok::Eq, "`=`")?;
                    let initial = p.parse_expr()?;
                    let units = p.parse_optional_units()?;
                    let non_negative =
                        if matches!(p.cur.peek(), Some(Tok::Ident(k)) if k == "nonneg") {
                            p.cur.next();
                            true
                        } else {
                            false
                        };
                    p.expect_end()?;
                    names.push((name.clone(), span));
                    vars.push(VarDef::Stock(StockDef {
                        name,
                        initial,
                        inflows: vec![],
                        outflows: vec![],
                        units,
                        non_negative,
                    }));
                }
                other => {
                    let span = p.cur.span_at(0);
                    return Err(p.error(span, format!("unknown keyword `{other}`")));
                }
            }
            Ok(())
        })();
        let _ = result;
    }

    // duplicate names, reported at the second declaration site
    for (i, (name, span)) in names.iter().enumerate() {
        if names[..i].iter().any(|(n, _)| n == name) {
            diags.push(ParseDiagnostic {
                severity: Severity::Error,
                message: format!("duplicate name `{name}`"),
                span: span.clone(),
            });
        }
    }

    // dangling flow endpoints
    for pe in &endpoints {
        let is_stock = vars
            .iter()
            .any(|v| matches!(v, VarDef::Stock(s) if s.name == pe.stock));
        if !is_stock {
            diags.push(ParseDiagnostic {
                severity: Severity::Error,
                message: format!(
                    "flow `{}` endpoint `{}` does not name a declared stock",
                    pe.flow, pe.stock
                ),
                span: pe.span.clone(),
            });
        }
    }

    if model_name.is_none() {
        diags.push(ParseDiagnostic {
            severity: Severity::Error,
            message: "missing `model <name>` declaration".to_string(),
            span: first_line_span.unwrap_or(SourceSpan {
                file: file.to_string(),
                line: 1,
                column: 1,
                length: 0,
            }),
        });
    }

    let has_errors = diags.iter().any(|d| d.severity == Severity::Error);
    let value = if has_errors {
        None
    } else {
        Some(ModelDefinition::assemble(model_name.unwrap(), vars))
    };
    Parsed {
        value,
        diagnostics: diags,
    }
}

/// Parse a standalone expression, as used by scenario override strings.
pub fn parse_expr_str(source: &str) -> Result<Expr, Vec<ParseDiagnostic>> {
    let mut diags = Vec::new();
    let Some(cur) = lex_line("<expr>", 1, source, &mut diags) else {
        return Err(diags);
    };
    if cur.at_end() {
        diags.push(ParseDiagnostic {
            severity: Severity::Error,
            message: "empty expression".to_string(),
            span: SourceSpan {
                file: "<expr>".into(),
                line: 1,
                column: 1,
                length: 0,
            },
        });
        return Err(diags);
    }
    let mut p = LineParser {
        cur,
        diags: &mut diags,
    };
    let expr = p.parse_expr().and_then(|e| {
        p.expect_end()?;
        Ok(e)
    });
    match expr {
        Ok(e) => Ok(e),
        Err(LineFailed) => Err(diags),
    }
}

/// Parse `.cld` causal edge-list text into a signed directed multigraph.
pub fn parse_cld(source: &str, file: &str) -> Parsed<CausalGraph> {
    let mut diags: Vec<ParseDiagnostic> = Vec::new();
    let mut graph = CausalGraph::new();

    for (idx, raw) in source.lines().enumerate() {
        let line_no = (idx + 1) as u32;
        let Some(cur) = lex_line(file, line_no, raw, &mut diags) else {
            continue;
        };
        if cur.at_end() {
            continue;
        }
        let mut p = LineParser {
            cur,
            diags: &mut diags,
        };
        let result: LineResult<()> = (|| {
            let (from, _) = p.expect_ident("node name")?;
            p.expect(&Tok::Arrow, "`->`")?;
            let (to, to_span) = p.expect_ident("node name")?;
            let polarity = match p.cur.next() {
                Some(Token { tok: Tok::Plus, .. }) => Polarity::Positive,
                Some(Token { tok: Tok::Minus, .. }) => Polarity::Negative,
                Some(t) => {
                    let span = p.cur.span_prev();
                    return Err(p.error(
                        span,
                        format!("expected polarity `+` or `-`, found {}", t.tok.describe()),
                    ));
                }
                None => {
                    let span = p.cur.span_here();
                    return Err(p.error(span, "missing polarity: expected `+` or `-`"));
                }
            };
            let delayed = if matches!(p.cur.peek(), Some(Tok::Ident(k)) if k == "delay") {
                p.cur.next();
                true
            } else {
                false
            };
            p.expect_end()?;
            if from == to {
                p.diags.push(ParseDiagnostic {
                    severity: Severity::Warning,
                    message: format!("self-loop edge `{from} -> {to}` forms a degenerate length-1 cycle"),
                    span: to_span.clone(),
                });
            }
            if graph.add_edge(&from, &to, polarity, delayed).is_err() {
                return Err(p.error(
                    to_span,
                    format!("duplicate edge `{from} -> {to}` with identical polarity and delay"),
                ));
            }
            Ok(())
        })();
        let _ = result;
    }

    let has_errors = diags.iter().any(|d| d.severity == Severity::Error);
    Parsed {
        value: if has_errors { None } else { Some(graph) },
        diagnostics: diags,
    }
}

// --- serialization ---------------------------------------------------------

fn fmt_number(v: f64) -> String {
    format!("{v}")
}

fn precedence(expr: &Expr) -> u8 {
    match expr {
        Expr::If { .. } => 0,
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) => 1,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, _, _) => 2,
        // a negative literal prints with a leading minus, so it binds like a
        // unary negation wherever parenthesization is decided
        Expr::Num(v) if *v < 0.0 => 3,
        Expr::Neg(_) => 3,
        Expr::Binary(BinaryOp::Pow, _, _) => 4,
        Expr::Num(_) | Expr::Var(_) | Expr::Time | Expr::Call(_, _) => 5,
    }
}

fn write_expr(out: &mut String, expr: &Expr, min_prec: u8) {
    let prec = precedence(expr);
    let parens = prec < min_prec;
    if parens {
        out.push('(');
    }
    match expr {
        Expr::Num(v) => out.push_str(&fmt_number(*v)),
        Expr::Var(name) => out.push_str(name),
        Expr::Time => out.push('t'),
        Expr::Neg(inner) => {
            out.push('-');
            // parenthesize nested negations (and negative literals) so the
            // parser's literal folding reads back the same tree
            write_expr(out, inner, 4);
        }
        Expr::Binary(op, lhs, rhs) => match op {
            BinaryOp::Pow => {
                // right-associative: parenthesize a compound base
                write_expr(out, lhs, 5);
                out.push_str(" ^ ");
                write_expr(out, rhs, 3);
            }
            _ => {
                let level = precedence(expr);
                write_expr(out, lhs, level);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                write_expr(out, rhs, level + 1);
            }
        },
        Expr::Call(func, args) => {
            out.push_str(func.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a, 0);
            }
            out.push(')');
        }
        Expr::If {
            cmp,
            lhs,
            rhs,
            then,
            otherwise,
        } => {
            out.push_str("if ");
            write_expr(out, lhs, 1);
            out.push(' ');
            out.push_str(cmp.symbol());
            out.push(' ');
            write_expr(out, rhs, 1);
            out.push_str(" then ");
            write_expr(out, then, 0);
            out.push_str(" else ");
            write_expr(out, otherwise, 0);
        }
    }
    if parens {
        out.push(')');
    }
}

/// Render an expression in canonical DSL form with minimal parentheses.
pub fn expr_to_string(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, expr, 0);
    out
}

/// Serialize a model in canonical form: parameters, then auxiliaries, then
/// flows, then stocks, declaration order within each group. The result
/// re-parses to a structurally equal model.
pub fn serialize_model(model: &ModelDefinition) -> String {
    let mut out = format!("model {}\n", model.name);
    for p in model.parameters() {
        out.push_str(&format!("param {} = {}", p.name, fmt_number(p.value)));
        if let Some(u) = &p.units {
            out.push_str(&format!(" units {u}"));
        }
        out.push('\n');
    }
    for a in model.auxiliaries() {
        out.push_str(&format!("aux {} = {}", a.name, expr_to_string(&a.expr)));
        if let Some(u) = &a.units {
            out.push_str(&format!(" units {u}"));
        }
        out.push('\n');
    }
    for f in model.flows() {
        out.push_str(&format!(
            "flow {} ({} -> {}) = {}",
            f.name,
            f.source,
            f.target,
            expr_to_string(&f.rate)
        ));
        if let Some(u) = &f.units {
            out.push_str(&format!(" units {u}"));
        }
        out.push('\n');
    }
    for s in model.stocks() {
        out.push_str(&format!("stock {} = {}", s.name, expr_to_string(&s.initial)));
        if let Some(u) = &s.units {
            out.push_str(&format!(" units {u}"));
        }
        if s.non_negative {
            out.push_str(" nonneg");
        }
        out.push('\n');
    }
    out
}
