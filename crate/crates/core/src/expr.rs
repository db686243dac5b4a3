// Copyright 2026 The SD Toolkit Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Expression trees for model equations and their evaluator.
//!
//! Evaluation is referentially transparent: the same environment and time
//! always produce the same bits. Only division by zero and `0 ^ negative`
//! are runtime errors; everything else follows IEEE 754 f64 semantics.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Abs,
    Min,
    Max,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Exp | Func::Abs => 1,
            Func::Min | Func::Max => 2,
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "exp" => Some(Func::Exp),
            "abs" => Some(Func::Abs),
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Reference to a named model variable.
    Var(String),
    /// The simulation clock `t`, in years.
    Time,
    Neg(Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    If {
        cmp: Comparator,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        then: Box<Expr>,
        otherwise: Box<Expr>,
    },
}

// constructor names mirror the operator enum, not the std ops traits
#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn add(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Add, lhs, rhs)
    }

    pub fn sub(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Sub, lhs, rhs)
    }

    pub fn mul(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Mul, lhs, rhs)
    }

    pub fn div(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Div, lhs, rhs)
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    /// Every variable name referenced anywhere in the tree, in first-use
    /// order, without duplicates. `t` is not a variable.
    pub fn references(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk_refs(&mut out);
        out
    }

    fn walk_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Num(_) | Expr::Time => {}
            Expr::Var(name) => {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
            Expr::Neg(inner) => inner.walk_refs(out),
            Expr::Binary(_, lhs, rhs) => {
                lhs.walk_refs(out);
                rhs.walk_refs(out);
            }
            Expr::Call(_, args) => {
                for a in args {
                    a.walk_refs(out);
                }
            }
            Expr::If {
                lhs,
                rhs,
                then,
                otherwise,
                ..
            } => {
                lhs.walk_refs(out);
                rhs.walk_refs(out);
                then.walk_refs(out);
                otherwise.walk_refs(out);
            }
        }
    }

    pub fn mentions_time(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(_) => false,
            Expr::Time => true,
            Expr::Neg(inner) => inner.mentions_time(),
            Expr::Binary(_, lhs, rhs) => lhs.mentions_time() || rhs.mentions_time(),
            Expr::Call(_, args) => args.iter().any(Expr::mentions_time),
            Expr::If {
                lhs,
                rhs,
                then,
                otherwise,
                ..
            } => {
                lhs.mentions_time()
                    || rhs.mentions_time()
                    || then.mentions_time()
                    || otherwise.mentions_time()
            }
        }
    }

    /// A constant expression references no variables and not `t`.
    pub fn is_constant(&self) -> bool {
        self.references().is_empty() && !self.mentions_time()
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: 0 raised to negative power {0}")]
    DomainError(f64),
}

/// Name-to-value bindings for evaluation. The time value is passed
/// separately so one environment serves every `t`.
pub trait Env {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl Env for HashMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Env for std::collections::BTreeMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

/// Evaluate `expr` with the given bindings at time `t`.
pub fn evaluate_expr(expr: &Expr, env: &dyn Env, t: f64) -> Result<f64, EvalError> {
    match expr {
        Expr::Num(v) => Ok(*v),
        Expr::Time => Ok(t),
        Expr::Var(name) => env
            .lookup(name)
            .ok_or_else(|| EvalError::UnboundVariable(name.clone())),
        Expr::Neg(inner) => Ok(-evaluate_expr(inner, env, t)?),
        Expr::Binary(op, lhs, rhs) => {
            let l = evaluate_expr(lhs, env, t)?;
            let r = evaluate_expr(rhs, env, t)?;
            match op {
                BinaryOp::Add => Ok(l + r),
                BinaryOp::Sub => Ok(l - r),
                BinaryOp::Mul => Ok(l * r),
                BinaryOp::Div => {
                    if r == 0.0 {
                        Err(EvalError::DivisionByZero)
                    } else {
                        Ok(l / r)
                    }
                }
                BinaryOp::Pow => {
                    if l == 0.0 && r < 0.0 {
                        Err(EvalError::DomainError(r))
                    } else {
                        Ok(l.powf(r))
                    }
                }
            }
        }
        Expr::Call(func, args) => {
            // the parser enforces arity; excess hand-built args are ignored
            let mut vals = [0.0f64; 2];
            for (i, a) in args.iter().take(2).enumerate() {
                vals[i] = evaluate_expr(a, env, t)?;
            }
            Ok(match func {
                Func::Exp => vals[0].exp(),
                Func::Abs => vals[0].abs(),
                Func::Min => vals[0].min(vals[1]),
                Func::Max => vals[0].max(vals[1]),
            })
        }
        Expr::If {
            cmp,
            lhs,
            rhs,
            then,
            otherwise,
        } => {
            let l = evaluate_expr(lhs, env, t)?;
            let r = evaluate_expr(rhs, env, t)?;
            if cmp.holds(l, r) {
                evaluate_expr(then, env, t)
            } else {
                evaluate_expr(otherwise, env, t)
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::parse::expr_to_string(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(n, v)| (n.to_string(), *v)).collect()
    }

    /// Credit-score effect on loan term, written out directly as the
    /// independent route against the AST evaluator:
    /// (1/(1+exp(-(47.89 - 0.083*S))) - 1) * 4 + 5
    fn x_formula_ast() -> Expr {
        let inner = Expr::sub(Expr::num(47.89), Expr::mul(Expr::num(0.083), Expr::var("S")));
        let logistic = Expr::div(
            Expr::num(1.0),
            Expr::add(Expr::num(1.0), Expr::Call(Func::Exp, vec![Expr::neg(inner)])),
        );
        Expr::add(
            Expr::mul(Expr::sub(logistic, Expr::num(1.0)), Expr::num(4.0)),
            Expr::num(5.0),
        )
    }

    fn x_closed_form(s: f64) -> f64 {
        (1.0 / (1.0 + (-(47.89 - 0.083 * s)).exp()) - 1.0) * 4.0 + 5.0
    }

    #[test]
    fn score_effect_at_max_score_is_one() {
        let v = evaluate_expr(&x_formula_ast(), &env(&[("S", 850.0)]), 0.0).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "x(850) = {v}");
        assert_eq!(v, x_closed_form(850.0));
    }

    #[test]
    fn score_effect_at_initial_score() {
        let v = evaluate_expr(&x_formula_ast(), &env(&[("S", 550.0)]), 0.0).unwrap();
        assert!((v - 4.6159).abs() < 1e-3, "x(550) = {v}");
        assert_eq!(v, x_closed_form(550.0));
    }

    #[test]
    fn conditional_switch_is_strict_before() {
        // `if t < 10 then 400 else 200`: the value changes AT the switch time.
        let e = Expr::If {
            cmp: Comparator::Lt,
            lhs: Box::new(Expr::Time),
            rhs: Box::new(Expr::num(10.0)),
            then: Box::new(Expr::num(400.0)),
            otherwise: Box::new(Expr::num(200.0)),
        };
        let empty = env(&[]);
        assert_eq!(evaluate_expr(&e, &empty, 9.999).unwrap(), 400.0);
        assert_eq!(evaluate_expr(&e, &empty, 10.0).unwrap(), 200.0);
        assert_eq!(evaluate_expr(&e, &empty, 10.001).unwrap(), 200.0);
    }

    #[test]
    fn unbound_variable_is_reported() {
        let e = Expr::var("missing");
        assert_eq!(
            evaluate_expr(&e, &env(&[]), 0.0),
            Err(EvalError::UnboundVariable("missing".into()))
        );
    }

    #[test]
    fn division_by_zero_is_reported() {
        let e = Expr::div(Expr::num(1.0), Expr::num(0.0));
        assert_eq!(evaluate_expr(&e, &env(&[]), 0.0), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn zero_to_negative_power_is_reported() {
        let e = Expr::binary(BinaryOp::Pow, Expr::num(0.0), Expr::num(-2.0));
        assert_eq!(
            evaluate_expr(&e, &env(&[]), 0.0),
            Err(EvalError::DomainError(-2.0))
        );
    }

    #[test]
    fn evaluation_is_referentially_transparent() {
        let e = x_formula_ast();
        let bindings = env(&[("S", 612.375)]);
        let a = evaluate_expr(&e, &bindings, 3.25).unwrap();
        let b = evaluate_expr(&e, &bindings, 3.25).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn references_are_deduplicated_in_order() {
        let e = Expr::add(
            Expr::mul(Expr::var("b"), Expr::var("a")),
            Expr::var("b"),
        );
        assert_eq!(e.references(), vec!["b", "a"]);
    }

    #[test]
    fn min_max_abs() {
        let empty = env(&[]);
        let min = Expr::Call(Func::Min, vec![Expr::num(2.0), Expr::num(-3.0)]);
        let max = Expr::Call(Func::Max, vec![Expr::num(2.0), Expr::num(-3.0)]);
        let abs = Expr::Call(Func::Abs, vec![Expr::num(-3.5)]);
        assert_eq!(evaluate_expr(&min, &empty, 0.0).unwrap(), -3.0);
        assert_eq!(evaluate_expr(&max, &empty, 0.0).unwrap(), 2.0);
        assert_eq!(evaluate_expr(&abs, &empty, 0.0).unwrap(), 3.5);
    }
}
