// Copyright 2026 The SD Toolkit Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! The abstract model: stocks, flows, auxiliaries, parameters, validation,
//! and advisory unit checking.
//!
//! A `ModelDefinition` is immutable once assembled and safe to share across
//! threads; simulation state lives elsewhere.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::expr::Expr;
use crate::units::UnitExpr;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum VariableKind {
    Stock,
    Flow,
    Auxiliary,
    Parameter,
}

impl fmt::Display for VariableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VariableKind::Stock => "stock",
            VariableKind::Flow => "flow",
            VariableKind::Auxiliary => "auxiliary",
            VariableKind::Parameter => "parameter",
        };
        write!(f, "{s}")
    }
}

/// One endpoint of a flow: a named stock, or the model boundary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Stock(String),
    Cloud,
}

impl Endpoint {
    pub fn stock_name(&self) -> Option<&str> {
        match self {
            Endpoint::Stock(name) => Some(name),
            Endpoint::Cloud => None,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Stock(name) => write!(f, "{name}"),
            Endpoint::Cloud => write!(f, "cloud"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StockDef {
    pub name: String,
    /// Evaluated once at start time; may reference only parameters and
    /// literals.
    pub initial: Expr,
    pub inflows: Vec<String>,
    pub outflows: Vec<String>,
    pub units: Option<UnitExpr>,
    pub non_negative: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowDef {
    pub name: String,
    pub source: Endpoint,
    pub target: Endpoint,
    pub rate: Expr,
    pub units: Option<UnitExpr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryDef {
    pub name: String,
    pub expr: Expr,
    pub units: Option<UnitExpr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterDef {
    pub name: String,
    pub value: f64,
    pub units: Option<UnitExpr>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum VarDef {
    Stock(StockDef),
    Flow(FlowDef),
    Auxiliary(AuxiliaryDef),
    Parameter(ParameterDef),
}

impl VarDef {
    pub fn name(&self) -> &str {
        match self {
            VarDef::Stock(s) => &s.name,
            VarDef::Flow(fl) => &fl.name,
            VarDef::Auxiliary(a) => &a.name,
            VarDef::Parameter(p) => &p.name,
        }
    }

    pub fn kind(&self) -> VariableKind {
        match self {
            VarDef::Stock(_) => VariableKind::Stock,
            VarDef::Flow(_) => VariableKind::Flow,
            VarDef::Auxiliary(_) => VariableKind::Auxiliary,
            VarDef::Parameter(_) => VariableKind::Parameter,
        }
    }

    pub fn units(&self) -> Option<&UnitExpr> {
        match self {
            VarDef::Stock(s) => s.units.as_ref(),
            VarDef::Flow(fl) => fl.units.as_ref(),
            VarDef::Auxiliary(a) => a.units.as_ref(),
            VarDef::Parameter(p) => p.units.as_ref(),
        }
    }
}

/// An immutable parsed model. Declaration order is preserved and meaningful
/// for serialization and output column order, never for numerics.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelDefinition {
    pub name: String,
    vars: Vec<VarDef>,
    index: HashMap<String, usize>,
}

impl ModelDefinition {
    /// Build a model, wiring each stock's inflow/outflow lists from the flow
    /// endpoint declarations (the lists on the incoming `StockDef`s are
    /// replaced). Duplicate names are kept so validation can report them.
    pub fn assemble(name: impl Into<String>, mut vars: Vec<VarDef>) -> ModelDefinition {
        let stock_names: HashSet<String> = vars
            .iter()
            .filter(|v| matches!(v, VarDef::Stock(_)))
            .map(|v| v.name().to_string())
            .collect();
        let mut inflows: HashMap<String, Vec<String>> = HashMap::new();
        let mut outflows: HashMap<String, Vec<String>> = HashMap::new();
        for v in &vars {
            if let VarDef::Flow(fl) = v {
                if let Some(s) = fl.target.stock_name() {
                    if stock_names.contains(s) {
                        inflows.entry(s.to_string()).or_default().push(fl.name.clone());
                    }
                }
                if let Some(s) = fl.source.stock_name() {
                    if stock_names.contains(s) {
                        outflows.entry(s.to_string()).or_default().push(fl.name.clone());
                    }
                }
            }
        }
        for v in &mut vars {
            if let VarDef::Stock(s) = v {
                s.inflows = inflows.remove(&s.name).unwrap_or_default();
                s.outflows = outflows.remove(&s.name).unwrap_or_default();
            }
        }
        Self::from_parts(name, vars)
    }

    /// Build a model from fully specified definitions, trusting the stock
    /// linkage lists as given. Prefer `assemble` unless constructing a
    /// deliberately inconsistent model.
    pub fn from_parts(name: impl Into<String>, vars: Vec<VarDef>) -> ModelDefinition {
        let mut index = HashMap::new();
        for (i, v) in vars.iter().enumerate() {
            // first declaration wins; duplicates surface in validation
            index.entry(v.name().to_string()).or_insert(i);
        }
        ModelDefinition {
            name: name.into(),
            vars,
            index,
        }
    }

    pub fn variables(&self) -> impl Iterator<Item = &VarDef> {
        self.vars.iter()
    }

    pub fn get(&self, name: &str) -> Option<&VarDef> {
        self.index.get(name).map(|&i| &self.vars[i])
    }

    pub fn kind_of(&self, name: &str) -> Option<VariableKind> {
        self.get(name).map(VarDef::kind)
    }

    pub fn stocks(&self) -> impl Iterator<Item = &StockDef> {
        self.vars.iter().filter_map(|v| match v {
            VarDef::Stock(s) => Some(s),
            _ => None,
        })
    }

    pub fn flows(&self) -> impl Iterator<Item = &FlowDef> {
        self.vars.iter().filter_map(|v| match v {
            VarDef::Flow(f) => Some(f),
            _ => None,
        })
    }

    pub fn auxiliaries(&self) -> impl Iterator<Item = &AuxiliaryDef> {
        self.vars.iter().filter_map(|v| match v {
            VarDef::Auxiliary(a) => Some(a),
            _ => None,
        })
    }

    pub fn parameters(&self) -> impl Iterator<Item = &ParameterDef> {
        self.vars.iter().filter_map(|v| match v {
            VarDef::Parameter(p) => Some(p),
            _ => None,
        })
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Structural equality: same name and, per kind, the same definitions in
    /// the same relative order. Unlike `==`, the relative declaration order
    /// of different kinds does not matter, so a model compares equal to its
    /// canonically serialized round trip.
    pub fn structurally_equal(&self, other: &ModelDefinition) -> bool {
        self.name == other.name
            && self.parameters().eq(other.parameters())
            && self.auxiliaries().eq(other.auxiliaries())
            && self.flows().eq(other.flows())
            && self.stocks().eq(other.stocks())
    }

    /// A copy of this model with one parameter set to a new value. `None`
    /// when `name` is not a parameter.
    pub fn with_parameter(&self, name: &str, value: f64) -> Option<ModelDefinition> {
        if !matches!(self.kind_of(name), Some(VariableKind::Parameter)) {
            return None;
        }
        let mut clone = self.clone();
        for v in &mut clone.vars {
            if let VarDef::Parameter(p) = v {
                if p.name == name {
                    p.value = value;
                }
            }
        }
        Some(clone)
    }
}

/// A structural rule broken by the model. Violations are data: an invalid
/// model is still inspectable and serializable.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DuplicateName {
        name: String,
    },
    /// An expression refers to a name that is not declared.
    UnknownReference {
        variable: String,
        referenced: String,
    },
    /// A flow endpoint names a stock that is not declared.
    UnknownStock {
        flow: String,
        stock: String,
    },
    /// A stock's inflow/outflow list names something that is not a flow.
    UnknownFlow {
        stock: String,
        flow: String,
    },
    /// A flow's source equals its target.
    SelfLoopFlow {
        flow: String,
    },
    /// Instantaneous dependency cycle not broken by a stock.
    AuxiliaryCycle {
        path: Vec<String>,
    },
    /// A stock initial references something other than a parameter.
    BadInitialReference {
        stock: String,
        referenced: String,
    },
    NonFiniteParameter {
        name: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateName { name } => write!(f, "duplicate name `{name}`"),
            Violation::UnknownReference {
                variable,
                referenced,
            } => write!(f, "`{variable}` references unknown variable `{referenced}`"),
            Violation::UnknownStock { flow, stock } => {
                write!(f, "flow `{flow}` names unknown stock {stock}")
            }
            Violation::UnknownFlow { stock, flow } => {
                write!(f, "stock `{stock}` lists unknown flow `{flow}`")
            }
            Violation::SelfLoopFlow { flow } => {
                write!(f, "flow `{flow}` has identical source and target")
            }
            Violation::AuxiliaryCycle { path } => {
                write!(f, "auxiliary cycle {}", path.join("\u{2192}"))
            }
            Violation::BadInitialReference { stock, referenced } => write!(
                f,
                "initial of stock `{stock}` references `{referenced}` (only parameters and literals are allowed)"
            ),
            Violation::NonFiniteParameter { name } => {
                write!(f, "parameter `{name}` is not a finite real")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "ok")
        } else {
            for v in &self.violations {
                writeln!(f, "error: {v}")?;
            }
            Ok(())
        }
    }
}

/// Check the structural rules. An empty report means the model is runnable:
/// every reference resolves and the auxiliary/flow dependency graph is
/// acyclic when stocks and parameters are treated as sources.
pub fn validate_model(model: &ModelDefinition) -> ValidationReport {
    let mut violations = Vec::new();

    let mut seen = HashSet::new();
    for v in model.variables() {
        if !seen.insert(v.name().to_string()) {
            violations.push(Violation::DuplicateName {
                name: v.name().to_string(),
            });
        }
    }

    for v in model.variables() {
        match v {
            VarDef::Stock(s) => {
                for r in s.initial.references() {
                    match model.kind_of(r) {
                        None => violations.push(Violation::UnknownReference {
                            variable: s.name.clone(),
                            referenced: r.to_string(),
                        }),
                        Some(VariableKind::Parameter) => {}
                        Some(_) => violations.push(Violation::BadInitialReference {
                            stock: s.name.clone(),
                            referenced: r.to_string(),
                        }),
                    }
                }
                if s.initial.mentions_time() {
                    violations.push(Violation::BadInitialReference {
                        stock: s.name.clone(),
                        referenced: "t".to_string(),
                    });
                }
                for fl in s.inflows.iter().chain(&s.outflows) {
                    if !matches!(model.kind_of(fl), Some(VariableKind::Flow)) {
                        violations.push(Violation::UnknownFlow {
                            stock: s.name.clone(),
                            flow: fl.clone(),
                        });
                    }
                }
            }
            VarDef::Flow(fl) => {
                if fl.source == fl.target {
                    violations.push(Violation::SelfLoopFlow {
                        flow: fl.name.clone(),
                    });
                }
                for ep in [&fl.source, &fl.target] {
                    if let Some(stock) = ep.stock_name() {
                        if !matches!(model.kind_of(stock), Some(VariableKind::Stock)) {
                            violations.push(Violation::UnknownStock {
                                flow: fl.name.clone(),
                                stock: stock.to_string(),
                            });
                        }
                    }
                }
                for r in fl.rate.references() {
                    if model.get(r).is_none() {
                        violations.push(Violation::UnknownReference {
                            variable: fl.name.clone(),
                            referenced: r.to_string(),
                        });
                    }
                }
            }
            VarDef::Auxiliary(a) => {
                for r in a.expr.references() {
                    if model.get(r).is_none() {
                        violations.push(Violation::UnknownReference {
                            variable: a.name.clone(),
                            referenced: r.to_string(),
                        });
                    }
                }
            }
            VarDef::Parameter(p) => {
                if !p.value.is_finite() {
                    violations.push(Violation::NonFiniteParameter {
                        name: p.name.clone(),
                    });
                }
            }
        }
    }

    for cycle in instantaneous_cycles(model) {
        violations.push(Violation::AuxiliaryCycle { path: cycle });
    }

    ValidationReport { violations }
}

/// Dependency cycles among auxiliaries and flows (stocks and parameters
/// break cycles). Each cycle is reported once, as a closed path
/// `a -> b -> a`.
fn instantaneous_cycles(model: &ModelDefinition) -> Vec<Vec<String>> {
    #[derive(Copy, Clone, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }

    let computed: Vec<(&str, Vec<&str>)> = model
        .variables()
        .filter_map(|v| match v {
            VarDef::Auxiliary(a) => Some((a.name.as_str(), a.expr.references())),
            VarDef::Flow(f) => Some((f.name.as_str(), f.rate.references())),
            _ => None,
        })
        .map(|(name, refs)| {
            let deps = refs
                .into_iter()
                .filter(|r| {
                    matches!(
                        model.kind_of(r),
                        Some(VariableKind::Auxiliary) | Some(VariableKind::Flow)
                    )
                })
                .collect();
            (name, deps)
        })
        .collect();
    let pos: HashMap<&str, usize> = computed
        .iter()
        .enumerate()
        .map(|(i, (n, _))| (*n, i))
        .collect();

    let mut marks = vec![Mark::New; computed.len()];
    let mut stack: Vec<usize> = Vec::new();
    let mut cycles = Vec::new();

    fn visit(
        i: usize,
        computed: &[(&str, Vec<&str>)],
        pos: &HashMap<&str, usize>,
        marks: &mut [Mark],
        stack: &mut Vec<usize>,
        cycles: &mut Vec<Vec<String>>,
    ) {
        marks[i] = Mark::Active;
        stack.push(i);
        for dep in &computed[i].1 {
            let j = pos[dep];
            match marks[j] {
                Mark::New => visit(j, computed, pos, marks, stack, cycles),
                Mark::Active => {
                    let start = stack.iter().position(|&k| k == j).unwrap();
                    let mut path: Vec<String> = stack[start..]
                        .iter()
                        .map(|&k| computed[k].0.to_string())
                        .collect();
                    path.push(computed[j].0.to_string());
                    cycles.push(path);
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        marks[i] = Mark::Done;
    }

    for i in 0..computed.len() {
        if marks[i] == Mark::New {
            visit(i, &computed, &pos, &mut marks, &mut stack, &mut cycles);
        }
    }
    cycles
}

/// A unit inconsistency. These are always advisory.
#[derive(Clone, Debug, PartialEq)]
pub enum UnitIssue {
    /// A flow attached to a stock does not carry `stock units / year`.
    FlowStockMismatch {
        flow: String,
        stock: String,
        expected: UnitExpr,
        found: UnitExpr,
    },
    /// Operands of `+`/`-` (or a conditional's branches) disagree.
    OperandMismatch {
        variable: String,
        lhs: UnitExpr,
        rhs: UnitExpr,
    },
}

impl fmt::Display for UnitIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitIssue::FlowStockMismatch {
                flow,
                stock,
                expected,
                found,
            } => write!(
                f,
                "flow `{flow}` into stock `{stock}` has units {found}, expected {expected}"
            ),
            UnitIssue::OperandMismatch { variable, lhs, rhs } => write!(
                f,
                "in `{variable}`: cannot add/subtract {lhs} and {rhs}"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UnitReport {
    pub mismatches: Vec<UnitIssue>,
    /// Variables whose units could not be determined end to end.
    pub unchecked: Vec<String>,
}

impl UnitReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Inferred units of a subexpression during checking.
#[derive(Clone, Debug, PartialEq)]
enum Inferred {
    /// A literal: compatible with anything.
    Any,
    /// A variable with no declared units somewhere inside.
    Unknown,
    Known(UnitExpr),
}

/// Advisory unit check: flows attached to stocks must carry
/// `stock units / year`, and both sides of every `+`/`-` must agree.
/// Variables without declared units are downgraded to unchecked rather
/// than reported.
pub fn check_units(model: &ModelDefinition) -> UnitReport {
    let mut report = UnitReport::default();

    for v in model.variables() {
        if v.units().is_none() {
            report.unchecked.push(v.name().to_string());
        }
    }

    for s in model.stocks() {
        let Some(stock_units) = &s.units else { continue };
        let expected = stock_units.per_time();
        for flow_name in s.inflows.iter().chain(&s.outflows) {
            let Some(VarDef::Flow(fl)) = model.get(flow_name) else {
                continue;
            };
            if let Some(found) = &fl.units {
                if *found != expected {
                    report.mismatches.push(UnitIssue::FlowStockMismatch {
                        flow: fl.name.clone(),
                        stock: s.name.clone(),
                        expected: expected.clone(),
                        found: found.clone(),
                    });
                }
            }
        }
    }

    for v in model.variables() {
        let expr = match v {
            VarDef::Flow(f) => &f.rate,
            VarDef::Auxiliary(a) => &a.expr,
            _ => continue,
        };
        infer_units(expr, model, v.name(), &mut report.mismatches);
    }

    report
}

fn join(
    variable: &str,
    lhs: Inferred,
    rhs: Inferred,
    mismatches: &mut Vec<UnitIssue>,
) -> Inferred {
    match (lhs, rhs) {
        (Inferred::Any, other) | (other, Inferred::Any) => other,
        (Inferred::Unknown, _) | (_, Inferred::Unknown) => Inferred::Unknown,
        (Inferred::Known(a), Inferred::Known(b)) => {
            if a != b {
                mismatches.push(UnitIssue::OperandMismatch {
                    variable: variable.to_string(),
                    lhs: a.clone(),
                    rhs: b,
                });
            }
            Inferred::Known(a)
        }
    }
}

fn infer_units(
    expr: &Expr,
    model: &ModelDefinition,
    variable: &str,
    mismatches: &mut Vec<UnitIssue>,
) -> Inferred {
    use crate::expr::BinaryOp;
    match expr {
        Expr::Num(_) => Inferred::Any,
        Expr::Time => Inferred::Known(UnitExpr::atom(crate::units::TIME_UNIT)),
        Expr::Var(name) => match model.get(name).and_then(VarDef::units) {
            Some(u) => Inferred::Known(u.clone()),
            None => Inferred::Unknown,
        },
        Expr::Neg(inner) => infer_units(inner, model, variable, mismatches),
        Expr::Binary(op, lhs, rhs) => {
            let l = infer_units(lhs, model, variable, mismatches);
            let r = infer_units(rhs, model, variable, mismatches);
            match op {
                BinaryOp::Add | BinaryOp::Sub => join(variable, l, r, mismatches),
                BinaryOp::Mul => match (l, r) {
                    (Inferred::Known(a), Inferred::Known(b)) => Inferred::Known(a.multiply(&b)),
                    (Inferred::Any, other) | (other, Inferred::Any) => other,
                    _ => Inferred::Unknown,
                },
                BinaryOp::Div => match (l, r) {
                    (Inferred::Known(a), Inferred::Known(b)) => Inferred::Known(a.divide(&b)),
                    (Inferred::Any, Inferred::Known(b)) => Inferred::Known(b.invert()),
                    (Inferred::Known(a), Inferred::Any) => Inferred::Known(a),
                    (Inferred::Any, Inferred::Any) => Inferred::Any,
                    _ => Inferred::Unknown,
                },
                BinaryOp::Pow => {
                    // `u ^ k` has units only for an integer literal exponent
                    match (l, rhs.as_ref()) {
                        (Inferred::Known(a), Expr::Num(k)) if k.fract() == 0.0 => {
                            Inferred::Known(a.pow(*k as i32))
                        }
                        (Inferred::Any, _) => Inferred::Any,
                        _ => Inferred::Unknown,
                    }
                }
            }
        }
        Expr::Call(func, args) => {
            use crate::expr::Func;
            let inferred: Vec<Inferred> = args
                .iter()
                .map(|a| infer_units(a, model, variable, mismatches))
                .collect();
            match func {
                Func::Exp => Inferred::Known(UnitExpr::dimensionless()),
                Func::Abs => inferred.into_iter().next().unwrap_or(Inferred::Any),
                Func::Min | Func::Max => {
                    let mut it = inferred.into_iter();
                    let a = it.next().unwrap_or(Inferred::Any);
                    let b = it.next().unwrap_or(Inferred::Any);
                    join(variable, a, b, mismatches)
                }
            }
        }
        Expr::If {
            lhs,
            rhs,
            then,
            otherwise,
            ..
        } => {
            let cl = infer_units(lhs, model, variable, mismatches);
            let cr = infer_units(rhs, model, variable, mismatches);
            join(variable, cl, cr, mismatches);
            let t = infer_units(then, model, variable, mismatches);
            let e = infer_units(otherwise, model, variable, mismatches);
            join(variable, t, e, mismatches)
        }
    }
}
