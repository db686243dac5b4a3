// Copyright 2026 The SD Toolkit Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Feedback-loop analysis over signed directed multigraphs.
//!
//! Graphs come from `.cld` edge lists or from a model's dependency
//! structure. Every simple cycle is reported once, rotated to start at its
//! lexicographically smallest node, classified reinforcing or balancing by
//! the product of edge polarities.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{Expr, Func};
use crate::model::ModelDefinition;
use crate::scenario::{apply_overrides, Override, ScenarioError};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Polarity {
    Positive,
    Negative,
    /// Dependence exists but its sign is not syntactically determinable.
    /// Loops through such edges are excluded from classification.
    Unknown,
}

impl Polarity {
    pub fn symbol(self) -> &'static str {
        match self {
            Polarity::Positive => "+",
            Polarity::Negative => "-",
            Polarity::Unknown => "?",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CausalEdge {
    pub from: String,
    pub to: String,
    pub polarity: Polarity,
    pub delayed: bool,
}

/// Signed directed multigraph. Parallel edges between the same pair of
/// nodes must differ in polarity or delay mark.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CausalGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<(usize, usize, Polarity, bool)>,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum GraphError {
    #[error("duplicate edge `{from} -> {to}`: parallel edges must differ in polarity or delay")]
    DuplicateEdge { from: String, to: String },
}

impl CausalGraph {
    pub fn new() -> Self {
        CausalGraph::default()
    }

    pub fn add_node(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn add_edge(
        &mut self,
        from: &str,
        to: &str,
        polarity: Polarity,
        delayed: bool,
    ) -> Result<(), GraphError> {
        let f = self.add_node(from);
        let t = self.add_node(to);
        if self
            .edges
            .iter()
            .any(|&(ef, et, ep, ed)| ef == f && et == t && ep == polarity && ed == delayed)
        {
            return Err(GraphError::DuplicateEdge {
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        self.edges.push((f, t, polarity, delayed));
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(String::as_str)
    }

    pub fn edges(&self) -> impl Iterator<Item = CausalEdge> + '_ {
        self.edges.iter().map(move |&(f, t, p, d)| CausalEdge {
            from: self.nodes[f].clone(),
            to: self.nodes[t].clone(),
            polarity: p,
            delayed: d,
        })
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        match (self.index.get(from), self.index.get(to)) {
            (Some(&f), Some(&t)) => self.edges.iter().any(|&(ef, et, _, _)| ef == f && et == t),
            _ => false,
        }
    }

    /// Distinct `(from, to)` name pairs, for structural comparison.
    pub fn edge_pairs(&self) -> std::collections::BTreeSet<(String, String)> {
        self.edges
            .iter()
            .map(|&(f, t, _, _)| (self.nodes[f].clone(), self.nodes[t].clone()))
            .collect()
    }

    /// DOT rendering: polarity as edge label, delay as a dashed edge.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph cld {\n");
        let mut names: Vec<&str> = self.nodes.iter().map(String::as_str).collect();
        names.sort_unstable();
        for name in names {
            out.push_str(&format!("    \"{name}\";\n"));
        }
        let mut lines: Vec<String> = self
            .edges
            .iter()
            .map(|&(f, t, p, d)| {
                let style = if d { ", style=dashed" } else { "" };
                format!(
                    "    \"{}\" -> \"{}\" [label=\"{}\"{}];\n",
                    self.nodes[f],
                    self.nodes[t],
                    p.symbol(),
                    style
                )
            })
            .collect();
        lines.sort_unstable();
        for l in lines {
            out.push_str(&l);
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum LoopClass {
    Reinforcing,
    Balancing,
}

impl fmt::Display for LoopClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoopClass::Reinforcing => write!(f, "reinforcing"),
            LoopClass::Balancing => write!(f, "balancing"),
        }
    }
}

/// A simple feedback cycle in canonical rotation: `nodes[0]` is the
/// lexicographically smallest node, `edges[i]` runs `nodes[i] ->
/// nodes[(i+1) % len]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackLoop {
    pub nodes: Vec<String>,
    pub edges: Vec<CausalEdge>,
    pub classification: LoopClass,
    pub contains_delay: bool,
}

impl FeedbackLoop {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl fmt::Display for FeedbackLoop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.classification {
            LoopClass::Reinforcing => "R",
            LoopClass::Balancing => "B",
        };
        write!(f, "{tag}  len {}  ", self.len())?;
        for (i, e) in self.edges.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{} -({})->", self.nodes[i], e.polarity.symbol())?;
        }
        write!(f, " {}", self.nodes[0])?;
        if self.contains_delay {
            write!(f, "  [delay]")?;
        }
        Ok(())
    }
}

/// Sign of the polarity product. `None` when any edge is `Unknown`.
pub fn classify(edges: &[CausalEdge]) -> Option<LoopClass> {
    let mut negatives = 0usize;
    for e in edges {
        match e.polarity {
            Polarity::Positive => {}
            Polarity::Negative => negatives += 1,
            Polarity::Unknown => return None,
        }
    }
    Some(if negatives.is_multiple_of(2) {
        LoopClass::Reinforcing
    } else {
        LoopClass::Balancing
    })
}

#[derive(Copy, Clone, Debug)]
pub struct LoopLimits {
    pub max_loops: usize,
}

impl Default for LoopLimits {
    fn default() -> Self {
        LoopLimits { max_loops: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum LoopError {
    #[error("loop enumeration exceeded the cap of {0} loops")]
    ResourceLimit(usize),
}

/// All simple cycles, each reported once in canonical rotation, ordered by
/// length then lexicographically. Cycles containing an unknown-polarity
/// edge cannot be classified and are omitted.
pub fn enumerate_loops(
    graph: &CausalGraph,
    limits: LoopLimits,
) -> Result<Vec<FeedbackLoop>, LoopError> {
    // rank nodes lexicographically; cycles are rooted at their smallest node
    let mut order: Vec<usize> = (0..graph.nodes.len()).collect();
    order.sort_by(|&a, &b| graph.nodes[a].cmp(&graph.nodes[b]));
    let mut rank = vec![0usize; graph.nodes.len()];
    for (r, &n) in order.iter().enumerate() {
        rank[n] = r;
    }

    // adjacency over node pairs, with the parallel edges between each pair
    let mut succ: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut parallel: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (idx, &(f, t, _, _)) in graph.edges.iter().enumerate() {
        let entry = parallel.entry((f, t)).or_default();
        if entry.is_empty() {
            succ.entry(f).or_default().push(t);
        }
        entry.push(idx);
    }
    for targets in succ.values_mut() {
        targets.sort_by_key(|&t| rank[t]);
    }

    struct Search<'g> {
        graph: &'g CausalGraph,
        rank: Vec<usize>,
        succ: HashMap<usize, Vec<usize>>,
        parallel: HashMap<(usize, usize), Vec<usize>>,
        on_path: Vec<bool>,
        path: Vec<usize>,
        found: Vec<FeedbackLoop>,
        max_loops: usize,
    }

    impl Search<'_> {
        fn dfs(&mut self, start: usize, node: usize) -> Result<(), LoopError> {
            self.on_path[node] = true;
            self.path.push(node);
            let nexts = self.succ.get(&node).cloned().unwrap_or_default();
            for next in nexts {
                if next == start {
                    self.emit_cycles()?;
                } else if !self.on_path[next] && self.rank[next] > self.rank[start] {
                    self.dfs(start, next)?;
                }
            }
            self.path.pop();
            self.on_path[node] = false;
            Ok(())
        }

        /// Expand the node cycle on `path` into one loop per combination of
        /// parallel edges.
        fn emit_cycles(&mut self) -> Result<(), LoopError> {
            let len = self.path.len();
            let mut choices: Vec<&Vec<usize>> = Vec::with_capacity(len);
            for i in 0..len {
                let from = self.path[i];
                let to = self.path[(i + 1) % len];
                choices.push(&self.parallel[&(from, to)]);
            }
            let mut cursor = vec![0usize; len];
            loop {
                let edge_ids: Vec<usize> = cursor
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| choices[i][c])
                    .collect();
                let edges: Vec<CausalEdge> = edge_ids
                    .iter()
                    .map(|&id| {
                        let (f, t, p, d) = self.graph.edges[id];
                        CausalEdge {
                            from: self.graph.nodes[f].clone(),
                            to: self.graph.nodes[t].clone(),
                            polarity: p,
                            delayed: d,
                        }
                    })
                    .collect();
                if let Some(classification) = classify(&edges) {
                    let contains_delay = edges.iter().any(|e| e.delayed);
                    self.found.push(FeedbackLoop {
                        nodes: self.path.iter().map(|&n| self.graph.nodes[n].clone()).collect(),
                        edges,
                        classification,
                        contains_delay,
                    });
                    if self.found.len() > self.max_loops {
                        return Err(LoopError::ResourceLimit(self.max_loops));
                    }
                }
                // advance the mixed-radix cursor
                let mut i = len;
                loop {
                    if i == 0 {
                        return Ok(());
                    }
                    i -= 1;
                    cursor[i] += 1;
                    if cursor[i] < choices[i].len() {
                        break;
                    }
                    cursor[i] = 0;
                }
            }
        }
    }

    let mut search = Search {
        graph,
        rank: rank.clone(),
        succ,
        parallel,
        on_path: vec![false; graph.nodes.len()],
        path: Vec::new(),
        found: Vec::new(),
        max_loops: limits.max_loops,
    };

    for &start in &order {
        search.dfs(start, start)?;
    }

    let mut loops = search.found;
    loops.sort_by(|a, b| {
        a.len()
            .cmp(&b.len())
            .then_with(|| a.nodes.cmp(&b.nodes))
            .then_with(|| {
                let ka: Vec<_> = a.edges.iter().map(|e| (e.polarity, e.delayed)).collect();
                let kb: Vec<_> = b.edges.iter().map(|e| (e.polarity, e.delayed)).collect();
                ka.cmp(&kb)
            })
    });
    Ok(loops)
}

/// Derive the causal graph of a model's effective equations at time `t`
/// under the given overrides. Pass no overrides for the baseline structure.
///
/// Nodes are all variables. `u -> v` when `u` appears in `v`'s effective
/// defining expression; flows additionally point into their stocks with the
/// sign of their role (inflow `+`, outflow `-`).
pub fn graph_from_model(
    model: &ModelDefinition,
    overrides: &[Override],
    t: f64,
) -> Result<CausalGraph, ScenarioError> {
    let effective = apply_overrides(model, overrides, t)?;
    let mut graph = CausalGraph::new();
    for v in model.variables() {
        graph.add_node(v.name());
    }
    for v in model.variables() {
        let name = v.name();
        if let Some(expr) = effective.expr_of(name) {
            for referenced in expr.references() {
                if model.get(referenced).is_none() {
                    continue;
                }
                let polarity = dependency_polarity(expr, referenced);
                // identical parallel deps collapse; differing ones coexist
                let _ = graph.add_edge(referenced, name, polarity, false);
            }
        }
    }
    for s in model.stocks() {
        for f in &s.inflows {
            let _ = graph.add_edge(f, &s.name, Polarity::Positive, false);
        }
        for f in &s.outflows {
            let _ = graph.add_edge(f, &s.name, Polarity::Negative, false);
        }
    }
    Ok(graph)
}

/// Syntactic polarity of `v`'s dependence on `var` within `expr`.
///
/// The sign follows `var`'s own position: sums keep the ambient sign,
/// subtraction right-hand sides and unary minus flip it, denominators flip
/// it, `exp`/`min`/`max` are monotone. Cofactors in a product flip the sign
/// only when they are definitely negative; indeterminate cofactors (model
/// quantities, gap terms like a difference of two variables) are taken as
/// positive, which is the usual reading of stock-and-flow equations.
/// Non-monotone positions (powers, `abs`, comparison operands) and
/// mixed-sign occurrences come back unknown.
pub fn dependency_polarity(expr: &Expr, var: &str) -> Polarity {
    let mut acc: Option<Polarity> = None;
    collect_polarity(expr, var, Some(1), &mut acc);
    acc.unwrap_or(Polarity::Unknown)
}

fn join_polarity(acc: &mut Option<Polarity>, p: Polarity) {
    *acc = Some(match acc {
        None => p,
        Some(prev) if *prev == p => p,
        Some(_) => Polarity::Unknown,
    });
}

/// Syntactic sign of a whole subexpression: `Some(1)` definitely positive,
/// `Some(-1)` definitely negative, `None` unknown. Bare variables and `t`
/// count as positive by convention.
fn syntactic_sign(expr: &Expr) -> Option<i8> {
    match expr {
        Expr::Num(v) => {
            if *v >= 0.0 {
                Some(1)
            } else {
                Some(-1)
            }
        }
        Expr::Var(_) | Expr::Time => Some(1),
        Expr::Neg(inner) => syntactic_sign(inner).map(|s| -s),
        Expr::Binary(op, lhs, rhs) => {
            use crate::expr::BinaryOp;
            match op {
                BinaryOp::Add => match (syntactic_sign(lhs), syntactic_sign(rhs)) {
                    (Some(a), Some(b)) if a == b => Some(a),
                    _ => None,
                },
                BinaryOp::Sub => None,
                BinaryOp::Mul | BinaryOp::Div => {
                    match (syntactic_sign(lhs), syntactic_sign(rhs)) {
                        (Some(a), Some(b)) => Some(a * b),
                        _ => None,
                    }
                }
                BinaryOp::Pow => None,
            }
        }
        Expr::Call(Func::Exp, _) => Some(1),
        Expr::Call(Func::Abs, _) => Some(1),
        Expr::Call(Func::Min | Func::Max, args) => {
            let signs: Vec<_> = args.iter().map(syntactic_sign).collect();
            match (signs.first().copied().flatten(), signs.get(1).copied().flatten()) {
                (Some(a), Some(b)) if a == b => Some(a),
                _ => None,
            }
        }
        Expr::If { then, otherwise, .. } => {
            match (syntactic_sign(then), syntactic_sign(otherwise)) {
                (Some(a), Some(b)) if a == b => Some(a),
                _ => None,
            }
        }
    }
}

fn collect_polarity(expr: &Expr, var: &str, sign: Option<i8>, acc: &mut Option<Polarity>) {
    match expr {
        Expr::Num(_) | Expr::Time => {}
        Expr::Var(name) => {
            if name == var {
                let p = match sign {
                    Some(1) => Polarity::Positive,
                    Some(-1) => Polarity::Negative,
                    _ => Polarity::Unknown,
                };
                join_polarity(acc, p);
            }
        }
        Expr::Neg(inner) => collect_polarity(inner, var, sign.map(|s| -s), acc),
        Expr::Binary(op, lhs, rhs) => {
            use crate::expr::BinaryOp;
            match op {
                BinaryOp::Add => {
                    collect_polarity(lhs, var, sign, acc);
                    collect_polarity(rhs, var, sign, acc);
                }
                BinaryOp::Sub => {
                    collect_polarity(lhs, var, sign, acc);
                    collect_polarity(rhs, var, sign.map(|s| -s), acc);
                }
                BinaryOp::Mul => {
                    let ls = combine(sign, cofactor_sign(rhs));
                    let rs = combine(sign, cofactor_sign(lhs));
                    collect_polarity(lhs, var, ls, acc);
                    collect_polarity(rhs, var, rs, acc);
                }
                BinaryOp::Div => {
                    // d(l/r)/dl ~ sign(r); d(l/r)/dr ~ -sign(l)
                    let ls = combine(sign, cofactor_sign(rhs));
                    let rs = combine(sign.map(|s| -s), cofactor_sign(lhs));
                    collect_polarity(lhs, var, ls, acc);
                    collect_polarity(rhs, var, rs, acc);
                }
                BinaryOp::Pow => {
                    collect_polarity(lhs, var, None, acc);
                    collect_polarity(rhs, var, None, acc);
                }
            }
        }
        Expr::Call(func, args) => match func {
            Func::Exp | Func::Min | Func::Max => {
                for a in args {
                    collect_polarity(a, var, sign, acc);
                }
            }
            Func::Abs => {
                for a in args {
                    collect_polarity(a, var, None, acc);
                }
            }
        },
        Expr::If {
            lhs,
            rhs,
            then,
            otherwise,
            ..
        } => {
            collect_polarity(lhs, var, None, acc);
            collect_polarity(rhs, var, None, acc);
            collect_polarity(then, var, sign, acc);
            collect_polarity(otherwise, var, sign, acc);
        }
    }
}

fn combine(a: Option<i8>, b: Option<i8>) -> Option<i8> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x * y),
        _ => None,
    }
}

/// A cofactor flips the dependent's sign only when definitely negative.
fn cofactor_sign(expr: &Expr) -> Option<i8> {
    Some(syntactic_sign(expr).unwrap_or(1))
}

/// JSON report shape: `{"loops": [{"nodes": [...], "type": "R"|"B",
/// "delay": bool}]}`.
#[derive(Serialize)]
pub struct LoopsJson {
    pub loops: Vec<LoopJson>,
}

#[derive(Serialize)]
pub struct LoopJson {
    pub nodes: Vec<String>,
    #[serde(rename = "type")]
    pub kind: String,
    pub delay: bool,
}

pub fn loops_to_json(loops: &[FeedbackLoop]) -> LoopsJson {
    LoopsJson {
        loops: loops
            .iter()
            .map(|l| LoopJson {
                nodes: l.nodes.clone(),
                kind: match l.classification {
                    LoopClass::Reinforcing => "R".to_string(),
                    LoopClass::Balancing => "B".to_string(),
                },
                delay: l.contains_delay,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig_2a_graph() -> CausalGraph {
        let mut g = CausalGraph::new();
        g.add_edge("PaymentsMade", "AverageCreditScore", Polarity::Positive, true)
            .unwrap();
        g.add_edge("AverageCreditScore", "LoansReceived", Polarity::Positive, false)
            .unwrap();
        g.add_edge("LoansReceived", "Borrowers", Polarity::Positive, false)
            .unwrap();
        g.add_edge("Borrowers", "PaymentsMade", Polarity::Positive, false)
            .unwrap();
        g.add_edge("Borrowers", "LoanDefaults", Polarity::Positive, false)
            .unwrap();
        g.add_edge("LoanDefaults", "AverageCreditScore", Polarity::Negative, false)
            .unwrap();
        g
    }

    #[test]
    fn lending_cld_has_one_reinforcing_one_balancing() {
        let loops = enumerate_loops(&fig_2a_graph(), LoopLimits::default()).unwrap();
        assert_eq!(loops.len(), 2);
        let reinforcing: Vec<_> = loops
            .iter()
            .filter(|l| l.classification == LoopClass::Reinforcing)
            .collect();
        let balancing: Vec<_> = loops
            .iter()
            .filter(|l| l.classification == LoopClass::Balancing)
            .collect();
        assert_eq!(reinforcing.len(), 1);
        assert_eq!(balancing.len(), 1);
        assert_eq!(reinforcing[0].len(), 4);
        assert_eq!(balancing[0].len(), 4);
        assert!(reinforcing[0].contains_delay);
        assert!(!balancing[0].contains_delay);
        assert!(reinforcing[0].nodes.contains(&"PaymentsMade".to_string()));
        assert!(balancing[0].nodes.contains(&"LoanDefaults".to_string()));
        // canonical rotation starts at the lexicographically smallest node
        assert_eq!(reinforcing[0].nodes[0], "AverageCreditScore");
        assert_eq!(balancing[0].nodes[0], "AverageCreditScore");
    }

    #[test]
    fn dag_has_no_loops() {
        let mut g = CausalGraph::new();
        g.add_edge("A", "B", Polarity::Positive, false).unwrap();
        g.add_edge("B", "C", Polarity::Positive, false).unwrap();
        assert!(enumerate_loops(&g, LoopLimits::default()).unwrap().is_empty());
    }

    #[test]
    fn negative_self_loop_is_balancing() {
        let mut g = CausalGraph::new();
        g.add_edge("A", "A", Polarity::Negative, false).unwrap();
        let loops = enumerate_loops(&g, LoopLimits::default()).unwrap();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].classification, LoopClass::Balancing);
        assert_eq!(loops[0].len(), 1);
    }

    #[test]
    fn classify_by_sign_product() {
        let edge = |p| CausalEdge {
            from: "a".into(),
            to: "b".into(),
            polarity: p,
            delayed: false,
        };
        use Polarity::*;
        assert_eq!(
            classify(&[edge(Positive), edge(Positive), edge(Positive), edge(Positive)]),
            Some(LoopClass::Reinforcing)
        );
        assert_eq!(
            classify(&[edge(Positive), edge(Positive), edge(Negative)]),
            Some(LoopClass::Balancing)
        );
        assert_eq!(
            classify(&[edge(Negative), edge(Negative)]),
            Some(LoopClass::Reinforcing)
        );
        assert_eq!(classify(&[edge(Unknown), edge(Positive)]), None);
    }

    #[test]
    fn parallel_edges_make_distinct_loops() {
        let mut g = CausalGraph::new();
        g.add_edge("A", "B", Polarity::Positive, false).unwrap();
        g.add_edge("A", "B", Polarity::Negative, false).unwrap();
        g.add_edge("B", "A", Polarity::Positive, false).unwrap();
        let loops = enumerate_loops(&g, LoopLimits::default()).unwrap();
        assert_eq!(loops.len(), 2);
        // same node cycle, tie-broken by edge signature: + sorts before -
        assert_eq!(loops[0].classification, LoopClass::Reinforcing);
        assert_eq!(loops[1].classification, LoopClass::Balancing);
    }

    #[test]
    fn duplicate_identical_edge_is_rejected() {
        let mut g = CausalGraph::new();
        g.add_edge("A", "B", Polarity::Positive, false).unwrap();
        assert!(g.add_edge("A", "B", Polarity::Positive, false).is_err());
        assert!(g.add_edge("A", "B", Polarity::Positive, true).is_ok());
    }

    #[test]
    fn enumeration_is_insertion_order_independent() {
        let g1 = fig_2a_graph();
        let mut g2 = CausalGraph::new();
        g2.add_edge("LoanDefaults", "AverageCreditScore", Polarity::Negative, false)
            .unwrap();
        g2.add_edge("Borrowers", "LoanDefaults", Polarity::Positive, false)
            .unwrap();
        g2.add_edge("Borrowers", "PaymentsMade", Polarity::Positive, false)
            .unwrap();
        g2.add_edge("LoansReceived", "Borrowers", Polarity::Positive, false)
            .unwrap();
        g2.add_edge("AverageCreditScore", "LoansReceived", Polarity::Positive, false)
            .unwrap();
        g2.add_edge("PaymentsMade", "AverageCreditScore", Polarity::Positive, true)
            .unwrap();
        assert_eq!(
            enumerate_loops(&g1, LoopLimits::default()).unwrap(),
            enumerate_loops(&g2, LoopLimits::default()).unwrap()
        );
    }

    #[test]
    fn flipping_one_polarity_flips_classification() {
        let mut g = fig_2a_graph();
        // rebuild with the delayed edge negative instead of positive
        let mut flipped = CausalGraph::new();
        for e in g.edges() {
            let p = if e.from == "PaymentsMade" {
                Polarity::Negative
            } else {
                e.polarity
            };
            flipped.add_edge(&e.from, &e.to, p, e.delayed).unwrap();
        }
        g = flipped;
        let loops = enumerate_loops(&g, LoopLimits::default()).unwrap();
        let through_payments: Vec<_> = loops
            .iter()
            .filter(|l| l.nodes.contains(&"PaymentsMade".to_string()))
            .collect();
        assert_eq!(through_payments.len(), 1);
        assert_eq!(through_payments[0].classification, LoopClass::Balancing);
    }

    #[test]
    fn renaming_preserves_count_and_classes() {
        let g = fig_2a_graph();
        let mut renamed = CausalGraph::new();
        for e in g.edges() {
            renamed
                .add_edge(
                    &format!("z_{}", e.from),
                    &format!("z_{}", e.to),
                    e.polarity,
                    e.delayed,
                )
                .unwrap();
        }
        let a = enumerate_loops(&g, LoopLimits::default()).unwrap();
        let b = enumerate_loops(&renamed, LoopLimits::default()).unwrap();
        assert_eq!(a.len(), b.len());
        let classes = |ls: &[FeedbackLoop]| {
            let mut v: Vec<_> = ls.iter().map(|l| (l.len(), l.classification)).collect();
            v.sort_by_key(|&(n, c)| (n, c == LoopClass::Balancing));
            v
        };
        assert_eq!(classes(&a), classes(&b));
    }

    #[test]
    fn resource_cap_is_enforced() {
        // complete digraph on 8 nodes has far more than 20 simple cycles
        let mut g = CausalGraph::new();
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    let _ = g.add_edge(&format!("n{i}"), &format!("n{j}"), Polarity::Positive, false);
                }
            }
        }
        let err = enumerate_loops(&g, LoopLimits { max_loops: 20 }).unwrap_err();
        assert_eq!(err, LoopError::ResourceLimit(20));
    }

    #[test]
    fn polarity_of_score_effect_is_negative() {
        // x = (1/(1+exp(-(47.89 - 0.083*S))) - 1) * 4 + 5 falls as S rises
        let x = crate::parse::parse_expr_str(
            "(1 / (1 + exp(-(47.89 - 0.083 * S))) - 1) * 4 + 5",
        )
        .unwrap();
        assert_eq!(dependency_polarity(&x, "S"), Polarity::Negative);
    }

    #[test]
    fn polarity_of_granting_fraction_is_positive_in_score() {
        let g = crate::parse::parse_expr_str("1 / (1 + exp(-(3.57 + 3.43 * S / lambda)))").unwrap();
        assert_eq!(dependency_polarity(&g, "S"), Polarity::Positive);
        // and negative in the threshold that divides the score
        assert_eq!(dependency_polarity(&g, "lambda"), Polarity::Negative);
    }

    #[test]
    fn polarity_of_gap_term() {
        let n = crate::parse::parse_expr_str("O * iota * (sigma - S) / tau").unwrap();
        assert_eq!(dependency_polarity(&n, "O"), Polarity::Positive);
        assert_eq!(dependency_polarity(&n, "S"), Polarity::Negative);
        assert_eq!(dependency_polarity(&n, "tau"), Polarity::Negative);
    }

    #[test]
    fn mixed_occurrences_are_unknown() {
        let e = crate::parse::parse_expr_str("a - a * 2").unwrap();
        assert_eq!(dependency_polarity(&e, "a"), Polarity::Unknown);
        let p = crate::parse::parse_expr_str("a ^ 2").unwrap();
        assert_eq!(dependency_polarity(&p, "a"), Polarity::Unknown);
    }
}
