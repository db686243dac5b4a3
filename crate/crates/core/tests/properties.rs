// Copyright 2026 The SD Toolkit Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Property tests: expression round-trips, parser robustness on arbitrary
//! input, unit algebra laws, and scenario/baseline equivalences.

use proptest::prelude::*;

use sd_core::expr::{BinaryOp, Comparator, Expr, Func};
use sd_core::parse::{expr_to_string, parse_expr_str, parse_model};
use sd_core::scenario::{Override, Scenario};
use sd_core::sim::{run, Method, SimConfig};
use sd_core::units::UnitExpr;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0u32..8000).prop_map(|n| Expr::Num(n as f64 / 8.0)),
        prop_oneof![Just("a"), Just("b"), Just("c_1"), Just("rate")]
            .prop_map(|s| Expr::Var(s.to_string())),
        Just(Expr::Time),
    ]
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 64, 4, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| match e {
                // the parser folds a negated literal into the literal
                Expr::Num(v) => Expr::Num(-v),
                other => Expr::neg(other),
            }),
            (
                prop_oneof![
                    Just(BinaryOp::Add),
                    Just(BinaryOp::Sub),
                    Just(BinaryOp::Mul),
                    Just(BinaryOp::Div),
                    Just(BinaryOp::Pow)
                ],
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            inner
                .clone()
                .prop_map(|e| Expr::Call(Func::Exp, vec![e])),
            inner
                .clone()
                .prop_map(|e| Expr::Call(Func::Abs, vec![e])),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Call(Func::Min, vec![a, b])),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Call(Func::Max, vec![a, b])),
            (
                prop_oneof![
                    Just(Comparator::Lt),
                    Just(Comparator::Le),
                    Just(Comparator::Gt),
                    Just(Comparator::Ge)
                ],
                inner.clone(),
                inner.clone(),
                inner.clone(),
                inner
            )
                .prop_map(|(cmp, l, r, t, e)| Expr::If {
                    cmp,
                    lhs: Box::new(l),
                    rhs: Box::new(r),
                    then: Box::new(t),
                    otherwise: Box::new(e),
                }),
        ]
    })
}

proptest! {
    /// Printing an expression and parsing it back is the identity.
    #[test]
    fn expr_print_parse_round_trip(e in arb_expr()) {
        let text = expr_to_string(&e);
        let back = parse_expr_str(&text)
            .unwrap_or_else(|d| panic!("`{text}` failed to reparse: {d:?}"));
        prop_assert_eq!(&back, &e, "text was `{}`", text);
        // canonical printing is a fixed point
        prop_assert_eq!(expr_to_string(&back), text);
    }

    /// The model parser never panics, and every diagnostic points inside
    /// the input.
    #[test]
    fn parser_diagnostics_stay_in_bounds(src in "[ -~\n]{0,200}") {
        let parsed = parse_model(&src, "fuzz.sd");
        let lines: Vec<&str> = src.lines().collect();
        for d in &parsed.diagnostics {
            prop_assert!(d.span.line >= 1);
            prop_assert!(d.span.column >= 1);
            if lines.is_empty() {
                prop_assert_eq!((d.span.line, d.span.column, d.span.length), (1, 1, 0));
                continue;
            }
            let idx = (d.span.line as usize) - 1;
            prop_assert!(idx < lines.len(), "line {} of {}", d.span.line, lines.len());
            let len = lines[idx].chars().count() as u32;
            // a zero-width span may sit one past the end of its line
            prop_assert!(d.span.column - 1 + d.span.length <= len + 1);
        }
    }

    /// Identity and inverse laws of unit algebra.
    #[test]
    fn unit_algebra_laws(
        exps in proptest::collection::vec((0usize..4, -3i32..4), 0..4)
    ) {
        let atoms = ["people", "points", "year", "dollars"];
        let mut u = UnitExpr::dimensionless();
        for (i, e) in exps {
            u = u.multiply(&UnitExpr::atom(atoms[i]).pow(e));
        }
        prop_assert_eq!(u.multiply(&UnitExpr::dimensionless()), u.clone());
        prop_assert!(u.divide(&u).is_dimensionless());
        let v = UnitExpr::atom("points").per_time();
        prop_assert_eq!(u.multiply(&v), v.multiply(&u));
    }

    /// Line-ending style never changes a parse.
    #[test]
    fn crlf_is_transparent(
        names in proptest::collection::vec("[a-z][a-z0-9]{0,5}", 1..5)
    ) {
        let mut src = String::from("model m\n");
        let mut seen = std::collections::HashSet::new();
        for (i, n) in names.iter().enumerate() {
            let name = format!("{n}_{i}");
            if seen.insert(name.clone()) {
                src.push_str(&format!("param {name} = {i}\n"));
            }
        }
        let lf = parse_model(&src, "x.sd");
        let crlf = parse_model(&src.replace('\n', "\r\n"), "x.sd");
        prop_assert_eq!(lf.value, crlf.value);
    }
}

/// Overrides that never activate inside the horizon reproduce the baseline
/// bit for bit.
#[test]
fn dormant_override_is_baseline() {
    let model = parse_model(
        "model m\n\
         param k = 0.3\n\
         param boost = 1\n\
         aux decay = k * S\n\
         stock S = 50\n\
         flow out (S -> cloud) = decay * boost\n",
        "m.sd",
    )
    .into_result()
    .unwrap();
    let config = SimConfig {
        start_time: 0.0,
        end_time: 8.0,
        dt: 0.25,
        method: Method::Euler,
        record_every: 1,
    };
    let baseline = Scenario::baseline("base", config.clone(), vec!["out".into()]);
    let dormant = Scenario {
        name: "dormant".into(),
        config,
        overrides: vec![Override {
            target: "boost".into(),
            replacement: Expr::num(250.0),
            active_from: 9.0, // beyond end_time
        }],
        outputs: vec!["out".into()],
    };
    let a = run(&model, &baseline).unwrap().table;
    let b = run(&model, &dormant).unwrap().table;
    assert_eq!(a, b);
    for (ca, cb) in a.columns.iter().zip(&b.columns) {
        for (x, y) in ca.values.iter().zip(&cb.values) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

/// RK4 conserves paired-stock mass to near machine precision.
#[test]
fn rk4_conservation_tight() {
    let model = parse_model(
        "model m\n\
         stock A = 6\n\
         stock B = 4\n\
         flow swap (A -> B) = 0.7 * A - 0.2 * B\n",
        "m.sd",
    )
    .into_result()
    .unwrap();
    let config = SimConfig {
        start_time: 0.0,
        end_time: 10.0,
        dt: 0.1,
        method: Method::Rk4,
        record_every: 1,
    };
    let table = run(&model, &Scenario::baseline("c", config, vec![]))
        .unwrap()
        .table;
    let a = table.column("A").unwrap();
    let b = table.column("B").unwrap();
    for i in 0..table.len() {
        assert!((a[i] + b[i] - 10.0).abs() < 1e-12);
    }
}
