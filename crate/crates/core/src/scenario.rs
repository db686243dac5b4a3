// Copyright 2026 The SD Toolkit Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Scheduled interventions: expression substitutions that take effect at a
//! given time, covering both parametric changes (a constant replaced by a
//! constant) and structural ones (a constant replaced by an expression that
//! closes a new feedback loop).

use std::collections::{BTreeSet, HashMap};

use serde::Deserialize;
use thiserror::Error;

use crate::expr::Expr;
use crate::model::{ModelDefinition, VariableKind};
use crate::sim::{Method, SimConfig};

/// Replace `target`'s defining equation with `replacement` from
/// `active_from` (inclusive) onward.
#[derive(Clone, Debug, PartialEq)]
pub struct Override {
    pub target: String,
    pub replacement: Expr,
    pub active_from: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: SimConfig,
    pub overrides: Vec<Override>,
    pub outputs: Vec<String>,
}

impl Scenario {
    /// A plain run over the given horizon: no overrides, record everything
    /// every step.
    pub fn baseline(name: &str, config: SimConfig, outputs: Vec<String>) -> Scenario {
        Scenario {
            name: name.to_string(),
            config,
            overrides: Vec::new(),
            outputs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario JSON: {0}")]
    Json(String),
    #[error("override expression `{expr}`: {detail}")]
    BadExpression { expr: String, detail: String },
    #[error("override target `{0}` does not exist in the model")]
    UnknownTarget(String),
    #[error("override target `{target}` is a {kind}; only parameters and auxiliaries can be overridden")]
    BadTargetKind { target: String, kind: VariableKind },
    #[error("override for `{target}` references unknown variable `{referenced}`")]
    UnknownReference { target: String, referenced: String },
    #[error("two overrides of `{target}` share active_from = {at}")]
    ConflictingOverrides { target: String, at: f64 },
    #[error("overrides create an instantaneous cycle at t = {at}: {path}")]
    InstantaneousCycle { at: f64, path: String },
    #[error("output variable `{0}` does not exist in the model")]
    UnknownOutput(String),
}

/// The model's equations with active overrides substituted: the resolved
/// right-hand side for every computed variable, plus a dependency-ordered
/// evaluation schedule.
#[derive(Debug)]
pub struct EffectiveEquations<'a> {
    model: &'a ModelDefinition,
    replacements: HashMap<&'a str, &'a Expr>,
    eval_order: Vec<&'a str>,
}

impl<'a> EffectiveEquations<'a> {
    /// The effective defining expression of a computed variable. Parameters
    /// without an active override are constants and return `None`.
    pub fn expr_of(&self, name: &str) -> Option<&'a Expr> {
        if let Some(&e) = self.replacements.get(name) {
            return Some(e);
        }
        match self.model.get(name)? {
            crate::model::VarDef::Auxiliary(a) => Some(&a.expr),
            crate::model::VarDef::Flow(f) => Some(&f.rate),
            _ => None,
        }
    }

    /// Names of all computed variables (auxiliaries, flows, overridden
    /// parameters) in an order where every dependency precedes its users.
    pub fn eval_order(&self) -> &[&'a str] {
        &self.eval_order
    }

    pub fn is_overridden(&self, name: &str) -> bool {
        self.replacements.contains_key(name)
    }
}

/// Resolve which overrides are active at `t` (later `active_from` wins per
/// target) and schedule the resulting equation set. Fails if substitution
/// creates an instantaneous cycle or an override is malformed.
pub fn apply_overrides<'a>(
    model: &'a ModelDefinition,
    overrides: &'a [Override],
    t: f64,
) -> Result<EffectiveEquations<'a>, ScenarioError> {
    let mut replacements: HashMap<&str, (&Expr, f64)> = HashMap::new();
    for ov in overrides {
        if ov.active_from > t {
            continue;
        }
        match replacements.get(ov.target.as_str()) {
            Some(&(_, at)) if at == ov.active_from => {
                return Err(ScenarioError::ConflictingOverrides {
                    target: ov.target.clone(),
                    at,
                });
            }
            Some(&(_, at)) if at > ov.active_from => {}
            _ => {
                replacements.insert(&ov.target, (&ov.replacement, ov.active_from));
            }
        }
    }
    let replacements: HashMap<&str, &Expr> =
        replacements.into_iter().map(|(k, (e, _))| (k, e)).collect();

    // computed set: auxiliaries, flows, and overridden parameters
    let computed: Vec<&str> = model
        .variables()
        .filter(|v| match v.kind() {
            VariableKind::Auxiliary | VariableKind::Flow => true,
            VariableKind::Parameter => replacements.contains_key(v.name()),
            VariableKind::Stock => false,
        })
        .map(|v| v.name())
        .collect();

    let effective = EffectiveEquations {
        model,
        replacements,
        eval_order: Vec::new(),
    };

    let deps_of = |name: &str| -> Vec<&'a str> {
        effective
            .expr_of(name)
            .map(|e| {
                e.references()
                    .into_iter()
                    .filter(|r| computed.contains(r))
                    .collect()
            })
            .unwrap_or_default()
    };

    // postorder DFS in declaration order gives a deterministic topological
    // ordering; an active vertex reached again is a cycle
    #[derive(Copy, Clone, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut marks: HashMap<&str, Mark> = computed.iter().map(|&n| (n, Mark::New)).collect();
    let mut order: Vec<&'a str> = Vec::with_capacity(computed.len());

    fn visit<'a>(
        name: &'a str,
        deps_of: &dyn Fn(&str) -> Vec<&'a str>,
        marks: &mut HashMap<&'a str, Mark>,
        order: &mut Vec<&'a str>,
        chain: &mut Vec<&'a str>,
    ) -> Result<(), Vec<String>> {
        marks.insert(name, Mark::Active);
        chain.push(name);
        for dep in deps_of(name) {
            match marks.get(dep).copied() {
                Some(Mark::New) => visit(dep, deps_of, marks, order, chain)?,
                Some(Mark::Active) => {
                    let start = chain.iter().position(|&c| c == dep).unwrap();
                    let mut path: Vec<String> =
                        chain[start..].iter().map(|s| s.to_string()).collect();
                    path.push(dep.to_string());
                    return Err(path);
                }
                _ => {}
            }
        }
        chain.pop();
        marks.insert(name, Mark::Done);
        order.push(name);
        Ok(())
    }

    for &name in &computed {
        if marks[name] == Mark::New {
            let mut chain = Vec::new();
            visit(name, &deps_of, &mut marks, &mut order, &mut chain).map_err(|path| {
                ScenarioError::InstantaneousCycle {
                    at: t,
                    path: path.join("\u{2192}"),
                }
            })?;
        }
    }

    Ok(EffectiveEquations {
        eval_order: order,
        ..effective
    })
}

/// Check a scenario against a model before running: targets and outputs
/// must exist, replacements must reference declared variables, and the
/// effective equation set must stay acyclic at every switch time.
pub fn validate_scenario(model: &ModelDefinition, scenario: &Scenario) -> Result<(), ScenarioError> {
    for out in &scenario.outputs {
        if model.get(out).is_none() {
            return Err(ScenarioError::UnknownOutput(out.clone()));
        }
    }
    for ov in &scenario.overrides {
        match model.kind_of(&ov.target) {
            None => return Err(ScenarioError::UnknownTarget(ov.target.clone())),
            Some(VariableKind::Parameter) | Some(VariableKind::Auxiliary) => {}
            Some(kind) => {
                return Err(ScenarioError::BadTargetKind {
                    target: ov.target.clone(),
                    kind,
                })
            }
        }
        for r in ov.replacement.references() {
            if model.get(r).is_none() {
                return Err(ScenarioError::UnknownReference {
                    target: ov.target.clone(),
                    referenced: r.to_string(),
                });
            }
        }
        for other in &scenario.overrides {
            if !std::ptr::eq(ov, other)
                && other.target == ov.target
                && other.active_from == ov.active_from
            {
                return Err(ScenarioError::ConflictingOverrides {
                    target: ov.target.clone(),
                    at: ov.active_from,
                });
            }
        }
    }
    // the equation set changes only at switch times; check each regime
    let mut boundaries: Vec<f64> = vec![scenario.config.start_time];
    for ov in &scenario.overrides {
        boundaries.push(ov.active_from);
    }
    for &t in &boundaries {
        apply_overrides(model, &scenario.overrides, t)?;
    }
    Ok(())
}

/// Causal edges gained and lost when the scenario's overrides are active at
/// time `t`, relative to the baseline equations. Purely parametric
/// scenarios produce an empty diff.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StructuralDiff {
    pub added: Vec<(String, String)>,
    pub removed: Vec<(String, String)>,
}

impl StructuralDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }
}

pub fn diff_structure(
    model: &ModelDefinition,
    scenario: &Scenario,
    t: f64,
) -> Result<StructuralDiff, ScenarioError> {
    let baseline = crate::loops::graph_from_model(model, &[], t)?;
    let effective = crate::loops::graph_from_model(model, &scenario.overrides, t)?;
    let base_edges: BTreeSet<_> = baseline.edge_pairs();
    let eff_edges: BTreeSet<_> = effective.edge_pairs();
    Ok(StructuralDiff {
        added: eff_edges.difference(&base_edges).cloned().collect(),
        removed: base_edges.difference(&eff_edges).cloned().collect(),
    })
}

// --- scenario JSON ----------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    horizon: HorizonFile,
    #[serde(default)]
    method: MethodFile,
    #[serde(default)]
    overrides: Vec<OverrideFile>,
    #[serde(default)]
    outputs: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HorizonFile {
    start: f64,
    end: f64,
    dt: f64,
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "lowercase")]
enum MethodFile {
    #[default]
    Euler,
    Rk4,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideFile {
    target: String,
    expr: String,
    from: f64,
}

/// Parse a scenario from its JSON form:
///
/// ```json
/// {"name": "...", "horizon": {"start": 0, "end": 20, "dt": 0.0833},
///  "method": "euler", "overrides": [{"target": "lambda", "expr": "200",
///  "from": 10}], "outputs": ["S_A"]}
/// ```
///
/// Override expressions use the model DSL grammar.
pub fn scenario_from_json(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|e| ScenarioError::Json(e.to_string()))?;
    let mut overrides = Vec::with_capacity(file.overrides.len());
    for ov in file.overrides {
        let replacement = crate::parse::parse_expr_str(&ov.expr).map_err(|diags| {
            ScenarioError::BadExpression {
                expr: ov.expr.clone(),
                detail: diags
                    .first()
                    .map(|d| d.message.clone())
                    .unwrap_or_else(|| "parse error".into()),
            }
        })?;
        overrides.push(Override {
            target: ov.target,
            replacement,
            active_from: ov.from,
        });
    }
    Ok(Scenario {
        name: file.name,
        config: SimConfig {
            start_time: file.horizon.start,
            end_time: file.horizon.end,
            dt: file.horizon.dt,
            method: match file.method {
                MethodFile::Euler => Method::Euler,
                MethodFile::Rk4 => Method::Rk4,
            },
            record_every: 1,
        },
        overrides,
        outputs: file.outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::evaluate_expr;
    use crate::parse::parse_model;

    fn lambda_model() -> ModelDefinition {
        parse_model(
            "model m\n\
             param lambda = 400\n\
             param upsilon = 10\n\
             aux x = 2\n\
             stock S = 550\n",
            "m.sd",
        )
        .value
        .unwrap()
    }

    fn threshold_override() -> Override {
        Override {
            target: "lambda".into(),
            replacement: Expr::num(200.0),
            active_from: 10.0,
        }
    }

    #[test]
    fn override_inactive_before_switch_active_at_switch() {
        let model = lambda_model();
        let overrides = [threshold_override()];

        let before = apply_overrides(&model, &overrides, 9.99).unwrap();
        assert!(before.expr_of("lambda").is_none());
        assert!(!before.is_overridden("lambda"));

        let at = apply_overrides(&model, &overrides, 10.0).unwrap();
        let expr = at.expr_of("lambda").unwrap();
        let env = std::collections::HashMap::new();
        assert_eq!(evaluate_expr(expr, &env, 10.0).unwrap(), 200.0);
    }

    #[test]
    fn no_overrides_is_identity() {
        let model = lambda_model();
        let eff = apply_overrides(&model, &[], 15.0).unwrap();
        assert!(!eff.is_overridden("lambda"));
        assert_eq!(eff.eval_order(), &["x"]);
    }

    #[test]
    fn loan_term_override_becomes_computed() {
        let model = lambda_model();
        let overrides = [Override {
            target: "upsilon".into(),
            replacement: Expr::mul(Expr::num(10.0), Expr::var("x")),
            active_from: 10.0,
        }];
        let eff = apply_overrides(&model, &overrides, 15.0).unwrap();
        // upsilon now evaluates after x
        assert_eq!(eff.eval_order(), &["x", "upsilon"]);
    }

    #[test]
    fn instantaneous_cycle_is_rejected() {
        let model = parse_model(
            "model m\n\
             param a = 1\n\
             aux b = a + 1\n",
            "m.sd",
        )
        .value
        .unwrap();
        // a := b + 1 while b := a + 1 has no valid ordering
        let overrides = [Override {
            target: "a".into(),
            replacement: Expr::add(Expr::var("b"), Expr::num(1.0)),
            active_from: 0.0,
        }];
        let err = apply_overrides(&model, &overrides, 5.0).unwrap_err();
        assert!(matches!(err, ScenarioError::InstantaneousCycle { .. }));
    }

    #[test]
    fn later_active_from_wins() {
        let model = lambda_model();
        let overrides = [
            threshold_override(),
            Override {
                target: "lambda".into(),
                replacement: Expr::num(100.0),
                active_from: 15.0,
            },
        ];
        let env = std::collections::HashMap::new();
        let at12 = apply_overrides(&model, &overrides, 12.0).unwrap();
        assert_eq!(
            evaluate_expr(at12.expr_of("lambda").unwrap(), &env, 12.0).unwrap(),
            200.0
        );
        let at16 = apply_overrides(&model, &overrides, 16.0).unwrap();
        assert_eq!(
            evaluate_expr(at16.expr_of("lambda").unwrap(), &env, 16.0).unwrap(),
            100.0
        );
    }

    #[test]
    fn equal_active_from_same_target_is_conflict() {
        let model = lambda_model();
        let overrides = [threshold_override(), threshold_override()];
        let err = apply_overrides(&model, &overrides, 12.0).unwrap_err();
        assert!(matches!(err, ScenarioError::ConflictingOverrides { .. }));
    }

    #[test]
    fn parametric_override_adds_no_edges() {
        let model = lambda_model();
        let scenario = Scenario {
            name: "threshold".into(),
            config: SimConfig::default_euler(0.0, 20.0),
            overrides: vec![threshold_override()],
            outputs: vec![],
        };
        let diff = diff_structure(&model, &scenario, 15.0).unwrap();
        assert!(diff.is_empty());
    }

    #[test]
    fn structural_override_reports_new_edge() {
        let model = lambda_model();
        let scenario = Scenario {
            name: "loanterm".into(),
            config: SimConfig::default_euler(0.0, 20.0),
            overrides: vec![Override {
                target: "upsilon".into(),
                replacement: Expr::mul(Expr::num(10.0), Expr::var("x")),
                active_from: 10.0,
            }],
            outputs: vec![],
        };
        let diff = diff_structure(&model, &scenario, 15.0).unwrap();
        assert_eq!(diff.added, vec![("x".to_string(), "upsilon".to_string())]);
        assert!(diff.removed.is_empty());
        // before the switch the diff is empty
        assert!(diff_structure(&model, &scenario, 5.0).unwrap().is_empty());
    }

    #[test]
    fn scenario_json_parses() {
        let text = r#"{
            "name": "threshold",
            "horizon": {"start": 0, "end": 20, "dt": 0.08333333333333333},
            "method": "euler",
            "overrides": [{"target": "lambda", "expr": "200", "from": 10}],
            "outputs": ["S"]
        }"#;
        let s = scenario_from_json(text).unwrap();
        assert_eq!(s.name, "threshold");
        assert_eq!(s.config.dt, 1.0 / 12.0);
        assert_eq!(s.overrides.len(), 1);
        assert_eq!(s.overrides[0].replacement, Expr::num(200.0));
        assert_eq!(s.outputs, vec!["S"]);
    }

    #[test]
    fn scenario_json_unknown_key_names_offender() {
        let text = r#"{"name": "x", "horizon": {"start": 0, "end": 1, "dt": 1}, "bogus": 3}"#;
        let err = scenario_from_json(text).unwrap_err();
        assert!(err.to_string().contains("bogus"), "got: {err}");
    }

    #[test]
    fn validate_scenario_catches_unknown_target_and_output() {
        let model = lambda_model();
        let mut s = Scenario::baseline("b", SimConfig::default_euler(0.0, 1.0), vec![]);
        s.outputs = vec!["nope".into()];
        assert!(matches!(
            validate_scenario(&model, &s).unwrap_err(),
            ScenarioError::UnknownOutput(_)
        ));

        let s2 = Scenario {
            name: "o".into(),
            config: SimConfig::default_euler(0.0, 1.0),
            overrides: vec![Override {
                target: "ghost".into(),
                replacement: Expr::num(1.0),
                active_from: 0.0,
            }],
            outputs: vec![],
        };
        assert!(matches!(
            validate_scenario(&model, &s2).unwrap_err(),
            ScenarioError::UnknownTarget(_)
        ));
    }

    #[test]
    fn stock_target_is_rejected() {
        let model = lambda_model();
        let s = Scenario {
            name: "bad".into(),
            config: SimConfig::default_euler(0.0, 1.0),
            overrides: vec![Override {
                target: "S".into(),
                replacement: Expr::num(1.0),
                active_from: 0.0,
            }],
            outputs: vec![],
        };
        assert!(matches!(
            validate_scenario(&model, &s).unwrap_err(),
            ScenarioError::BadTargetKind { .. }
        ));
    }
}
