// Copyright 2026 The SD Toolkit Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! The bundled two-group lending model: borrowers and average credit score
//! per group, loan granting driven by a logistic of score over threshold,
//! and two scheduled interventions (halving the granting threshold;
//! tying loan term to credit score, which closes a new balancing loop).
//!
//! Flow forms use `p = O*pi/upsilon`, `f = O*(1-pi)/upsilon`, so repayment
//! and default rates carry people/year and sum to `O/upsilon`. The variant
//! with `p = O*x` and `f = O*(1-x)` remains constructible behind
//! `term_effect_flows` for inspection; its default rate goes negative
//! whenever `x > 1`.

use thiserror::Error;

use crate::expr::Expr;
use crate::model::ModelDefinition;
use crate::scenario::{Override, Scenario};
use crate::sim::{run, RunResult, SimConfig, SimError, TimeSeriesTable};

/// Per-group inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupParams {
    pub payoff_probability: f64,
    pub initial_score: f64,
    pub initial_borrowers: f64,
}

impl GroupParams {
    pub fn with_payoff(payoff_probability: f64) -> GroupParams {
        GroupParams {
            payoff_probability,
            initial_score: 550.0,
            initial_borrowers: 1000.0,
        }
    }
}

/// Shared constants of the lending system.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    /// Loan granting threshold, points (`lambda`).
    pub granting_threshold: f64,
    /// Application rate per year (`alpha`).
    pub application_rate: f64,
    /// Total population, people (`tau`).
    pub total_population: f64,
    /// Average loan term, years (`upsilon`).
    pub loan_term_years: f64,
    /// Maximum credit score, points (`sigma`).
    pub max_score: f64,
    /// Average score increase per year of repayment (`iota`).
    pub score_gain_rate: f64,
    /// Average score decrease per default (`delta`).
    pub default_penalty: f64,
    /// Coefficients of the effect of credit score on loan term length,
    /// `x = (1/(1+exp(-(intercept - slope*S))) - 1)*scale + offset`.
    pub term_effect_intercept: f64,
    pub term_effect_slope: f64,
    pub term_effect_scale: f64,
    pub term_effect_offset: f64,
    /// Coefficients of the fraction of loans granted,
    /// `g = 1/(1+exp(-(intercept + slope*S/lambda)))`.
    pub granting_intercept: f64,
    pub granting_slope: f64,
    /// Average monthly payment per borrower, dollars.
    pub monthly_payment: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            granting_threshold: 400.0,
            application_rate: 0.5,
            total_population: 10_000.0,
            loan_term_years: 10.0,
            max_score: 850.0,
            score_gain_rate: 0.04,
            default_penalty: 0.25,
            term_effect_intercept: 47.89,
            term_effect_slope: 0.083,
            term_effect_scale: 4.0,
            term_effect_offset: 5.0,
            granting_intercept: 3.57,
            granting_slope: 3.43,
            monthly_payment: 1000.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LendingConfig {
    pub group_a: GroupParams,
    pub group_b: GroupParams,
    pub calibration: Calibration,
    /// Use the alternative repayment/default forms `p = O*x`, `f = O*(1-x)`
    /// (driven by the score-term effect instead of payoff probability over
    /// loan term). Dimensionally defective; kept constructible for
    /// inspection.
    pub term_effect_flows: bool,
}

impl Default for LendingConfig {
    fn default() -> Self {
        LendingConfig {
            group_a: GroupParams::with_payoff(0.8),
            group_b: GroupParams::with_payoff(0.6),
            calibration: Calibration::default(),
            term_effect_flows: false,
        }
    }
}

/// Column names every lending run records.
pub const LENDING_OUTPUTS: [&str; 5] = ["S_A", "S_B", "O_A", "O_B", "cumulative_profit"];

fn num(v: f64) -> String {
    format!("{v}")
}

/// Build the two-group model. The result passes validation with an empty
/// report; its `.sd` serialization is the shippable model file.
pub fn build_lending_model(config: &LendingConfig) -> ModelDefinition {
    let cal = &config.calibration;
    let mut src = String::from("model lending\n");

    // shared parameters
    src.push_str(&format!(
        "param alpha = {} units dimensionless/year\n",
        num(cal.application_rate)
    ));
    src.push_str(&format!("param tau = {} units people\n", num(cal.total_population)));
    src.push_str(&format!(
        "param lambda = {} units points\n",
        num(cal.granting_threshold)
    ));
    src.push_str(&format!("param sigma = {} units points\n", num(cal.max_score)));
    src.push_str(&format!(
        "param iota = {} units people/year\n",
        num(cal.score_gain_rate)
    ));
    src.push_str(&format!(
        "param delta = {} units people/year\n",
        num(cal.default_penalty)
    ));
    src.push_str(&format!("param x_intercept = {}\n", num(cal.term_effect_intercept)));
    src.push_str(&format!("param x_slope = {}\n", num(cal.term_effect_slope)));
    src.push_str(&format!("param x_scale = {}\n", num(cal.term_effect_scale)));
    src.push_str(&format!("param x_offset = {}\n", num(cal.term_effect_offset)));
    src.push_str(&format!("param g_intercept = {}\n", num(cal.granting_intercept)));
    src.push_str(&format!("param g_slope = {}\n", num(cal.granting_slope)));
    src.push_str(&format!("param monthly_payment = {}\n", num(cal.monthly_payment)));
    // declared for completeness; nothing references it
    src.push_str("param interest_rate = 0 units dimensionless\n");

    for (suffix, group) in [("A", &config.group_a), ("B", &config.group_b)] {
        src.push_str(&format!(
            "param pi_{suffix} = {} units dimensionless\n",
            num(group.payoff_probability)
        ));
        src.push_str(&format!(
            "param upsilon_{suffix} = {} units year\n",
            num(cal.loan_term_years)
        ));
        src.push_str(&format!(
            "param initial_score_{suffix} = {}\n",
            num(group.initial_score)
        ));
        src.push_str(&format!(
            "param initial_borrowers_{suffix} = {}\n",
            num(group.initial_borrowers)
        ));
    }

    // canonical declaration order: all auxiliaries, then flows, then stocks
    for suffix in ["A", "B"] {
        src.push_str(&format!(
            "aux g_{suffix} = 1 / (1 + exp(-(g_intercept + g_slope * S_{suffix} / lambda))) units dimensionless\n"
        ));
        src.push_str(&format!(
            "aux x_{suffix} = (1 / (1 + exp(-(x_intercept - x_slope * S_{suffix}))) - 1) * x_scale + x_offset units dimensionless\n"
        ));
    }
    for suffix in ["A", "B"] {
        src.push_str(&format!(
            "flow r_{suffix} (cloud -> O_{suffix}) = alpha * tau * g_{suffix} units people/year\n"
        ));
        if config.term_effect_flows {
            src.push_str(&format!(
                "flow p_{suffix} (O_{suffix} -> cloud) = O_{suffix} * x_{suffix} units people/year\n"
            ));
            src.push_str(&format!(
                "flow f_{suffix} (O_{suffix} -> cloud) = O_{suffix} * (1 - x_{suffix}) units people/year\n"
            ));
        } else {
            src.push_str(&format!(
                "flow p_{suffix} (O_{suffix} -> cloud) = O_{suffix} * pi_{suffix} / upsilon_{suffix} units people/year\n"
            ));
            src.push_str(&format!(
                "flow f_{suffix} (O_{suffix} -> cloud) = O_{suffix} * (1 - pi_{suffix}) / upsilon_{suffix} units people/year\n"
            ));
        }
        src.push_str(&format!(
            "flow n_{suffix} (cloud -> S_{suffix}) = O_{suffix} * iota * (sigma - S_{suffix}) / tau units points/year\n"
        ));
        src.push_str(&format!(
            "flow d_{suffix} (S_{suffix} -> cloud) = S_{suffix} * f_{suffix} * delta / tau units points/year\n"
        ));
    }
    src.push_str(
        "flow profit_inflow (cloud -> cumulative_profit) = (O_A + O_B) * monthly_payment * 12 units dollars/year\n",
    );
    for suffix in ["A", "B"] {
        src.push_str(&format!(
            "stock S_{suffix} = initial_score_{suffix} units points/people nonneg\n"
        ));
        src.push_str(&format!(
            "stock O_{suffix} = initial_borrowers_{suffix} units people nonneg\n"
        ));
    }
    src.push_str("stock cumulative_profit = 0 units dollars\n");

    crate::parse::parse_model(&src, "<lending>")
        .into_result()
        .expect("bundled lending model parses")
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Intervention {
    None,
    Threshold,
    LoanTerm,
}

impl Intervention {
    pub fn name(self) -> &'static str {
        match self {
            Intervention::None => "none",
            Intervention::Threshold => "threshold",
            Intervention::LoanTerm => "loanterm",
        }
    }
}

/// The scenario for one intervention. The stock configuration is a 20-year
/// horizon with the change landing at year 10.
pub fn intervention_scenario(
    config: &LendingConfig,
    kind: Intervention,
    horizon: f64,
    switch: f64,
) -> Scenario {
    let outputs = LENDING_OUTPUTS.iter().map(|s| s.to_string()).collect();
    let sim = SimConfig::default_euler(0.0, horizon);
    let overrides = match kind {
        Intervention::None => vec![],
        // lowering the granting threshold by 50% at the switch time
        Intervention::Threshold => vec![Override {
            target: "lambda".into(),
            replacement: Expr::num(config.calibration.granting_threshold * 0.5),
            active_from: switch,
        }],
        // tying each group's loan term to its credit-score effect
        Intervention::LoanTerm => ["A", "B"]
            .iter()
            .map(|suffix| Override {
                target: format!("upsilon_{suffix}"),
                replacement: Expr::mul(
                    Expr::num(config.calibration.loan_term_years),
                    Expr::var(&format!("x_{suffix}")),
                ),
                active_from: switch,
            })
            .collect(),
    };
    Scenario {
        name: kind.name().to_string(),
        config: sim,
        overrides,
        outputs,
    }
}

#[derive(Clone, Debug)]
pub struct InterventionSuite {
    pub baseline: RunResult,
    pub threshold: RunResult,
    pub loan_term: RunResult,
}

/// Run baseline, threshold, and loan-term scenarios over the same horizon.
pub fn run_intervention_suite(
    config: &LendingConfig,
    horizon: f64,
    switch: f64,
) -> Result<InterventionSuite, SimError> {
    let model = build_lending_model(config);
    let runs = [Intervention::None, Intervention::Threshold, Intervention::LoanTerm]
        .map(|kind| run(&model, &intervention_scenario(config, kind, horizon, switch)));
    let [baseline, threshold, loan_term] = runs;
    Ok(InterventionSuite {
        baseline: baseline?,
        threshold: threshold?,
        loan_term: loan_term?,
    })
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum LendingError {
    #[error("column `{0}` is not in the table")]
    MissingColumn(String),
    #[error("time {at} is outside the recorded horizon {lo}..{hi}")]
    OutOfHorizon { at: f64, lo: f64, hi: f64 },
    #[error("reference mode horizon mismatch: {0}")]
    HorizonMismatch(String),
    #[error("`{0}` is not a parameter of the model")]
    UnknownParameter(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// `var_a - var_b` linearly interpolated at `at`.
pub fn gap_metric(
    table: &TimeSeriesTable,
    var_a: &str,
    var_b: &str,
    at: f64,
) -> Result<f64, LendingError> {
    for name in [var_a, var_b] {
        if table.column(name).is_none() {
            return Err(LendingError::MissingColumn(name.to_string()));
        }
    }
    let (lo, hi) = match (table.times.first(), table.times.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => {
            return Err(LendingError::OutOfHorizon {
                at,
                lo: f64::NAN,
                hi: f64::NAN,
            })
        }
    };
    let a = table
        .interpolate(var_a, at)
        .ok_or(LendingError::OutOfHorizon { at, lo, hi })?;
    let b = table
        .interpolate(var_b, at)
        .ok_or(LendingError::OutOfHorizon { at, lo, hi })?;
    Ok(a - b)
}

/// A problem statement over time: the desired trajectory, the feared or
/// current trajectory, and (implicitly) the gap between them.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceMode {
    pub variable: String,
    /// (time, value) breakpoints, strictly increasing in time.
    pub desired: Vec<(f64, f64)>,
    pub feared: Vec<(f64, f64)>,
}

impl ReferenceMode {
    /// Piecewise-linear evaluation of the desired trajectory.
    pub fn desired_at(&self, t: f64) -> Option<f64> {
        interp_points(&self.desired, t)
    }

    pub fn feared_at(&self, t: f64) -> Option<f64> {
        interp_points(&self.feared, t)
    }

    fn span(points: &[(f64, f64)]) -> Option<(f64, f64)> {
        match (points.first(), points.last()) {
            (Some(&(lo, _)), Some(&(hi, _))) => Some((lo, hi)),
            _ => None,
        }
    }
}

fn interp_points(points: &[(f64, f64)], t: f64) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    let (lo, hi) = (points[0].0, points[points.len() - 1].0);
    if t < lo || t > hi {
        return None;
    }
    let mut prev = points[0];
    for &p in points {
        if p.0 >= t {
            if p.0 == prev.0 {
                return Some(p.1);
            }
            let w = (t - prev.0) / (p.0 - prev.0);
            return Some(prev.1 + w * (p.1 - prev.1));
        }
        prev = p;
    }
    Some(points[points.len() - 1].1)
}

/// Pointwise `desired - actual` with its summary statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceComparison {
    /// (time, desired - actual) at every recorded time.
    pub gap: Vec<(f64, f64)>,
    /// Largest signed gap.
    pub max_gap: f64,
    pub gap_at_horizon: f64,
    /// Times where the gap changes sign, linearly interpolated.
    pub crossings: Vec<f64>,
}

pub fn compare_to_reference(
    table: &TimeSeriesTable,
    mode: &ReferenceMode,
) -> Result<ReferenceComparison, LendingError> {
    let actual = table
        .column(&mode.variable)
        .ok_or_else(|| LendingError::MissingColumn(mode.variable.clone()))?;
    let Some((dlo, dhi)) = ReferenceMode::span(&mode.desired) else {
        return Err(LendingError::HorizonMismatch("desired trajectory is empty".into()));
    };
    if let Some((flo, fhi)) = ReferenceMode::span(&mode.feared) {
        if (flo - dlo).abs() > 1e-9 || (fhi - dhi).abs() > 1e-9 {
            return Err(LendingError::HorizonMismatch(format!(
                "desired spans {dlo}..{dhi} but feared spans {flo}..{fhi}"
            )));
        }
    }
    let (tlo, thi) = (table.times[0], *table.times.last().unwrap());
    if dlo > tlo + 1e-9 || dhi < thi - 1e-9 {
        return Err(LendingError::HorizonMismatch(format!(
            "reference mode spans {dlo}..{dhi} but the table spans {tlo}..{thi}"
        )));
    }

    let mut gap = Vec::with_capacity(table.len());
    for (i, &t) in table.times.iter().enumerate() {
        let desired = mode.desired_at(t).expect("span checked above");
        gap.push((t, desired - actual[i]));
    }
    let max_gap = gap.iter().map(|&(_, g)| g).fold(f64::NEG_INFINITY, f64::max);
    let gap_at_horizon = gap.last().unwrap().1;
    let mut crossings = Vec::new();
    for w in gap.windows(2) {
        let (t0, g0) = w[0];
        let (t1, g1) = w[1];
        if g0 * g1 < 0.0 {
            crossings.push(t0 + (t1 - t0) * (g0 / (g0 - g1)));
        }
    }
    Ok(ReferenceComparison {
        gap,
        max_gap,
        gap_at_horizon,
        crossings,
    })
}

/// A named scalar extractor over a finished run.
#[derive(Clone, Debug, PartialEq)]
pub enum Metric {
    /// `gap(var_a, var_b) @ t`
    Gap { var_a: String, var_b: String, at: f64 },
    /// Last recorded value of a column.
    Final(String),
    /// Largest recorded value of a column.
    Max(String),
}

pub fn evaluate_metric(table: &TimeSeriesTable, metric: &Metric) -> Result<f64, LendingError> {
    match metric {
        Metric::Gap { var_a, var_b, at } => gap_metric(table, var_a, var_b, *at),
        Metric::Final(name) => {
            let col = table
                .column(name)
                .ok_or_else(|| LendingError::MissingColumn(name.clone()))?;
            col.last()
                .copied()
                .ok_or_else(|| LendingError::MissingColumn(name.clone()))
        }
        Metric::Max(name) => {
            let col = table
                .column(name)
                .ok_or_else(|| LendingError::MissingColumn(name.clone()))?;
            Ok(col.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        }
    }
}

/// One sweep row. `metric` is `None` when that run failed; the sweep keeps
/// going.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub metric: Option<f64>,
    pub error: Option<String>,
}

/// Rerun `scenario` once per parameter value, extracting `metric` from each
/// run. Rows come back in input order; a failed row is marked, not fatal.
pub fn sweep(
    model: &ModelDefinition,
    parameter: &str,
    values: &[f64],
    scenario: &Scenario,
    metric: &Metric,
) -> Result<Vec<SweepRow>, LendingError> {
    if !matches!(
        model.kind_of(parameter),
        Some(crate::model::VariableKind::Parameter)
    ) {
        return Err(LendingError::UnknownParameter(parameter.to_string()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let varied = model
            .with_parameter(parameter, value)
            .expect("parameter existence checked above");
        let outcome = run(&varied, scenario)
            .map_err(LendingError::from)
            .and_then(|r| evaluate_metric(&r.table, metric));
        match outcome {
            Ok(m) => rows.push(SweepRow {
                value,
                metric: Some(m),
                error: None,
            }),
            Err(err) => rows.push(SweepRow {
                value,
                metric: None,
                error: Some(err.to_string()),
            }),
        }
    }
    Ok(rows)
}
