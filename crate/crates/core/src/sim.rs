// Copyright 2026 The SD Toolkit Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Fixed-step numerical integration of a validated model.
//!
//! Stocks accumulate the net of their flows; every rate is a pure function
//! of `(stocks, t)` evaluated on beginning-of-step values, so all stocks
//! advance simultaneously and declaration order never changes a trajectory.
//! Runs are deterministic: identical inputs give bit-identical tables.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{evaluate_expr, EvalError};
use crate::model::{ModelDefinition, ValidationReport, VarDef};
use crate::scenario::{apply_overrides, validate_scenario, EffectiveEquations, Scenario, ScenarioError};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Method {
    Euler,
    Rk4,
}

/// Integration settings. The horizon must be an integral number of steps
/// (checked to 1e-9).
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub start_time: f64,
    pub end_time: f64,
    pub dt: f64,
    pub method: Method,
    /// Record every Nth step; the initial row and the end time are always
    /// recorded.
    pub record_every: usize,
}

impl SimConfig {
    /// Euler at the customary monthly step, recording every step.
    pub fn default_euler(start: f64, end: f64) -> SimConfig {
        SimConfig {
            start_time: start,
            end_time: end,
            dt: 1.0 / 12.0,
            method: Method::Euler,
            record_every: 1,
        }
    }

    /// Number of steps, after checking the config invariants.
    pub fn steps(&self) -> Result<usize, SimError> {
        if self.start_time.is_nan()
            || self.end_time.is_nan()
            || self.end_time <= self.start_time
        {
            return Err(SimError::InvalidConfig(format!(
                "end_time {} must exceed start_time {}",
                self.end_time, self.start_time
            )));
        }
        if self.dt.is_nan() || self.dt <= 0.0 || self.dt.is_infinite() {
            return Err(SimError::InvalidConfig(format!("dt {} must be positive", self.dt)));
        }
        if self.record_every == 0 {
            return Err(SimError::InvalidConfig("record_every must be >= 1".into()));
        }
        let ratio = (self.end_time - self.start_time) / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 {
            return Err(SimError::InvalidConfig(format!(
                "horizon {}..{} is not an integral number of dt = {} steps",
                self.start_time, self.end_time, self.dt
            )));
        }
        if steps > 1e8 {
            return Err(SimError::InvalidConfig(format!(
                "horizon/dt implies {steps} steps; the limit is 100000000"
            )));
        }
        Ok(steps as usize)
    }
}

/// A snapshot of a run at one instant: the stocks plus the derived
/// auxiliary/flow values consistent with them.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationState {
    pub t: f64,
    pub stocks: Vec<(String, f64)>,
    /// Auxiliaries and flows recomputed for (stocks, t); never stale.
    pub derived: Vec<(String, f64)>,
}

impl SimulationState {
    pub fn stock(&self, name: &str) -> Option<f64> {
        self.stocks.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.stock(name).or_else(|| {
            self.derived
                .iter()
                .find(|(n, _)| n == name)
                .map(|&(_, v)| v)
        })
    }
}

/// Sampled trajectories: a time axis plus equal-length value columns.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeSeriesTable {
    pub times: Vec<f64>,
    pub columns: Vec<Column>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

impl TimeSeriesTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear interpolation of a column at time `at`.
    pub fn interpolate(&self, name: &str, at: f64) -> Option<f64> {
        let values = self.column(name)?;
        let times = &self.times;
        if at.is_nan() || times.is_empty() || at < times[0] || at > *times.last().unwrap() {
            return None;
        }
        match times.binary_search_by(|probe| probe.partial_cmp(&at).unwrap()) {
            Ok(i) => Some(values[i]),
            Err(i) => {
                let (t0, t1) = (times[i - 1], times[i]);
                let (v0, v1) = (values[i - 1], values[i]);
                let w = (at - t0) / (t1 - t0);
                Some(v0 + w * (v1 - v0))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("model failed validation:\n{0}")]
    InvalidModel(ValidationReport),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("numerical failure in `{variable}` at t = {time}: {detail}")]
    Numerical {
        variable: String,
        time: f64,
        detail: String,
    },
}

/// A finished run: the sampled table plus bookkeeping about the run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub table: TimeSeriesTable,
    /// How many times a `nonneg` stock had to be clamped back to zero.
    pub clamp_events: u64,
}

struct Compiled<'a> {
    /// Effective equation sets keyed by the time they take effect,
    /// ascending; the first entry covers the start time.
    regimes: Vec<(f64, EffectiveEquations<'a>)>,
}

impl<'a> Compiled<'a> {
    fn build(
        model: &'a ModelDefinition,
        scenario: &'a Scenario,
    ) -> Result<Compiled<'a>, SimError> {
        let mut switch_times: Vec<f64> = vec![scenario.config.start_time];
        for ov in &scenario.overrides {
            if ov.active_from > scenario.config.start_time {
                switch_times.push(ov.active_from);
            }
        }
        switch_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        switch_times.dedup();
        let mut regimes = Vec::with_capacity(switch_times.len());
        for &at in &switch_times {
            regimes.push((at, apply_overrides(model, &scenario.overrides, at)?));
        }
        Ok(Compiled { regimes })
    }

    fn at(&self, t: f64) -> &EffectiveEquations<'a> {
        let mut current = &self.regimes[0].1;
        for (at, eff) in &self.regimes {
            if *at <= t {
                current = eff;
            } else {
                break;
            }
        }
        current
    }
}

struct Engine<'a> {
    model: &'a ModelDefinition,
    compiled: Compiled<'a>,
    stock_names: Vec<String>,
    nonneg: Vec<bool>,
    inflows: Vec<Vec<String>>,
    outflows: Vec<Vec<String>>,
    /// Parameters live here and stay put; stocks and derived values are
    /// rewritten per evaluation.
    env: HashMap<String, f64>,
}

impl<'a> Engine<'a> {
    fn new(model: &'a ModelDefinition, scenario: &'a Scenario) -> Result<Engine<'a>, SimError> {
        let report = crate::model::validate_model(model);
        if !report.is_empty() {
            return Err(SimError::InvalidModel(report));
        }
        validate_scenario(model, scenario)?;
        let compiled = Compiled::build(model, scenario)?;

        let mut env = HashMap::new();
        for p in model.parameters() {
            env.insert(p.name.clone(), p.value);
        }
        let stocks: Vec<_> = model.stocks().collect();
        Ok(Engine {
            model,
            compiled,
            stock_names: stocks.iter().map(|s| s.name.clone()).collect(),
            nonneg: stocks.iter().map(|s| s.non_negative).collect(),
            inflows: stocks.iter().map(|s| s.inflows.clone()).collect(),
            outflows: stocks.iter().map(|s| s.outflows.clone()).collect(),
            env,
        })
    }

    fn initial_stocks(&mut self) -> Result<Vec<f64>, SimError> {
        let mut values = Vec::with_capacity(self.stock_names.len());
        for s in self.model.stocks() {
            let v = evaluate_expr(&s.initial, &self.env, 0.0).map_err(|e| SimError::Numerical {
                variable: s.name.clone(),
                time: 0.0,
                detail: e.to_string(),
            })?;
            values.push(v);
        }
        Ok(values)
    }

    /// Evaluate every auxiliary/flow (and overridden parameter) for the
    /// given stocks at time `t`, leaving the values in `self.env`, and
    /// return each stock's net flow.
    fn derive(&mut self, t: f64, stocks: &[f64]) -> Result<Vec<f64>, SimError> {
        for (name, value) in self.stock_names.iter().zip(stocks) {
            self.env.insert(name.clone(), *value);
        }
        let effective = self.compiled.at(t);
        for &name in effective.eval_order() {
            let expr = effective.expr_of(name).expect("computed name has an expression");
            let value = evaluate_expr(expr, &self.env, t).map_err(|e| numerical(name, t, e))?;
            if !value.is_finite() {
                return Err(SimError::Numerical {
                    variable: name.to_string(),
                    time: t,
                    detail: format!("rate evaluated to {value}"),
                });
            }
            self.env.insert(name.to_string(), value);
        }
        let mut nets = Vec::with_capacity(self.stock_names.len());
        for i in 0..self.stock_names.len() {
            let inflow: f64 = self.inflows[i].iter().map(|f| self.env[f.as_str()]).sum();
            let outflow: f64 = self.outflows[i].iter().map(|f| self.env[f.as_str()]).sum();
            nets.push(inflow - outflow);
        }
        Ok(nets)
    }

    fn step_stocks(
        &mut self,
        t: f64,
        dt: f64,
        method: Method,
        stocks: &[f64],
    ) -> Result<(Vec<f64>, u64), SimError> {
        let mut next: Vec<f64> = match method {
            Method::Euler => {
                let nets = self.derive(t, stocks)?;
                stocks
                    .iter()
                    .zip(&nets)
                    .map(|(s, n)| s + dt * n)
                    .collect()
            }
            Method::Rk4 => {
                let k1 = self.derive(t, stocks)?;
                let mid1: Vec<f64> = stocks
                    .iter()
                    .zip(&k1)
                    .map(|(s, k)| s + dt / 2.0 * k)
                    .collect();
                let k2 = self.derive(t + dt / 2.0, &mid1)?;
                let mid2: Vec<f64> = stocks
                    .iter()
                    .zip(&k2)
                    .map(|(s, k)| s + dt / 2.0 * k)
                    .collect();
                let k3 = self.derive(t + dt / 2.0, &mid2)?;
                let endp: Vec<f64> = stocks.iter().zip(&k3).map(|(s, k)| s + dt * k).collect();
                let k4 = self.derive(t + dt, &endp)?;
                stocks
                    .iter()
                    .enumerate()
                    .map(|(i, s)| s + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect()
            }
        };
        let mut clamps = 0u64;
        for (i, v) in next.iter_mut().enumerate() {
            if self.nonneg[i] && *v < 0.0 {
                *v = 0.0;
                clamps += 1;
            }
            if !v.is_finite() {
                return Err(SimError::Numerical {
                    variable: self.stock_names[i].clone(),
                    time: t,
                    detail: format!("stock updated to {v}"),
                });
            }
        }
        Ok((next, clamps))
    }

    fn state_view(&mut self, t: f64, stocks: &[f64]) -> Result<SimulationState, SimError> {
        self.derive(t, stocks)?;
        let effective = self.compiled.at(t);
        let derived = self
            .model
            .variables()
            .filter(|v| {
                matches!(v, VarDef::Auxiliary(_) | VarDef::Flow(_))
                    || effective.is_overridden(v.name())
            })
            .map(|v| (v.name().to_string(), self.env[v.name()]))
            .collect();
        Ok(SimulationState {
            t,
            stocks: self
                .stock_names
                .iter()
                .zip(stocks)
                .map(|(n, v)| (n.clone(), *v))
                .collect(),
            derived,
        })
    }
}

fn numerical(variable: &str, time: f64, e: EvalError) -> SimError {
    SimError::Numerical {
        variable: variable.to_string(),
        time,
        detail: e.to_string(),
    }
}

/// The state at the start of a run: stock initials evaluated from
/// parameters, derived values consistent with them.
pub fn initial_state(model: &ModelDefinition) -> Result<SimulationState, SimError> {
    let scenario = Scenario::baseline("init", SimConfig::default_euler(0.0, 1.0), vec![]);
    let mut engine = Engine::new(model, &scenario)?;
    let stocks = engine.initial_stocks()?;
    engine.state_view(0.0, &stocks)
}

/// Advance one step under the model's baseline equations. All rates are
/// evaluated at the pre-step state; `nonneg` stocks are clamped after the
/// update.
pub fn step(
    model: &ModelDefinition,
    state: &SimulationState,
    dt: f64,
    method: Method,
) -> Result<SimulationState, SimError> {
    let scenario = Scenario::baseline("step", SimConfig::default_euler(0.0, 1.0), vec![]);
    let mut engine = Engine::new(model, &scenario)?;
    let stocks: Vec<f64> = engine
        .stock_names
        .iter()
        .map(|n| state.stock(n).unwrap_or(0.0))
        .collect();
    let (next, _) = engine.step_stocks(state.t, dt, method, &stocks)?;
    engine.state_view(state.t + dt, &next)
}

/// Every flow and auxiliary evaluated in dependency order for the given
/// state, under baseline equations.
pub fn rate_vector(
    model: &ModelDefinition,
    state: &SimulationState,
) -> Result<Vec<(String, f64)>, SimError> {
    let scenario = Scenario::baseline("rates", SimConfig::default_euler(0.0, 1.0), vec![]);
    let mut engine = Engine::new(model, &scenario)?;
    let stocks: Vec<f64> = engine
        .stock_names
        .iter()
        .map(|n| state.stock(n).unwrap_or(0.0))
        .collect();
    engine.derive(state.t, &stocks)?;
    let effective = engine.compiled.at(state.t);
    Ok(effective
        .eval_order()
        .iter()
        .map(|&name| (name.to_string(), engine.env[name]))
        .collect())
}

/// Run a scenario to completion. Records all stocks plus the scenario's
/// requested outputs every `record_every` steps and always at the end time.
pub fn run(model: &ModelDefinition, scenario: &Scenario) -> Result<RunResult, SimError> {
    let steps = scenario.config.steps()?;
    let mut engine = Engine::new(model, scenario)?;
    let config = &scenario.config;

    // all stocks first (declaration order), then requested outputs
    let mut column_names: Vec<String> = engine.stock_names.clone();
    for out in &scenario.outputs {
        if !column_names.iter().any(|c| c == out) {
            column_names.push(out.clone());
        }
    }

    let mut times: Vec<f64> = Vec::new();
    let mut columns: Vec<Column> = column_names
        .iter()
        .map(|n| Column {
            name: n.clone(),
            values: Vec::new(),
        })
        .collect();

    let mut stocks = engine.initial_stocks()?;
    let mut clamp_events = 0u64;

    for i in 0..=steps {
        let t = if i == steps {
            config.end_time
        } else {
            config.start_time + (i as f64) * config.dt
        };
        let record = i % config.record_every == 0 || i == steps;
        if record {
            // repopulate derived values for the row being written
            engine.derive(t, &stocks)?;
            times.push(t);
            for col in &mut columns {
                col.values.push(engine.env[col.name.as_str()]);
            }
        }
        if i == steps {
            break;
        }
        let (next, clamps) = engine.step_stocks(t, config.dt, config.method, &stocks)?;
        clamp_events += clamps;
        stocks = next;
    }

    Ok(RunResult {
        table: TimeSeriesTable { times, columns },
        clamp_events,
    })
}
