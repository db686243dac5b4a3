// Copyright 2026 The SD Toolkit Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Stock-and-flow system dynamics toolkit.
//!
//! - [`model`]: the abstract model (stocks, flows, auxiliaries, parameters),
//!   validation, and advisory unit checking
//! - [`parse`]: the `.sd` model DSL and `.cld` causal edge-list formats
//! - [`sim`]: fixed-step Euler/RK4 integration with deterministic output
//! - [`scenario`]: scheduled interventions as expression substitutions
//! - [`loops`]: feedback-loop enumeration and classification over causal
//!   graphs
//! - [`lending`]: the bundled two-group lending model and its intervention
//!   suite

pub mod expr;
pub mod lending;
pub mod loops;
pub mod model;
pub mod parse;
pub mod scenario;
pub mod sim;
pub mod units;

pub use expr::{evaluate_expr, Expr};
pub use model::{check_units, validate_model, ModelDefinition};
pub use parse::{parse_cld, parse_model, serialize_model};
pub use scenario::{apply_overrides, diff_structure, scenario_from_json, Override, Scenario};
pub use sim::{run, Method, RunResult, SimConfig, TimeSeriesTable};
