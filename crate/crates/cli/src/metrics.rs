// Copyright 2026 The SD Toolkit Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Command-line grammars for sweep metrics and parameter ranges.
//!
//! Metric specs: `gap(<varA>,<varB>)@<t>` | `final(<var>)` | `max(<var>)`.
//! Parameter ranges: `<name>=<start>:<stop>:<step>` inclusive of both ends.

use sd_core::lending::Metric;

pub fn parse_metric(spec: &str) -> Result<Metric, String> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix("gap(") {
        let (args, tail) = rest
            .split_once(')')
            .ok_or_else(|| format!("metric `{spec}`: missing `)`"))?;
        let at = tail
            .strip_prefix('@')
            .ok_or_else(|| format!("metric `{spec}`: expected `@<time>` after `)`"))?
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("metric `{spec}`: bad time"))?;
        let (a, b) = args
            .split_once(',')
            .ok_or_else(|| format!("metric `{spec}`: gap takes two variables"))?;
        let (a, b) = (a.trim(), b.trim());
        if a.is_empty() || b.is_empty() {
            return Err(format!("metric `{spec}`: empty variable name"));
        }
        return Ok(Metric::Gap {
            var_a: a.to_string(),
            var_b: b.to_string(),
            at,
        });
    }
    for (prefix, make) in [
        ("final(", Metric::Final as fn(String) -> Metric),
        ("max(", Metric::Max as fn(String) -> Metric),
    ] {
        if let Some(rest) = spec.strip_prefix(prefix) {
            let var = rest
                .strip_suffix(')')
                .ok_or_else(|| format!("metric `{spec}`: missing `)`"))?
                .trim();
            if var.is_empty() {
                return Err(format!("metric `{spec}`: empty variable name"));
            }
            return Ok(make(var.to_string()));
        }
    }
    Err(format!(
        "metric `{spec}`: expected gap(<a>,<b>)@<t>, final(<var>), or max(<var>)"
    ))
}

#[derive(Debug)]
pub struct ParamRange {
    pub name: String,
    pub values: Vec<f64>,
}

pub fn parse_param_range(spec: &str) -> Result<ParamRange, String> {
    let (name, range) = spec
        .split_once('=')
        .ok_or_else(|| format!("param `{spec}`: expected <name>=<start>:<stop>:<step>"))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(format!("param `{spec}`: empty parameter name"));
    }
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("param `{spec}`: expected <start>:<stop>:<step>"));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("param `{spec}`: values must be numbers"))?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if start > stop {
        return Err(format!("param `{spec}`: start exceeds stop"));
    }
    if step.is_nan() || step <= 0.0 {
        return Err(format!("param `{spec}`: step must be positive"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    let values = (0..=count).map(|i| start + (i as f64) * step).collect();
    Ok(ParamRange {
        name: name.to_string(),
        values,
    })
}
