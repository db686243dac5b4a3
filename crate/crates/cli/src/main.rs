// Copyright 2026 The SD Toolkit Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! `sd`: run stock-and-flow models, analyze feedback loops, sweep
//! parameters, and export deterministic CSV/JSON/SVG.
//!
//! Exit codes: 0 success, 1 input error (parse/validation/IO), 2 numerical
//! failure during integration.

mod metrics;
mod output;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sd_core::lending::{
    build_lending_model, intervention_scenario, sweep, Intervention, LendingConfig,
};
use sd_core::loops::{enumerate_loops, graph_from_model, loops_to_json, LoopClass, LoopLimits};
use sd_core::model::{check_units, validate_model};
use sd_core::parse::{parse_cld, parse_model, serialize_model, Severity};
use sd_core::scenario::{scenario_from_json, Scenario};
use sd_core::sim::SimError;
use sd_core::ModelDefinition;

#[derive(Parser)]
#[command(
    name = "sd",
    version,
    about = "Stock-and-flow system dynamics: simulate, analyze loops, sweep parameters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run a model under a scenario and export the trajectory table.
    Run {
        /// Model file (.sd)
        #[arg(long)]
        model: PathBuf,
        /// Scenario JSON path, or a built-in name: baseline | threshold | loanterm
        #[arg(long)]
        scenario: String,
        /// Output table path
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        /// Also write an SVG line plot of the recorded columns
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Enumerate and classify feedback loops of a model or CLD file.
    Loops {
        /// Model file (.sd); analyzes the dependency structure
        #[arg(long, conflicts_with = "cld")]
        model: Option<PathBuf>,
        /// Causal loop diagram edge list (.cld)
        #[arg(long)]
        cld: Option<PathBuf>,
        /// Scenario whose overrides shape the effective equations
        #[arg(long, requires = "model")]
        scenario: Option<String>,
        /// Time at which to take the effective equation set (default 0)
        #[arg(long)]
        at: Option<f64>,
        /// Emit the loop report as JSON
        #[arg(long)]
        json: bool,
        /// Also write the causal graph in DOT format
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Rerun a scenario across a parameter range and tabulate a metric.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        /// Range spec: <name>=<start>:<stop>:<step> (both ends inclusive)
        #[arg(long)]
        param: String,
        #[arg(long)]
        scenario: String,
        /// Metric spec: gap(<a>,<b>)@<t> | final(<var>) | max(<var>)
        #[arg(long)]
        metric: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a model and report unit consistency.
    Check {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the bundled two-group lending model.
    Lending {
        /// none | threshold | loanterm
        #[arg(long, default_value = "none")]
        intervention: String,
        /// Payoff probability of group A (default 0.8)
        #[arg(long = "pi-a")]
        pi_a: Option<f64>,
        /// Payoff probability of group B (default 0.6)
        #[arg(long = "pi-b")]
        pi_b: Option<f64>,
        /// CSV output path
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the bundled model as a .sd file
        #[arg(long)]
        emit_model: Option<PathBuf>,
    },
}

enum CliError {
    Input(String),
    Numerical(String),
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> CliError {
        match err {
            SimError::Numerical { .. } => CliError::Numerical(err.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> CliError {
        CliError::Input(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help/--version print and succeed; usage mistakes are input
            // errors under this tool's exit-code contract
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            model,
            scenario,
            out,
            format,
            plot,
        } => cmd_run(&model, &scenario, &out, format, plot.as_deref()),
        Command::Loops {
            model,
            cld,
            scenario,
            at,
            json,
            dot,
        } => cmd_loops(model.as_deref(), cld.as_deref(), scenario.as_deref(), at, json, dot.as_deref()),
        Command::Sweep {
            model,
            param,
            scenario,
            metric,
            out,
        } => cmd_sweep(&model, &param, &scenario, &metric, &out),
        Command::Check { model } => cmd_check(&model),
        Command::Lending {
            intervention,
            pi_a,
            pi_b,
            out,
            emit_model,
        } => cmd_lending(&intervention, pi_a, pi_b, out.as_deref(), emit_model.as_deref()),
    }
}

fn load_model(path: &Path) -> Result<ModelDefinition, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let parsed = parse_model(&text, &path.display().to_string());
    for d in &parsed.diagnostics {
        if d.severity == Severity::Warning {
            eprintln!("{d}");
        }
    }
    parsed.value.ok_or_else(|| {
        let errors: Vec<String> = parsed
            .diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
            .map(|d| d.to_string())
            .collect();
        CliError::Input(errors.join("\n"))
    })
}

fn load_scenario(spec: &str) -> Result<Scenario, CliError> {
    let path = Path::new(spec);
    if path.exists() {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        return scenario_from_json(&text).map_err(|e| CliError::Input(e.to_string()));
    }
    let builtin = match spec {
        "baseline" | "none" => Some(Intervention::None),
        "threshold" => Some(Intervention::Threshold),
        "loanterm" | "loan_term" | "loan-term" => Some(Intervention::LoanTerm),
        _ => None,
    };
    match builtin {
        Some(kind) => Ok(intervention_scenario(&LendingConfig::default(), kind, 20.0, 10.0)),
        None => Err(CliError::Input(format!(
            "scenario `{spec}`: no such file, and not a built-in (baseline | threshold | loanterm)"
        ))),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Write a report to stdout. A broken pipe (e.g. piping into `head`) is not
/// an error.
fn print_report(text: &str) -> Result<(), CliError> {
    use std::io::Write;
    match std::io::stdout().write_all(text.as_bytes()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(CliError::Input(e.to_string())),
    }
}

fn cmd_run(
    model_path: &Path,
    scenario_spec: &str,
    out: &Path,
    format: Format,
    plot: Option<&Path>,
) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let scenario = load_scenario(scenario_spec)?;
    let result = sd_core::run(&model, &scenario)?;
    if result.clamp_events > 0 {
        eprintln!(
            "warning: {} nonneg stock update(s) clamped at zero",
            result.clamp_events
        );
    }
    let text = match format {
        Format::Csv => output::table_to_csv(&result.table),
        Format::Json => output::table_to_json(&result.table),
    };
    write_file(out, &text)?;
    if let Some(plot_path) = plot {
        let title = format!("{} / {}", model.name, scenario.name);
        write_file(plot_path, &svg::plot_table(&result.table, &title))?;
    }
    Ok(())
}

fn cmd_loops(
    model: Option<&Path>,
    cld: Option<&Path>,
    scenario_spec: Option<&str>,
    at: Option<f64>,
    json: bool,
    dot: Option<&Path>,
) -> Result<(), CliError> {
    let graph = match (model, cld) {
        (Some(model_path), None) => {
            let model = load_model(model_path)?;
            let overrides = match scenario_spec {
                Some(spec) => load_scenario(spec)?.overrides,
                None => Vec::new(),
            };
            let t = at.unwrap_or(0.0);
            graph_from_model(&model, &overrides, t)
                .map_err(|e| CliError::Input(e.to_string()))?
        }
        (None, Some(cld_path)) => {
            let text = fs::read_to_string(cld_path)
                .map_err(|e| CliError::Input(format!("{}: {e}", cld_path.display())))?;
            let parsed = parse_cld(&text, &cld_path.display().to_string());
            for d in &parsed.diagnostics {
                if d.severity == Severity::Warning {
                    eprintln!("{d}");
                }
            }
            parsed.value.ok_or_else(|| {
                let errors: Vec<String> = parsed
                    .diagnostics
                    .iter()
                    .filter(|d| d.severity == Severity::Error)
                    .map(|d| d.to_string())
                    .collect();
                CliError::Input(errors.join("\n"))
            })?
        }
        _ => {
            return Err(CliError::Input(
                "provide exactly one of --model or --cld".into(),
            ))
        }
    };

    if let Some(dot_path) = dot {
        write_file(dot_path, &graph.to_dot())?;
    }

    let loops = enumerate_loops(&graph, LoopLimits::default())
        .map_err(|e| CliError::Input(e.to_string()))?;

    if json {
        let report = loops_to_json(&loops);
        let mut text = serde_json::to_string_pretty(&report).expect("loop report serializes");
        text.push('\n');
        return print_report(&text);
    }

    if loops.is_empty() {
        return print_report("no feedback loops\n");
    }
    let reinforcing = loops
        .iter()
        .filter(|l| l.classification == LoopClass::Reinforcing)
        .count();
    let balancing = loops.len() - reinforcing;
    let mut report = format!(
        "{} loop(s): {} reinforcing, {} balancing\n",
        loops.len(),
        reinforcing,
        balancing
    );
    for l in &loops {
        report.push_str(&format!("{l}\n"));
    }
    print_report(&report)
}

fn cmd_sweep(
    model_path: &Path,
    param_spec: &str,
    scenario_spec: &str,
    metric_spec: &str,
    out: &Path,
) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let range = metrics::parse_param_range(param_spec).map_err(CliError::Input)?;
    let metric = metrics::parse_metric(metric_spec).map_err(CliError::Input)?;
    let scenario = load_scenario(scenario_spec)?;
    let rows = sweep(&model, &range.name, &range.values, &scenario, &metric)
        .map_err(|e| CliError::Input(e.to_string()))?;
    for row in &rows {
        if let Some(err) = &row.error {
            eprintln!("warning: {} = {} failed: {err}", range.name, row.value);
        }
    }
    write_file(out, &output::sweep_to_csv(&rows))
}

fn cmd_check(model_path: &Path) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let mut report = String::new();
    let validation = validate_model(&model);
    if validation.is_empty() {
        report.push_str("validation: ok\n");
    } else {
        report.push_str(&format!(
            "validation: {} error(s)\n",
            validation.violations.len()
        ));
        for v in &validation.violations {
            report.push_str(&format!("error: {v}\n"));
        }
    }
    let units = check_units(&model);
    if units.mismatches.is_empty() {
        report.push_str("units: ok\n");
    } else {
        report.push_str(&format!("units: {} warning(s)\n", units.mismatches.len()));
        for issue in &units.mismatches {
            report.push_str(&format!("warning: {issue}\n"));
        }
    }
    if !units.unchecked.is_empty() {
        report.push_str(&format!(
            "unchecked (no declared units): {}\n",
            units.unchecked.join(", ")
        ));
    }
    print_report(&report)?;
    if validation.is_empty() {
        Ok(())
    } else {
        Err(CliError::Input("model failed validation".into()))
    }
}

fn cmd_lending(
    intervention: &str,
    pi_a: Option<f64>,
    pi_b: Option<f64>,
    out: Option<&Path>,
    emit_model: Option<&Path>,
) -> Result<(), CliError> {
    let kind = match intervention {
        "none" => Intervention::None,
        "threshold" => Intervention::Threshold,
        "loanterm" | "loan_term" | "loan-term" => Intervention::LoanTerm,
        other => {
            return Err(CliError::Input(format!(
                "unknown intervention `{other}` (none | threshold | loanterm)"
            )))
        }
    };
    let mut config = LendingConfig::default();
    if let Some(p) = pi_a {
        config.group_a.payoff_probability = p;
    }
    if let Some(p) = pi_b {
        config.group_b.payoff_probability = p;
    }
    let model = build_lending_model(&config);
    if let Some(path) = emit_model {
        write_file(path, &serialize_model(&model))?;
    }
    if let Some(out_path) = out {
        let scenario = intervention_scenario(&config, kind, 20.0, 10.0);
        let result = sd_core::run(&model, &scenario)?;
        if result.clamp_events > 0 {
            eprintln!(
                "warning: {} nonneg stock update(s) clamped at zero",
                result.clamp_events
            );
        }
        write_file(out_path, &output::table_to_csv(&result.table))?;
    } else if emit_model.is_none() {
        return Err(CliError::Input(
            "nothing to do: pass --out <f.csv> and/or --emit-model <f.sd>".into(),
        ));
    }
    Ok(())
}
