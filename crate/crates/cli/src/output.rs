// Copyright 2026 The SD Toolkit Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Table serialization. CSV is the primary format: `time` plus one column
//! per variable, full round-trip precision, `\n` line endings, `.` decimal
//! separator. JSON mirrors the same structure.

use sd_core::lending::SweepRow;
use sd_core::sim::TimeSeriesTable;

/// Shortest decimal form that parses back to the identical f64.
pub fn fmt_value(v: f64) -> String {
    format!("{v}")
}

pub fn table_to_csv(table: &TimeSeriesTable) -> String {
    let mut out = String::from("time");
    for col in &table.columns {
        out.push(',');
        out.push_str(&col.name);
    }
    out.push('\n');
    for (i, t) in table.times.iter().enumerate() {
        out.push_str(&fmt_value(*t));
        for col in &table.columns {
            out.push(',');
            out.push_str(&fmt_value(col.values[i]));
        }
        out.push('\n');
    }
    out
}

pub fn table_to_json(table: &TimeSeriesTable) -> String {
    let mut text = serde_json::to_string_pretty(table).expect("table serializes");
    text.push('\n');
    text
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("value,metric\n");
    for row in rows {
        out.push_str(&fmt_value(row.value));
        out.push(',');
        match row.metric {
            Some(m) => out.push_str(&fmt_value(m)),
            None => out.push_str("NaN"),
        }
        out.push('\n');
    }
    out
}
