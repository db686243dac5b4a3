// Copyright 2026 The SD Toolkit Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Minimal SVG line plot: axes, one polyline per column, a legend. No
//! timestamps or environment data; output depends only on the table.

use sd_core::sim::TimeSeriesTable;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 540.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn nice_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if hi <= lo || hi.is_nan() || lo.is_nan() {
        return vec![lo];
    }
    (0..=count)
        .map(|i| lo + (hi - lo) * (i as f64) / (count as f64))
        .collect()
}

pub fn plot_table(table: &TimeSeriesTable, title: &str) -> String {
    let (tlo, thi) = (
        table.times.first().copied().unwrap_or(0.0),
        table.times.last().copied().unwrap_or(1.0),
    );
    let mut vlo = f64::INFINITY;
    let mut vhi = f64::NEG_INFINITY;
    for col in &table.columns {
        for &v in &col.values {
            vlo = vlo.min(v);
            vhi = vhi.max(v);
        }
    }
    if !vlo.is_finite() || !vhi.is_finite() {
        vlo = 0.0;
        vhi = 1.0;
    }
    if vlo == vhi {
        vlo -= 0.5;
        vhi += 0.5;
    }
    let pad = (vhi - vlo) * 0.05;
    let (vlo, vhi) = (vlo - pad, vhi + pad);

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x = |t: f64| MARGIN_L + (t - tlo) / (thi - tlo).max(f64::MIN_POSITIVE) * plot_w;
    let y = |v: f64| MARGIN_T + (vhi - v) / (vhi - vlo) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        title
    ));

    // axes
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_L}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    ));
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B
    ));
    for t in nice_ticks(tlo, thi, 5) {
        let px = x(t);
        svg.push_str(&format!(
            "  <line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{px:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{t:.1}</text>\n",
            HEIGHT - MARGIN_B + 18.0
        ));
    }
    for v in nice_ticks(vlo, vhi, 5) {
        let py = y(v);
        svg.push_str(&format!(
            "  <line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{MARGIN_L}\" y2=\"{py:.2}\" stroke=\"black\"/>\n",
            MARGIN_L - 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{v:.3}</text>\n",
            MARGIN_L - 8.0,
            py + 4.0
        ));
    }

    // one polyline per column
    for (i, col) in table.columns.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = table
            .times
            .iter()
            .zip(&col.values)
            .map(|(&t, &v)| format!("{:.2},{:.2}", x(t), y(v)))
            .collect();
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        ));
    }

    // legend
    for (i, col) in table.columns.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let ly = MARGIN_T + 14.0 * (i as f64) + 8.0;
        let lx = WIDTH - MARGIN_R - 150.0;
        svg.push_str(&format!(
            "  <line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            lx + 20.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            lx + 26.0,
            ly + 4.0,
            col.name
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use sd_core::sim::Column;

    #[test]
    fn plot_has_polyline_per_column() {
        let table = TimeSeriesTable {
            times: vec![0.0, 1.0, 2.0],
            columns: vec![
                Column {
                    name: "a".into(),
                    values: vec![1.0, 2.0, 3.0],
                },
                Column {
                    name: "b".into(),
                    values: vec![3.0, 2.0, 1.0],
                },
            ],
        };
        let svg = plot_table(&table, "demo");
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("demo"));
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg, plot_table(&table, "demo"));
    }
}
