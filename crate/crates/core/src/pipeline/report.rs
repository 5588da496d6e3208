//! Result emission: report JSON, a flat CSV row per configuration, and
//! static SVG charts for offline inspection.

use std::fmt::Write as _;

use crate::detector::DetectionReport;
use crate::Result;

/// Deterministic pretty JSON for a report (object keys are sorted).
pub fn report_to_json(report: &DetectionReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub const REPORT_CSV_HEADER: &str = "feature,mode,criterion,side,q,epsilon,directions,sigma,nu,c,seed,auc,ci_low,ci_high,n_eval,attack_success_rate";

/// One flat CSV row per report, for assembling AUC-versus-epsilon tables.
pub fn report_csv_row(report: &DetectionReport) -> String {
    let c = &report.config;
    let s = |key: &str| {
        c.get(key)
            .map(|v| match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .unwrap_or_default()
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        s("feature"),
        s("mode"),
        s("criterion"),
        s("side"),
        s("q"),
        s("epsilon"),
        s("directions"),
        s("sigma"),
        s("nu"),
        s("c"),
        s("seed"),
        report.auc,
        report.ci_low,
        report.ci_high,
        report.scores.len(),
        s("attack_success_rate"),
    )
}

const CHART_W: f64 = 640.0;
const CHART_H: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn axis_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = CHART_W,
        h = CHART_H
    );
    let _ = write!(
        s,
        r#"<rect width="{w}" height="{h}" fill="white"/><text x="{x}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{t}</text>"#,
        w = CHART_W,
        h = CHART_H,
        x = CHART_W / 2.0,
        t = title
    );
    s
}

fn svg_axes(s: &mut String, xlabel: &str, ylabel: &str) {
    let x0 = MARGIN;
    let y0 = CHART_H - MARGIN;
    let x1 = CHART_W - MARGIN / 2.0;
    let y1 = MARGIN / 2.0 + 16.0;
    let _ = write!(
        s,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#,
    );
    let _ = write!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        (x0 + x1) / 2.0,
        CHART_H - 12.0,
        xlabel
    );
    let _ = write!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        ylabel
    );
}

/// Line chart over named series of (x, y) points.
pub fn svg_line_chart(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let (x_lo, x_hi) = axis_bounds(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)));
    let (y_lo, y_hi) = axis_bounds(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (CHART_W - 1.5 * MARGIN);
    let sy = |y: f64| {
        (CHART_H - MARGIN) - (y - y_lo) / (y_hi - y_lo) * (CHART_H - 1.5 * MARGIN - 16.0)
    };
    let mut s = svg_open(title);
    svg_axes(&mut s, xlabel, ylabel);
    // Min/max tick labels.
    for (v, px) in [(x_lo, sx(x_lo)), (x_hi, sx(x_hi))] {
        let _ = write!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{:.3}</text>"#,
            px,
            CHART_H - MARGIN + 16.0,
            v
        );
    }
    for (v, py) in [(y_lo, sy(y_lo)), (y_hi, sy(y_hi))] {
        let _ = write!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="10">{:.3}</text>"#,
            MARGIN - 6.0,
            py + 4.0,
            v
        );
    }
    for (si, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut sorted = points.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = sorted
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = write!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            color,
            path.join(" ")
        );
        for &(x, y) in &sorted {
            let _ = write!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                sx(x),
                sy(y),
                color
            );
        }
        let ly = MARGIN / 2.0 + 16.0 + 14.0 * si as f64;
        let _ = write!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            CHART_W - MARGIN * 2.6,
            ly - 9.0,
            color,
            CHART_W - MARGIN * 2.6 + 14.0,
            ly,
            name
        );
    }
    s.push_str("</svg>");
    s
}

/// Overlaid histogram of named value groups (for score or point-count
/// distributions).
pub fn svg_histogram(title: &str, xlabel: &str, groups: &[(String, Vec<f64>)], bins: usize) -> String {
    let bins = bins.max(1);
    let (lo, hi) = axis_bounds(groups.iter().flat_map(|(_, v)| v.iter().copied()));
    let width = (hi - lo) / bins as f64;
    let counts: Vec<Vec<usize>> = groups
        .iter()
        .map(|(_, vals)| {
            let mut c = vec![0usize; bins];
            for &v in vals {
                let b = (((v - lo) / width) as usize).min(bins - 1);
                c[b] += 1;
            }
            c
        })
        .collect();
    let max_count = counts
        .iter()
        .flat_map(|c| c.iter())
        .copied()
        .max()
        .unwrap_or(1)
        .max(1) as f64;

    let sx = |x: f64| MARGIN + (x - lo) / (hi - lo) * (CHART_W - 1.5 * MARGIN);
    let sy = |c: f64| (CHART_H - MARGIN) - c / max_count * (CHART_H - 1.5 * MARGIN - 16.0);
    let mut s = svg_open(title);
    svg_axes(&mut s, xlabel, "count");
    for (v, px) in [(lo, sx(lo)), (hi, sx(hi))] {
        let _ = write!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{:.3}</text>"#,
            px,
            CHART_H - MARGIN + 16.0,
            v
        );
    }
    for (gi, ((name, _), c)) in groups.iter().zip(&counts).enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        for (b, &count) in c.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let x = sx(lo + b as f64 * width);
            let x2 = sx(lo + (b + 1) as f64 * width);
            let y = sy(count as f64);
            let _ = write!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="0.45"/>"#,
                x,
                y,
                (x2 - x).max(1.0),
                (CHART_H - MARGIN) - y,
                color
            );
        }
        let ly = MARGIN / 2.0 + 16.0 + 14.0 * gi as f64;
        let _ = write!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}" fill-opacity="0.45"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            CHART_W - MARGIN * 2.6,
            ly - 9.0,
            color,
            CHART_W - MARGIN * 2.6 + 14.0,
            ly,
            name
        );
    }
    s.push_str("</svg>");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample_report() -> DetectionReport {
        DetectionReport {
            auc: 0.9,
            ci_low: 0.85,
            ci_high: 0.95,
            scores: vec![1.0, 0.5, -0.2],
            labels: vec![true, true, false],
            config: json!({
                "feature": "pd",
                "mode": "unsupervised",
                "criterion": "magnitude_increase",
                "side": "smallest",
                "q": 0.1,
                "epsilon": 0.1,
                "directions": 50,
                "sigma": 0.7,
                "nu": 0.1,
                "c": 10.0,
                "seed": 3,
                "attack_success_rate": 0.8,
            }),
        }
    }

    #[test]
    fn json_is_deterministic() {
        let r = sample_report();
        assert_eq!(
            report_to_json(&r).unwrap(),
            report_to_json(&r).unwrap()
        );
    }

    #[test]
    fn csv_row_matches_header_arity() {
        let row = report_csv_row(&sample_report());
        assert_eq!(
            row.split(',').count(),
            REPORT_CSV_HEADER.split(',').count()
        );
        assert!(row.starts_with("pd,unsupervised,magnitude_increase,smallest,0.1,0.1,50,"));
        assert!(row.contains(",0.9,0.85,0.95,3,"));
    }

    #[test]
    fn svg_charts_are_wellformed_enough() {
        let line = svg_line_chart(
            "auc vs epsilon",
            "epsilon",
            "auc",
            &[
                ("pd".into(), vec![(0.05, 0.8), (0.1, 0.9)]),
                ("rg".into(), vec![(0.05, 0.7), (0.1, 0.75)]),
            ],
        );
        assert!(line.starts_with("<svg"));
        assert!(line.ends_with("</svg>"));
        assert_eq!(line.matches("<polyline").count(), 2);

        let hist = svg_histogram(
            "scores",
            "decision value",
            &[
                ("clean".into(), vec![0.9, 0.8, 0.85]),
                ("adv".into(), vec![0.1, 0.2]),
            ],
            8,
        );
        assert!(hist.contains("<rect"));
        assert!(hist.ends_with("</svg>"));
    }

    #[test]
    fn histogram_handles_constant_values() {
        let hist = svg_histogram("flat", "x", &[("a".into(), vec![1.0, 1.0, 1.0])], 4);
        assert!(hist.ends_with("</svg>"));
    }
}
