use std::fmt::Write as _;
use std::path::Path;

use super::metrics::{precision_thresholds, success_thresholds, MetricReport};
use crate::error::{Error, Result};

pub const SUMMARY_HEADER: &str = "name,auc,ps20,fps";

/// One row per threshold per curve: `curve,threshold,value`.
pub fn report_csv(r: &MetricReport) -> String {
    let mut out = String::from("curve,threshold,value\n");
    for (t, v) in precision_thresholds().zip(&r.precision) {
        let _ = writeln!(out, "precision,{t},{v}");
    }
    for (t, v) in success_thresholds().zip(&r.success) {
        let _ = writeln!(out, "success,{t},{v}");
    }
    out
}

pub fn summary_csv(reports: &[MetricReport]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in reports {
        out.push_str(&r.summary_line());
        out.push('\n');
    }
    out
}

const PLOT_W: f64 = 320.0;
const PLOT_H: f64 = 240.0;
const MARGIN: f64 = 40.0;

fn polyline(xs: impl Iterator<Item = f64>, ys: &[f64], x_max: f64, x_off: f64) -> String {
    let pts: Vec<String> = xs
        .zip(ys)
        .map(|(x, y)| {
            format!(
                "{:.2},{:.2}",
                x_off + MARGIN + x / x_max * PLOT_W,
                MARGIN + (1.0 - y) * PLOT_H
            )
        })
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"{}\"/>",
        pts.join(" ")
    )
}

fn axes(x_off: f64, title: &str, x_label: &str) -> String {
    let (l, t) = (x_off + MARGIN, MARGIN);
    format!(
        "<rect x=\"{l}\" y=\"{t}\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" fill=\"none\" stroke=\"#333\"/>\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{x_label}</text>",
        l + PLOT_W / 2.0,
        t - 12.0,
        l + PLOT_W / 2.0,
        t + PLOT_H + 28.0
    )
}

/// Precision and success plots side by side.
pub fn render_svg(r: &MetricReport) -> String {
    let panel = PLOT_W + 2.0 * MARGIN;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">",
        2.0 * panel,
        PLOT_H + 2.0 * MARGIN
    );
    s.push_str(&axes(0.0, &format!("Precision [{:.3}]", r.precision_score_20), "location error threshold (px)"));
    s.push_str(&polyline(precision_thresholds(), &r.precision, 50.0, 0.0));
    s.push_str(&axes(panel, &format!("Success [{:.3}]", r.auc), "overlap threshold"));
    s.push_str(&polyline(success_thresholds(), &r.success, 1.0, panel));
    s.push_str("</svg>\n");
    s
}

pub fn write_report(dir: &Path, r: &MetricReport, svg: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{}.csv", r.name));
    std::fs::write(&csv, report_csv(r)).map_err(|e| Error::io(&csv, e))?;
    if svg {
        let p = dir.join(format!("{}.svg", r.name));
        std::fs::write(&p, render_svg(r)).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
