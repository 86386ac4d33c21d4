//! Text tables and SVG figures for the evaluation and context studies.
//!
//! Every table starts with `# config_hash=...`; the error tables also carry
//! the checksum of the prediction table they were computed from.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data_model::Maneuver;
use crate::error::{Error, Result};
use crate::pipeline::{ContextReport, EvaluationReport, PredictionTable};

pub const TABLE1: &str = "table1.tsv";
pub const FIG2_TABLE: &str = "fig2_errors.tsv";
pub const FIG3_TABLE: &str = "fig3_roc.tsv";
pub const FIG4_TABLE: &str = "fig4_density_errors.tsv";
pub const FIG5_TABLE: &str = "fig5_lc_stats.tsv";
pub const FIG2_SVG: &str = "fig2.svg";
pub const FIG3_SVG: &str = "fig3.svg";
pub const FIG4_SVG: &str = "fig4.svg";
pub const FIG5_SVG: &str = "fig5.svg";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// SHA-256 of the JSON encoding of `value`.
pub fn checksum<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value).map_err(|e| Error::Artifact(e.to_string()))?;
    Ok(sha256_hex(&bytes))
}

pub fn table_checksum(table: &PredictionTable) -> Result<String> {
    checksum(table)
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), num)
}

fn header(config_hash: &str, predictions: Option<&str>, columns: &[&str]) -> String {
    let mut s = format!("# config_hash={config_hash}\n");
    if let Some(p) = predictions {
        let _ = writeln!(s, "# predictions_sha256={p}");
    }
    s.push_str(&columns.join("\t"));
    s.push('\n');
    s
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn table1(report: &EvaluationReport, config_hash: &str) -> String {
    let mut s = header(
        config_hash,
        None,
        &[
            "class",
            "auc",
            "recall",
            "time_gain_mean_s",
            "time_gain_unstable_fraction",
            "time_gain_events",
        ],
    );
    for (k, c) in report.classes.iter().enumerate() {
        let tg = c.time_gain;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            c.maneuver,
            num(c.roc.auc),
            opt(report.bacc.recalls[k]),
            opt(tg.map(|t| t.mean)),
            opt(tg.map(|t| t.unstable_fraction)),
            tg.map_or_else(|| "NA".to_string(), |t| t.count.to_string()),
        );
    }
    let _ = writeln!(s, "BACC\tNA\t{}\tNA\tNA\tNA", num(report.bacc.value));
    s
}

pub fn fig2_table(report: &EvaluationReport, config_hash: &str, predictions: &str) -> String {
    let mut s = header(
        config_hash,
        Some(predictions),
        &[
            "method",
            "horizon_s",
            "count",
            "skipped",
            "whisker_low",
            "q1",
            "median",
            "q3",
            "whisker_high",
        ],
    );
    for m in &report.errors {
        for (h, (b, skipped)) in report
            .horizons
            .iter()
            .zip(m.summaries.iter().zip(&m.skipped))
        {
            let f = |g: fn(&crate::evaluation::BoxStats) -> f64| opt(b.as_ref().map(g));
            let _ = writeln!(
                s,
                "{}\t{:.1}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                m.method,
                h,
                b.map_or(0, |b| b.count),
                skipped,
                f(|b| b.whisker_low),
                f(|b| b.q1),
                f(|b| b.median),
                f(|b| b.q3),
                f(|b| b.whisker_high),
            );
        }
    }
    s
}

pub fn fig3_table(report: &EvaluationReport, config_hash: &str) -> String {
    let mut s = header(config_hash, None, &["class", "threshold", "fpr", "tpr"]);
    for c in &report.classes {
        for p in &c.roc.points {
            let t = if p.threshold.is_finite() {
                num(p.threshold)
            } else {
                "inf".into()
            };
            let _ = writeln!(s, "{}\t{}\t{}\t{}", c.maneuver, t, num(p.fpr), num(p.tpr));
        }
    }
    s
}

pub fn fig4_table(ctx: &ContextReport, config_hash: &str, predictions: &str) -> String {
    let mut s = header(
        config_hash,
        Some(predictions),
        &[
            "class",
            "density_low",
            "density_high",
            "count",
            "median_error_m",
            "low_confidence",
        ],
    );
    for b in &ctx.density_errors {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            b.maneuver,
            num(b.low),
            num(b.high),
            b.count,
            opt(b.median),
            b.low_confidence
        );
    }
    s
}

pub fn fig5_table(ctx: &ContextReport, config_hash: &str) -> String {
    let mut s = header(
        config_hash,
        None,
        &[
            "density_low",
            "density_high",
            "count",
            "duration_q1",
            "duration_median",
            "duration_q3",
            "max_vy_q1",
            "max_vy_median",
            "max_vy_q3",
        ],
    );
    for b in &ctx.lane_changes {
        let d = b.duration;
        let v = b.max_abs_vy;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            num(b.low),
            num(b.high),
            b.count,
            opt(d.map(|x| x.q1)),
            opt(d.map(|x| x.median)),
            opt(d.map(|x| x.q3)),
            opt(v.map(|x| x.q1)),
            opt(v.map(|x| x.median)),
            opt(v.map(|x| x.q3)),
        );
    }
    s
}

const COLORS: [&str; 4] = ["#1f77b4", "#2ca02c", "#d62728", "#7f7f7f"];

fn class_color(m: Maneuver) -> &'static str {
    m.index().map_or(COLORS[3], |i| COLORS[i])
}

/// One plotting area with linear axes.
struct Panel {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x: (f64, f64),
    y: (f64, f64),
    x_ticks: bool,
}

impl Panel {
    fn new(left: f64, top: f64, width: f64, height: f64, x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(a, b): (f64, f64)| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        Self {
            left,
            top,
            width,
            height,
            x: pad(x),
            y: pad(y),
            x_ticks: true,
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x.0) / (self.x.1 - self.x.0) * self.width
    }

    fn py(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.y.0) / (self.y.1 - self.y.0) * self.height
    }

    fn axes(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (l, t, w, h) = (self.left, self.top, self.width, self.height);
        let _ = writeln!(
            out,
            r##"<rect x="{l:.1}" y="{t:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#000"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
            l + w / 2.0,
            t - 8.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
            l + w / 2.0,
            t + h + 34.0,
            escape(xlabel)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
            l - 42.0,
            t + h / 2.0,
            l - 42.0,
            t + h / 2.0,
            escape(ylabel)
        );
        for k in 0..=4 {
            let fx = self.x.0 + (self.x.1 - self.x.0) * k as f64 / 4.0;
            let fy = self.y.0 + (self.y.1 - self.y.0) * k as f64 / 4.0;
            let (x, y) = (self.px(fx), self.py(fy));
            if self.x_ticks {
                let _ = writeln!(
                    out,
                    r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#000"/><text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"##,
                    t + h,
                    t + h + 4.0,
                    t + h + 16.0,
                    tick(fx)
                );
            }
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{l:.1}" y2="{y:.1}" stroke="#000"/><text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"##,
                l - 4.0,
                l - 6.0,
                y + 3.0,
                tick(fy)
            );
        }
    }

    fn polyline(&self, out: &mut String, pts: &[(f64, f64)], color: &str, dashed: bool) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", self.px(x), self.py(y)))
            .collect();
        let dash = if dashed {
            r#" stroke-dasharray="5,3""#
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            coords.join(" ")
        );
    }

    fn marker(&self, out: &mut String, x: f64, y: f64, color: &str, filled: bool) {
        let fill = if filled { color } else { "#fff" };
        let _ = writeln!(
            out,
            r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{fill}" stroke="{color}"/>"#,
            self.px(x),
            self.py(y)
        );
    }

    fn legend(&self, out: &mut String, entries: &[(&str, &str)]) {
        for (i, (label, color)) in entries.iter().enumerate() {
            let x = self.left + self.width - 110.0;
            let y = self.top + 14.0 + 16.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
                x + 18.0,
                x + 24.0,
                y + 4.0,
                escape(label)
            );
        }
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn svg(width: f64, height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n{body}</svg>\n"
    )
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

fn upper(values: impl Iterator<Item = f64>) -> f64 {
    let (_, hi) = range(values);
    if hi.is_finite() && hi > 0.0 {
        hi * 1.05
    } else {
        1.0
    }
}

/// Box plots of the error at the last horizon per method and the median
/// error over the horizon.
pub fn fig2_svg(report: &EvaluationReport) -> String {
    let mut body = String::new();
    let last: Vec<_> = report
        .errors
        .iter()
        .map(|m| m.summaries.last().copied().flatten())
        .collect();
    let ymax = upper(last.iter().flatten().map(|b| b.whisker_high));
    let h_last = report.horizons.last().copied().unwrap_or(0.0);
    let mut left = Panel::new(
        70.0,
        40.0,
        300.0,
        300.0,
        (0.0, report.errors.len() as f64),
        (0.0, ymax),
    );
    left.x_ticks = false;
    left.axes(
        &mut body,
        &format!("Error at {h_last:.1} s"),
        "",
        "|E_y| [m]",
    );
    for (i, (m, b)) in report.errors.iter().zip(&last).enumerate() {
        let c = COLORS[i % COLORS.len()];
        let cx = i as f64 + 0.5;
        let _ = writeln!(
            body,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
            left.px(cx),
            left.top + left.height + 18.0,
            escape(&m.method)
        );
        let Some(b) = b else { continue };
        let (x0, x1) = (left.px(cx - 0.25), left.px(cx + 0.25));
        let _ = writeln!(
            body,
            r#"<rect x="{x0:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="{c}"/>"#,
            left.py(b.q3),
            x1 - x0,
            (left.py(b.q1) - left.py(b.q3)).max(0.5)
        );
        let xm = left.px(cx);
        for (a, z) in [(b.whisker_low, b.q1), (b.q3, b.whisker_high)] {
            let _ = writeln!(
                body,
                r#"<line x1="{xm:.1}" y1="{:.1}" x2="{xm:.1}" y2="{:.1}" stroke="{c}"/>"#,
                left.py(a),
                left.py(z)
            );
        }
        let _ = writeln!(
            body,
            r#"<line x1="{x0:.1}" y1="{0:.1}" x2="{x1:.1}" y2="{0:.1}" stroke="{c}" stroke-width="2"/>"#,
            left.py(b.median)
        );
    }
    let medians = |m: &crate::pipeline::MethodErrors| -> Vec<(f64, f64)> {
        report
            .horizons
            .iter()
            .zip(&m.summaries)
            .filter_map(|(h, b)| b.map(|b| (*h, b.median)))
            .collect()
    };
    let ymax = upper(
        report
            .errors
            .iter()
            .flat_map(|m| medians(m).into_iter().map(|p| p.1)),
    );
    let right = Panel::new(450.0, 40.0, 300.0, 300.0, (0.0, h_last), (0.0, ymax));
    right.axes(
        &mut body,
        "Median error",
        "prediction time [s]",
        "median |E_y| [m]",
    );
    let mut legend = Vec::new();
    for (i, m) in report.errors.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        right.polyline(&mut body, &medians(m), c, false);
        legend.push((m.method.as_str(), c));
    }
    right.legend(&mut body, &legend);
    svg(800.0, 400.0, &body)
}

pub fn fig3_svg(report: &EvaluationReport) -> String {
    let mut body = String::new();
    let p = Panel::new(70.0, 40.0, 340.0, 340.0, (0.0, 1.0), (0.0, 1.0));
    p.axes(
        &mut body,
        "ROC (one vs rest)",
        "false positive rate",
        "true positive rate",
    );
    p.polyline(&mut body, &[(0.0, 0.0), (1.0, 1.0)], COLORS[3], true);
    let labels: Vec<String> = report
        .classes
        .iter()
        .map(|c| format!("{} AUC {:.3}", c.maneuver, c.roc.auc))
        .collect();
    let mut legend = Vec::new();
    for (c, label) in report.classes.iter().zip(&labels) {
        let pts: Vec<(f64, f64)> = c.roc.points.iter().map(|q| (q.fpr, q.tpr)).collect();
        p.polyline(&mut body, &pts, class_color(c.maneuver), false);
        legend.push((label.as_str(), class_color(c.maneuver)));
    }
    let lp = Panel::new(p.left, p.top + p.height - 70.0, p.width, 70.0, p.x, p.y);
    lp.legend(&mut body, &legend);
    svg(460.0, 440.0, &body)
}

/// Median error per density bin; hollow markers flag low-confidence bins.
pub fn fig4_svg(ctx: &ContextReport) -> String {
    let mut body = String::new();
    let center = |lo: f64, hi: f64| 0.5 * (lo + hi);
    let xr = range(ctx.density_errors.iter().flat_map(|b| [b.low, b.high]));
    let ymax = upper(ctx.density_errors.iter().filter_map(|b| b.median));
    let p = Panel::new(
        70.0,
        40.0,
        520.0,
        300.0,
        if xr.0.is_finite() { xr } else { (0.0, 1.0) },
        (0.0, ymax),
    );
    p.axes(
        &mut body,
        "Median error at the last horizon",
        "traffic density [veh/(km lane)]",
        "median |E_y| [m]",
    );
    let mut legend = Vec::new();
    for m in Maneuver::DEFINED {
        let c = class_color(m);
        let bins: Vec<_> = ctx
            .density_errors
            .iter()
            .filter(|b| b.maneuver == m)
            .collect();
        let pts: Vec<(f64, f64)> = bins
            .iter()
            .filter(|b| !b.low_confidence)
            .filter_map(|b| Some((center(b.low, b.high), b.median?)))
            .collect();
        p.polyline(&mut body, &pts, c, false);
        for b in &bins {
            if let Some(y) = b.median {
                p.marker(&mut body, center(b.low, b.high), y, c, !b.low_confidence);
            }
        }
        legend.push((m.as_str(), c));
    }
    p.legend(&mut body, &legend);
    svg(640.0, 400.0, &body)
}

/// Lane-change duration and peak lateral speed per density bin, median with
/// quartile band.
pub fn fig5_svg(ctx: &ContextReport) -> String {
    let mut body = String::new();
    let center = |lo: f64, hi: f64| 0.5 * (lo + hi);
    let xr = range(ctx.lane_changes.iter().flat_map(|b| [b.low, b.high]));
    let xr = if xr.0.is_finite() { xr } else { (0.0, 1.0) };
    type Pick = fn(&crate::pipeline::ContextReport, usize) -> Option<crate::evaluation::BoxStats>;
    let panels: [(&str, &str, Pick, f64); 2] = [
        (
            "Lane-change duration",
            "duration [s]",
            |c, i| c.lane_changes[i].duration,
            40.0,
        ),
        (
            "Peak lateral speed",
            "max |v_y| [m/s]",
            |c, i| c.lane_changes[i].max_abs_vy,
            400.0,
        ),
    ];
    for (k, (title, ylabel, pick, top)) in panels.into_iter().enumerate() {
        let stats: Vec<(f64, crate::evaluation::BoxStats)> = (0..ctx.lane_changes.len())
            .filter_map(|i| {
                Some((
                    center(ctx.lane_changes[i].low, ctx.lane_changes[i].high),
                    pick(ctx, i)?,
                ))
            })
            .collect();
        let ymax = upper(stats.iter().map(|s| s.1.q3));
        let p = Panel::new(70.0, top, 520.0, 280.0, xr, (0.0, ymax));
        p.axes(&mut body, title, "traffic density [veh/(km lane)]", ylabel);
        let c = COLORS[k * 2];
        p.polyline(
            &mut body,
            &stats.iter().map(|s| (s.0, s.1.q1)).collect::<Vec<_>>(),
            c,
            true,
        );
        p.polyline(
            &mut body,
            &stats.iter().map(|s| (s.0, s.1.q3)).collect::<Vec<_>>(),
            c,
            true,
        );
        p.polyline(
            &mut body,
            &stats.iter().map(|s| (s.0, s.1.median)).collect::<Vec<_>>(),
            c,
            false,
        );
        for s in &stats {
            p.marker(&mut body, s.0, s.1.median, c, true);
        }
    }
    svg(640.0, 740.0, &body)
}

/// Writes the class table, the error and ROC tables and their figures; returns the written paths.
pub fn write_evaluation(
    dir: &Path,
    report: &EvaluationReport,
    config_hash: &str,
    predictions: &str,
) -> Result<Vec<PathBuf>> {
    Ok(vec![
        write(dir, TABLE1, &table1(report, config_hash))?,
        write(
            dir,
            FIG2_TABLE,
            &fig2_table(report, config_hash, predictions),
        )?,
        write(dir, FIG3_TABLE, &fig3_table(report, config_hash))?,
        write(dir, FIG2_SVG, &with_hash(fig2_svg(report), config_hash))?,
        write(dir, FIG3_SVG, &with_hash(fig3_svg(report), config_hash))?,
    ])
}

/// Writes the density error and lane-change statistic tables and figures; returns the written paths.
pub fn write_context(
    dir: &Path,
    ctx: &ContextReport,
    config_hash: &str,
    predictions: &str,
) -> Result<Vec<PathBuf>> {
    Ok(vec![
        write(dir, FIG4_TABLE, &fig4_table(ctx, config_hash, predictions))?,
        write(dir, FIG5_TABLE, &fig5_table(ctx, config_hash))?,
        write(dir, FIG4_SVG, &with_hash(fig4_svg(ctx), config_hash))?,
        write(dir, FIG5_SVG, &with_hash(fig5_svg(ctx), config_hash))?,
    ])
}

fn with_hash(svg: String, config_hash: &str) -> String {
    format!("<!-- config_hash={config_hash} -->\n{svg}")
}

/// Reads the `# key=value` header lines of a written table.
pub fn read_header(text: &str) -> Vec<(String, String)> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| {
            let (k, v) = l.trim_start_matches('#').trim().split_once('=')?;
            Some((k.to_string(), v.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{
        BaccReport, BoxStats, DensityBinStat, LcBinStat, RocCurve, RocPoint, TimeGainSummary,
    };
    use crate::pipeline::{ClassReport, MethodErrors};

    fn boxed(m: f64) -> BoxStats {
        BoxStats::of(&[m - 0.1, m, m + 0.1]).unwrap()
    }

    fn report() -> EvaluationReport {
        let roc = RocCurve {
            points: vec![
                RocPoint {
                    threshold: f64::INFINITY,
                    fpr: 0.0,
                    tpr: 0.0,
                },
                RocPoint {
                    threshold: 0.5,
                    fpr: 0.1,
                    tpr: 0.9,
                },
                RocPoint {
                    threshold: 0.0,
                    fpr: 1.0,
                    tpr: 1.0,
                },
            ],
            auc: 0.9,
        };
        EvaluationReport {
            samples: 10,
            classes: Maneuver::DEFINED
                .iter()
                .map(|&m| ClassReport {
                    maneuver: m,
                    roc: roc.clone(),
                    time_gain: (m != Maneuver::Flw).then_some(TimeGainSummary {
                        mean: 3.0,
                        count: 4,
                        unstable_fraction: 0.25,
                    }),
                })
                .collect(),
            bacc: BaccReport {
                value: 0.8,
                recalls: [Some(0.8), Some(0.9), Some(0.7)],
                excluded: vec![],
                confusion: [[8, 2, 0], [1, 9, 0], [0, 3, 7]],
            },
            horizons: vec![0.2, 0.4],
            errors: ["MoE", "CV"]
                .iter()
                .map(|m| MethodErrors {
                    method: m.to_string(),
                    summaries: vec![Some(boxed(0.2)), None],
                    skipped: vec![0, 3],
                })
                .collect(),
            time_gain_skipped: 0,
        }
    }

    fn context() -> ContextReport {
        ContextReport {
            bin_width: 1.0,
            density_errors: vec![
                DensityBinStat {
                    maneuver: Maneuver::Flw,
                    low: 10.0,
                    high: 11.0,
                    count: 40,
                    median: Some(0.1),
                    low_confidence: false,
                },
                DensityBinStat {
                    maneuver: Maneuver::Lcl,
                    low: 10.0,
                    high: 11.0,
                    count: 0,
                    median: None,
                    low_confidence: true,
                },
            ],
            lane_changes: vec![LcBinStat {
                low: 10.0,
                high: 11.0,
                count: 3,
                duration: Some(boxed(6.0)),
                max_abs_vy: Some(boxed(2.0)),
            }],
        }
    }

    #[test]
    fn tables_carry_hashes_and_rows() {
        let r = report();
        let t1 = table1(&r, "cafe");
        assert_eq!(
            read_header(&t1),
            vec![("config_hash".to_string(), "cafe".to_string())]
        );
        assert_eq!(t1.lines().count(), 2 + 3 + 1);
        assert!(t1.lines().last().unwrap().starts_with("BACC\tNA\t0.800000"));
        let f2 = fig2_table(&r, "cafe", "beef");
        assert!(read_header(&f2).contains(&("predictions_sha256".into(), "beef".into())));
        assert_eq!(
            f2.lines().filter(|l| !l.starts_with('#')).count(),
            1 + 2 * 2
        );
        assert!(f2.contains("CV\t0.4\t0\t3\tNA"));
        let f3 = fig3_table(&r, "cafe");
        assert!(f3.contains("LCL\tinf\t0.000000\t0.000000"));
        let f4 = fig4_table(&context(), "cafe", "beef");
        assert!(f4.contains("LCL\t10.000000\t11.000000\t0\tNA\ttrue"));
        let f5 = fig5_table(&context(), "cafe");
        assert_eq!(f5.lines().count(), 3);
    }

    #[test]
    fn figures_are_well_formed_svg() {
        for s in [
            fig2_svg(&report()),
            fig3_svg(&report()),
            fig4_svg(&context()),
            fig5_svg(&context()),
        ] {
            assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
            assert!(!s.contains("NaN") && !s.contains("inf"));
            assert_eq!(s.matches("<svg").count(), 1);
        }
        let empty = ContextReport {
            bin_width: 1.0,
            density_errors: vec![],
            lane_changes: vec![],
        };
        assert!(!fig4_svg(&empty).contains("NaN"));
        assert!(!fig5_svg(&empty).contains("NaN"));
    }

    #[test]
    fn written_files_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_evaluation(dir.path(), &report(), "h", "p").unwrap();
        let first: Vec<String> = a
            .iter()
            .map(|p| std::fs::read_to_string(p).unwrap())
            .collect();
        write_evaluation(dir.path(), &report(), "h", "p").unwrap();
        let second: Vec<String> = a
            .iter()
            .map(|p| std::fs::read_to_string(p).unwrap())
            .collect();
        assert_eq!(first, second);
        assert_eq!(
            write_context(dir.path(), &context(), "h", "p")
                .unwrap()
                .len(),
            4
        );
    }

    #[test]
    fn checksum_is_stable_and_sensitive() {
        let a = checksum(&vec![1.0, 2.0]).unwrap();
        assert_eq!(a, checksum(&vec![1.0, 2.0]).unwrap());
        assert_ne!(a, checksum(&vec![1.0, 2.5]).unwrap());
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
