//! Minimal SVG charts for run metrics and sweep summaries.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sweep::{SweepParam, SweepRow};
use crate::trainer::RunMetrics;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(mut x0: f64, mut x1: f64, mut y0: f64, mut y1: f64) -> Self {
        if x1 <= x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 || (1e-2..1e5).contains(&v.abs()) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn open(svg: &mut String, title: &str, x_label: &str, y_label: &str, frame: &Frame, x_ticks: bool) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        escape(title)
    );
    let (left, right, top, bottom) = (MARGIN_L, WIDTH - MARGIN_R, MARGIN_T, HEIGHT - MARGIN_B);
    let _ = writeln!(
        svg,
        r#"<polyline points="{left},{top} {left},{bottom} {right},{bottom}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let yv = frame.y0 + t * (frame.y1 - frame.y0);
        let y = frame.py(yv);
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{y}" x2="{right}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{}</text>"##,
            left - 6.0,
            y + 4.0,
            fmt_tick(yv)
        );
        if x_ticks {
            let xv = frame.x0 + t * (frame.x1 - frame.x0);
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                frame.px(xv),
                bottom + 16.0,
                fmt_tick(xv)
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(y_label)
    );
}

/// Line chart of one or more series sharing axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    if points.is_empty() {
        return Err(Error::invalid(format!("nothing to plot for `{title}`")));
    }
    let fold = |f: fn(&(f64, f64)) -> f64| {
        points
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x0, x1) = fold(|p| p.0);
    let (y0, y1) = fold(|p| p.1);
    let frame = Frame::new(x0, x1, y0.min(0.0), y1);
    let mut svg = String::new();
    open(&mut svg, title, x_label, y_label, &frame, true);
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN_T + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_R + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box-and-whisker plot, one box per labelled group (whiskers span min..max).
pub fn box_plot(title: &str, x_label: &str, y_label: &str, groups: &[(String, Vec<f64>)]) -> Result<String> {
    let groups: Vec<(&String, Vec<f64>)> = groups
        .iter()
        .map(|(name, vals)| {
            let mut v: Vec<f64> = vals.iter().copied().filter(|x| x.is_finite()).collect();
            v.sort_by(f64::total_cmp);
            (name, v)
        })
        .filter(|(_, v)| !v.is_empty())
        .collect();
    if groups.is_empty() {
        return Err(Error::invalid(format!("nothing to plot for `{title}`")));
    }
    let lo = groups.iter().map(|(_, v)| v[0]).fold(f64::INFINITY, f64::min);
    let hi = groups.iter().map(|(_, v)| v[v.len() - 1]).fold(f64::NEG_INFINITY, f64::max);
    let n = groups.len() as f64;
    let frame = Frame::new(0.0, n, lo.min(0.0), hi);
    let mut svg = String::new();
    open(&mut svg, title, x_label, y_label, &frame, false);
    let slot = (WIDTH - MARGIN_L - MARGIN_R) / n;
    let half = (slot * 0.3).min(20.0);
    for (i, (name, v)) in groups.iter().enumerate() {
        let cx = frame.px(i as f64 + 0.5);
        let [q0, q1, q2, q3, q4] = [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| frame.py(quantile(v, q)));
        let _ = writeln!(
            svg,
            r##"<line x1="{cx}" y1="{q0}" x2="{cx}" y2="{q4}" stroke="black"/><rect x="{}" y="{q3}" width="{}" height="{}" fill="#9ecae1" stroke="black"/><line x1="{}" y1="{q2}" x2="{}" y2="{q2}" stroke="#d62728" stroke-width="2"/>"##,
            cx - half,
            2.0 * half,
            (q1 - q3).max(0.5),
            cx - half,
            cx + half
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx}" y="{}" text-anchor="end" transform="rotate(-35 {cx} {})" font-size="10">{}</text>"#,
            HEIGHT - MARGIN_B + 14.0,
            HEIGHT - MARGIN_B + 14.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn write(dir: &Path, name: &str, svg: String, out: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, svg)?;
    out.push(path);
    Ok(())
}

/// One run's metrics, labelled for the legend.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledRun {
    pub label: String,
    pub records: Vec<RunMetrics>,
}

/// Overlays runs on four charts: MAP accuracy, mean sampled ponder steps and
/// cumulative step-function applications against training step, and MAP
/// accuracy against cumulative applications. Extrapolation runs get a second
/// curve for their training-range evaluation.
pub fn emit_plots(runs: &[LabelledRun], dir: &Path) -> Result<Vec<PathBuf>> {
    if runs.is_empty() || runs.iter().all(|r| r.records.is_empty()) {
        return Err(Error::invalid("no metrics records to plot"));
    }
    std::fs::create_dir_all(dir)?;
    let mut acc = Vec::new();
    let mut steps = Vec::new();
    let mut compute = Vec::new();
    let mut acc_compute = Vec::new();
    for run in runs {
        let rs = &run.records;
        let series = |suffix: &str, f: &dyn Fn(&RunMetrics) -> Option<(f64, f64)>| Series {
            name: format!("{}{suffix}", run.label),
            points: rs.iter().filter_map(f).collect(),
        };
        acc.push(series("", &|r| Some((r.step as f64, r.eval.accuracy_map))));
        steps.push(series("", &|r| Some((r.step as f64, r.eval.mean_halt_sampled))));
        if rs.iter().any(|r| r.eval_interp.is_some()) {
            acc.push(series(" (train range)", &|r| {
                r.eval_interp.as_ref().map(|e| (r.step as f64, e.accuracy_map))
            }));
            steps.push(series(" (train range)", &|r| {
                r.eval_interp.as_ref().map(|e| (r.step as f64, e.mean_halt_sampled))
            }));
        }
        compute.push(series("", &|r| Some((r.step as f64, r.forward_passes as f64))));
        acc_compute.push(series("", &|r| Some((r.forward_passes as f64, r.eval.accuracy_map))));
    }
    let mut out = Vec::new();
    write(
        dir,
        "accuracy.svg",
        line_chart("MAP accuracy", "training step", "accuracy", &acc)?,
        &mut out,
    )?;
    write(
        dir,
        "ponder_steps.svg",
        line_chart("Ponder steps at evaluation", "training step", "mean sampled steps", &steps)?,
        &mut out,
    )?;
    write(
        dir,
        "compute.svg",
        line_chart("Cumulative compute", "training step", "step-function applications", &compute)?,
        &mut out,
    )?;
    write(
        dir,
        "accuracy_vs_compute.svg",
        line_chart("Accuracy against compute", "step-function applications", "accuracy", &acc_compute)?,
        &mut out,
    )?;
    Ok(out)
}

/// Per-value box plots of final accuracy and ponder steps across seeds.
pub fn emit_sweep_plots(param: SweepParam, rows: &[SweepRow], dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::invalid("no sweep rows to plot"));
    }
    std::fs::create_dir_all(dir)?;
    let mut values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let groups = |f: fn(&SweepRow) -> f64| -> Vec<(String, Vec<f64>)> {
        values
            .iter()
            .map(|&v| {
                let label = format!("{v:.4}");
                (label, rows.iter().filter(|r| r.value == v).map(f).collect())
            })
            .collect()
    };
    let name = param.name();
    let mut out = Vec::new();
    write(
        dir,
        "sweep_accuracy.svg",
        box_plot(&format!("Accuracy by {name}"), name, "MAP accuracy", &groups(|r| r.accuracy_map))?,
        &mut out,
    )?;
    write(
        dir,
        "sweep_steps.svg",
        box_plot(
            &format!("Ponder steps by {name}"),
            name,
            "mean sampled steps",
            &groups(|r| r.mean_halt_sampled),
        )?,
        &mut out,
    )?;
    Ok(out)
}
