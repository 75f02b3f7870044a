//! Minimal SVG line charts with a fixed layout, so identical inputs give
//! byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write;

use ndp_core::envs::TraceRow;

use crate::output::MetricRecord;

pub const WIDTH: f64 = 480.0;
pub const HEIGHT: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 46.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<[f64; 2]>,
    /// Draw points as dots instead of a polyline.
    pub markers: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<[f64; 2]>) -> Self {
        Self {
            label: label.into(),
            points,
            markers: false,
        }
    }

    pub fn dots(label: impl Into<String>, points: Vec<[f64; 2]>) -> Self {
        Self {
            label: label.into(),
            points,
            markers: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Same scale on both axes, for paths in the plane.
    pub equal_aspect: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn span(&self) -> f64 {
        self.hi - self.lo
    }

    fn widen(self, span: f64) -> Range {
        let mid = 0.5 * (self.lo + self.hi);
        Range {
            lo: mid - 0.5 * span,
            hi: mid + 0.5 * span,
        }
    }
}

fn data_range(values: impl Iterator<Item = f64>) -> Range {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return Range { lo: 0.0, hi: 1.0 };
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 1e-12 { 0.1 * lo.abs() } else { 0.5 };
        return Range { lo: lo - pad, hi: hi + pad };
    }
    let pad = 0.05 * (hi - lo);
    Range { lo: lo - pad, hi: hi + pad }
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(r: Range) -> (Vec<f64>, usize) {
    let step = nice_step(r.span(), 5);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (r.lo / step).ceil() as i64;
    let last = (r.hi / step).floor() as i64;
    ((first..=last).map(|i| i as f64 * step).collect(), decimals)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn panel(out: &mut String, fig: &Figure, ox: f64, oy: f64) {
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let all = || fig.series.iter().flat_map(|s| s.points.iter());
    let mut xr = data_range(all().map(|p| p[0]));
    let mut yr = data_range(all().map(|p| p[1]));
    if fig.equal_aspect {
        let units = (xr.span() / pw).max(yr.span() / ph);
        xr = xr.widen(units * pw);
        yr = yr.widen(units * ph);
    }
    let sx = |x: f64| ox + LEFT + (x - xr.lo) / xr.span() * pw;
    let sy = |y: f64| oy + TOP + ph - (y - yr.lo) / yr.span() * ph;

    let _ = writeln!(out, "<g>");
    let _ = writeln!(
        out,
        r##"<rect x="{:.2}" y="{:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#000"/>"##,
        ox + LEFT,
        oy + TOP
    );
    let (xt, xd) = ticks(xr);
    for t in xt {
        let x = sx(t);
        let y = oy + TOP + ph;
        let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{y:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000"/>"##, y + 4.0);
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" font-size="10" text-anchor="middle">{t:.xd$}</text>"#,
            y + 15.0
        );
    }
    let (yt, yd) = ticks(yr);
    for t in yt {
        let y = sy(t);
        let x = ox + LEFT;
        let _ = writeln!(out, r##"<line x1="{:.2}" y1="{y:.2}" x2="{x:.2}" y2="{y:.2}" stroke="#000"/>"##, x - 4.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{t:.yd$}</text>"#,
            x - 6.0,
            y + 3.5
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{}</text>"#,
        ox + LEFT + pw / 2.0,
        oy + 18.0,
        escape(&fig.title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
        ox + LEFT + pw / 2.0,
        oy + HEIGHT - 8.0,
        escape(&fig.x_label)
    );
    let (lx, ly) = (ox + 14.0, oy + TOP + ph / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{lx:.2}" y="{ly:.2}" font-size="11" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
        escape(&fig.y_label)
    );

    for (i, s) in fig.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(|p| p[0].is_finite() && p[1].is_finite())
            .map(|p| (sx(p[0]), sy(p[1])))
            .collect();
        if s.markers || pts.len() == 1 {
            for (x, y) in &pts {
                let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
            }
        } else if !pts.is_empty() {
            let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                coords.join(" ")
            );
        }
    }

    let labelled: Vec<(usize, &Series)> = fig.series.iter().enumerate().filter(|(_, s)| !s.label.is_empty()).collect();
    if !labelled.is_empty() {
        let widest = labelled.iter().map(|(_, s)| s.label.chars().count()).max().unwrap_or(0) as f64;
        let w = 30.0 + 6.5 * widest;
        let h = 8.0 + 14.0 * labelled.len() as f64;
        // corner covering the fewest data points; top right wins ties
        let (left, right) = (ox + LEFT + 6.0, ox + LEFT + pw - w - 6.0);
        let (top, bottom) = (oy + TOP + 6.0, oy + TOP + ph - h - 6.0);
        let covered = |x0: f64, y0: f64| {
            all()
                .filter(|p| {
                    let (x, y) = (sx(p[0]), sy(p[1]));
                    x >= x0 - 4.0 && x <= x0 + w + 4.0 && y >= y0 - 4.0 && y <= y0 + h + 4.0
                })
                .count()
        };
        let (x0, y0) = [(right, top), (left, top), (right, bottom), (left, bottom)]
            .into_iter()
            .min_by_key(|&(x, y)| covered(x, y))
            .unwrap_or((right, top));
        let _ = writeln!(
            out,
            r##"<g class="legend"><rect x="{x0:.2}" y="{y0:.2}" width="{w:.2}" height="{h:.2}" fill="#fff" fill-opacity="0.85" stroke="#999"/>"##
        );
        for (row, (i, s)) in labelled.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let y = y0 + 13.0 + 14.0 * row as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="3"/>"#,
                x0 + 5.0,
                y - 4.0,
                x0 + 21.0,
                y - 4.0
            );
            let _ = writeln!(out, r#"<text x="{:.2}" y="{y:.2}" font-size="10">{}</text>"#, x0 + 25.0, escape(&s.label));
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, "</g>");
}

pub fn render(fig: &Figure) -> String {
    render_panels(std::slice::from_ref(fig), 1)
}

/// Figures laid out on a grid, `cols` per row.
pub fn render_panels(figs: &[Figure], cols: usize) -> String {
    let cols = cols.max(1).min(figs.len().max(1));
    let rows = figs.len().div_ceil(cols).max(1);
    let (w, h) = (WIDTH * cols as f64, HEIGHT * rows as f64);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r##"<rect width="{w}" height="{h}" fill="#fff"/>"##);
    for (i, fig) in figs.iter().enumerate() {
        panel(&mut out, fig, WIDTH * (i % cols) as f64, HEIGHT * (i / cols) as f64);
    }
    out.push_str("</svg>\n");
    out
}

pub fn trace_figure(title: &str, rows: &[TraceRow]) -> Figure {
    let mut series = vec![Series::line("agent", rows.iter().map(|r| r.agent).collect())];
    let object: Vec<[f64; 2]> = rows.iter().map(|r| r.object).collect();
    // reach has no object; its placeholder never moves
    let moves = object.windows(2).any(|w| w[0] != w[1]);
    if moves {
        series.push(Series::line("object", object));
    }
    if let Some(last) = rows.last() {
        series.push(Series::dots("goal", vec![last.goal]));
    }
    Figure {
        title: title.to_string(),
        x_label: "x".into(),
        y_label: "y".into(),
        series,
        equal_aspect: true,
    }
}

/// Predicted and demonstrated strokes.
pub fn stroke_figure(title: &str, curves: &[(&str, &[[f64; 2]])]) -> Figure {
    Figure {
        title: title.to_string(),
        x_label: "x".into(),
        y_label: "y".into(),
        series: curves.iter().map(|(l, p)| Series::line(*l, p.to_vec())).collect(),
        equal_aspect: true,
    }
}

/// One figure per metric name; each input log becomes one labelled curve.
pub fn metric_figures(logs: &[(String, Vec<MetricRecord>)], only: &[String]) -> Vec<(String, Figure)> {
    let mut by_name: BTreeMap<&str, Vec<Series>> = BTreeMap::new();
    for (label, records) in logs {
        let mut per: BTreeMap<&str, Vec<[f64; 2]>> = BTreeMap::new();
        for r in records {
            if only.is_empty() || only.iter().any(|m| m == &r.metric_name) {
                per.entry(&r.metric_name).or_default().push([r.env_steps as f64, r.value]);
            }
        }
        for (name, points) in per {
            by_name.entry(name).or_default().push(Series::line(label.clone(), points));
        }
    }
    by_name
        .into_iter()
        .map(|(name, series)| {
            let fig = Figure {
                title: name.to_string(),
                x_label: "env steps".into(),
                y_label: name.to_string(),
                series,
                equal_aspect: false,
            };
            (name.to_string(), fig)
        })
        .collect()
}
