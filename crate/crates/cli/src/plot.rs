//! Static SVG charts from run and summary CSVs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    /// Per-episode mean reward against environment steps, one series per run CSV.
    #[value(name = "reward_curve")]
    RewardCurve,
    /// Median greedy throughput per device type against lambda, from summary CSVs.
    #[value(name = "throughput_vs_lambda")]
    ThroughputVsLambda,
    /// Median greedy latency per device type against lambda (log axis).
    #[value(name = "latency_vs_lambda")]
    LatencyVsLambda,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::RewardCurve => "reward_curve",
            PlotKind::ThroughputVsLambda => "throughput_vs_lambda",
            PlotKind::LatencyVsLambda => "latency_vs_lambda",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.svg", self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("schema error in {file}: column `{column}` {reason}")]
    Schema { file: String, column: String, reason: String },
    #[error("cannot read {file}: {source}")]
    Io { file: String, source: std::io::Error },
    #[error("no input files")]
    NoInput,
}

impl From<PlotError> for CliError {
    fn from(e: PlotError) -> Self {
        match e {
            PlotError::Io { .. } => CliError::Runtime(e.into()),
            _ => CliError::Config(e.into()),
        }
    }
}

struct Table {
    file: String,
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path, required: &[&str]) -> Result<Table, PlotError> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| PlotError::Io { file: file.clone(), source })?;
        let schema = |column: &str, reason: String| PlotError::Schema { file: file.clone(), column: column.into(), reason };
        if text.trim().is_empty() {
            return Err(schema(required[0], "is missing: the file is empty".into()));
        }
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| schema(required[0], format!("unreadable header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if let Some(missing) = required.iter().find(|c| !header.iter().any(|h| h == *c)) {
            return Err(schema(missing, "is missing from the header".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| schema(required[0], format!("line {line}: {e}")))?;
            if rec.len() < header.len() {
                return Err(schema(&header[rec.len()], format!("has no value on line {line}")));
            }
            if rec.len() > header.len() {
                return Err(schema("<unnamed>", format!("line {line} has {} fields, header has {}", rec.len(), header.len())));
            }
            rows.push(rec);
        }
        if rows.is_empty() {
            return Err(schema(required[0], "has no values".into()));
        }
        Ok(Table { file, header, rows })
    }

    fn index(&self, column: &str) -> usize {
        self.header.iter().position(|h| h == column).expect("required column checked on read")
    }

    fn text<'a>(&'a self, row: usize, column: &str) -> &'a str {
        self.rows[row][self.index(column)].trim()
    }

    fn number(&self, row: usize, column: &str) -> Result<f64, PlotError> {
        let raw = self.text(row, column);
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(PlotError::Schema {
                file: self.file.clone(),
                column: column.into(),
                reason: format!("line {}: `{raw}` is not a finite number", row + 2),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Optional vertical ranges drawn as whiskers: (x, low, high).
    pub ranges: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub markers: bool,
    pub series: Vec<Series>,
}

fn run_label(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_prefix("run_").map(str::to_string).unwrap_or(stem)
}

/// Per-episode mean reward, placed at the step count reached by the end of the episode.
fn reward_series(path: &Path) -> Result<Series, PlotError> {
    let t = Table::read(path, &["episode", "global_step", "reward"])?;
    let mut points = Vec::new();
    let (mut current, mut sum, mut count, mut last_step) = (None::<String>, 0.0, 0usize, 0.0);
    for row in 0..t.rows.len() {
        let episode = t.text(row, "episode").to_string();
        let step = t.number(row, "global_step")?;
        let reward = t.number(row, "reward")?;
        if current.as_deref() != Some(episode.as_str()) {
            if count > 0 {
                points.push((last_step + 1.0, sum / count as f64));
            }
            current = Some(episode);
            sum = 0.0;
            count = 0;
        }
        sum += reward;
        count += 1;
        last_step = step;
    }
    points.push((last_step + 1.0, sum / count as f64));
    Ok(Series { label: run_label(path), points, ranges: Vec::new() })
}

fn lambda_series(paths: &[PathBuf], metric: &str, log_y: bool) -> Result<Vec<Series>, PlotError> {
    let (med, q1, q3) = (format!("{metric}_median"), format!("{metric}_q1"), format!("{metric}_q3"));
    let required = ["learning_rate", "lambda", "device_type", med.as_str(), q1.as_str(), q3.as_str()];
    let mut groups: Vec<((String, String), Vec<(f64, f64, f64, f64)>)> = Vec::new();
    for path in paths {
        let t = Table::read(path, &required)?;
        for row in 0..t.rows.len() {
            let key = (t.text(row, "device_type").to_string(), t.text(row, "learning_rate").to_string());
            let lambda = t.number(row, "lambda")?;
            let values = (t.number(row, &med)?, t.number(row, &q1)?, t.number(row, &q3)?);
            if log_y {
                for (col, v) in [(&med, values.0), (&q1, values.1), (&q3, values.2)] {
                    if v <= 0.0 {
                        return Err(PlotError::Schema {
                            file: t.file.clone(),
                            column: col.clone(),
                            reason: format!("line {}: {v} cannot be drawn on a log axis", row + 2),
                        });
                    }
                }
            }
            let entry = (lambda, values.0, values.1, values.2);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, pts)) => pts.push(entry),
                None => groups.push((key, vec![entry])),
            }
        }
    }
    let several_lrs = groups.iter().any(|((_, lr), _)| *lr != groups[0].0 .1);
    Ok(groups
        .into_iter()
        .map(|((dtype, lr), mut pts)| {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let label = if several_lrs { format!("{dtype} (lr={lr})") } else { dtype };
            Series {
                label,
                points: pts.iter().map(|p| (p.0, p.1)).collect(),
                ranges: pts.iter().map(|p| (p.0, p.2, p.3)).collect(),
            }
        })
        .collect())
}

/// Reads the inputs and lays out the chart for `kind`.
pub fn build_chart(kind: PlotKind, inputs: &[PathBuf]) -> Result<Chart, PlotError> {
    if inputs.is_empty() {
        return Err(PlotError::NoInput);
    }
    Ok(match kind {
        PlotKind::RewardCurve => Chart {
            title: "Reward vs. steps".into(),
            x_label: "environment steps".into(),
            y_label: "episode mean reward".into(),
            log_y: false,
            markers: false,
            series: inputs.iter().map(|p| reward_series(p)).collect::<Result<_, _>>()?,
        },
        PlotKind::ThroughputVsLambda => Chart {
            title: "Greedy throughput vs. lambda".into(),
            x_label: "lambda".into(),
            y_label: "throughput (Mbps)".into(),
            log_y: false,
            markers: true,
            series: lambda_series(inputs, "throughput_mbps", false)?,
        },
        PlotKind::LatencyVsLambda => Chart {
            title: "Greedy latency vs. lambda".into(),
            x_label: "lambda".into(),
            y_label: "latency (ms)".into(),
            log_y: true,
            markers: true,
            series: lambda_series(inputs, "latency_ms", true)?,
        },
    })
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

/// Ticks at 1, 2 or 5 times a power of ten, about `target` of them.
fn linear_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

/// Renders the chart. Output depends only on the chart contents.
pub fn render_svg(chart: &Chart) -> String {
    let all_x = chart.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let all_y = chart
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1).chain(s.ranges.iter().flat_map(|r| [r.1, r.2])));
    let (x_min, x_max) = all_x.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (y_min, y_max) = all_y.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let (x_lo, x_hi) = if x_max > x_min { (x_min, x_max) } else { (x_min - 1.0, x_max + 1.0) };

    let (y_lo, y_hi, y_ticks) = if chart.log_y {
        let mut lo = y_min.log10().floor();
        let mut hi = y_max.log10().ceil();
        if hi <= lo {
            lo -= 1.0;
            hi += 1.0;
        }
        let ticks = (lo as i32..=hi as i32).map(|k| 10f64.powi(k)).collect::<Vec<_>>();
        (lo, hi, ticks)
    } else {
        let (lo, hi) = padded(y_min, y_max);
        (lo, hi, linear_ticks(lo, hi, 6))
    };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| {
        let v = if chart.log_y { y.log10() } else { y };
        TOP + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="28" text-anchor="middle" font-size="16">{}</text>"#, LEFT + plot_w / 2.0, escape(&chart.title));

    for &t in &y_ticks {
        let y = sy(t);
        let _ = writeln!(s, r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, LEFT + plot_w);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, tick_label(t));
    }
    for t in linear_ticks(x_lo, x_hi, 6) {
        let x = sx(t);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##, TOP + plot_h);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + plot_h + 18.0, tick_label(t));
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&chart.y_label)
    );

    for (i, series) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let label = escape(&series.label);
        for &(x, lo, hi) in &series.ranges {
            let _ = writeln!(
                s,
                r#"<line class="iqr" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-opacity="0.5"/>"#,
                sx(x),
                sy(lo),
                sx(x),
                sy(hi)
            );
        }
        let points: Vec<String> = series.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-label="{label}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.join(" ")
        );
        if chart.markers {
            for &(x, y) in &series.points {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
            }
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{label}</text>"#, lx + 26.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart(log_y: bool, points: Vec<(f64, f64)>) -> Chart {
        Chart {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_y,
            markers: false,
            series: vec![Series { label: "a<b".into(), points, ranges: vec![] }],
        }
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(linear_ticks(0.0, 1.0, 5), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(linear_ticks(-3.0, 97.0, 5), vec![0.0, 20.0, 40.0, 60.0, 80.0]);
    }

    #[test]
    fn log_axis_spans_whole_decades() {
        let svg = render_svg(&chart(true, vec![(0.0, 3.0), (1.0, 250.0)]));
        for label in [">1<", ">10<", ">100<", ">1000<"] {
            assert!(svg.contains(label), "{label} missing");
        }
    }

    #[test]
    fn labels_are_escaped_and_output_is_stable() {
        let c = chart(false, vec![(0.0, 1.0), (1.0, 2.0)]);
        let svg = render_svg(&c);
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg, render_svg(&c));
    }

    #[test]
    fn single_point_does_not_divide_by_zero() {
        let svg = render_svg(&chart(false, vec![(0.5, 2.0)]));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
