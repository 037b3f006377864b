//! Hand-written SVG figures: metric curves and histogram overlays.
//!
//! Output is a pure function of the inputs, so figures are byte-stable
//! across runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{EnergyHistogram, ProbeReport};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const REFERENCE_POINTS: usize = 257;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    Curves,
    HistogramOverlay,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TrainLoss,
    TrainErr,
    #[default]
    TestErr,
}

impl Metric {
    pub fn column(self) -> &'static str {
        match self {
            Metric::TrainLoss => "train_loss",
            Metric::TrainErr => "train_err",
            Metric::TestErr => "test_err",
        }
    }

    fn of(self, row: &MetricsRow) -> f64 {
        match self {
            Metric::TrainLoss => row.train_loss,
            Metric::TrainErr => row.train_err,
            Metric::TestErr => row.test_err,
        }
    }
}

/// Which histogram of a probe report an overlay shows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Panel {
    Input,
    #[default]
    F1,
    F2,
}

impl Panel {
    pub fn name(self) -> &'static str {
        match self {
            Panel::Input => "input",
            Panel::F1 => "f1",
            Panel::F2 => "f2",
        }
    }

    fn of(self, report: &ProbeReport) -> &EnergyHistogram {
        match self {
            Panel::Input => &report.input,
            Panel::F1 => &report.f1,
            Panel::F2 => &report.f2,
        }
    }
}

/// A metrics CSV row; `arch` and `seed` are absent in single-run files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    #[serde(default)]
    pub arch: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_err: f64,
    pub test_err: f64,
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<MetricsRow>, _>>()
        .map_err(|e| csv_error(path, e))?;
    if rows.is_empty() {
        return Err(Error::Empty(format!("{} has no data rows", path.display())));
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Malformed(format!("{}: {other:?}", path.display())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Split rows into one series per `(arch, seed)`, in order of first appearance.
pub fn series_from_rows(
    rows: &[MetricsRow],
    metric: Metric,
    fallback_label: &str,
) -> Vec<CurveSeries> {
    let mut out: Vec<(Option<String>, Option<u64>, CurveSeries)> = Vec::new();
    for row in rows {
        let point = (row.epoch as f64, metric.of(row));
        match out
            .iter_mut()
            .find(|(a, s, _)| *a == row.arch && *s == row.seed)
        {
            Some((_, _, series)) => series.points.push(point),
            None => {
                let label = match (&row.arch, row.seed) {
                    (Some(a), Some(s)) => format!("{a} seed {s}"),
                    (Some(a), None) => a.clone(),
                    (None, Some(s)) => format!("{fallback_label} seed {s}"),
                    (None, None) => fallback_label.to_string(),
                };
                out.push((
                    row.arch.clone(),
                    row.seed,
                    CurveSeries {
                        label,
                        points: vec![point],
                    },
                ));
            }
        }
    }
    out.into_iter().map(|(_, _, s)| s).collect()
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        Self {
            x: widen(x),
            y: widen(y),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT
            - MARGIN_BOTTOM
            - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn open_svg(svg: &mut String, title: &str, frame: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, x1) = (frame.px(frame.x.0), frame.px(frame.x.1));
    let (y0, y1) = (frame.py(frame.y.0), frame.py(frame.y.1));
    let _ = writeln!(svg, r#"<g stroke="black" stroke-width="1">"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/>"#
    );
    svg.push_str("</g>\n");
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let xv = frame.x.0 + t * (frame.x.1 - frame.x.0);
        let yv = frame.y.0 + t * (frame.y.1 - frame.y.0);
        let (xp, yp) = (frame.px(xv), frame.py(yv));
        let _ = writeln!(
            svg,
            r#"<line x1="{xp:.2}" y1="{y0:.2}" x2="{xp:.2}" y2="{:.2}" stroke="black"/><text x="{xp:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 19.0,
            tick_label(xv)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{yp:.2}" x2="{x0:.2}" y2="{yp:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            yp + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn legend(svg: &mut String, entries: &[(String, &str)]) {
    svg.push_str("<g class=\"legend\">\n");
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = MARGIN_TOP + 8.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN_RIGHT - 150.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.2}" y="{:.2}" width="12" height="4" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            y - 4.0,
            x + 18.0,
            y + 2.0,
            escape(label)
        );
    }
    svg.push_str("</g>\n");
}

fn polyline(svg: &mut String, frame: &Frame, points: &[(f64, f64)], color: &str, extra: &str) {
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{extra} points="{}"/>"#,
        coords.join(" ")
    );
}

/// One polyline per series, one vertex per point.
pub fn curves_svg(title: &str, y_label: &str, series: &[CurveSeries]) -> Result<String> {
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .collect();
    if all.is_empty() {
        return Err(Error::Empty("no points to plot".into()));
    }
    if all.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidArgument("curve points must be finite".into()));
    }
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        all.iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    };
    let (xlo, xhi) = bounds(|p| p.0);
    let (ylo, yhi) = bounds(|p| p.1);
    let frame = Frame::new((xlo, xhi), (ylo.min(0.0), yhi * 1.05));

    let mut svg = String::new();
    open_svg(&mut svg, title, &frame, "epoch", y_label);
    let mut entries = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        polyline(&mut svg, &frame, &s.points, color, "");
        entries.push((s.label.clone(), color));
    }
    legend(&mut svg, &entries);
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn density(h: &EnergyHistogram, i: usize) -> f64 {
    h.mass[i] / h.binning.width()
}

fn gaussian_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

/// Bars for `bars`, step outlines for each of `steps`, and the reference
/// `N(mean, variance)` density as a smooth curve; all on a density scale.
pub fn overlay_svg(
    title: &str,
    bars: (&str, &EnergyHistogram),
    steps: &[(String, &EnergyHistogram)],
    reference: (f64, f64),
) -> Result<String> {
    let (bar_label, base) = bars;
    let binning = base.binning;
    if steps.iter().any(|(_, h)| h.binning != binning) {
        return Err(Error::InvalidArgument(
            "overlaid histograms must share one binning".into(),
        ));
    }
    let (mean, variance) = reference;
    if !(variance > 0.0 && variance.is_finite() && mean.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bad reference N({mean}, {variance})"
        )));
    }
    let n = binning.bin_count;
    let curve: Vec<(f64, f64)> = (0..REFERENCE_POINTS)
        .map(|i| {
            let x =
                binning.lo + (binning.hi - binning.lo) * i as f64 / (REFERENCE_POINTS - 1) as f64;
            (x, gaussian_pdf(x, mean, variance))
        })
        .collect();
    let top = std::iter::once(base)
        .chain(steps.iter().map(|(_, h)| *h))
        .flat_map(|h| (0..n).map(move |i| density(h, i)))
        .chain(curve.iter().map(|p| p.1))
        .fold(0.0, f64::max);
    let frame = Frame::new((binning.lo, binning.hi), (0.0, top * 1.1));

    let mut svg = String::new();
    open_svg(&mut svg, title, &frame, "value", "density");
    svg.push_str("<g class=\"bars\" fill=\"#9ecae1\" stroke=\"#3182bd\" stroke-width=\"0.5\">\n");
    for i in 0..n {
        let (x0, x1) = (frame.px(binning.edge(i)), frame.px(binning.edge(i + 1)));
        let (y0, y1) = (frame.py(0.0), frame.py(density(base, i)));
        let _ = writeln!(
            svg,
            r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}"/>"#,
            x1 - x0,
            y0 - y1
        );
    }
    svg.push_str("</g>\n");

    let mut entries = vec![(bar_label.to_string(), "#9ecae1")];
    for (k, (label, h)) in steps.iter().enumerate() {
        let color = PALETTE[(k + 2) % PALETTE.len()];
        let mut pts = Vec::with_capacity(2 * n);
        for i in 0..n {
            pts.push((binning.edge(i), density(h, i)));
            pts.push((binning.edge(i + 1), density(h, i)));
        }
        let _ = write!(svg, "<g class=\"step\">");
        polyline(&mut svg, &frame, &pts, color, "");
        svg.push_str("</g>\n");
        entries.push((label.clone(), color));
    }
    let _ = write!(svg, "<g class=\"reference\">");
    polyline(
        &mut svg,
        &frame,
        &curve,
        "black",
        r#" stroke-dasharray="4 2""#,
    );
    svg.push_str("</g>\n");
    entries.push((
        format!("N({}, {})", tick_label(mean), tick_label(variance)),
        "black",
    ));
    legend(&mut svg, &entries);
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotOptions {
    pub metric: Metric,
    pub panel: Panel,
    pub title: Option<String>,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned())
}

/// Render metrics CSVs (curves) or probe-report JSONs (overlay) to `out`.
///
/// For overlays the first report's panel is drawn as bars and any further
/// reports as step outlines.
pub fn render_figure(
    kind: FigureKind,
    inputs: &[PathBuf],
    out: &Path,
    options: &PlotOptions,
) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Empty("no input files to plot".into()));
    }
    let svg = match kind {
        FigureKind::Curves => {
            let mut series = Vec::new();
            for path in inputs {
                let rows = read_metrics_csv(path)?;
                series.extend(series_from_rows(&rows, options.metric, &stem(path)));
            }
            let title = options
                .title
                .clone()
                .unwrap_or_else(|| options.metric.column().to_string());
            curves_svg(&title, options.metric.column(), &series)?
        }
        FigureKind::HistogramOverlay => {
            let reports = inputs
                .iter()
                .map(|p| {
                    let text = fs::read_to_string(p)?;
                    if text.trim().is_empty() {
                        return Err(Error::Empty(format!("{} is empty", p.display())));
                    }
                    ProbeReport::from_json(&text)
                })
                .collect::<Result<Vec<_>>>()?;
            let first = &reports[0];
            let label = |i: usize, r: &ProbeReport| match &r.arch {
                Some(a) => format!("{a} {}", options.panel.name()),
                None => format!("{} {}", stem(&inputs[i]), options.panel.name()),
            };
            let steps: Vec<(String, &EnergyHistogram)> = reports
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, r)| (label(i, r), options.panel.of(r)))
                .collect();
            let title = options
                .title
                .clone()
                .unwrap_or_else(|| format!("{} histogram", options.panel.name()));
            overlay_svg(
                &title,
                (&label(0, first), options.panel.of(first)),
                &steps,
                (first.options.prior_mean, first.options.prior_variance),
            )?
        }
    };
    fs::write(out, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::{gaussian_reference, make_histogram, Binning};

    #[test]
    fn curves_have_one_vertex_per_point() {
        let s = CurveSeries {
            label: "a".into(),
            points: vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.0)],
        };
        let svg = curves_svg("t", "err", &[s]).unwrap();
        assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(
            line.split("points=\"")
                .nth(1)
                .unwrap()
                .split_whitespace()
                .count(),
            3
        );
        assert!(curves_svg("t", "err", &[]).is_err());
    }

    #[test]
    fn overlay_rejects_mixed_binnings() {
        let b = Binning::default();
        let r = gaussian_reference(&b, 0.0, 1024.0).unwrap();
        let other = make_histogram(&[0.0], &Binning { bin_count: 8, ..b }).unwrap();
        assert!(overlay_svg("t", ("r", &r), &[("o".into(), &other)], (0.0, 1024.0)).is_err());
        let svg = overlay_svg("t", ("r", &r), &[], (0.0, 1024.0)).unwrap();
        // Bars plus two legend swatches.
        assert_eq!(svg.matches("<rect x=").count(), b.bin_count + 2);
    }

    #[test]
    fn series_split_by_run() {
        let row = |arch: &str, seed, epoch| MetricsRow {
            arch: Some(arch.into()),
            seed: Some(seed),
            epoch,
            train_loss: 1.0,
            train_err: 0.5,
            test_err: 0.25,
        };
        let rows = [row("CNN1", 1, 0), row("CNN1", 1, 1), row("CNN2", 1, 0)];
        let s = series_from_rows(&rows, Metric::TestErr, "x");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].label, "CNN1 seed 1");
        assert_eq!(s[0].points, vec![(0.0, 0.25), (1.0, 0.25)]);
    }
}
