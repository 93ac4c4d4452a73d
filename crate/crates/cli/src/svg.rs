//! Minimal deterministic SVG line/scatter plots: fixed-precision coordinate
//! formatting, a stable palette and no external plotting dependency, so
//! identical inputs produce byte-identical files.

use anyhow::{bail, Result};

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 180.0;
const MARGIN_T: f64 = 48.0;
const MARGIN_B: f64 = 56.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStyle {
    Line,
    Markers,
    LineWithBand,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Optional symmetric band half-width per point (std bands).
    pub band: Option<Vec<f64>>,
    pub style: SeriesStyle,
}

#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_log: bool,
    pub y_log: bool,
    pub series: Vec<Series>,
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

struct Axis {
    min: f64,
    max: f64,
    log: bool,
}

impl Axis {
    fn from_values(values: impl Iterator<Item = f64>, log: bool) -> Option<Axis> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            if !v.is_finite() || (log && v <= 0.0) {
                continue;
            }
            min = min.min(v);
            max = max.max(v);
        }
        if !min.is_finite() || !max.is_finite() {
            return None;
        }
        if min == max {
            if log {
                min /= 2.0;
                max *= 2.0;
            } else {
                min -= 0.5;
                max += 0.5;
            }
        } else if !log {
            let pad = 0.05 * (max - min);
            min -= pad;
            max += pad;
        } else {
            min /= 1.3;
            max *= 1.3;
        }
        Some(Axis { min, max, log })
    }

    fn to_unit(&self, v: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let (a, b, x) = if self.log {
            (self.min.ln(), self.max.ln(), v.ln())
        } else {
            (self.min, self.max, v)
        };
        Some(((x - a) / (b - a)).clamp(-0.02, 1.02))
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let lo = self.min.log10().floor() as i32;
            let hi = self.max.log10().ceil() as i32;
            let mut t = Vec::new();
            for e in lo..=hi {
                let v = 10f64.powi(e);
                if v >= self.min * 0.999 && v <= self.max * 1.001 {
                    t.push(v);
                }
            }
            if t.len() < 2 {
                t = vec![self.min, self.max];
            }
            t
        } else {
            let span = self.max - self.min;
            let raw = span / 5.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0]
                .iter()
                .map(|m| m * mag)
                .find(|&s| span / s <= 6.0)
                .unwrap_or(mag * 10.0);
            let start = (self.min / step).ceil() * step;
            let mut t = Vec::new();
            let mut v = start;
            while v <= self.max + 1e-12 * span {
                t.push(v);
                v += step;
            }
            t
        }
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v}");
        if s.len() <= 8 {
            s
        } else {
            format!("{v:.4}")
        }
    } else {
        format!("{v:.1e}")
    }
}

/// Render the plot; an input without any plottable point produces an
/// empty-axes SVG with a warning annotation.
pub fn render(spec: &PlotSpec) -> Result<String> {
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"17\" text-anchor=\"middle\">{}</text>\n",
        fmt((WIDTH - MARGIN_R + MARGIN_L) / 2.0),
        xml_escape(&spec.title)
    ));

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |u: f64| MARGIN_L + u * plot_w;
    let py = |u: f64| HEIGHT - MARGIN_B - u * plot_h;

    let x_axis = Axis::from_values(
        spec.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
        spec.x_log,
    );
    let y_axis = Axis::from_values(
        spec.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)),
        spec.y_log,
    );

    // Frame.
    out.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n",
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(plot_w),
        fmt(plot_h)
    ));

    let (x_axis, y_axis) = match (x_axis, y_axis) {
        (Some(x), Some(y)) => (x, y),
        _ => {
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"15\" fill=\"#a00\" text-anchor=\"middle\">no plottable data</text>\n",
                fmt(MARGIN_L + plot_w / 2.0),
                fmt(MARGIN_T + plot_h / 2.0)
            ));
            out.push_str("</svg>\n");
            return Ok(out);
        }
    };

    for t in x_axis.ticks() {
        if let Some(u) = x_axis.to_unit(t) {
            let x = px(u);
            out.push_str(&format!(
                "<line x1=\"{x}\" y1=\"{y1}\" x2=\"{x}\" y2=\"{y2}\" stroke=\"#ccc\" stroke-width=\"0.5\"/>\n",
                x = fmt(x),
                y1 = fmt(MARGIN_T),
                y2 = fmt(HEIGHT - MARGIN_B)
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
                fmt(x),
                fmt(HEIGHT - MARGIN_B + 18.0),
                tick_label(t)
            ));
        }
    }
    for t in y_axis.ticks() {
        if let Some(u) = y_axis.to_unit(t) {
            let y = py(u);
            out.push_str(&format!(
                "<line x1=\"{x1}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"#ccc\" stroke-width=\"0.5\"/>\n",
                y = fmt(y),
                x1 = fmt(MARGIN_L),
                x2 = fmt(WIDTH - MARGIN_R)
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
                fmt(MARGIN_L - 6.0),
                fmt(y + 4.0),
                tick_label(t)
            ));
        }
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        fmt(MARGIN_L + plot_w / 2.0),
        fmt(HEIGHT - 12.0),
        xml_escape(&spec.x_label)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        fmt(MARGIN_T + plot_h / 2.0),
        fmt(MARGIN_T + plot_h / 2.0),
        xml_escape(&spec.y_label)
    ));

    for (si, series) in spec.series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let coords: Vec<(f64, f64, f64)> = series
            .points
            .iter()
            .enumerate()
            .filter_map(|(i, &(x, y))| {
                let ux = x_axis.to_unit(x)?;
                let uy = y_axis.to_unit(y)?;
                let band = series.band.as_ref().map_or(0.0, |b| b[i]);
                Some((px(ux), py(uy), band))
            })
            .collect();
        if coords.is_empty() {
            continue;
        }
        if series.style == SeriesStyle::LineWithBand && series.band.is_some() {
            // Band rendered as error bars (keeps the file small and exact).
            for (i, &(x, y, b)) in coords.iter().enumerate() {
                let raw = series.points[i].1;
                let (lo, hi) = (raw - b, raw + b);
                if let (Some(ulo), Some(uhi)) = (y_axis.to_unit(lo), y_axis.to_unit(hi)) {
                    out.push_str(&format!(
                        "<line x1=\"{x}\" y1=\"{y1}\" x2=\"{x}\" y2=\"{y2}\" stroke=\"{color}\" stroke-width=\"1\" opacity=\"0.6\"/>\n",
                        x = fmt(x),
                        y1 = fmt(py(ulo)),
                        y2 = fmt(py(uhi))
                    ));
                }
                let _ = y;
            }
        }
        match series.style {
            SeriesStyle::Line | SeriesStyle::LineWithBand => {
                let path: Vec<String> = coords
                    .iter()
                    .enumerate()
                    .map(|(i, &(x, y, _))| {
                        format!("{}{},{}", if i == 0 { "M" } else { "L" }, fmt(x), fmt(y))
                    })
                    .collect();
                out.push_str(&format!(
                    "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                    path.join(" ")
                ));
            }
            SeriesStyle::Markers => {
                for &(x, y, _) in &coords {
                    out.push_str(&format!(
                        "<path d=\"M{x0},{y0} L{x1},{y1} M{x0},{y1} L{x1},{y0}\" stroke=\"{color}\" stroke-width=\"1.4\" fill=\"none\"/>\n",
                        x0 = fmt(x - 3.5),
                        x1 = fmt(x + 3.5),
                        y0 = fmt(y - 3.5),
                        y1 = fmt(y + 3.5)
                    ));
                }
            }
        }
        // Legend entry.
        let ly = MARGIN_T + 16.0 + 20.0 * si as f64;
        out.push_str(&format!(
            "<line x1=\"{x1}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            x1 = fmt(WIDTH - MARGIN_R + 12.0),
            x2 = fmt(WIDTH - MARGIN_R + 34.0),
            y = fmt(ly)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            fmt(WIDTH - MARGIN_R + 40.0),
            fmt(ly + 4.0),
            xml_escape(&series.label)
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Parsed CSV with a comment header skipped.
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn parse_csv(text: &str) -> Result<CsvTable> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = match lines.next() {
        Some(h) => h,
        None => bail!("empty CSV"),
    };
    let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|s| s.trim().to_string()).collect())
        .collect();
    Ok(CsvTable { columns, rows })
}

impl CsvTable {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| anyhow::anyhow!("CSV is missing required column `{name}`"))
    }

    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.column_index(name)?;
        self.rows
            .iter()
            .map(|r| {
                r.get(idx)
                    .ok_or_else(|| anyhow::anyhow!("short row in CSV"))
                    .and_then(|s| s.parse::<f64>().map_err(|e| anyhow::anyhow!("bad float: {e}")))
            })
            .collect()
    }

    pub fn string_column(&self, name: &str) -> Result<Vec<String>> {
        let idx = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[idx].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_byte_stable() {
        let spec = PlotSpec {
            title: "demo".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            x_log: true,
            y_log: false,
            series: vec![Series {
                label: "a".into(),
                points: vec![(0.1, 0.5), (1.0, 0.25), (10.0, 0.125)],
                band: None,
                style: SeriesStyle::Line,
            }],
        };
        assert_eq!(render(&spec).unwrap(), render(&spec).unwrap());
    }

    #[test]
    fn empty_input_yields_warning_svg() {
        let spec = PlotSpec {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            x_log: false,
            y_log: false,
            series: vec![],
        };
        let svg = render(&spec).unwrap();
        assert!(svg.contains("no plottable data"));
    }
}
