//! Self-contained SVG heatmaps and line plots.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlotError {
    #[error("invalid plot: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Heatmap,
    Lines,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Color scale bounds for heatmaps; ignored by line plots.
    pub color_min: f64,
    pub color_max: f64,
}

impl PlotSpec {
    pub fn heatmap(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            kind: PlotKind::Heatmap,
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            color_min: 0.0,
            color_max: 1.0,
        }
    }

    pub fn lines(title: &str, x_label: &str, y_label: &str) -> Self {
        Self { kind: PlotKind::Lines, ..Self::heatmap(title, x_label, y_label) }
    }

    pub fn validate(&self) -> Result<(), PlotError> {
        if !(self.color_min < self.color_max) || !self.color_min.is_finite() || !self.color_max.is_finite() {
            return Err(PlotError::Invalid(format!(
                "color bounds must be ordered, got [{}, {}]",
                self.color_min, self.color_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// Vertical marker line at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub x: f64,
    pub label: String,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 110.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return None;
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

fn header(o: &mut String, spec: &PlotSpec, config_hash: &str) {
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(o, "<!-- config_sha256={config_hash} -->");
    let _ = writeln!(o, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        o,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        escape(&spec.title)
    );
}

fn axes(o: &mut String, spec: &PlotSpec, f: &Frame) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(o, r#"<rect x="{x0}" y="{y0}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = writeln!(o, r#"<line x1="{px:.1}" y1="{y1}" x2="{px:.1}" y2="{:.1}" stroke="black"/>"#, y1 + 5.0);
        let _ = writeln!(o, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y1 + 18.0, tick(xv));
        let _ = writeln!(o, r#"<line x1="{:.1}" y1="{py:.1}" x2="{x0}" y2="{py:.1}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(o, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 8.0, py + 4.0, tick(yv));
    }
    let _ = writeln!(
        o,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 18.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        o,
        r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(&spec.y_label)
    );
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-2..1e4).contains(&a) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Perceptually ordered dark-blue to yellow ramp.
fn color(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] =
        [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let u = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + u * (q - p)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Axis edges for cells centered on `centers`.
fn edges(centers: &[f64]) -> Vec<f64> {
    match centers.len() {
        0 => Vec::new(),
        1 => vec![centers[0] - 0.5, centers[0] + 0.5],
        n => {
            let mut e = Vec::with_capacity(n + 1);
            e.push(centers[0] - 0.5 * (centers[1] - centers[0]));
            for w in centers.windows(2) {
                e.push(0.5 * (w[0] + w[1]));
            }
            e.push(centers[n - 1] + 0.5 * (centers[n - 1] - centers[n - 2]));
            e
        }
    }
}

/// Heatmap of `values[i][j]` at `(xs[i], ys[j])`; missing cells are gray.
pub fn heatmap(
    spec: &PlotSpec,
    xs: &[f64],
    ys: &[f64],
    values: &[Vec<Option<f64>>],
    config_hash: &str,
) -> Result<String, PlotError> {
    spec.validate()?;
    if xs.is_empty() || ys.is_empty() || values.len() != xs.len() || values.iter().any(|r| r.len() != ys.len()) {
        return Err(PlotError::Invalid("matrix dimensions do not match axes".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(PlotError::Invalid("heatmap axes must be finite".into()));
    }
    let (ex, ey) = (edges(xs), edges(ys));
    let f = Frame { x: (ex[0], ex[xs.len()]), y: (ey[0], ey[ys.len()]) };
    let mut o = String::new();
    header(&mut o, spec, config_hash);
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let (x0, x1) = (f.px(ex[i]), f.px(ex[i + 1]));
            let (y0, y1) = (f.py(ey[j + 1]), f.py(ey[j]));
            let fill = match v {
                Some(v) if v.is_finite() => color((v - spec.color_min) / (spec.color_max - spec.color_min)),
                _ => "#bbbbbb".to_string(),
            };
            let _ = writeln!(
                o,
                r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                x1 - x0 + 0.3,
                y1 - y0 + 0.3
            );
        }
    }
    axes(&mut o, spec, &f);
    // color bar
    let (bx, bw, by0, by1) = (WIDTH - RIGHT + 20.0, 16.0, TOP, HEIGHT - BOTTOM);
    let steps = 50;
    for k in 0..steps {
        let t = (k as f64 + 0.5) / steps as f64;
        let y = by1 - (k + 1) as f64 / steps as f64 * (by1 - by0);
        let _ = writeln!(
            o,
            r#"<rect x="{bx}" y="{y:.2}" width="{bw}" height="{:.2}" fill="{}"/>"#,
            (by1 - by0) / steps as f64 + 0.3,
            color(t)
        );
    }
    let _ = writeln!(o, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, bx + bw + 4.0, by0 + 4.0, tick(spec.color_max));
    let _ = writeln!(o, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, bx + bw + 4.0, by1 + 4.0, tick(spec.color_min));
    o.push_str("</svg>\n");
    Ok(o)
}

/// Line plot of `series` with optional vertical markers.
pub fn line_plot(spec: &PlotSpec, series: &[Series], markers: &[Marker], config_hash: &str) -> Result<String, PlotError> {
    spec.validate()?;
    if series.iter().any(|s| s.xs.len() != s.ys.len()) {
        return Err(PlotError::Invalid("series x and y lengths differ".into()));
    }
    let xr = range(series.iter().flat_map(|s| s.xs.iter().copied()).chain(markers.iter().map(|m| m.x)))
        .ok_or_else(|| PlotError::Invalid("no finite x values".into()))?;
    let yr = range(series.iter().flat_map(|s| s.ys.iter().copied()))
        .ok_or_else(|| PlotError::Invalid("no finite y values".into()))?;
    let f = Frame { x: xr, y: yr };
    let mut o = String::new();
    header(&mut o, spec, config_hash);
    for m in markers {
        let px = f.px(m.x);
        let _ = writeln!(
            o,
            r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.1}" stroke="#999999" stroke-dasharray="4 3"/>"##,
            HEIGHT - BOTTOM
        );
        let _ = writeln!(o, r##"<text x="{:.2}" y="{:.1}" font-size="10" fill="#555555">{}</text>"##, px + 2.0, TOP + 12.0, escape(&m.label));
    }
    for (k, s) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        let mut pen_down = false;
        for (x, y) in s.xs.iter().zip(&s.ys) {
            if !(x.is_finite() && y.is_finite()) {
                pen_down = false;
                continue;
            }
            let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { 'L' } else { 'M' }, f.px(*x), f.py(*y));
            pen_down = true;
        }
        let _ = writeln!(o, r#"<path d="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, d.trim_end());
        let ly = TOP + 16.0 * (k as f64 + 1.0);
        let lx = WIDTH - RIGHT + 10.0;
        let _ = writeln!(o, r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{c}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(o, r#"<text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#, lx + 22.0, ly + 4.0, escape(&s.name));
    }
    axes(&mut o, spec, &f);
    o.push_str("</svg>\n");
    Ok(o)
}
