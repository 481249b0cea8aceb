//! Minimal static SVG line charts.

use std::fmt::Write as _;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
/// Points drawn per series at most; longer series are strided.
const MAX_POINTS: usize = 1200;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: Option<String>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Self { label: Some(label.into()), xs, ys, dashed: false }
    }

    pub fn unlabeled(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Self { label: None, xs, ys, dashed: false }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
    pub series: Vec<Series>,
}

struct Axis {
    scale: Scale,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(scale: Scale, values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|&v| usable(scale, v)) {
            let v = if scale == Scale::Log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if scale == Scale::Log {
            lo = lo.floor();
            hi = hi.ceil();
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
            lo -= pad;
            hi += pad;
        }
        Self { scale, lo, hi }
    }

    /// Position of `v` in `[0, 1]`.
    fn unit(&self, v: f64) -> f64 {
        let v = if self.scale == Scale::Log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        match self.scale {
            Scale::Log => {
                let span = (self.hi - self.lo).round() as i64;
                let every = (span / 8 + 1).max(1);
                (self.lo as i64..=self.hi as i64)
                    .filter(|e| (e - self.lo as i64) % every == 0)
                    .map(|e| (10f64.powi(e as i32), format!("1e{e}")))
                    .collect()
            }
            Scale::Linear => {
                let raw = (self.hi - self.lo) / 6.0;
                let mag = 10f64.powf(raw.log10().floor());
                let step = [1.0, 2.0, 5.0, 10.0]
                    .iter()
                    .map(|m| m * mag)
                    .find(|&s| s >= raw)
                    .unwrap_or(10.0 * mag);
                let digits = (-step.log10().floor()).max(0.0) as usize;
                let first = (self.lo / step).ceil() as i64;
                let last = (self.hi / step).floor() as i64;
                (first..=last)
                    .map(|i| {
                        let v = i as f64 * step;
                        (v, format!("{v:.digits$}"))
                    })
                    .collect()
            }
        }
    }
}

fn usable(scale: Scale, v: f64) -> bool {
    v.is_finite() && (scale == Scale::Linear || v > 0.0)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_scale: Scale::Linear,
            y_scale: Scale::Log,
            series: Vec::new(),
        }
    }

    pub fn scales(mut self, x: Scale, y: Scale) -> Self {
        self.x_scale = x;
        self.y_scale = y;
        self
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    pub fn render(&self) -> String {
        let x_axis = Axis::fit(self.x_scale, self.series.iter().flat_map(|s| s.xs.iter().copied()));
        let y_axis = Axis::fit(self.y_scale, self.series.iter().flat_map(|s| s.ys.iter().copied()));
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let px = |v: f64| LEFT + x_axis.unit(v) * pw;
        let py = |v: f64| TOP + (1.0 - y_axis.unit(v)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        for (v, label) in x_axis.ticks() {
            let x = px(v);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"##,
                TOP + ph,
                TOP + ph + 18.0
            );
        }
        for (v, label) in y_axis.ticks() {
            let y = py(v);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let many = self.series.len() > PALETTE.len();
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let width = if many { 0.6 } else { 1.6 };
            let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let stride = series.xs.len().div_ceil(MAX_POINTS).max(1);
            let mut runs: Vec<String> = Vec::new();
            let mut current = String::new();
            let last = series.xs.len().saturating_sub(1);
            for (k, (&x, &y)) in series.xs.iter().zip(&series.ys).enumerate() {
                if k % stride != 0 && k != last {
                    continue;
                }
                if usable(self.x_scale, x) && usable(self.y_scale, y) {
                    let _ = write!(current, "{:.2},{:.2} ", px(x), py(y));
                } else if !current.is_empty() {
                    runs.push(std::mem::take(&mut current));
                }
            }
            if !current.is_empty() {
                runs.push(current);
            }
            for run in runs {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="{width}"{dash} points="{}"/>"#,
                    run.trim_end()
                );
            }
        }

        let labeled: Vec<(usize, &str)> = self
            .series
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.label.as_deref().map(|l| (i, l)))
            .collect();
        for (row, (i, label)) in labeled.iter().enumerate() {
            let y = TOP + 12.0 + row as f64 * 18.0;
            let x = LEFT + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                x + 22.0,
                PALETTE[i % PALETTE.len()],
                x + 28.0,
                y + 4.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_document() {
        let xs: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|t| (-t).exp()).collect();
        let svg = Plot::new("decay <a&b>", "t", "E|X|^2").with(Series::new("ms", xs, ys)).render();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("decay &lt;a&amp;b&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("1e0") && svg.contains("1e-2"));
    }

    #[test]
    fn nonpositive_points_break_log_lines() {
        let svg = Plot::new("t", "x", "y")
            .with(Series::unlabeled(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 0.0, 3.0, 4.0]))
            .render();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn empty_plot_still_renders() {
        let svg = Plot::new("empty", "x", "y").scales(Scale::Log, Scale::Log).render();
        assert!(svg.contains("</svg>"));
    }
}
