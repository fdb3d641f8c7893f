//! Minimal SVG line charts.
//!
//! Each series is drawn as a polyline that also carries its raw values in
//! `data-x` / `data-y` attributes, so the numbers can be read back without
//! rendering anything.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Horizontal reference lines, e.g. the flood line.
    pub rules: Vec<(String, f64)>,
}

fn join(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" ")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl Chart {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let xs = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
        let ys = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .chain(self.rules.iter().map(|r| r.1));
        let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
        let widen = |lo: f64, hi: f64| {
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = if x0.is_finite() && x1 > x0 { (x0, x1) } else { widen(x0, x1) };
        let (y0, y1) = widen(y0, y1);
        (x0, x1, y0, y1)
    }

    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(svg, "<title>{}</title>", escape(&self.title));
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<g stroke="black" fill="none"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{m}" x2="{m}" y2="{b}"/></g>"#,
            m = MARGIN,
            b = HEIGHT - MARGIN,
            r = WIDTH - MARGIN
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        for (label, y) in &self.rules {
            let _ = writeln!(
                svg,
                r#"<line class="rule" data-label="{}" data-y="{y:.6}" x1="{MARGIN}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
                escape(label),
                WIDTH - MARGIN,
                py = sy(*y)
            );
        }
        for (i, s) in self.series.iter().enumerate() {
            let points: Vec<String> = s
                .points
                .iter()
                .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-name="{}" data-x="{}" data-y="{}" points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                escape(&s.name),
                join(s.points.iter().map(|p| p.0)),
                join(s.points.iter().map(|p| p.1)),
                points.join(" "),
                COLOURS[i % COLOURS.len()]
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-size="11" fill="{}">{}</text>"#,
                WIDTH - MARGIN - 120.0,
                MARGIN + 14.0 * i as f64,
                COLOURS[i % COLOURS.len()],
                escape(&s.name)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Pull the `data-y` values of a named series back out of rendered SVG.
pub fn series_values(svg: &str, name: &str) -> Option<Vec<f64>> {
    let marker = format!(r#"data-name="{}""#, escape(name));
    let line = svg.lines().find(|l| l.contains(&marker))?;
    let start = line.find(r#"data-y=""#)? + 8;
    let end = start + line[start..].find('"')?;
    line[start..end]
        .split_whitespace()
        .map(|v| v.parse().ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_survive_rendering() {
        let chart = Chart {
            title: "levels".into(),
            x_label: "t".into(),
            y_label: "m".into(),
            series: vec![
                Series::new("observed", vec![(0.0, 1.25), (1.0, 2.5)]),
                Series::new("predicted", vec![(0.0, 1.0), (1.0, 2.0)]),
            ],
            rules: vec![("flood line".into(), 25.0)],
        };
        let svg = chart.render();
        assert_eq!(series_values(&svg, "observed").unwrap(), vec![1.25, 2.5]);
        assert_eq!(series_values(&svg, "predicted").unwrap(), vec![1.0, 2.0]);
        assert!(svg.contains(r#"data-y="25.000000""#));
    }

    #[test]
    fn empty_chart_renders() {
        let chart = Chart {
            title: "none".into(),
            x_label: String::new(),
            y_label: String::new(),
            series: vec![Series::new("e", Vec::new())],
            rules: Vec::new(),
        };
        assert!(chart.render().ends_with("</svg>\n"));
    }
}
