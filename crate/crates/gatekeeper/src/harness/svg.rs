//! Minimal deterministic SVG line charts: polylines, min-max bands,
//! reference lines, axes with ticks, and a legend. No timestamps, no
//! randomness; byte-identical output for identical input.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 58.0;

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    /// SVG dash pattern, e.g. "6,4"; empty for solid.
    pub dash: String,
    pub width: f64,
}

#[derive(Debug, Clone)]
pub struct Band {
    pub xs: Vec<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub color: String,
    pub opacity: f64,
}

#[derive(Debug, Clone)]
pub struct HLine {
    pub y: f64,
    pub label: String,
    pub color: String,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub bands: Vec<Band>,
    pub series: Vec<Series>,
    pub hlines: Vec<HLine>,
}

fn fmt(v: f64) -> String {
    // fixed-precision then trimmed, so coordinates are stable bytes
    let s = format!("{v:.2}");
    s
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            x_range: (0.0, 1.0),
            y_range: (0.0, 1.0),
            bands: Vec::new(),
            series: Vec::new(),
            hlines: Vec::new(),
        }
    }

    fn x_to_px(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        MARGIN_LEFT + (x - lo) / (hi - lo) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y_to_px(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        HEIGHT - MARGIN_BOTTOM - (y - lo) / (hi - lo) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    /// Set ranges from the data with 5% padding, keeping degenerate spans
    /// usable.
    pub fn auto_ranges(&mut self) {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                xs.push(x);
                ys.push(y);
            }
        }
        for b in &self.bands {
            xs.extend(&b.xs);
            ys.extend(&b.low);
            ys.extend(&b.high);
        }
        for h in &self.hlines {
            ys.push(h.y);
        }
        let span = |vals: &[f64]| -> (f64, f64) {
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() || !hi.is_finite() {
                return (0.0, 1.0);
            }
            if (hi - lo).abs() < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        self.x_range = span(&xs);
        self.y_range = span(&ys);
    }

    pub fn render(&self) -> String {
        let mut s = String::with_capacity(8192);
        s.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        s.push_str(&format!(
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"15\" font-weight=\"bold\">{}</text>\n",
            fmt(WIDTH / 2.0),
            escape(&self.title)
        ));

        // plot frame
        let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" \
             stroke=\"#444444\" stroke-width=\"1\"/>\n",
            fmt(x0),
            fmt(y1),
            fmt(x1 - x0),
            fmt(y0 - y1)
        ));

        // ticks and grid
        for k in 0..=4 {
            let fx = self.x_range.0 + (self.x_range.1 - self.x_range.0) * k as f64 / 4.0;
            let px = self.x_to_px(fx);
            s.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#dddddd\" \
                 stroke-width=\"1\"/>\n",
                fmt(px),
                fmt(y0),
                fmt(y1)
            ));
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
                 font-size=\"11\">{}</text>\n",
                fmt(px),
                fmt(y0 + 18.0),
                fmt_tick(fx)
            ));
            let fy = self.y_range.0 + (self.y_range.1 - self.y_range.0) * k as f64 / 4.0;
            let py = self.y_to_px(fy);
            s.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#dddddd\" \
                 stroke-width=\"1\"/>\n",
                fmt(x0),
                fmt(py),
                fmt(x1)
            ));
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" \
                 font-size=\"11\">{}</text>\n",
                fmt(x0 - 6.0),
                fmt(py + 4.0),
                fmt_tick(fy)
            ));
        }

        // axis labels
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"13\">{}</text>\n",
            fmt((x0 + x1) / 2.0),
            fmt(HEIGHT - 14.0),
            escape(&self.x_label)
        ));
        s.push_str(&format!(
            "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"13\" transform=\"rotate(-90 18 {})\">{}</text>\n",
            fmt((y0 + y1) / 2.0),
            fmt((y0 + y1) / 2.0),
            escape(&self.y_label)
        ));

        for band in &self.bands {
            if band.xs.is_empty() {
                continue;
            }
            let mut points = String::new();
            for (x, y) in band.xs.iter().zip(&band.high) {
                points.push_str(&format!("{},{} ", fmt(self.x_to_px(*x)), fmt(self.y_to_px(*y))));
            }
            for (x, y) in band.xs.iter().rev().zip(band.low.iter().rev()) {
                points.push_str(&format!("{},{} ", fmt(self.x_to_px(*x)), fmt(self.y_to_px(*y))));
            }
            s.push_str(&format!(
                "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"{}\" stroke=\"none\"/>\n",
                points.trim_end(),
                band.color,
                band.opacity
            ));
        }

        for hline in &self.hlines {
            let py = self.y_to_px(hline.y);
            s.push_str(&format!(
                "<line x1=\"{}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" \
                 stroke-width=\"1.5\" stroke-dasharray=\"7,4\"/>\n",
                fmt(x0),
                fmt(py),
                fmt(x1),
                hline.color
            ));
        }

        for series in &self.series {
            if series.points.is_empty() {
                continue;
            }
            let points: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", fmt(self.x_to_px(x)), fmt(self.y_to_px(y))))
                .collect();
            let dash = if series.dash.is_empty() {
                String::new()
            } else {
                format!(" stroke-dasharray=\"{}\"", series.dash)
            };
            s.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"{}/>\n",
                points.join(" "),
                series.color,
                series.width,
                dash
            ));
            for p in &points {
                let (px, py) = p.split_once(',').unwrap();
                s.push_str(&format!(
                    "<circle cx=\"{px}\" cy=\"{py}\" r=\"2.5\" fill=\"{}\"/>\n",
                    series.color
                ));
            }
        }

        // legend, top-right inside the frame
        let mut legend_y = y1 + 16.0;
        for entry in self
            .series
            .iter()
            .map(|s| (s.label.clone(), s.color.clone(), s.dash.clone()))
            .chain(self.hlines.iter().map(|h| (h.label.clone(), h.color.clone(), "7,4".into())))
        {
            let (label, color, dash) = entry;
            if label.is_empty() {
                continue;
            }
            let lx = x1 - 150.0;
            let dash_attr =
                if dash.is_empty() { String::new() } else { format!(" stroke-dasharray=\"{dash}\"") };
            s.push_str(&format!(
                "<line x1=\"{}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" \
                 stroke-width=\"2\"{4}/>\n",
                fmt(lx),
                fmt(legend_y),
                fmt(lx + 26.0),
                color,
                dash_attr
            ));
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                fmt(lx + 32.0),
                fmt(legend_y + 4.0),
                escape(&label)
            ));
            legend_y += 16.0;
        }

        s.push_str("</svg>\n");
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_chart() -> Chart {
        let mut chart = Chart::new("demo", "x", "y");
        chart.series.push(Series {
            label: "median".into(),
            points: vec![(0.1, 0.3), (0.5, 0.8), (0.9, 0.6)],
            color: "#1f77b4".into(),
            dash: String::new(),
            width: 2.0,
        });
        chart.bands.push(Band {
            xs: vec![0.1, 0.5, 0.9],
            low: vec![0.2, 0.7, 0.5],
            high: vec![0.4, 0.9, 0.7],
            color: "#1f77b4".into(),
            opacity: 0.2,
        });
        chart.hlines.push(HLine { y: 0.5, label: "baseline".into(), color: "#888888".into() });
        chart.auto_ranges();
        chart
    }

    #[test]
    fn render_is_deterministic() {
        let a = sample_chart().render();
        let b = sample_chart().render();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("polyline"));
        assert!(a.contains("polygon"));
        assert!(a.ends_with("</svg>\n"));
    }

    #[test]
    fn escape_handles_markup() {
        assert_eq!(escape("a<b&c>d"), "a&lt;b&amp;c&gt;d");
    }
}
