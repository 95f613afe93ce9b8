//! Minimal static SVG renderings: line plots and heatmaps. No interactivity,
//! no external renderer.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;

fn axis_bounds(vals: &[f64]) -> (f64, f64) {
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.06 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    series: Vec<(String, Vec<(f64, f64)>, &'static str)>,
}

const PALETTE: [&str; 5] = ["#1f6eb4", "#d2542c", "#3d8f4e", "#8254a0", "#777777"];

impl LinePlot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        LinePlot {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            log_x: false,
            series: Vec::new(),
        }
    }

    pub fn log_x(mut self) -> Self {
        self.log_x = true;
        self
    }

    pub fn add(&mut self, name: &str, points: Vec<(f64, f64)>) {
        let color = PALETTE[self.series.len() % PALETTE.len()];
        self.series.push((name.to_string(), points, color));
    }

    pub fn render(&self) -> String {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (_, pts, _) in &self.series {
            for &(x, y) in pts {
                xs.push(if self.log_x { x.log10() } else { x });
                ys.push(y);
            }
        }
        let (x0, x1) = axis_bounds(&xs);
        let (y0, y1) = axis_bounds(&ys);
        let map_x = |x: f64| {
            let x = if self.log_x { x.log10() } else { x };
            MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN)
        };
        let map_y = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
        );
        let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>",
            W / 2.0,
            self.title
        );
        // Axes.
        let _ = writeln!(
            s,
            "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>",
            m = MARGIN,
            b = H - MARGIN,
            r = W - MARGIN,
            t = MARGIN
        );
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let px = MARGIN + (W - 2.0 * MARGIN) * i as f64 / 4.0;
            let py = H - MARGIN - (H - 2.0 * MARGIN) * i as f64 / 4.0;
            let label_x = if self.log_x {
                format!("{:.3}", 10f64.powf(fx))
            } else {
                format!("{fx:.3}")
            };
            let _ = writeln!(
                s,
                "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{label_x}</text>",
                H - MARGIN + 18.0
            );
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{py}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{fy:.3}</text>",
                MARGIN - 8.0
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            W / 2.0,
            H - 12.0,
            self.x_label
        );
        let _ = writeln!(
            s,
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 {})\">{}</text>",
            H / 2.0,
            H / 2.0,
            self.y_label
        );
        for (si, (name, pts, color)) in self.series.iter().enumerate() {
            let mut path = String::new();
            for (i, &(x, y)) in pts.iter().enumerate() {
                let _ = write!(
                    path,
                    "{}{:.2},{:.2} ",
                    if i == 0 { "M" } else { "L" },
                    map_x(x),
                    map_y(y)
                );
            }
            let _ = writeln!(
                s,
                "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>"
            );
            for &(x, y) in pts {
                let _ = writeln!(
                    s,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.6\" fill=\"{color}\"/>",
                    map_x(x),
                    map_y(y)
                );
            }
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{name}</text>",
                W - MARGIN - 150.0,
                MARGIN + 16.0 * (si as f64 + 1.0)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Render a matrix as colored cells with an optional overlay curve.
pub struct HeatMap {
    pub title: String,
    pub x_ticks: Vec<f64>,
    pub y_ticks: Vec<f64>,
    /// Row-major values, rows indexed by y.
    pub values: Vec<Vec<f64>>,
    pub overlay: Option<Vec<(f64, f64)>>,
}

impl HeatMap {
    pub fn render(&self) -> String {
        let (nx, ny) = (self.x_ticks.len(), self.y_ticks.len());
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &self.values {
            for &v in row {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if lo == hi {
            hi = lo + 1.0;
        }
        let (x0, x1) = axis_bounds(&self.x_ticks);
        let (y0, y1) = axis_bounds(&self.y_ticks);
        let map_x = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
        let map_y = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
        );
        let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{} (range {:.4} to {:.4})</text>",
            W / 2.0,
            self.title,
            lo,
            hi
        );
        let cw = (W - 2.0 * MARGIN) / nx as f64;
        let ch = (H - 2.0 * MARGIN) / ny as f64;
        for (j, row) in self.values.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                let frac = (v - lo) / (hi - lo);
                let r = (255.0 * frac) as u8;
                let b = (255.0 * (1.0 - frac)) as u8;
                let g = 64u8;
                let x = MARGIN + i as f64 * cw;
                let y = H - MARGIN - (j as f64 + 1.0) * ch;
                let _ = writeln!(
                    s,
                    "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cw:.2}\" height=\"{ch:.2}\" fill=\"rgb({r},{g},{b})\"/>"
                );
            }
        }
        for (i, &x) in self.x_ticks.iter().enumerate() {
            let px = MARGIN + (i as f64 + 0.5) * cw;
            let _ = writeln!(
                s,
                "<text x=\"{px:.1}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{x:.2}</text>",
                H - MARGIN + 18.0
            );
        }
        for (j, &y) in self.y_ticks.iter().enumerate() {
            let py = H - MARGIN - (j as f64 + 0.5) * ch;
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{py:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{y:.2}</text>",
                MARGIN - 8.0
            );
        }
        if let Some(curve) = &self.overlay {
            let mut path = String::new();
            let mut started = false;
            for &(x, y) in curve {
                if x < x0 || x > x1 || y < y0 || y > y1 {
                    continue;
                }
                let _ = write!(
                    path,
                    "{}{:.2},{:.2} ",
                    if started { "L" } else { "M" },
                    map_x(x),
                    map_y(y)
                );
                started = true;
            }
            let _ = writeln!(
                s,
                "<path d=\"{path}\" fill=\"none\" stroke=\"white\" stroke-width=\"2.2\" stroke-dasharray=\"6 3\"/>"
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
    fn line_plot_renders() {
        let mut p = LinePlot::new("demo", "x", "y");
        p.add("a", vec![(1.0, 2.0), (2.0, 3.0), (3.0, 2.5)]);
        let svg = p.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("</svg>"));
        assert!(svg.contains("demo"));
    }

    #[test]
    fn heatmap_renders() {
        let h = HeatMap {
            title: "grid".to_string(),
            x_ticks: vec![0.1, 0.2],
            y_ticks: vec![1.0, 2.0],
            values: vec![vec![0.0, 1.0], vec![0.5, 0.25]],
            overlay: Some(vec![(0.1, 1.0), (0.2, 2.0)]),
        };
        let svg = h.render();
        assert!(svg.contains("rect"));
        assert!(svg.contains("stroke-dasharray"));
    }
}
