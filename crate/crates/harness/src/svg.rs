//! Minimal self-contained SVG line plots.
//!
//! Single-file output with no external renderer dependencies; the plotted
//! data is embedded as an XML comment so a plot can be re-read or re-plotted
//! without the source CSVs.

use std::fmt::Write;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 55.0;
const MARGIN_B: f64 = 55.0;

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    } * mag;
    let start = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut v = start;
    while v <= hi + step * 1e-9 {
        ticks.push(v);
        v += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v}")
    }
}

/// Render a line plot. `top_axis` adds a second x-axis along the top whose
/// tick values are `scale` times the bottom ones (the sample-count view of
/// an epoch axis, k = n * t).
pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    top_axis: Option<(&str, f64)>,
) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            xs.push(x);
            ys.push(y);
        }
    }
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = pad_bounds(bounds(&ys));
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = move |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo).max(1e-12) * plot_w;
    let sy = move |y: f64| MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo).max(1e-12) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<!-- data");
    for s in series {
        let pts: Vec<String> = s.points.iter().map(|(x, y)| format!("{x},{y}")).collect();
        let _ = writeln!(out, "{}: {}", s.name.replace("--", "- -"), pts.join(" "));
    }
    let _ = writeln!(out, "-->");
    let _ = writeln!(
        out,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"15\" font-weight=\"bold\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );

    // Frame.
    let _ = writeln!(
        out,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#333\"/>"
    );

    for tick in nice_ticks(x_lo, x_hi, 6) {
        let px = sx(tick);
        let _ = writeln!(
            out,
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"#ddd\"/>",
            MARGIN_T,
            MARGIN_T + plot_h
        );
        let _ = writeln!(
            out,
            "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            MARGIN_T + plot_h + 18.0,
            fmt_tick(tick)
        );
        if let Some((_, scale)) = top_axis {
            let _ = writeln!(
                out,
                "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\" fill=\"#555\">{}</text>",
                MARGIN_T - 8.0,
                fmt_tick(tick * scale)
            );
        }
    }
    for tick in nice_ticks(y_lo, y_hi, 5) {
        let py = sy(tick);
        let _ = writeln!(
            out,
            "<line x1=\"{MARGIN_L}\" y1=\"{py}\" x2=\"{}\" y2=\"{py}\" stroke=\"#ddd\"/>",
            MARGIN_L + plot_w
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            MARGIN_L - 6.0,
            py + 4.0,
            fmt_tick(tick)
        );
    }

    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    );
    if let Some((label, _)) = top_axis {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"#555\">{}</text>",
            MARGIN_L + plot_w / 2.0,
            MARGIN_T - 28.0,
            escape(label)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if pts.len() == 1 {
            let _ = writeln!(
                out,
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>",
                sx(s.points[0].0),
                sy(s.points[0].1)
            );
        } else if !pts.is_empty() {
            let _ = writeln!(
                out,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\" points=\"{}\"/>",
                pts.join(" ")
            );
        }
        // Legend.
        let ly = MARGIN_T + 14.0 + i as f64 * 16.0;
        let lx = MARGIN_L + plot_w - 150.0;
        let _ = writeln!(
            out,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            lx + 22.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\">{}</text>",
            lx + 28.0,
            ly + 4.0,
            escape(&s.name)
        );
    }

    out.push_str("</svg>\n");
    out
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn pad_bounds((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_contains_series_and_axes() {
        let series = vec![
            Series {
                name: "vanilla".into(),
                points: (1..=10).map(|t| (t as f64, (t as f64).sqrt())).collect(),
            },
            Series {
                name: "ucb-con".into(),
                points: (1..=10).map(|t| (t as f64, t as f64 / 2.0)).collect(),
            },
        ];
        let svg = line_plot("solved", "epoch", "fraction", &series, Some(("k = n*t", 8.0)));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("vanilla"));
        assert!(svg.contains("ucb-con"));
        assert!(svg.contains("<!-- data"));
        assert!(svg.contains("k = n*t"));
    }

    #[test]
    fn ticks_are_monotone_and_inside() {
        let ticks = nice_ticks(0.0, 197.0, 6);
        assert!(ticks.windows(2).all(|w| w[1] > w[0]));
        assert!(ticks.iter().all(|&t| (0.0..=197.0 + 1e-9).contains(&t)));
        assert!(ticks.len() >= 3);
    }
}
