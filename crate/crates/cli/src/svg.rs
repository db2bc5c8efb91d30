//! Static SVG rendering of the summary tables. Display-only output: every
//! number plotted comes straight from the aggregation CSVs, and the byte
//! stream is deterministic for fixed input.

/// One plotted series: label plus (x, y, optional half-width of an error
/// bar) triples.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64, Option<f64>)>,
}

const PALETTE: [&str; 8] = [
    "#1b6ca8", "#c23b22", "#2e8b57", "#8a4fa8", "#c78a00", "#4a6274", "#a83268", "#4f7942",
];

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 190.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 60.0;

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN_L + (v - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN_B
            - (v - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn axis_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| span / s <= 7.0)
        .unwrap_or(mag * 10.0);
    let first = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut v = first;
    while v <= hi + 1e-9 {
        ticks.push(if v.abs() < 1e-12 { 0.0 } else { v });
        v += step;
    }
    ticks
}

fn frame_for(series: &[Series], y_floor: Option<f64>, y_ceil: Option<f64>) -> Frame {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y, e) in &s.points {
            let half = e.unwrap_or(0.0);
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y - half);
            y_max = y_max.max(y + half);
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if let Some(f) = y_floor {
        y_min = y_min.min(f);
    }
    if let Some(c) = y_ceil {
        y_max = y_max.max(c);
    }
    if (x_max - x_min).abs() < 1e-12 {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.04 * (y_max - y_min);
    Frame {
        x_min,
        x_max,
        y_min: y_min - pad,
        y_max: y_max + pad,
    }
}

fn render(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    frame: &Frame,
    meta: &str,
    bars: bool,
) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str(&format!("<!-- {meta} -->\n"));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"17\" text-anchor=\"middle\">{title}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0
    ));

    // Axes and grid.
    for tick in axis_ticks(frame.y_min, frame.y_max) {
        let y = frame.y(tick);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            fmt(MARGIN_L),
            fmt(y),
            fmt(WIDTH - MARGIN_R),
            fmt(y)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_L - 8.0),
            fmt(y + 4.0),
            fmt(tick)
        ));
    }
    for tick in axis_ticks(frame.x_min, frame.x_max) {
        let x = frame.x(tick);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#eeeeee\"/>\n",
            fmt(x),
            fmt(MARGIN_T),
            fmt(x),
            fmt(HEIGHT - MARGIN_B)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            fmt(x),
            fmt(HEIGHT - MARGIN_B + 18.0),
            fmt(tick)
        ));
    }
    if frame.y_min < 0.0 && frame.y_max > 0.0 {
        let y0 = frame.y(0.0);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n",
            fmt(MARGIN_L),
            fmt(y0),
            fmt(WIDTH - MARGIN_R),
            fmt(y0)
        ));
    }
    out.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\"/>\n",
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(WIDTH - MARGIN_L - MARGIN_R),
        fmt(HEIGHT - MARGIN_T - MARGIN_B)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 16.0
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{y_label}</text>\n",
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0
    ));

    // Series.
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        if bars {
            // Grouped bars per x position.
            let group = series.len() as f64;
            let slot = (WIDTH - MARGIN_L - MARGIN_R)
                / (s.points.len().max(1) as f64)
                / (group + 1.0);
            for &(x, y, _) in &s.points {
                let cx = frame.x(x) + (si as f64 - (group - 1.0) / 2.0) * slot;
                let y_px = frame.y(y);
                let base = frame.y(frame.y_min.max(0.0));
                out.push_str(&format!(
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\" fill-opacity=\"0.85\"/>\n",
                    fmt(cx - slot * 0.4),
                    fmt(y_px.min(base)),
                    fmt(slot * 0.8),
                    fmt((base - y_px).abs())
                ));
            }
        } else {
            let path: Vec<String> = s
                .points
                .iter()
                .enumerate()
                .map(|(i, &(x, y, _))| {
                    format!(
                        "{}{},{}",
                        if i == 0 { "M" } else { "L" },
                        fmt(frame.x(x)),
                        fmt(frame.y(y))
                    )
                })
                .collect();
            out.push_str(&format!(
                "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                path.join(" ")
            ));
            for &(x, y, err) in &s.points {
                let cx = frame.x(x);
                let cy = frame.y(y);
                if let Some(half) = err {
                    let y_lo = frame.y(y - half);
                    let y_hi = frame.y(y + half);
                    out.push_str(&format!(
                        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"1.2\"/>\n",
                        fmt(cx),
                        fmt(y_lo),
                        fmt(cx),
                        fmt(y_hi)
                    ));
                    for yy in [y_lo, y_hi] {
                        out.push_str(&format!(
                            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"1.2\"/>\n",
                            fmt(cx - 3.5),
                            fmt(yy),
                            fmt(cx + 3.5),
                            fmt(yy)
                        ));
                    }
                }
                out.push_str(&format!(
                    "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                    fmt(cx),
                    fmt(cy)
                ));
            }
        }
        // Legend.
        let ly = MARGIN_T + 14.0 + si as f64 * 18.0;
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
            fmt(WIDTH - MARGIN_R + 14.0),
            fmt(ly - 10.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            fmt(WIDTH - MARGIN_R + 32.0),
            fmt(ly),
            s.label
        ));
    }

    out.push_str("</svg>\n");
    out
}

/// Estimate-versus-rho plot with error bars (one standard deviation).
pub fn estimates_plot(title: &str, series: &[Series], meta: &str) -> String {
    let frame = frame_for(series, Some(0.0), None);
    render(title, "rho in the data generation process", "estimate", series, &frame, meta, false)
}

/// Proportion curves on [0, 1].
pub fn proportion_plot(title: &str, y_label: &str, series: &[Series], meta: &str) -> String {
    let frame = frame_for(series, Some(0.0), Some(1.0));
    render(title, "rho in the data generation process", y_label, series, &frame, meta, false)
}

/// Grouped bar chart on [0, 1].
pub fn rate_bars(title: &str, y_label: &str, series: &[Series], meta: &str) -> String {
    let frame = frame_for(series, Some(0.0), Some(1.0));
    render(title, "rho in the data generation process", y_label, series, &frame, meta, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_series() -> Vec<Series> {
        vec![
            Series {
                label: "a_50".to_string(),
                points: vec![(-0.8, -1.0, Some(0.3)), (0.0, 0.1, Some(0.2)), (0.8, 1.2, Some(0.4))],
            },
            Series {
                label: "b_50".to_string(),
                points: vec![(-0.8, -0.5, None), (0.0, 0.0, None), (0.8, 0.6, None)],
            },
        ]
    }

    #[test]
    fn rendering_is_deterministic() {
        let a = estimates_plot("t", &demo_series(), "config_hash=deadbeef master_seed=1");
        let b = estimates_plot("t", &demo_series(), "config_hash=deadbeef master_seed=1");
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("config_hash=deadbeef"));
        assert!(a.ends_with("</svg>\n"));
    }

    #[test]
    fn proportions_clamp_axis_to_unit_interval() {
        let svg = proportion_plot("p", "proportion", &demo_series(), "m");
        assert!(svg.contains("</svg>"));
        let bars = rate_bars("r", "rate", &demo_series(), "m");
        assert!(bars.contains("<rect"));
    }
}
