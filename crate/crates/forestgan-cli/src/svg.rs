//! Minimal SVG chart emission: polyline line charts, scatter plots, and a
//! diverging heatmap.  Hand-rolled on purpose — plots are static artifacts
//! for humans, while the data of record lives in the CSV/JSON files written
//! next to them.  Output is fully determined by the inputs (no timestamps,
//! no randomness), so repeated runs byte-match.

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 82.0;
const MARGIN_R: f64 = 26.0;
const MARGIN_T: f64 = 46.0;
const MARGIN_B: f64 = 60.0;

const PALETTE: [&str; 6] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// One named polyline or point cloud.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Series {
        Series { name: name.into(), points }
    }
}

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Largest of 1, 2, 5 times a power of ten not exceeding `raw`.
fn nice_step(raw: f64) -> f64 {
    if !(raw > 0.0) || !raw.is_finite() {
        return 1.0;
    }
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac >= 5.0 {
        5.0
    } else if frac >= 2.0 {
        2.0
    } else {
        1.0
    };
    nice * mag
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if a >= 1e5 || a < 1e-3 {
        format!("{v:.0e}")
    } else if v.fract() == 0.0 && a < 1e5 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn sx(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn open_svg(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
         font-family=\"monospace\" font-size=\"13\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    )
}

fn axis_frame(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"26\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        escape(title)
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"20\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {:.1})\">{}</text>\n",
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        escape(y_label)
    ));
    out.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{:.1}\" height=\"{:.1}\" \
         fill=\"none\" stroke=\"#444\"/>\n",
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    ));
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step((hi - lo) / 5.0);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        // Snap values like -0.0000000001 back onto zero for clean labels.
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn decade_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let first = lo.ceil() as i64;
    let last = hi.floor() as i64;
    if last < first {
        return vec![lo, hi];
    }
    let stride = (((last - first) as usize / 7) + 1) as i64;
    (first..=last).step_by(stride as usize).map(|k| k as f64).collect()
}

/// Line chart over `series`; points with a non-finite coordinate (or one
/// that is ≤ 0 on a log axis) break the polyline rather than being drawn,
/// so divergence gaps and ∞ probes stay visible as holes.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    log_x: bool,
    log_y: bool,
    series: &[Series],
) -> String {
    let keep = |v: f64, log: bool| v.is_finite() && (!log || v > 0.0);
    let mapped: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| keep(*x, log_x) && keep(*y, log_y))
                .map(|(x, y)| {
                    (
                        if log_x { x.log10() } else { *x },
                        if log_y { y.log10() } else { *y },
                    )
                })
                .collect()
        })
        .collect();

    let mut out = open_svg(WIDTH, HEIGHT);
    axis_frame(&mut out, title, x_label, y_label);

    let finite: Vec<(f64, f64)> = mapped.iter().flatten().copied().collect();
    if finite.is_empty() {
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#888\">no finite data</text>\n",
            WIDTH / 2.0,
            HEIGHT / 2.0
        ));
        out.push_str("</svg>\n");
        return out;
    }

    let (mut x0, mut x1) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| (lo.min(*x), hi.max(*x)));
    let (mut y0, mut y1) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, y)| (lo.min(*y), hi.max(*y)));
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    } else {
        let pad = (y1 - y0) * 0.05;
        y0 -= pad;
        y1 += pad;
    }
    let frame = Frame { x0, x1, y0, y1 };

    let x_ticks = if log_x { decade_ticks(x0, x1) } else { linear_ticks(x0, x1) };
    for t in x_ticks {
        let sx = frame.sx(t);
        out.push_str(&format!(
            "<line x1=\"{sx:.1}\" y1=\"{:.1}\" x2=\"{sx:.1}\" y2=\"{:.1}\" stroke=\"#444\"/>\n",
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0
        ));
        let label = if log_x { format!("1e{t:.0}") } else { fmt_tick(t) };
        out.push_str(&format!(
            "<text x=\"{sx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{label}</text>\n",
            HEIGHT - MARGIN_B + 20.0
        ));
    }
    let y_ticks = if log_y { decade_ticks(y0, y1) } else { linear_ticks(y0, y1) };
    for t in y_ticks {
        let sy = frame.sy(t);
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{sy:.1}\" x2=\"{MARGIN_L}\" y2=\"{sy:.1}\" stroke=\"#444\"/>\n",
            MARGIN_L - 5.0
        ));
        let label = if log_y { format!("1e{t:.0}") } else { fmt_tick(t) };
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>\n",
            MARGIN_L - 9.0,
            sy + 4.0
        ));
    }

    for (i, points) in mapped.iter().enumerate() {
        for run in points.split(|(_, y)| !y.is_finite()) {
            if run.len() < 2 {
                for (x, y) in run {
                    out.push_str(&format!(
                        "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"1.8\" fill=\"{}\"/>\n",
                        frame.sx(*x),
                        frame.sy(*y),
                        color(i)
                    ));
                }
                continue;
            }
            let coords: Vec<String> = run
                .iter()
                .map(|(x, y)| format!("{:.1},{:.1}", frame.sx(*x), frame.sy(*y)))
                .collect();
            out.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                color(i),
                coords.join(" ")
            ));
        }
    }

    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_T + 16.0 + 18.0 * i as f64;
        out.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"14\" height=\"4\" fill=\"{}\"/>\n",
            WIDTH - MARGIN_R - 150.0,
            y - 4.0,
            color(i)
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            WIDTH - MARGIN_R - 130.0,
            y,
            escape(&s.name)
        ));
    }

    out.push_str("</svg>\n");
    out
}

/// Equal-aspect scatter plot centered on the origin; intended for 2-D
/// sample clouds (real data vs. generator output).
pub fn scatter_chart(title: &str, groups: &[Series]) -> String {
    const SIDE: f64 = 560.0;
    const M: f64 = 50.0;
    let mut bound = 0.0f64;
    for g in groups {
        for (x, y) in &g.points {
            if x.is_finite() && y.is_finite() {
                bound = bound.max(x.abs()).max(y.abs());
            }
        }
    }
    if bound == 0.0 {
        bound = 1.0;
    }
    bound *= 1.1;
    let scale = (SIDE - 2.0 * M) / (2.0 * bound);
    let sx = |x: f64| M + (x + bound) * scale;
    let sy = |y: f64| SIDE - M - (y + bound) * scale;

    let mut out = open_svg(SIDE, SIDE);
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"26\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        SIDE / 2.0,
        escape(title)
    ));
    out.push_str(&format!(
        "<rect x=\"{M}\" y=\"{M}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#444\"/>\n",
        SIDE - 2.0 * M,
        SIDE - 2.0 * M
    ));
    for t in linear_ticks(-bound, bound) {
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            sx(t),
            SIDE - M + 18.0,
            fmt_tick(t)
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            M - 6.0,
            sy(t) + 4.0,
            fmt_tick(t)
        ));
    }
    for (i, g) in groups.iter().enumerate() {
        for (x, y) in &g.points {
            if x.is_finite() && y.is_finite() && x.abs() <= bound && y.abs() <= bound {
                out.push_str(&format!(
                    "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.2\" fill=\"{}\" fill-opacity=\"0.55\"/>\n",
                    sx(*x),
                    sy(*y),
                    color(i)
                ));
            }
        }
    }
    for (i, g) in groups.iter().enumerate() {
        let y = M + 16.0 + 18.0 * i as f64;
        out.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"{}\"/>\n",
            M + 12.0,
            y - 4.0,
            color(i)
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            M + 22.0,
            y,
            escape(&g.name)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn diverging_fill(v: f64, absmax: f64) -> String {
    // White at zero, saturating red for positive and blue for negative.
    let t = if absmax > 0.0 { (v.abs() / absmax).min(1.0) } else { 0.0 };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    let (r, g, b) = if v >= 0.0 {
        (lerp(255.0, 178.0), lerp(255.0, 24.0), lerp(255.0, 43.0))
    } else {
        (lerp(255.0, 33.0), lerp(255.0, 102.0), lerp(255.0, 172.0))
    };
    format!("rgb({r},{g},{b})")
}

/// Square heatmap of a labelled matrix with the value printed in each cell;
/// color diverges around zero, which suits difference matrices.
pub fn heatmap(title: &str, labels: &[String], cells: &[Vec<f64>]) -> String {
    const CELL: f64 = 86.0;
    const LEFT: f64 = 150.0;
    const TOP: f64 = 120.0;
    let n = labels.len();
    let width = LEFT + CELL * n as f64 + 30.0;
    let height = TOP + CELL * n as f64 + 30.0;
    let absmax = cells
        .iter()
        .flatten()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, v| m.max(v.abs()));

    let mut out = open_svg(width, height);
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"30\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        width / 2.0,
        escape(title)
    ));
    for (j, label) in labels.iter().enumerate() {
        let x = LEFT + CELL * (j as f64 + 0.5);
        out.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"start\" \
             transform=\"rotate(-40 {x:.1} {:.1})\">{}</text>\n",
            TOP - 12.0,
            TOP - 12.0,
            escape(label)
        ));
    }
    for (i, label) in labels.iter().enumerate() {
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            LEFT - 10.0,
            TOP + CELL * (i as f64 + 0.5) + 4.0,
            escape(label)
        ));
    }
    for (i, row) in cells.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let x = LEFT + CELL * j as f64;
            let y = TOP + CELL * i as f64;
            out.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"{}\" stroke=\"#999\"/>\n",
                diverging_fill(*v, absmax)
            ));
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
                x + CELL / 2.0,
                y + CELL / 2.0 + 4.0,
                if v.is_finite() { format!("{v:.2}") } else { "inf".into() }
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}
