//! Minimal SVG render of fitted curves, segments colored by local cluster.
//! Best effort; the CSV next to it is the real output.

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 40.0;

/// `lines[i]` holds (x, y, cluster) points of series i in x order.
pub fn render(lines: &[Vec<(f64, f64, usize)>]) -> String {
    let pts = lines.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y, _) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>\n",
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for line in lines {
        for seg in line.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let color = PALETTE[(a.2.max(1) - 1) % PALETTE.len()];
            out += &format!(
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"1\" stroke-opacity=\"0.7\"/>\n",
                sx(a.0),
                sy(a.1),
                sx(b.0),
                sy(b.1)
            );
        }
    }
    out += &format!(
        "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"11\">x in [{x0:.3}, {x1:.3}], y in [{y0:.3}, {y1:.3}]</text>\n</svg>\n",
        HEIGHT - 10.0
    );
    out
}
