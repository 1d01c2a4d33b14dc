//! Minimal self-contained SVG: polyline plots and filled regions.
//! Coordinates are printed with fixed precision so output is reproducible.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 60.0;
const COLOURS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn frame(out: &mut String, x_label: &str, y_label: &str, x_range: (f64, f64), y_range: (f64, f64)) {
    let _ = writeln!(
        out,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 20.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (x, anchor, v) in [(PAD, "start", x_range.0), (W - PAD, "end", x_range.1)] {
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" text-anchor="{anchor}">{}</text>"#,
            H - PAD + 16.0,
            tick(v)
        );
    }
    for (y, v) in [(H - PAD, y_range.0), (PAD + 10.0, y_range.1)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#,
            PAD - 4.0,
            tick(v)
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Line plot; with `log_y` the y values are plotted as `log10`, and
/// non-positive values are dropped.
pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    log_x: bool,
    log_y: bool,
) -> String {
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let ty = |y: f64| if log_y { y.log10() } else { y };
    let keep = |&(x, y): &(f64, f64)| (!log_x || x > 0.0) && (!log_y || y > 0.0);
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|p| keep(p))
                .map(|&(x, y)| (tx(x), ty(y)))
                .collect()
        })
        .collect();
    let x_range = bounds(pts.iter().flatten().map(|p| p.0));
    let y_range = bounds(pts.iter().flatten().map(|p| p.1));
    let sx = |x: f64| PAD + (x - x_range.0) / (x_range.1 - x_range.0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y_range.0) / (y_range.1 - y_range.0) * (H - 2.0 * PAD);

    let mut out = String::new();
    header(&mut out, title);
    let xl = if log_x {
        format!("log10 {x_label}")
    } else {
        x_label.to_string()
    };
    let yl = if log_y {
        format!("log10 {y_label}")
    } else {
        y_label.to_string()
    };
    frame(&mut out, &xl, &yl, x_range, y_range);
    for (k, (s, p)) in series.iter().zip(&pts).enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let path: Vec<String> = p
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        for &(x, y) in p {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{colour}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = PAD + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" fill="{colour}">{}</text>"#,
            W - PAD - 110.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Filled cells of a `resolution²` lattice, given as horizontal runs
/// `(i_re, i_im, length)`.
pub fn region_plot(
    title: &str,
    re_range: (f64, f64),
    im_range: (f64, f64),
    resolution: usize,
    runs: &[(usize, usize, usize)],
) -> String {
    let cw = (W - 2.0 * PAD) / resolution as f64;
    let ch = (H - 2.0 * PAD) / resolution as f64;
    let mut out = String::new();
    header(&mut out, title);
    frame(&mut out, "Re(h sigma)", "Im(h sigma)", re_range, im_range);
    let _ = writeln!(out, r##"<g fill="#1f77b4">"##);
    for &(i_re, i_im, len) in runs {
        let x = PAD + i_re as f64 * cw;
        let y = H - PAD - (i_im + 1) as f64 * ch;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.3}" y="{y:.3}" width="{:.3}" height="{:.3}"/>"#,
            len as f64 * cw,
            ch
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}
