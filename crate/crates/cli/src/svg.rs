//! Minimal SVG output: a time-series line plot and a projected 3-D scatter.

use std::fmt::Write;

use lvseasons_core::State;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, escape(title));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Padded range; a flat range is widened so the scale stays finite.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Line plot of `x1, x2, x3` against `t`.
pub fn time_series(rows: &[(f64, State)], title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (t0, t1) = range(rows.iter().map(|r| r.0));
    let (_, ymax) = range(rows.iter().flat_map(|r| r.1.iter().copied()));
    let (y0, y1) = (0.0, ymax.max(1e-12) * 1.05);
    let sx = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let _ = writeln!(
        out,
        r#"<g stroke="black" stroke-width="1"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{b}" x2="{m}" y2="{m}"/></g>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let t = t0 + f * (t1 - t0);
        let y = y0 + f * (y1 - y0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.4}</text>"#,
            sx(t),
            HEIGHT - MARGIN + 16.0,
            t
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.4}</text>"#, MARGIN - 6.0, sy(y) + 4.0, y);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#, WIDTH / 2.0, HEIGHT - 10.0);

    for (i, color) in COLORS.iter().enumerate() {
        let mut pts = String::new();
        for (t, x) in rows {
            let _ = write!(pts, "{:.2},{:.2} ", sx(*t), sy(x[i]));
        }
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#, pts.trim_end());
        let ly = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{ly}" x2="{x2}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{tx}" y="{ty}">x{n}</text>"#,
            x = WIDTH - MARGIN - 40.0,
            x2 = WIDTH - MARGIN - 22.0,
            tx = WIDTH - MARGIN - 18.0,
            ty = ly + 4.0,
            n = i + 1
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Oblique projection `(x1, x2, x3) ↦ ((x1 − x2) cos 30°, x3 − (x1 + x2) sin 30°)`.
fn project(x: &State) -> (f64, f64) {
    let c = 30f64.to_radians();
    ((x[0] - x[1]) * c.cos(), x[2] - (x[0] + x[1]) * c.sin())
}

/// Scatter of orbit points in a fixed oblique view with the three
/// coordinate axes drawn from the origin. Points before `highlight_from`
/// are drawn faintly.
pub fn orbit_scatter(points: &[State], highlight_from: usize, title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let extent = points.iter().map(|x| x.max()).fold(0.0, f64::max).max(1e-12) * 1.1;
    let axes = [
        State::new(extent, 0.0, 0.0),
        State::new(0.0, extent, 0.0),
        State::new(0.0, 0.0, extent),
    ];
    let corners: Vec<(f64, f64)> = axes.iter().chain([State::zeros()].iter()).map(project).collect();
    let (u0, u1) = range(corners.iter().map(|c| c.0));
    let (v0, v1) = range(corners.iter().map(|c| c.1));
    let scale = ((WIDTH - 2.0 * MARGIN) / (u1 - u0)).min((HEIGHT - 2.0 * MARGIN) / (v1 - v0));
    let cu = (u0 + u1) / 2.0;
    let cv = (v0 + v1) / 2.0;
    let screen = |x: &State| {
        let (u, v) = project(x);
        (WIDTH / 2.0 + (u - cu) * scale, HEIGHT / 2.0 - (v - cv) * scale)
    };

    let (ox, oy) = screen(&State::zeros());
    for (i, a) in axes.iter().enumerate() {
        let (ax, ay) = screen(a);
        let _ = writeln!(
            out,
            r#"<line x1="{ox:.2}" y1="{oy:.2}" x2="{ax:.2}" y2="{ay:.2}" stroke="black" stroke-width="1"/><text x="{:.2}" y="{:.2}">x{}</text>"#,
            ax + 4.0,
            ay,
            i + 1
        );
    }
    for (k, x) in points.iter().enumerate() {
        let (px, py) = screen(x);
        let (fill, opacity) = if k < highlight_from { ("#999999", 0.35) } else { ("#1f77b4", 0.9) };
        let _ = writeln!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="1.3" fill="{fill}" fill-opacity="{opacity}"/>"#);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_series_still_renders() {
        let rows = vec![(0.0, State::new(1.0, 1.0, 1.0))];
        let svg = time_series(&rows, "flat");
        assert!(svg.starts_with("<svg"));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn scatter_has_one_circle_per_point() {
        let pts = vec![State::new(0.1, 0.2, 0.3), State::new(0.3, 0.2, 0.1)];
        let svg = orbit_scatter(&pts, 1, "a < b & c");
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("a &lt; b &amp; c"));
    }
}
