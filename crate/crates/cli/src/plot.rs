//! Deterministic SVG rendering of an MTE curve with its confidence band.

use std::fmt::Write as _;

use twostep::mte::MtePoint;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 52.0;
const TICKS: usize = 5;

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64) -> Self {
        if hi > lo {
            Axis { lo, hi }
        } else {
            Axis { lo: lo - 0.5, hi: lo + 0.5 }
        }
    }

    fn frac(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    fn tick(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * i as f64 / TICKS as f64
    }
}

fn px(a: &Axis, v: f64) -> f64 {
    LEFT + a.frac(v) * (WIDTH - LEFT - RIGHT)
}

fn py(a: &Axis, v: f64) -> f64 {
    HEIGHT - BOTTOM - a.frac(v) * (HEIGHT - TOP - BOTTOM)
}

fn polyline(xs: &Axis, ys: &Axis, pts: &[(f64, f64)]) -> String {
    pts.iter()
        .map(|&(a, v)| format!("{:.2},{:.2}", px(xs, a), py(ys, v)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders the corrected curve, the uncorrected curve and the interval band.
///
/// The output depends only on the inputs: fixed canvas, fixed precision, no
/// timestamps. Grid points with non-finite values are left out.
pub fn render_curve(points: &[MtePoint], alpha: f64, method: &str) -> String {
    let pts: Vec<&MtePoint> = points
        .iter()
        .filter(|p| {
            [p.a, p.tau_hat, p.tau_bc, p.ci_lo, p.ci_hi]
                .iter()
                .all(|v| v.is_finite())
        })
        .collect();

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    if pts.is_empty() {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">no finite points</text>"#, WIDTH / 2.0, HEIGHT / 2.0);
        s.push_str("</svg>\n");
        return s;
    }

    let xs = Axis::new(pts[0].a, pts[pts.len() - 1].a);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        lo = lo.min(p.ci_lo).min(p.tau_hat).min(p.tau_bc);
        hi = hi.max(p.ci_hi).max(p.tau_hat).max(p.tau_bc);
    }
    let pad = 0.05 * (hi - lo);
    let ys = Axis::new(lo - pad, hi + pad);

    // Axes and ticks.
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        s,
        r##"<g stroke="#444" stroke-width="1"><line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/><line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/></g>"##
    );
    for i in 0..=TICKS {
        let a = xs.tick(i);
        let x = px(&xs, a);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{a:.2}</text>"##,
            y0 + 4.0,
            y0 + 18.0
        );
        let v = ys.tick(i);
        let y = py(&ys, v);
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"##,
            x0 - 4.0,
            x0 - 7.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">a</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    );

    // Band: upper edge left to right, lower edge back.
    let mut band: Vec<(f64, f64)> = pts.iter().map(|p| (p.a, p.ci_hi)).collect();
    band.extend(pts.iter().rev().map(|p| (p.a, p.ci_lo)));
    let _ = writeln!(
        s,
        r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##,
        polyline(&xs, &ys, &band)
    );
    let raw: Vec<(f64, f64)> = pts.iter().map(|p| (p.a, p.tau_hat)).collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#636363" stroke-width="1.5" stroke-dasharray="5,4"/>"##,
        polyline(&xs, &ys, &raw)
    );
    let bc: Vec<(f64, f64)> = pts.iter().map(|p| (p.a, p.tau_bc)).collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##,
        polyline(&xs, &ys, &bc)
    );

    // Legend.
    let lx = x1 - 190.0;
    let _ = writeln!(
        s,
        r##"<g><line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#08519c" stroke-width="2"/><text x="{:.2}" y="{:.2}">corrected</text></g>"##,
        TOP + 6.0,
        lx + 24.0,
        TOP + 6.0,
        lx + 30.0,
        TOP + 10.0
    );
    let _ = writeln!(
        s,
        r##"<g><line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#636363" stroke-width="1.5" stroke-dasharray="5,4"/><text x="{:.2}" y="{:.2}">uncorrected</text></g>"##,
        TOP + 22.0,
        lx + 24.0,
        TOP + 22.0,
        lx + 30.0,
        TOP + 26.0
    );
    let _ = writeln!(
        s,
        r##"<g><rect x="{lx:.2}" y="{:.2}" width="24" height="8" fill="#9ecae1" fill-opacity="0.5"/><text x="{:.2}" y="{:.2}">{:.0}% {method} band</text></g>"##,
        TOP + 34.0,
        lx + 30.0,
        TOP + 42.0,
        100.0 * (1.0 - alpha)
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(a: f64) -> MtePoint {
        MtePoint {
            a,
            tau_hat: 1.0 - a,
            tau_bc: 1.0 - a,
            se: 0.1,
            ci_lo: 0.8 - a,
            ci_hi: 1.2 - a,
        }
    }

    #[test]
    fn output_is_stable() {
        let pts: Vec<MtePoint> = (1..10).map(|i| point(i as f64 / 10.0)).collect();
        let a = render_curve(&pts, 0.05, "percentile-t");
        let b = render_curve(&pts, 0.05, "percentile-t");
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn skips_non_finite_points() {
        let mut pts: Vec<MtePoint> = (1..5).map(|i| point(i as f64 / 5.0)).collect();
        pts[1].ci_hi = f64::NAN;
        let s = render_curve(&pts, 0.1, "normal");
        assert!(!s.contains("NaN"));
    }
}
