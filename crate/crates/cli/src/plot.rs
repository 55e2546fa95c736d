//! Static SVG renderings of traces and scan grids.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn frame(svg: &mut String, title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>
<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>
<text x="{PAD}" y="{}" text-anchor="start">{:.3}</text>
<text x="{}" y="{}" text-anchor="end">{:.3}</text>
<text x="{}" y="{}" text-anchor="end">{:.4}</text>
<text x="{}" y="{}" text-anchor="end">{:.4}</text>
"#,
        W / 2.0,
        esc(title),
        W - 2.0 * PAD,
        H - 2.0 * PAD,
        W / 2.0,
        H - 12.0,
        esc(xlabel),
        H / 2.0,
        H / 2.0,
        esc(ylabel),
        H - PAD + 16.0,
        x.0,
        W - PAD,
        H - PAD + 16.0,
        x.1,
        PAD - 4.0,
        H - PAD,
        y.0,
        PAD - 4.0,
        PAD + 10.0,
        y.1,
    );
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_lines(path: &Path, title: &str, xlabel: &str, x: &[f64], series: &[(&str, Vec<f64>)]) -> Result<(), CliError> {
    let xr = range(x.iter().copied());
    let yr = range(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let mut svg = String::new();
    frame(&mut svg, title, xlabel, "", xr, yr);
    let sx = |v: f64| PAD + (v - xr.0) / (xr.1 - xr.0) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - yr.0) / (yr.1 - yr.0) * (H - 2.0 * PAD);
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = x
            .iter()
            .zip(ys)
            .filter(|(_, y)| y.is_finite())
            .map(|(&a, &b)| format!("{:.2},{:.2}", sx(a), sy(b)))
            .collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - PAD - 80.0,
            PAD + 16.0 * (k as f64 + 1.0),
            esc(name)
        );
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| CliError::io(path, e))
}

// Diverging blue-white-red ramp on [0, 1].
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let u = t / 0.5;
        (u, u, 1.0)
    } else {
        let u = (t - 0.5) / 0.5;
        (1.0, 1.0 - u, 1.0 - u)
    };
    format!("#{:02x}{:02x}{:02x}", (r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8)
}

/// Heatmap of `values[i * a2.len() + j]`; axis 1 runs horizontally.
/// Undefined cells are drawn grey.
pub fn write_heatmap(
    path: &Path,
    title: &str,
    name1: &str,
    name2: &str,
    a1: &[f64],
    a2: &[f64],
    values: &[Option<f64>],
) -> Result<(), CliError> {
    let vr = range(values.iter().flatten().copied());
    let mut svg = String::new();
    frame(&mut svg, &format!("{title} [{:.4}, {:.4}]", vr.0, vr.1), name1, name2, range(a1.iter().copied()), range(a2.iter().copied()));
    let cw = (W - 2.0 * PAD) / a1.len() as f64;
    let ch = (H - 2.0 * PAD) / a2.len() as f64;
    for (i, _) in a1.iter().enumerate() {
        for (j, _) in a2.iter().enumerate() {
            let fill = match values[i * a2.len() + j] {
                Some(v) => ramp((v - vr.0) / (vr.1 - vr.0)),
                None => "#bbbbbb".to_string(),
            };
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                PAD + i as f64 * cw,
                H - PAD - (j as f64 + 1.0) * ch,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| CliError::io(path, e))
}
