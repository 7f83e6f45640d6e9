//! Small hand-rolled SVG line plots. The goal is a dependency-free,
//! byte-deterministic picture of each run, not a plotting library: fixed
//! canvas, fixed palette, coordinates printed with fixed precision.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

const W: f64 = 800.0;
const H: f64 = 500.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 50.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Series {
        Series { label: label.into(), points }
    }
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_points(pts: impl Iterator<Item = (f64, f64)>) -> Option<Frame> {
        let mut f = Frame {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        let mut any = false;
        for (x, y) in pts {
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            any = true;
            f.x_min = f.x_min.min(x);
            f.x_max = f.x_max.max(x);
            f.y_min = f.y_min.min(y);
            f.y_max = f.y_max.max(y);
        }
        if !any {
            return None;
        }
        if f.x_max == f.x_min {
            f.x_max += 1.0;
        }
        if f.y_max == f.y_min {
            f.y_max += 1.0;
            f.y_min -= 1.0;
        }
        Some(f)
    }

    fn sx(&self, x: f64) -> f64 {
        ML + (x - self.x_min) / (self.x_max - self.x_min) * (W - ML - MR)
    }

    fn sy(&self, y: f64) -> f64 {
        H - MB - (y - self.y_min) / (self.y_max - self.y_min) * (H - MT - MB)
    }
}

fn tick_values(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

fn axis_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// One SVG line plot; `logy` plots log10 of the y values (skipping
/// nonpositive points) and labels the axis accordingly.
pub fn line_plot(
    path: &Path,
    title: &str,
    y_label: &str,
    series: &[Series],
    logy: bool,
) -> Result<()> {
    let mapped: Vec<(usize, Vec<(f64, f64)>)> = series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pts = s
                .points
                .iter()
                .filter_map(|&(x, y)| {
                    if logy {
                        (y > 0.0).then(|| (x, y.log10()))
                    } else {
                        Some((x, y))
                    }
                })
                .collect();
            (i, pts)
        })
        .collect();
    let frame = Frame::from_points(mapped.iter().flat_map(|(_, p)| p.iter().copied()));
    let Some(frame) = frame else {
        // nothing plottable; write an empty framed canvas rather than fail
        let body = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\">\
             <text x=\"20\" y=\"30\">{title} (no finite data)</text></svg>\n"
        );
        fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
        return Ok(());
    };

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        title
    ));
    out.push_str(&format!(
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
        W - ML - MR,
        H - MT - MB
    ));

    for t in tick_values(frame.x_min, frame.x_max) {
        let x = frame.sx(t);
        out.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"#ccc\"/>\n",
            MT,
            H - MB
        ));
        out.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            H - MB + 18.0,
            axis_label(t)
        ));
    }
    for t in tick_values(frame.y_min, frame.y_max) {
        let y = frame.sy(t);
        out.push_str(&format!(
            "<line x1=\"{ML}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"#ccc\"/>\n",
            W - MR
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            ML - 6.0,
            y + 4.0,
            axis_label(t)
        ));
    }
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">{}{}</text>\n",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0,
        if logy { "log10 " } else { "" },
        y_label
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">tau</text>\n",
        (ML + W - MR) / 2.0,
        H - 12.0
    ));

    for (i, pts) in &mapped {
        if pts.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.sx(x), frame.sy(y)))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            coords.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>\n",
            ML + 10.0,
            MT + 16.0 + 14.0 * *i as f64,
            series[*i].label
        ));
    }
    out.push_str("</svg>\n");
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Frequency plot: dN/dtau samples inside their admissible band.
pub fn band_plot(
    path: &Path,
    title: &str,
    taus: &[f64],
    lower: &[Option<f64>],
    upper: &[Option<f64>],
    line: &[Option<f64>],
) -> Result<()> {
    let mut band_pts: Vec<(f64, f64, f64)> = Vec::new();
    for i in 0..taus.len() {
        if let (Some(l), Some(u)) = (lower[i], upper[i]) {
            band_pts.push((taus[i], l, u));
        }
    }
    let line_pts: Vec<(f64, f64)> = taus
        .iter()
        .zip(line)
        .filter_map(|(&t, v)| v.map(|y| (t, y)))
        .collect();
    let all = band_pts
        .iter()
        .flat_map(|&(t, l, u)| [(t, l), (t, u)])
        .chain(line_pts.iter().copied());
    let Some(frame) = Frame::from_points(all) else {
        fs::write(
            path,
            format!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\">\
                 <text x=\"20\" y=\"30\">{title} (no finite data)</text></svg>\n"
            ),
        )?;
        return Ok(());
    };

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        title
    ));
    if !band_pts.is_empty() {
        let mut poly: Vec<String> = band_pts
            .iter()
            .map(|&(t, l, _)| format!("{:.2},{:.2}", frame.sx(t), frame.sy(l)))
            .collect();
        for &(t, _, u) in band_pts.iter().rev() {
            poly.push(format!("{:.2},{:.2}", frame.sx(t), frame.sy(u)));
        }
        out.push_str(&format!(
            "<polygon points=\"{}\" fill=\"#1f77b4\" opacity=\"0.15\" stroke=\"none\"/>\n",
            poly.join(" ")
        ));
    }
    if !line_pts.is_empty() {
        let coords: Vec<String> = line_pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.sx(x), frame.sy(y)))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n",
            coords.join(" ")
        ));
    }
    out.push_str(&format!(
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
        W - ML - MR,
        H - MT - MB
    ));
    for t in tick_values(frame.x_min, frame.x_max) {
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            frame.sx(t),
            H - MB + 18.0,
            axis_label(t)
        ));
    }
    for t in tick_values(frame.y_min, frame.y_max) {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            ML - 6.0,
            frame.sy(t) + 4.0,
            axis_label(t)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">tau</text>\n",
        (ML + W - MR) / 2.0,
        H - 12.0
    ));
    out.push_str("</svg>\n");
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
