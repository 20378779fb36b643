//! Static SVG rendering of one predicted window.
//!
//! Observed positions are dots, ground-truth futures solid polylines,
//! sampled futures dashed polylines, ground-truth endpoints circles and
//! predicted endpoints stars.

use std::fmt::Write as _;

use goaldyn::types::Position2;

use crate::commands::WindowPrediction;
use crate::CliError;

const SIZE: f64 = 640.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

struct Frame {
    min_x: f64,
    max_y: f64,
    scale: f64,
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a Position2>) -> Frame {
        let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) =
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            lo_x = lo_x.min(p.x);
            lo_y = lo_y.min(p.y);
            hi_x = hi_x.max(p.x);
            hi_y = hi_y.max(p.y);
        }
        let span = (hi_x - lo_x).max(hi_y - lo_y).max(1e-6);
        Frame {
            min_x: lo_x,
            max_y: hi_y,
            scale: (SIZE - 2.0 * MARGIN) / span,
        }
    }

    /// World to canvas; y grows upward in the world.
    fn map(&self, p: Position2) -> (f64, f64) {
        (
            MARGIN + (p.x - self.min_x) * self.scale,
            MARGIN + (self.max_y - p.y) * self.scale,
        )
    }

    fn points(&self, pts: &[Position2]) -> String {
        pts.iter()
            .map(|p| {
                let (x, y) = self.map(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn star(cx: f64, cy: f64, r: f64) -> String {
    (0..10)
        .map(|k| {
            let radius = if k % 2 == 0 { r } else { 0.45 * r };
            let a = -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / 5.0;
            format!("{:.2},{:.2}", cx + radius * a.cos(), cy + radius * a.sin())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_svg(w: &WindowPrediction) -> Result<String, CliError> {
    if w.samples.is_empty() {
        return Err(CliError::Data(format!("window {} has no prediction samples", w.id)));
    }
    if w.ground_truth.is_empty() {
        return Err(CliError::Data(format!("window {} has no pedestrians", w.id)));
    }
    let t_obs = w.t_obs;
    let frame = Frame::fit(
        w.ground_truth
            .iter()
            .flat_map(|t| t.positions.iter())
            .chain(w.samples.iter().flat_map(|s| s.trajectories.iter().flat_map(|t| t.positions.iter()))),
    );

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(
        svg,
        r#"<title>{} window {} (frame {})</title>"#,
        escape(&w.source),
        w.id,
        w.start_frame
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);

    for (i, truth) in w.ground_truth.iter().enumerate() {
        if truth.positions.len() < t_obs {
            return Err(CliError::Data(format!(
                "pedestrian {} has fewer than {t_obs} positions",
                truth.pedestrian_id
            )));
        }
        let color = PALETTE[i % PALETTE.len()];
        let anchor = truth.positions[t_obs - 1];
        let _ = writeln!(svg, r#"<g class="pedestrian" data-id="{}">"#, truth.pedestrian_id);
        for s in &w.samples {
            let pred = s.trajectories.get(i).ok_or_else(|| {
                CliError::Data(format!("sample {} is missing pedestrian {i}", s.noise_seed))
            })?;
            let mut pts = vec![anchor];
            pts.extend_from_slice(&pred.positions);
            let _ = writeln!(
                svg,
                r#"<polyline class="prediction" points="{}" fill="none" stroke="{color}" stroke-opacity="0.6" stroke-width="1.5" stroke-dasharray="6 4"/>"#,
                frame.points(&pts)
            );
            let (x, y) = frame.map(pred.last());
            let _ = writeln!(
                svg,
                r#"<polygon class="predicted-endpoint" points="{}" fill="{color}" fill-opacity="0.7"/>"#,
                star(x, y, 6.0)
            );
        }
        let _ = writeln!(
            svg,
            r#"<polyline class="ground-truth" points="{}" fill="none" stroke="{color}" stroke-width="2.5"/>"#,
            frame.points(&truth.positions[t_obs - 1..])
        );
        for p in &truth.positions[..t_obs] {
            let (x, y) = frame.map(*p);
            let _ = writeln!(svg, r#"<circle class="observed" cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
        }
        let (x, y) = frame.map(truth.last());
        let _ = writeln!(
            svg,
            r#"<circle class="gt-endpoint" cx="{x:.2}" cy="{y:.2}" r="6" fill="none" stroke="{color}" stroke-width="2"/>"#
        );
        svg.push_str("</g>\n");
    }

    let legend = [
        ("observed", r##"<circle cx="12" cy="0" r="3" fill="#444"/>"##),
        ("ground truth", r##"<line x1="0" y1="0" x2="24" y2="0" stroke="#444" stroke-width="2.5"/>"##),
        ("prediction", r##"<line x1="0" y1="0" x2="24" y2="0" stroke="#444" stroke-dasharray="6 4"/>"##),
        ("true endpoint", r##"<circle cx="12" cy="0" r="6" fill="none" stroke="#444" stroke-width="2"/>"##),
    ];
    let _ = writeln!(svg, r#"<g class="legend" font-family="sans-serif" font-size="11">"#);
    for (k, (label, mark)) in legend.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<g transform="translate(10,{})">{mark}<text x="30" y="4">{label}</text></g>"#,
            14 + 16 * k
        );
    }
    let _ = writeln!(
        svg,
        r##"<g transform="translate(10,{})"><path d="M {} Z" fill="#444"/><text x="30" y="4">predicted endpoint</text></g>"##,
        14 + 16 * legend.len(),
        star(12.0, 0.0, 6.0).replace(' ', " L ")
    );
    svg.push_str("</g>\n</svg>\n");
    Ok(svg)
}
