//! Standalone SVG scatter plots of clustered coordinates.

use std::fmt::Write as _;

use codex_core::hdbscan::ClusterLabels;
use codex_core::summary::Summary;

use crate::error::{CliError, CliResult};

const PLOT_W: f64 = 720.0;
const PLOT_H: f64 = 540.0;
const MARGIN: f64 = 40.0;
const LEGEND_H: f64 = 28.0;
const INSET_W: f64 = 520.0;
const LINE_H: f64 = 14.0;
const NOISE: &str = "#b0b0b0";
const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22",
    "#393b79", "#637939", "#843c39",
];

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\t' && c != '\n' => {}
            c => out.push(c),
        }
    }
    out
}

pub fn color(cluster: Option<usize>) -> &'static str {
    cluster.map_or(NOISE, |c| PALETTE[c % PALETTE.len()])
}

struct Frame {
    min: (f64, f64),
    scale: f64,
    offset: (f64, f64),
}

impl Frame {
    fn fit(points: &[(f64, f64)]) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let w = (x1 - x0).max(1e-9);
        let h = (y1 - y0).max(1e-9);
        let scale = ((PLOT_W - 2.0 * MARGIN) / w).min((PLOT_H - 2.0 * MARGIN) / h);
        let offset = (
            MARGIN + (PLOT_W - 2.0 * MARGIN - w * scale) / 2.0,
            MARGIN + (PLOT_H - 2.0 * MARGIN - h * scale) / 2.0,
        );
        Frame {
            min: (x0, y1),
            scale,
            offset,
        }
    }

    /// Data to pixel space; y grows upward in data space.
    fn px(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (
            self.offset.0 + (x - self.min.0) * self.scale,
            self.offset.1 + (self.min.1 - y) * self.scale,
        )
    }
}

/// Renders one marker per point coloured by cluster (noise grey), an "x" at
/// each centroid with the cluster id above the cluster, a legend, optional
/// per-point annotations and an optional inset summary.
pub fn render_scatter(
    coords: &[Vec<f64>],
    labels: &ClusterLabels,
    summary: Option<&Summary>,
    annotations: &[(usize, String)],
) -> CliResult<String> {
    if coords.is_empty() {
        return Err(CliError::Usage("cannot plot an empty set of points".into()));
    }
    if labels.labels.len() != coords.len() {
        return Err(CliError::Usage(format!(
            "{} labels for {} points",
            labels.labels.len(),
            coords.len()
        )));
    }
    let xy = |p: &Vec<f64>| (p.first().copied().unwrap_or(0.0), p.get(1).copied().unwrap_or(0.0));
    let points: Vec<(f64, f64)> = coords.iter().map(xy).collect();
    if points.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(CliError::Usage("cannot plot non-finite coordinates".into()));
    }
    let frame = Frame::fit(&points);

    let lines: Vec<String> = summary.map_or_else(Vec::new, |s| {
        std::iter::once(format!(
            "tags={} clusters={} compression={:.3}",
            s.n_tags, s.n_clusters, s.compression
        ))
        .chain(s.lines.iter().map(|l| l.render()))
        .collect()
    });
    let width = if summary.is_some() { PLOT_W + INSET_W } else { PLOT_W };
    let height = (PLOT_H + LEGEND_H).max(2.0 * MARGIN + LINE_H * (lines.len() as f64 + 1.0));

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let _ = writeln!(out, r#"<g class="points">"#);
    for (i, (&p, l)) in points.iter().zip(&labels.labels).enumerate() {
        let (cx, cy) = frame.px(p);
        let class = l.map_or_else(|| "point noise".to_string(), |c| format!("point c{c}"));
        let _ = writeln!(
            out,
            r#"<circle class="{class}" data-index="{i}" cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{}" fill-opacity="0.75"/>"#,
            color(*l)
        );
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r#"<g class="clusters">"#);
    for (c, (centroid, members)) in labels.centroids.iter().zip(&labels.members).enumerate() {
        let (cx, cy) = frame.px(xy(centroid));
        let _ = writeln!(
            out,
            r#"<path class="centroid" data-cluster="{c}" d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="black" stroke-width="2"/>"#,
            cx - 5.0,
            cy - 5.0,
            cx + 5.0,
            cy + 5.0,
            cx - 5.0,
            cy + 5.0,
            cx + 5.0,
            cy - 5.0
        );
        let top = members
            .iter()
            .map(|&i| frame.px(points[i]).1)
            .fold(cy, f64::min);
        let _ = writeln!(
            out,
            r#"<text class="cluster-label" data-cluster="{c}" x="{cx:.2}" y="{:.2}" font-size="13" font-weight="bold" text-anchor="middle" fill="{}">{c}</text>"#,
            (top - 8.0).max(12.0),
            color(Some(c))
        );
    }
    let _ = writeln!(out, "</g>");

    if !annotations.is_empty() {
        let _ = writeln!(out, r#"<g class="annotations">"#);
        for (i, text) in annotations {
            let Some(&p) = points.get(*i) else { continue };
            let (x, y) = frame.px(p);
            let _ = writeln!(
                out,
                r##"<text class="annotation" x="{:.2}" y="{:.2}" font-size="9" fill="#333">{}</text>"##,
                x + 4.0,
                y - 4.0,
                escape(text)
            );
        }
        let _ = writeln!(out, "</g>");
    }

    let noise = labels.noise_count();
    let _ = writeln!(
        out,
        r#"<text class="legend" x="{MARGIN}" y="{:.0}" font-size="12">{} tags, {} clusters, {} noise (grey)</text>"#,
        PLOT_H + LEGEND_H / 2.0,
        coords.len(),
        labels.n_clusters,
        noise
    );

    if summary.is_some() {
        let _ = writeln!(out, r#"<g class="summary" font-size="11">"#);
        let _ = writeln!(
            out,
            r##"<rect x="{PLOT_W}" y="{}" width="{:.0}" height="{:.0}" fill="#f7f7f7" stroke="#cccccc"/>"##,
            MARGIN / 2.0,
            INSET_W - MARGIN / 2.0,
            height - MARGIN
        );
        for (k, line) in lines.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<text class="summary-line" x="{:.0}" y="{:.0}">{}</text>"#,
                PLOT_W + 8.0,
                MARGIN + LINE_H * k as f64,
                escape(line)
            );
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, "</svg>");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape(r#"a<b & "c">'d'"#), "a&lt;b &amp; &quot;c&quot;&gt;&apos;d&apos;");
    }

    #[test]
    fn empty_plot_is_an_error() {
        let labels = ClusterLabels::from_assignment(&[], &[]);
        assert!(render_scatter(&[], &labels, None, &[]).is_err());
    }

    #[test]
    fn single_point_is_drawn() {
        let coords = vec![vec![1.0, 1.0]];
        let labels = ClusterLabels::from_assignment(&[None], &coords);
        let svg = render_scatter(&coords, &labels, None, &[]).unwrap();
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains(NOISE));
    }
}
