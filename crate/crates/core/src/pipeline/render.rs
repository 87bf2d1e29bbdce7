//! SVG emission: association heatmaps and Spatial Bergsma line charts.
//!
//! Heatmaps use a fixed [-1, 1] domain with a blue–white–red diverging
//! palette; matrices larger than `MAX_CELLS` per side are block-averaged
//! down before rasterizing, which keeps files tractable at any p.

use std::collections::BTreeMap;

use crate::dependence::{AssociationMatrix, SbSeries};

const MAX_CELLS: usize = 256;

/// Linear diverging palette on [-1, 1]: blue, white, red.
fn diverging_color(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let (lo, mid, hi) = ((33u8, 102u8, 172u8), (247u8, 247u8, 247u8), (178u8, 24u8, 43u8));
    let lerp = |a: u8, b: u8, t: f64| -> u8 { (a as f64 + (b as f64 - a as f64) * t).round() as u8 };
    let (r, g, b) = if v < 0.0 {
        let t = v + 1.0;
        (lerp(lo.0, mid.0, t), lerp(lo.1, mid.1, t), lerp(lo.2, mid.2, t))
    } else {
        (lerp(mid.0, hi.0, v), lerp(mid.1, hi.1, v), lerp(mid.2, hi.2, v))
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Renders an association matrix as an SVG raster.
pub fn heatmap_svg(assoc: &AssociationMatrix, title: &str) -> String {
    let p = assoc.p();
    let block = if p > MAX_CELLS {
        (p + MAX_CELLS - 1) / MAX_CELLS
    } else {
        1
    };
    let n_cells = (p + block - 1) / block;
    let cell_px = (720.0 / n_cells as f64).clamp(1.0, 24.0);
    let size = n_cells as f64 * cell_px;
    let margin = 24.0;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">\n",
        size + 2.0 * margin,
        size + 2.0 * margin + 18.0,
        size + 2.0 * margin,
        size + 2.0 * margin + 18.0
    ));
    svg.push_str(&format!(
        "<text x=\"{margin}\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        xml_escape(title)
    ));
    for bi in 0..n_cells {
        for bj in 0..n_cells {
            let mut sum = 0.0;
            let mut count = 0usize;
            for i in (bi * block)..((bi + 1) * block).min(p) {
                for j in (bj * block)..((bj + 1) * block).min(p) {
                    sum += assoc.entry(i, j);
                    count += 1;
                }
            }
            if count == 0 {
                continue;
            }
            let color = diverging_color(sum / count as f64);
            svg.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                margin + bj as f64 * cell_px,
                margin + bi as f64 * cell_px + 18.0,
                cell_px,
                cell_px,
                color
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

const SERIES_COLORS: [&str; 8] = [
    "#b2182b", "#2166ac", "#1b7837", "#762a83", "#e08214", "#01665e", "#8c510a", "#4d4d4d",
];

/// Renders Spatial Bergsma series as one polyline per
/// (region, scheme, method) group.
pub fn sb_chart_svg(series: &SbSeries, title: &str) -> String {
    let mut groups: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for e in &series.entries {
        groups
            .entry(format!("{}/{}/{}", e.region, e.scheme, e.method))
            .or_default()
            .push((e.window.clone(), e.value));
    }
    let (width, height, margin) = (780.0, 360.0, 48.0);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{margin}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        xml_escape(title)
    ));
    if groups.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let mut windows: Vec<String> = groups
        .values()
        .flat_map(|v| v.iter().map(|(w, _)| w.clone()))
        .collect();
    windows.sort();
    windows.dedup();
    let values: Vec<f64> = groups.values().flat_map(|v| v.iter().map(|&(_, y)| y)).collect();
    let y_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((y_max - y_min) * 0.08).max(1e-9);
    let (lo, hi) = (y_min - pad, y_max + pad);
    let x_of = |w: &str| -> f64 {
        let idx = windows.iter().position(|x| x == w).unwrap_or(0);
        if windows.len() <= 1 {
            margin
        } else {
            margin + idx as f64 / (windows.len() - 1) as f64 * (width - 2.0 * margin)
        }
    };
    let y_of = |v: f64| -> f64 { height - margin - (v - lo) / (hi - lo) * (height - 2.0 * margin - 24.0) };

    // axes
    svg.push_str(&format!(
        "<line x1=\"{margin}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#888\"/>\n",
        height - margin,
        width - margin,
        height - margin
    ));
    svg.push_str(&format!(
        "<text x=\"{margin}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
        height - margin + 14.0,
        xml_escape(windows.first().map(String::as_str).unwrap_or(""))
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
        width - margin,
        height - margin + 14.0,
        xml_escape(windows.last().map(String::as_str).unwrap_or(""))
    ));

    for (k, (label, mut points)) in groups.into_iter().enumerate() {
        points.sort_by(|a, b| a.0.cmp(&b.0));
        let color = SERIES_COLORS[k % SERIES_COLORS.len()];
        let path: Vec<String> = points
            .iter()
            .map(|(w, v)| format!("{:.2},{:.2}", x_of(w), y_of(*v)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"{color}\">{}</text>\n",
            margin,
            34.0 + 12.0 * k as f64,
            xml_escape(&label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
