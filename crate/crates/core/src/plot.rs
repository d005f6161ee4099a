//! Barcode images: one horizontal bar per label sequence, colored by class.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::to_segments;

const PALETTE: [&str; 20] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
];

pub fn class_color(class: usize) -> &'static str {
    PALETTE[class % PALETTE.len()]
}

#[derive(Clone, Debug)]
pub struct BarcodeStyle {
    pub width: f64,
    pub bar_height: f64,
    pub gap: f64,
    pub label_width: f64,
}

impl Default for BarcodeStyle {
    fn default() -> Self {
        Self {
            width: 800.0,
            bar_height: 24.0,
            gap: 6.0,
            label_width: 110.0,
        }
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG with one titled bar per `(title, labels)` row, top to bottom. Every
/// row must have the same length.
pub fn barcode_svg(rows: &[(String, Vec<usize>)], style: &BarcodeStyle) -> Result<String> {
    let len = rows
        .first()
        .map(|(_, l)| l.len())
        .ok_or_else(|| Error::Validation("barcode needs at least one row".into()))?;
    if len == 0 {
        return Err(Error::Validation("barcode rows are empty".into()));
    }
    if let Some((title, l)) = rows.iter().find(|(_, l)| l.len() != len) {
        return Err(Error::Validation(format!(
            "barcode row {title:?} has {} frames, expected {len}",
            l.len()
        )));
    }
    let frame = style.width / len as f64;
    let total_w = style.label_width + style.width;
    let total_h = rows.len() as f64 * (style.bar_height + style.gap) + style.gap;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w:.2}" height="{total_h:.2}" viewBox="0 0 {total_w:.2} {total_h:.2}">"#
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for (r, (title, labels)) in rows.iter().enumerate() {
        let y = style.gap + r as f64 * (style.bar_height + style.gap);
        let _ = writeln!(
            svg,
            r#"<text x="4" y="{:.2}" font-family="monospace" font-size="12">{}</text>"#,
            y + style.bar_height * 0.7,
            escape(title)
        );
        for seg in to_segments(labels) {
            let _ = writeln!(
                svg,
                r#"<rect x="{:.3}" y="{y:.2}" width="{:.3}" height="{:.2}" fill="{}"/>"#,
                style.label_width + seg.start as f64 * frame,
                seg.len() as f64 * frame,
                style.bar_height,
                class_color(seg.label)
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_row_is_one_rectangle() {
        let svg = barcode_svg(&[("gt".into(), vec![2; 50])], &BarcodeStyle::default()).unwrap();
        assert_eq!(svg.matches("<rect x=").count(), 1);
        assert!(svg.contains(r#"width="800.000""#));
    }

    #[test]
    fn identical_rows_draw_identical_bars() {
        let labels = vec![0, 0, 1, 1, 1, 2];
        let svg = barcode_svg(
            &[("a".into(), labels.clone()), ("b".into(), labels)],
            &BarcodeStyle::default(),
        )
        .unwrap();
        let bars: Vec<String> = svg
            .lines()
            .filter(|l| l.starts_with("<rect x="))
            .map(|l| l.split(" y=").next().unwrap().to_string() + &l[l.find(" width").unwrap()..])
            .collect();
        assert_eq!(bars.len(), 6);
        assert_eq!(bars[..3], bars[3..]);
    }

    #[test]
    fn mismatched_lengths_fail() {
        let err = barcode_svg(&[("a".into(), vec![0; 3]), ("b".into(), vec![0; 4])], &BarcodeStyle::default());
        assert!(err.is_err());
    }
}
