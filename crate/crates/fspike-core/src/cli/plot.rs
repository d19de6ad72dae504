//! Minimal in-process SVG line charts for emitted CSV files. No external
//! renderer: the output is a standalone, well-formed SVG document.

use crate::error::{Error, Result};
use std::fmt::Write as _;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 55.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// A parsed numeric CSV: header names plus column-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericCsv {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl NumericCsv {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        let i = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no column named '{name}'")))?;
        Ok(&self.columns[i])
    }
}

/// Parse a CSV with a header row and fully numeric data cells.
pub fn parse_numeric_csv(text: &str) -> Result<NumericCsv> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Format {
        offset: 0,
        detail: "empty file (expected a header row)".into(),
    })?;
    let headers: Vec<String> = header.split(',').map(|h| h.trim().to_string()).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    let mut offset = header.len() as u64 + 1;
    for line in lines {
        let at = offset;
        offset += line.len() as u64 + 1;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != headers.len() {
            return Err(Error::Format {
                offset: at,
                detail: format!("row has {} cells, header has {}", cells.len(), headers.len()),
            });
        }
        for (col, cell) in columns.iter_mut().zip(&cells) {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Format {
                offset: at,
                detail: format!("cell '{cell}' is not a number"),
            })?;
            col.push(v);
        }
    }
    if columns.first().map_or(true, Vec::is_empty) {
        return Err(Error::Format {
            offset,
            detail: "no data rows after the header".into(),
        });
    }
    Ok(NumericCsv { headers, columns })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Nice-ish tick positions: five intervals across the (possibly degenerate)
/// data range.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    (0..=5).map(|i| lo + (hi - lo) * i as f64 / 5.0).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Render the named columns of a CSV as an SVG line chart. `x_column`
/// defaults to the first column; `y_columns` default to every other column.
pub fn render_line_chart(
    csv: &NumericCsv,
    x_column: Option<&str>,
    y_columns: Option<&[String]>,
    title: &str,
) -> Result<String> {
    let x_name = match x_column {
        Some(n) => n.to_string(),
        None => csv.headers.first().cloned().ok_or_else(|| {
            Error::InvalidArgument("csv has no columns".into())
        })?,
    };
    let default_y: Vec<String> = csv
        .headers
        .iter()
        .filter(|h| **h != x_name)
        .cloned()
        .collect();
    let y_names: Vec<String> = match y_columns {
        Some(list) if !list.is_empty() => list.to_vec(),
        _ => default_y,
    };
    if y_names.is_empty() {
        return Err(Error::InvalidArgument(
            "nothing to plot: no y columns".into(),
        ));
    }
    let x = csv.column(&x_name)?;
    let series: Vec<(&String, &[f64])> = y_names
        .iter()
        .map(|n| csv.column(n).map(|c| (n, c)))
        .collect::<Result<_>>()?;

    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in x {
        x_lo = x_lo.min(v);
        x_hi = x_hi.max(v);
    }
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, col) in &series {
        for &v in *col {
            y_lo = y_lo.min(v);
            y_hi = y_hi.max(v);
        }
    }
    if ![x_lo, x_hi, y_lo, y_hi].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument(
            "cannot plot non-finite data".into(),
        ));
    }
    if x_lo == x_hi {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    if y_lo == y_hi {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |v: f64| MARGIN_LEFT + (v - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |v: f64| MARGIN_TOP + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="28" font-family="sans-serif" font-size="18" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        xml_escape(title)
    );
    // Axes and gridlines.
    for tv in ticks(y_lo, y_hi) {
        let y = sy(tv);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd" stroke-width="1"/>"##,
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 4.0,
            fmt_tick(tv)
        );
    }
    for tv in ticks(x_lo, x_hi) {
        let xp = sx(tv);
        let _ = writeln!(
            svg,
            r##"<line x1="{xp:.2}" y1="{:.2}" x2="{xp:.2}" y2="{:.2}" stroke="#dddddd" stroke-width="1"/>"##,
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{xp:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + plot_h + 18.0,
            fmt_tick(tv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        xml_escape(&x_name)
    );
    // One polyline per series plus a legend swatch.
    for (i, (name, col)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for (&xv, &yv) in x.iter().zip(*col) {
            let _ = write!(points, "{:.2},{:.2} ", sx(xv), sy(yv));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.trim_end()
        );
        let ly = MARGIN_TOP + 14.0 + 20.0 * i as f64;
        let lx = MARGIN_LEFT + plot_w + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 22.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 28.0,
            ly + 4.0,
            xml_escape(name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tiny well-formedness scanner: every tag closes, attributes are
    /// quoted, and no raw `<`/`&` appears in text content.
    fn assert_well_formed_xml(doc: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = doc;
        while let Some(lt) = rest.find('<') {
            let text = &rest[..lt];
            assert!(!text.contains('&') || text.contains("&amp;") || text.contains("&lt;")
                || text.contains("&gt;") || text.contains("&quot;"),
                "unescaped & in text: {text:?}");
            rest = &rest[lt + 1..];
            let gt = rest.find('>').expect("unclosed tag");
            let tag = &rest[..gt];
            rest = &rest[gt + 1..];
            if tag.starts_with('?') || tag.starts_with('!') {
                continue;
            }
            if let Some(name) = tag.strip_prefix('/') {
                let open = stack.pop().unwrap_or_else(|| panic!("stray </{name}>"));
                assert_eq!(open, name, "mismatched close tag");
            } else if !tag.ends_with('/') {
                let name = tag.split_whitespace().next().unwrap().to_string();
                stack.push(name);
            }
            // Quoted attributes: equal number of '"' characters.
            assert_eq!(tag.matches('"').count() % 2, 0, "unbalanced quotes in <{tag}>");
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    fn demo_csv() -> NumericCsv {
        parse_numeric_csv("t,y,reference\n0,1,1\n0.5,0.6,0.61\n1,0.37,0.368\n").unwrap()
    }

    #[test]
    fn csv_parser_reads_columns_and_rejects_junk() {
        let csv = demo_csv();
        assert_eq!(csv.headers, vec!["t", "y", "reference"]);
        assert_eq!(csv.rows(), 3);
        assert_eq!(csv.column("y").unwrap(), &[1.0, 0.6, 0.37]);
        assert!(csv.column("missing").is_err());
        assert!(parse_numeric_csv("").is_err());
        assert!(parse_numeric_csv("a,b\n1\n").is_err(), "ragged row");
        assert!(parse_numeric_csv("a,b\n1,x\n").is_err(), "non-numeric");
        assert!(parse_numeric_csv("a,b\n").is_err(), "no data");
    }

    #[test]
    fn chart_is_well_formed_xml_with_one_polyline_per_series() {
        let svg = render_line_chart(&demo_csv(), None, None, "relaxation <test> & co").unwrap();
        assert!(svg.starts_with("<?xml"));
        assert_well_formed_xml(&svg);
        assert_eq!(svg.matches("<polyline").count(), 2, "y and reference");
        assert!(svg.contains("&lt;test&gt; &amp; co"), "escaped title");
        assert!(svg.contains(">reference</text>"), "legend label");
    }

    #[test]
    fn explicit_column_selection_is_honored() {
        let svg =
            render_line_chart(&demo_csv(), Some("t"), Some(&["y".to_string()]), "one").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(render_line_chart(&demo_csv(), Some("nope"), None, "x").is_err());
        let bad = ["nope".to_string()];
        assert!(render_line_chart(&demo_csv(), None, Some(&bad), "y").is_err());
    }

    #[test]
    fn degenerate_ranges_still_render() {
        let flat = parse_numeric_csv("t,y\n1,5\n2,5\n").unwrap();
        let svg = render_line_chart(&flat, None, None, "flat").unwrap();
        assert_well_formed_xml(&svg);
        let single = parse_numeric_csv("t,y\n1,5\n").unwrap();
        assert_well_formed_xml(&render_line_chart(&single, None, None, "dot").unwrap());
    }
}
